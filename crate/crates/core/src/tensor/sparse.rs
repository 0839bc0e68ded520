use rayon::prelude::*;

use super::dense::{accumulate_rows, DenseMatrix, PAR_ROWS};
use crate::error::{GgdError, Result};

/// Read access to a compressed sparse-row operator.
pub trait SparseRows: Sync {
    fn num_rows(&self) -> usize;
    fn num_cols(&self) -> usize;
    /// Column indices of row `i` and their weights (`None` means all ones).
    fn row_entries(&self, i: usize) -> (&[u32], Option<&[f64]>);
}

/// Sparse-dense product `out[i,:] = Σ_j w_ij · m[j,:]`.
///
/// Every output row is reduced in CSR column order with an f64 accumulator,
/// so serial and parallel execution agree bitwise.
pub fn spmm<S: SparseRows + ?Sized>(op: &S, m: &DenseMatrix) -> Result<DenseMatrix> {
    let mut out = DenseMatrix::zeros(op.num_rows(), m.cols());
    spmm_into(op, m, &mut out)?;
    Ok(out)
}

/// [`spmm`] writing into an existing `num_rows × m.cols()` matrix. Every
/// entry of `out` is overwritten.
pub fn spmm_into<S: SparseRows + ?Sized>(op: &S, m: &DenseMatrix, out: &mut DenseMatrix) -> Result<()> {
    if op.num_cols() != m.rows() {
        return Err(GgdError::shape(format!(
            "spmm of a {}x{} operator with {} rows",
            op.num_rows(),
            op.num_cols(),
            m.rows()
        )));
    }
    let cols = m.cols();
    if out.rows() != op.num_rows() || out.cols() != cols {
        return Err(GgdError::shape(format!(
            "spmm output is {}x{}, expected {}x{cols}",
            out.rows(),
            out.cols(),
            op.num_rows()
        )));
    }
    if cols == 0 {
        return Ok(());
    }
    let kernel = |(acc, terms): &mut (Vec<f64>, Vec<(f64, usize)>), (i, out_row): (usize, &mut [f32])| {
        let (idx, weights) = op.row_entries(i);
        terms.clear();
        terms.extend(
            idx.iter()
                .enumerate()
                .map(|(e, &j)| (weights.map_or(1.0, |w| w[e]), j as usize)),
        );
        accumulate_rows(acc, terms, |j| m.row(j));
        for (o, &s) in out_row.iter_mut().zip(acc.iter()) {
            *o = s as f32;
        }
    };
    if op.num_rows() >= PAR_ROWS {
        out.as_mut_slice()
            .par_chunks_mut(cols)
            .enumerate()
            .for_each_init(|| (vec![0.0f64; cols], Vec::new()), kernel);
    } else {
        let mut acc = (vec![0.0f64; cols], Vec::new());
        out.as_mut_slice()
            .chunks_mut(cols)
            .enumerate()
            .for_each(|item| kernel(&mut acc, item));
    }
    Ok(())
}
