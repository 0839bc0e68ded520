use rayon::prelude::*;

use crate::error::{GgdError, Result};

/// Row count above which kernels split output rows across rayon workers.
/// Each output row is still reduced sequentially by a single worker, so the
/// result does not depend on the number of threads.
pub(crate) const PAR_ROWS: usize = 256;

/// Sets `acc[j] = Σ_t w_t · row(k_t)[j]`, adding the terms in order.
///
/// Four source rows are consumed per pass over `acc`, but each element still
/// receives its additions one at a time in term order, so the result is
/// identical to the plain loop.
pub(crate) fn accumulate_rows<'a>(acc: &mut [f64], terms: &[(f64, usize)], row: impl Fn(usize) -> &'a [f32]) {
    acc.fill(0.0);
    let mut chunks = terms.chunks_exact(4);
    for c in &mut chunks {
        let (w0, w1, w2, w3) = (c[0].0, c[1].0, c[2].0, c[3].0);
        let (r0, r1, r2, r3) = (row(c[0].1), row(c[1].1), row(c[2].1), row(c[3].1));
        let n = acc.len();
        let (r0, r1, r2, r3) = (&r0[..n], &r1[..n], &r2[..n], &r3[..n]);
        for j in 0..n {
            let mut s = acc[j];
            s += w0 * r0[j] as f64;
            s += w1 * r1[j] as f64;
            s += w2 * r2[j] as f64;
            s += w3 * r3[j] as f64;
            acc[j] = s;
        }
    }
    for &(w, k) in chunks.remainder() {
        for (s, &b) in acc.iter_mut().zip(row(k)) {
            *s += w * b as f64;
        }
    }
}

/// Row-major `f32` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(GgdError::shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(GgdError::shape("ragged rows"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    /// Frobenius norm, accumulated in f64.
    pub fn norm(&self) -> f64 {
        self.data
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// `self · other`, accumulating every dot product in f64.
    ///
    /// Zero entries of `self` are skipped, which keeps products with sparse
    /// feature matrices cheap without changing the result.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(GgdError::shape(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let m = other.cols;
        let mut out = DenseMatrix::zeros(self.rows, m);
        if m == 0 {
            return Ok(out);
        }
        let kernel = |(acc, terms): &mut (Vec<f64>, Vec<(f64, usize)>), (i, out_row): (usize, &mut [f32])| {
            terms.clear();
            terms.extend(
                self.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, &a)| a != 0.0)
                    .map(|(k, &a)| (a as f64, k)),
            );
            accumulate_rows(acc, terms, |k| other.row(k));
            for (o, &s) in out_row.iter_mut().zip(acc.iter()) {
                *o = s as f32;
            }
        };
        if self.rows >= PAR_ROWS {
            out.data
                .par_chunks_mut(m)
                .enumerate()
                .for_each_init(|| (vec![0.0f64; m], Vec::new()), kernel);
        } else {
            let mut acc = (vec![0.0f64; m], Vec::new());
            out.data
                .chunks_mut(m)
                .enumerate()
                .for_each(|item| kernel(&mut acc, item));
        }
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn matmul_tn(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.transpose().matmul(other)
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.matmul(&other.transpose())
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, c: f32) -> DenseMatrix {
        self.map(|v| v * c)
    }

    pub fn neg(&self) -> DenseMatrix {
        self.map(|v| -v)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &DenseMatrix, f: impl Fn(f32, f32) -> f32) -> Result<DenseMatrix> {
        self.check_same_shape(other)?;
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Adds `bias` to every row.
    pub fn add_row_vector(&mut self, bias: &[f32]) -> Result<()> {
        if bias.len() != self.cols {
            return Err(GgdError::shape(format!(
                "bias of length {} for {} columns",
                bias.len(),
                self.cols
            )));
        }
        for row in self.data.chunks_mut(self.cols.max(1)) {
            for (v, &b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
        Ok(())
    }

    /// Column sums, accumulated in f64.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0f64; self.cols];
        for i in 0..self.rows {
            for (s, &v) in sums.iter_mut().zip(self.row(i)) {
                *s += v as f64;
            }
        }
        sums
    }

    /// New matrix whose row `i` is `self.row(ids[i])`.
    pub fn gather_rows(&self, ids: &[usize]) -> Result<DenseMatrix> {
        let mut data = Vec::with_capacity(ids.len() * self.cols);
        for &id in ids {
            if id >= self.rows {
                return Err(GgdError::InvalidNode {
                    id: id as u64,
                    num_nodes: self.rows,
                });
            }
            data.extend_from_slice(self.row(id));
        }
        Ok(DenseMatrix {
            rows: ids.len(),
            cols: self.cols,
            data,
        })
    }

    /// Vertical concatenation.
    pub fn vstack(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.cols {
            return Err(GgdError::shape("vstack with different column counts"));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(DenseMatrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    fn check_same_shape(&self, other: &DenseMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(GgdError::shape(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}
