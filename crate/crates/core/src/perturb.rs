//! Corruption and augmentation of the input graph.

use crate::error::{GgdError, Result};
use crate::graph::{check_permutation, CsrGraph, NodeFeatures};
use crate::rng::RngState;
use crate::tensor::DenseMatrix;

pub const DEFAULT_DROP_P: f64 = 0.2;

/// Edge dropout and feature-column masking, resampled every epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub drop_edge_p: f64,
    pub drop_feat_p: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            drop_edge_p: DEFAULT_DROP_P,
            drop_feat_p: DEFAULT_DROP_P,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        check_probability("drop_edge_p", self.drop_edge_p)?;
        check_probability("drop_feat_p", self.drop_feat_p)
    }
}

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..1.0).contains(&value) {
        return Err(GgdError::InvalidProbability { name, value });
    }
    Ok(())
}

/// Row `i` of the result is row `perm[i]` of `x`.
pub fn permute_rows(x: &DenseMatrix, perm: &[usize]) -> Result<DenseMatrix> {
    check_permutation(perm, x.rows())?;
    x.gather_rows(perm)
}

/// Corruption: a uniformly random reordering of the feature rows.
pub fn shuffle_features(x: &NodeFeatures, rng: &mut RngState) -> Result<(NodeFeatures, Vec<usize>)> {
    let (m, perm) = shuffle_rows(x.matrix(), rng)?;
    Ok((NodeFeatures::new(m)?, perm))
}

/// [`shuffle_features`] on a bare matrix.
pub fn shuffle_rows(x: &DenseMatrix, rng: &mut RngState) -> Result<(DenseMatrix, Vec<usize>)> {
    if x.rows() < 2 {
        return Err(GgdError::Corruption(format!("cannot shuffle {} row(s)", x.rows())));
    }
    let perm = rng.permutation(x.rows());
    Ok((permute_rows(x, &perm)?, perm))
}

/// Drops each undirected edge with probability `p`. Both directions share
/// one draw; self loops are never dropped.
pub fn drop_edges(g: &CsrGraph, p: f64, rng: &mut RngState) -> Result<CsrGraph> {
    check_probability("drop_edge_p", p)?;
    if p == 0.0 {
        return Ok(g.clone());
    }
    let mut keep = vec![true; g.nnz()];
    let row_ptr = g.row_ptr();
    for i in 0..g.num_nodes() {
        for (k, &j) in g.neighbors(i).iter().enumerate() {
            let j = j as usize;
            let pos = row_ptr[i] + k;
            keep[pos] = if i == j {
                true
            } else if i > j {
                match g.neighbors(j).binary_search(&(i as u32)) {
                    Ok(r) => keep[row_ptr[j] + r],
                    Err(_) => !rng.bernoulli(p),
                }
            } else {
                !rng.bernoulli(p)
            };
        }
    }
    let mut pos = 0;
    Ok(g.filter_edges(|_, _| {
        pos += 1;
        keep[pos - 1]
    }))
}

/// Zeroes `⌊p·D⌋` randomly chosen columns for every node.
pub fn drop_feature_dims(x: &NodeFeatures, p: f64, rng: &mut RngState) -> Result<NodeFeatures> {
    NodeFeatures::new(mask_columns(x.matrix(), p, rng)?)
}

/// [`drop_feature_dims`] on a bare matrix.
pub fn mask_columns(x: &DenseMatrix, p: f64, rng: &mut RngState) -> Result<DenseMatrix> {
    check_probability("drop_feat_p", p)?;
    let d = x.cols();
    let count = (p * d as f64).floor() as usize;
    let mut out = x.clone();
    if count == 0 {
        return Ok(out);
    }
    let mut masked = vec![false; d];
    for c in rng.sample_distinct(d, count) {
        masked[c] = true;
    }
    for i in 0..out.rows() {
        for (v, &m) in out.row_mut(i).iter_mut().zip(&masked) {
            if m {
                *v = 0.0;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn features(n: usize, d: usize, seed: u64) -> NodeFeatures {
        let mut rng = RngState::new(seed, Stream::Data);
        NodeFeatures::new(DenseMatrix::from_fn(n, d, |_, _| rng.uniform() as f32 + 0.5)).unwrap()
    }

    fn random_graph(n: usize, m: usize, seed: u64) -> CsrGraph {
        let mut rng = RngState::new(seed, Stream::Data);
        let edges: Vec<(u32, u32)> = (0..m)
            .map(|_| (rng.below(n) as u32, rng.below(n) as u32))
            .collect();
        CsrGraph::from_edges(n, edges, true).unwrap()
    }

    #[test]
    fn identity_permutation_hook() {
        let x = features(5, 3, 0);
        let id: Vec<usize> = (0..5).collect();
        assert_eq!(&permute_rows(x.matrix(), &id).unwrap(), x.matrix());
        assert!(permute_rows(x.matrix(), &[0, 0, 1, 2, 3]).is_err());
    }

    #[test]
    fn two_nodes_see_both_orders() {
        let x = features(2, 2, 1);
        let (mut same, mut swapped) = (0, 0);
        for seed in 0..200 {
            let (_, perm) = shuffle_features(&x, &mut RngState::new(seed, Stream::Corruption)).unwrap();
            if perm == [0, 1] {
                same += 1;
            } else {
                assert_eq!(perm, [1, 0]);
                swapped += 1;
            }
        }
        assert!(same > 50 && swapped > 50);
    }

    #[test]
    fn shuffle_needs_two_rows() {
        let x = features(1, 2, 2);
        assert!(matches!(
            shuffle_features(&x, &mut RngState::new(0, Stream::Corruption)),
            Err(GgdError::Corruption(_))
        ));
    }

    #[test]
    fn shuffle_preserves_row_multiset() {
        let x = features(40, 6, 3);
        let (y, _) = shuffle_features(&x, &mut RngState::new(9, Stream::Corruption)).unwrap();
        let sorted = |m: &DenseMatrix| {
            let mut rows: Vec<Vec<u32>> = (0..m.rows()).map(|i| m.row(i).iter().map(|v| v.to_bits()).collect()).collect();
            rows.sort();
            rows
        };
        assert_eq!(sorted(x.matrix()), sorted(y.matrix()));
    }

    #[test]
    fn drop_edges_limits() {
        let g = random_graph(200, 800, 4);
        let mut rng = RngState::new(0, Stream::Dropout);
        assert_eq!(drop_edges(&g, 0.0, &mut rng).unwrap(), g);
        let sparse = drop_edges(&g, 0.999, &mut rng).unwrap();
        assert_eq!(sparse.num_nodes(), 200);
        assert!(sparse.nnz() < g.nnz() / 20);
        assert!(drop_edges(&g, 1.0, &mut rng).is_err());
    }

    #[test]
    fn drop_edges_keeps_subgraph_symmetry_and_loops() {
        let g = CsrGraph::from_edges(50, (0..50u32).flat_map(|i| [(i, i), (i, (i * 7 + 3) % 50)]), true).unwrap();
        let h = drop_edges(&g, 0.5, &mut RngState::new(5, Stream::Dropout)).unwrap();
        assert!(h.is_symmetric());
        for (u, v) in h.edges() {
            assert!(g.has_edge(u as usize, v as usize));
        }
        for i in 0..50 {
            assert!(h.has_edge(i, i));
        }
    }

    #[test]
    fn drop_edges_binomial_count() {
        // a perfect matching on 2000 nodes has exactly 1000 undirected edges
        let g = CsrGraph::from_edges(2000, (0..1000u32).map(|i| (2 * i, 2 * i + 1)), true).unwrap();
        let h = drop_edges(&g, 0.5, &mut RngState::new(6, Stream::Dropout)).unwrap();
        let kept = h.nnz() as f64 / 2.0;
        let sigma = (1000.0f64 * 0.25).sqrt();
        assert!((kept - 500.0).abs() <= 4.0 * sigma, "kept {kept}");
    }

    #[test]
    fn column_masking_counts() {
        let x = features(8, 100, 7);
        let mut rng = RngState::new(1, Stream::Dropout);
        assert_eq!(drop_feature_dims(&x, 0.0, &mut rng).unwrap(), x);
        let y = drop_feature_dims(&x, 0.2, &mut rng).unwrap();
        let mut zeroed = 0;
        for c in 0..100 {
            let col_zero = (0..8).all(|i| y.matrix().get(i, c) == 0.0);
            if col_zero {
                zeroed += 1;
            } else {
                for i in 0..8 {
                    assert_eq!(y.matrix().get(i, c).to_bits(), x.matrix().get(i, c).to_bits());
                }
            }
        }
        assert_eq!(zeroed, 20);

        let x4 = features(3, 4, 8);
        let y4 = drop_feature_dims(&x4, 0.75, &mut rng).unwrap();
        let live = (0..4).filter(|&c| (0..3).any(|i| y4.matrix().get(i, c) != 0.0)).count();
        assert_eq!(live, 1);
    }
}
