//! Graph storage, file formats and the normalization pipeline that feeds the
//! encoder (`Ã = D̂^{-1/2}(A + I)D̂^{-1/2}`, `Z = rownorm(X)`).

mod csr;
mod features;
mod io;

pub use csr::{add_self_loops, sym_normalize, CsrGraph};
pub(crate) use csr::{check_permutation, hex};
pub use features::{row_normalize, LabeledSplit, NodeFeatures, SplitKind};
pub use io::{
    load_edge_list, load_features, load_labels, load_matrix, parse_edge_list, parse_labels, read_ggdf,
    save_edge_list, save_features, save_labels, save_matrix, write_edge_list, write_ggdf, write_labels,
    LoadedGraph, NodeIdMap, GGDF_MAGIC, GGDF_VERSION,
};

use crate::error::Result;
use crate::tensor::DenseMatrix;

/// Normalized adjacency and features, ready for the encoder.
#[derive(Debug, Clone)]
pub struct PreparedInput {
    pub adj: CsrGraph,
    pub features: DenseMatrix,
}

/// Normalizes the adjacency operator of `g` (self loops, symmetric scaling).
pub fn normalized_adjacency(g: &CsrGraph) -> Result<CsrGraph> {
    sym_normalize(&add_self_loops(g))
}

/// Applies both normalizations to a raw graph and raw features.
pub fn prepare(g: &CsrGraph, x: &NodeFeatures) -> Result<PreparedInput> {
    x.check_nodes(g.num_nodes())?;
    Ok(PreparedInput {
        adj: normalized_adjacency(g)?,
        features: row_normalize(x).into_matrix(),
    })
}
