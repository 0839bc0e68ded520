use sha2::{Digest, Sha256};

use crate::error::{GgdError, Result};
use crate::tensor::SparseRows;

/// Square adjacency in canonical compressed sparse-row form: columns within
/// a row are strictly increasing, so there are no duplicate edges.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrGraph {
    num_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    weights: Option<Vec<f64>>,
}

impl CsrGraph {
    /// Builds a canonical graph from raw parts, validating every invariant.
    pub fn from_parts(
        num_nodes: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<u32>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        let g = Self {
            num_nodes,
            row_ptr,
            col_idx,
            weights,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn empty(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            row_ptr: vec![0; num_nodes + 1],
            col_idx: Vec::new(),
            weights: None,
        }
    }

    /// Unweighted graph from an edge iterator; duplicates collapse and,
    /// when `symmetrize` is set, every `(u, v)` also inserts `(v, u)`.
    pub fn from_edges(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (u32, u32)>,
        symmetrize: bool,
    ) -> Result<Self> {
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        for (u, v) in edges {
            for id in [u, v] {
                if id as usize >= num_nodes {
                    return Err(GgdError::InvalidNode {
                        id: id as u64,
                        num_nodes,
                    });
                }
            }
            pairs.push((u, v));
            if symmetrize && u != v {
                pairs.push((v, u));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(Self::from_sorted_pairs(num_nodes, &pairs, None))
    }

    /// `pairs` must be sorted and deduplicated.
    fn from_sorted_pairs(num_nodes: usize, pairs: &[(u32, u32)], weights: Option<Vec<f64>>) -> Self {
        let mut row_ptr = vec![0usize; num_nodes + 1];
        for &(u, _) in pairs {
            row_ptr[u as usize + 1] += 1;
        }
        for i in 0..num_nodes {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            num_nodes,
            row_ptr,
            col_idx: pairs.iter().map(|&(_, v)| v).collect(),
            weights,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes;
        if self.row_ptr.len() != n + 1 || self.row_ptr[0] != 0 || self.row_ptr[n] != self.col_idx.len() {
            return Err(GgdError::Format("row_ptr does not frame col_idx".into()));
        }
        for i in 0..n {
            let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
            if lo > hi {
                return Err(GgdError::Format(format!("row_ptr decreases at row {i}")));
            }
            let row = &self.col_idx[lo..hi];
            if row.iter().any(|&c| c as usize >= n) {
                return Err(GgdError::Format(format!("column out of range in row {i}")));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(GgdError::Format(format!("row {i} not strictly increasing")));
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != self.col_idx.len() {
                return Err(GgdError::Format("weights not aligned with col_idx".into()));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(GgdError::Format("non-finite edge weight".into()));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of stored (directed) entries.
    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes).map(|i| self.degree(i)).collect()
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn row_weights(&self, i: usize) -> Option<&[f64]> {
        self.weights
            .as_ref()
            .map(|w| &w[self.row_ptr[i]..self.row_ptr[i + 1]])
    }

    /// Weight of entry `(i, j)`, or `None` when absent.
    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let row = self.neighbors(i);
        let k = row.binary_search(&(j as u32)).ok()?;
        Some(self.row_weights(i).map_or(1.0, |w| w[k]))
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.weight(i, j).is_some()
    }

    /// All stored entries as `(row, col)` pairs in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.num_nodes).flat_map(move |i| self.neighbors(i).iter().map(move |&j| (i as u32, j)))
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges().all(|(i, j)| {
            let (i, j) = (i as usize, j as usize);
            match (self.weight(i, j), self.weight(j, i)) {
                (Some(a), Some(b)) => a == b,
                _ => false,
            }
        })
    }

    /// Pads the graph with isolated nodes up to `n` nodes.
    pub fn with_num_nodes(mut self, n: usize) -> Result<Self> {
        if n < self.num_nodes {
            return Err(GgdError::shape(format!(
                "cannot shrink a {}-node graph to {n} nodes",
                self.num_nodes
            )));
        }
        let last = *self.row_ptr.last().unwrap_or(&0);
        self.row_ptr.resize(n + 1, last);
        self.num_nodes = n;
        Ok(self)
    }

    /// Copy without edge weights.
    pub fn unweighted(&self) -> Self {
        Self {
            weights: None,
            ..self.clone()
        }
    }

    /// Keeps the entries for which `keep(row, col)` is true.
    pub fn filter_edges(&self, mut keep: impl FnMut(usize, usize) -> bool) -> Self {
        let mut row_ptr = Vec::with_capacity(self.num_nodes + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut weights = self.weights.as_ref().map(|_| Vec::new());
        for i in 0..self.num_nodes {
            let ws = self.row_weights(i);
            for (k, &j) in self.neighbors(i).iter().enumerate() {
                if keep(i, j as usize) {
                    col_idx.push(j);
                    if let (Some(out), Some(ws)) = (weights.as_mut(), ws) {
                        out.push(ws[k]);
                    }
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            num_nodes: self.num_nodes,
            row_ptr,
            col_idx,
            weights,
        }
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.num_nodes)?;
        let mut triples: Vec<(u32, u32, f64)> = Vec::with_capacity(self.nnz());
        for i in 0..self.num_nodes {
            let ws = self.row_weights(i);
            for (k, &j) in self.neighbors(i).iter().enumerate() {
                triples.push((
                    perm[i] as u32,
                    perm[j as usize] as u32,
                    ws.map_or(1.0, |w| w[k]),
                ));
            }
        }
        triples.sort_unstable_by_key(|&(a, b, _)| (a, b));
        let pairs: Vec<(u32, u32)> = triples.iter().map(|&(a, b, _)| (a, b)).collect();
        let weights = self
            .weights
            .as_ref()
            .map(|_| triples.iter().map(|&(_, _, w)| w).collect());
        Ok(Self::from_sorted_pairs(self.num_nodes, &pairs, weights))
    }

    /// Hex SHA-256 over the structure and weights.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.num_nodes as u64).to_le_bytes());
        for &p in &self.row_ptr {
            h.update((p as u64).to_le_bytes());
        }
        for &c in &self.col_idx {
            h.update(c.to_le_bytes());
        }
        if let Some(w) = &self.weights {
            for &v in w {
                h.update(v.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

impl SparseRows for CsrGraph {
    fn num_rows(&self) -> usize {
        self.num_nodes
    }

    fn num_cols(&self) -> usize {
        self.num_nodes
    }

    fn row_entries(&self, i: usize) -> (&[u32], Option<&[f64]>) {
        (self.neighbors(i), self.row_weights(i))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(GgdError::InvalidPermutation(format!(
            "length {} for {n} nodes",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(GgdError::InvalidPermutation(format!("entry {p} out of range or repeated")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// `Â = A + I`: every node gets exactly one self loop (weight 1 when the
/// graph is weighted); existing self loops are kept as they are.
pub fn add_self_loops(g: &CsrGraph) -> CsrGraph {
    let n = g.num_nodes();
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::with_capacity(g.nnz() + n);
    let mut weights = g.weights().map(|_| Vec::with_capacity(g.nnz() + n));
    for i in 0..n {
        let ws = g.row_weights(i);
        let mut placed = false;
        for (k, &j) in g.neighbors(i).iter().enumerate() {
            if !placed && j as usize >= i {
                if j as usize != i {
                    col_idx.push(i as u32);
                    if let Some(w) = weights.as_mut() {
                        w.push(1.0);
                    }
                }
                placed = true;
            }
            col_idx.push(j);
            if let (Some(w), Some(ws)) = (weights.as_mut(), ws) {
                w.push(ws[k]);
            }
        }
        if !placed {
            col_idx.push(i as u32);
            if let Some(w) = weights.as_mut() {
                w.push(1.0);
            }
        }
        row_ptr.push(col_idx.len());
    }
    CsrGraph {
        num_nodes: n,
        row_ptr,
        col_idx,
        weights,
    }
}

/// `D̂^{-1/2} Â D̂^{-1/2}` where `D̂` holds the (weighted) row degrees of the
/// input. Every row must have positive degree, which self loops guarantee.
pub fn sym_normalize(g: &CsrGraph) -> Result<CsrGraph> {
    let n = g.num_nodes();
    let deg: Vec<f64> = (0..n)
        .map(|i| match g.row_weights(i) {
            Some(w) => w.iter().sum(),
            None => g.degree(i) as f64,
        })
        .collect();
    if let Some(i) = deg.iter().position(|&d| d <= 0.0) {
        return Err(GgdError::Normalization(format!(
            "node {i} has non-positive degree; add self loops first"
        )));
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut weights = Vec::with_capacity(g.nnz());
    for i in 0..n {
        let ws = g.row_weights(i);
        for (k, &j) in g.neighbors(i).iter().enumerate() {
            let w = ws.map_or(1.0, |w| w[k]);
            weights.push(w * inv_sqrt[i] * inv_sqrt[j as usize]);
        }
    }
    Ok(CsrGraph {
        weights: Some(weights),
        ..g.clone()
    })
}
