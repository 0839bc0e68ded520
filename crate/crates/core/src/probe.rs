//! Linear-probe evaluation, summary-vector statistics and the synthetic
//! stochastic block model used as a benchmark fixture.

use std::fmt::Write as _;

use crate::encoder::{encode, EncoderParams};
use crate::error::{GgdError, Result};
use crate::graph::{prepare, row_normalize, CsrGraph, LabeledSplit, NodeFeatures};
use crate::inference::random_graph;
use crate::perturb::check_probability;
use crate::rng::{RngState, Stream};
use crate::tensor::{sigmoid64, xavier_uniform, AdamState, DenseMatrix};

/// Softmax-regression probe hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Added to the weight gradient as `l2_weight · W`; the bias is exempt.
    pub l2_weight: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            epochs: 300,
            l2_weight: 1e-5,
            seed: 0,
        }
    }
}

/// Accuracy per split; `val` is `None` when the split has no val nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeReport {
    pub train: f64,
    pub val: Option<f64>,
    pub test: f64,
}

impl ProbeReport {
    /// `split,accuracy` CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("split,accuracy\n");
        let _ = writeln!(s, "train,{}", self.train);
        if let Some(v) = self.val {
            let _ = writeln!(s, "val,{v}");
        }
        let _ = writeln!(s, "test,{}", self.test);
        s
    }
}

/// A trained softmax-regression model in f64. Inputs are standardized per
/// column with train-node statistics before the linear layer, which makes
/// the probe indifferent to a uniform rescaling of the embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel {
    /// `dim × classes`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub mean: Vec<f64>,
    /// `1/std` per column; 1 for constant columns.
    pub inv_std: Vec<f64>,
    pub dim: usize,
    pub classes: usize,
}

impl SoftmaxModel {
    /// Xavier-initialized weights drawn from the probe stream, zero bias,
    /// identity standardization.
    pub fn init(dim: usize, classes: usize, seed: u64) -> Self {
        let w = xavier_uniform(dim, classes, &mut RngState::new(seed, Stream::Probe));
        Self {
            weight: w.as_slice().iter().map(|&v| v as f64).collect(),
            bias: vec![0.0; classes],
            mean: vec![0.0; dim],
            inv_std: vec![1.0; dim],
            dim,
            classes,
        }
    }

    /// Sets the standardization from the rows `nodes` of `h`.
    pub fn fit_standardization(&mut self, h: &DenseMatrix, nodes: &[usize]) {
        let n = nodes.len() as f64;
        let mut mean = vec![0f64; self.dim];
        for &v in nodes {
            for (m, &x) in mean.iter_mut().zip(h.row(v)) {
                *m += x as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0f64; self.dim];
        for &v in nodes {
            for ((s, &x), m) in var.iter_mut().zip(h.row(v)).zip(&mean) {
                *s += (x as f64 - m).powi(2);
            }
        }
        self.inv_std = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        self.mean = mean;
    }

    pub fn standardize(&self, row: &[f32]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.inv_std)
            .map(|((&x, m), s)| (x as f64 - m) * s)
            .collect()
    }

    pub fn logits(&self, row: &[f32]) -> Vec<f64> {
        self.standardized_logits(&self.standardize(row))
    }

    fn standardized_logits(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (d, &xd) in x.iter().enumerate() {
            let w = &self.weight[d * self.classes..(d + 1) * self.classes];
            for (o, &wc) in out.iter_mut().zip(w) {
                *o += xd * wc;
            }
        }
        out
    }

    /// Highest-scoring class, first on ties.
    pub fn predict(&self, row: &[f32]) -> usize {
        let l = self.logits(row);
        let mut best = 0;
        for c in 1..l.len() {
            if l[c] > l[best] {
                best = c;
            }
        }
        best
    }

    pub fn accuracy(&self, h: &DenseMatrix, nodes: &[usize], split: &LabeledSplit) -> f64 {
        let correct = nodes
            .iter()
            .filter(|&&v| self.predict(h.row(v)) == split.label(v) as usize)
            .count();
        correct as f64 / nodes.len() as f64
    }
}

/// Full-batch Adam on the mean cross-entropy of the train nodes.
pub fn fit_softmax(h: &DenseMatrix, split: &LabeledSplit, cfg: &ProbeConfig) -> Result<SoftmaxModel> {
    if split.num_nodes() != h.rows() {
        return Err(GgdError::shape(format!(
            "{} labels for {} embedding rows",
            split.num_nodes(),
            h.rows()
        )));
    }
    if split.train.is_empty() {
        return Err(GgdError::EmptySplit("train"));
    }
    if !(cfg.lr > 0.0) {
        return Err(GgdError::config("probe_lr", "must be positive"));
    }
    let k = split.num_classes().max(2);
    let d = h.cols();
    let mut model = SoftmaxModel::init(d, k, cfg.seed);
    model.fit_standardization(h, &split.train);
    let rows: Vec<(Vec<f64>, usize)> = split
        .train
        .iter()
        .map(|&v| (model.standardize(h.row(v)), split.label(v) as usize))
        .collect();
    let mut adam = AdamState::new(cfg.lr);
    let n = rows.len() as f64;
    for _ in 0..cfg.epochs {
        let mut gw = vec![0f64; d * k];
        let mut gb = vec![0f64; k];
        for (x, y) in &rows {
            let mut p = model.standardized_logits(x);
            let m = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = p.iter_mut().map(|v| {
                *v = (*v - m).exp();
                *v
            }).sum();
            for (c, pc) in p.iter_mut().enumerate() {
                *pc = (*pc / z - if c == *y { 1.0 } else { 0.0 }) / n;
            }
            for (dd, &xd) in x.iter().enumerate() {
                for (g, &pc) in gw[dd * k..(dd + 1) * k].iter_mut().zip(&p) {
                    *g += xd * pc;
                }
            }
            for (g, &pc) in gb.iter_mut().zip(&p) {
                *g += pc;
            }
        }
        for (g, &w) in gw.iter_mut().zip(&model.weight) {
            *g += cfg.l2_weight * w;
        }
        adam.step(&mut [&mut model.weight[..], &mut model.bias[..]], &[&gw[..], &gb[..]])?;
    }
    Ok(model)
}

/// Trains a softmax-regression probe on the train nodes and reports the
/// argmax accuracy of every split.
pub fn logistic_probe(h: &DenseMatrix, split: &LabeledSplit, cfg: &ProbeConfig) -> Result<ProbeReport> {
    if split.test.is_empty() {
        return Err(GgdError::EmptySplit("test"));
    }
    let model = fit_softmax(h, split, cfg)?;
    Ok(ProbeReport {
        train: model.accuracy(h, &split.train, split),
        val: (!split.val.is_empty()).then(|| model.accuracy(h, &split.val, split)),
        test: model.accuracy(h, &split.test, split),
    })
}

/// Whether statistics are taken of `s` itself or of `σ(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterMap {
    None,
    Sigmoid,
}

/// Distribution of the entries of a summary vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub mean: f64,
    pub std: f64,
    pub range: f64,
}

impl SummaryStats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Self {
            mean,
            std: var.sqrt(),
            range: hi - lo,
        }
    }

    pub fn to_kv(&self) -> String {
        format!("mean={}\nstd={}\nrange={}\n", self.mean, self.std, self.range)
    }
}

/// Statistics of the summary vector `s = mean_i h_i` (optionally passed
/// through a sigmoid). The activation is the one stored in `params`.
pub fn summary_stats(g: &CsrGraph, x: &NodeFeatures, params: &EncoderParams, outer: OuterMap) -> Result<SummaryStats> {
    let prep = prepare(g, x)?;
    let h = encode(&prep.adj, &prep.features, params)?;
    let n = h.rows() as f64;
    let s: Vec<f64> = h
        .column_sums()
        .into_iter()
        .map(|c| {
            let m = c / n;
            match outer {
                OuterMap::None => m,
                OuterMap::Sigmoid => sigmoid64(m),
            }
        })
        .collect();
    Ok(SummaryStats::of(&s))
}

/// Uniform random graph with roughly `avg_degree` neighbors per node and
/// sparse binary features of density `feat_density`, row-normalized.
pub fn synthetic_graph(
    n: usize,
    avg_degree: f64,
    feat_dim: usize,
    feat_density: f64,
    rng: &mut RngState,
) -> Result<(CsrGraph, NodeFeatures)> {
    check_probability("feat_density", feat_density)?;
    let g = random_graph(n, avg_degree, rng)?;
    let x = DenseMatrix::from_fn(n, feat_dim, |_, _| if rng.bernoulli(feat_density) { 1.0 } else { 0.0 });
    Ok((g, row_normalize(&NodeFeatures::new(x)?)))
}

/// Stochastic block model with class-prototype features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbmConfig {
    pub n: usize,
    pub k: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feat_dim: usize,
    /// Probability that each feature bit is flipped.
    pub noise: f64,
    /// Fraction of dimensions switched on in each class prototype.
    pub proto_density: f64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            k: 4,
            p_in: 0.02,
            p_out: 0.002,
            feat_dim: 256,
            noise: 0.3,
            proto_density: 0.05,
        }
    }
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(GgdError::InvalidProbability { name, value });
            }
        }
        check_probability("noise", self.noise)?;
        if !(0.0..=1.0).contains(&self.proto_density) {
            return Err(GgdError::InvalidProbability {
                name: "proto_density",
                value: self.proto_density,
            });
        }
        if self.p_in <= self.p_out {
            return Err(GgdError::config("p_in", "must exceed p_out"));
        }
        if self.k == 0 || self.k > self.n || self.feat_dim == 0 {
            return Err(GgdError::config("k", "need 1 <= k <= n and feat_dim >= 1"));
        }
        Ok(())
    }

    /// Class of node `i`; classes occupy contiguous, near-equal blocks.
    pub fn class_of(&self, i: usize) -> usize {
        i * self.k / self.n
    }

    fn block_range(&self, c: usize) -> std::ops::Range<usize> {
        let start = (c * self.n).div_ceil(self.k);
        let end = ((c + 1) * self.n).div_ceil(self.k);
        start..end
    }
}

/// Number of failures before the next success of a Bernoulli(p) sequence.
fn geometric_skip(p: f64, rng: &mut RngState) -> u64 {
    if p >= 1.0 {
        return 0;
    }
    let u = 1.0 - rng.uniform();
    (u.ln() / (1.0 - p).ln()).floor().min(u64::MAX as f64 / 2.0) as u64
}

/// Visits each index of `0..count` independently with probability `p`.
fn bernoulli_indices(count: u64, p: f64, rng: &mut RngState, mut visit: impl FnMut(u64)) {
    if p <= 0.0 {
        return;
    }
    let mut idx = geometric_skip(p, rng);
    while idx < count {
        visit(idx);
        idx = idx.saturating_add(1 + geometric_skip(p, rng));
    }
}

/// Undirected SBM graph, binary class-prototype features with bit-flip
/// noise, and a random 10/10/80 train/val/test split.
pub fn sbm_generate(cfg: &SbmConfig, rng: &mut RngState) -> Result<(CsrGraph, NodeFeatures, LabeledSplit)> {
    cfg.validate()?;
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for a in 0..cfg.k {
        let ra = cfg.block_range(a);
        // within a block: pairs (i, j) with i < j, ranked row by row
        let s = ra.len() as u64;
        let mut row = 0u64;
        let mut row_start = 0u64;
        bernoulli_indices(s * s.saturating_sub(1) / 2, cfg.p_in, rng, |idx| {
            while idx >= row_start + (s - 1 - row) {
                row_start += s - 1 - row;
                row += 1;
            }
            let i = ra.start as u64 + row;
            let j = i + 1 + (idx - row_start);
            edges.push((i as u32, j as u32));
        });
        for b in a + 1..cfg.k {
            let rb = cfg.block_range(b);
            let cols = rb.len() as u64;
            bernoulli_indices(ra.len() as u64 * cols, cfg.p_out, rng, |idx| {
                edges.push(((ra.start as u64 + idx / cols) as u32, (rb.start as u64 + idx % cols) as u32));
            });
        }
    }
    let g = CsrGraph::from_edges(cfg.n, edges, true)?;

    let prototypes: Vec<Vec<bool>> = (0..cfg.k)
        .map(|_| (0..cfg.feat_dim).map(|_| rng.bernoulli(cfg.proto_density)).collect())
        .collect();
    let x = DenseMatrix::from_fn(cfg.n, cfg.feat_dim, |i, j| {
        let bit = prototypes[cfg.class_of(i)][j] ^ rng.bernoulli(cfg.noise);
        if bit {
            1.0
        } else {
            0.0
        }
    });

    let order = rng.permutation(cfg.n);
    let n_train = cfg.n / 10;
    let n_val = cfg.n / 10;
    let labels = (0..cfg.n).map(|i| Some(cfg.class_of(i) as u32)).collect();
    let split = LabeledSplit::new(
        labels,
        order[..n_train].to_vec(),
        order[n_train..n_train + n_val].to_vec(),
        order[n_train + n_val..].to_vec(),
    )?;
    Ok((g, NodeFeatures::new(x)?, split))
}
