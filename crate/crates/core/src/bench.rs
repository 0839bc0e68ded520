//! Scaling harness: per-epoch group-discrimination time against a pairwise
//! InfoNCE reference pass, with log-log slope fits.

use std::fmt::Write as _;
use std::time::Instant;

use crate::discriminate::{gd_forward_backward, Aggregation, Objective};
use crate::encoder::{EncoderParams, EncoderShape};
use crate::error::Result;
use crate::graph::normalized_adjacency;
use crate::inference::median;
use crate::probe::synthetic_graph;
use crate::perturb::shuffle_rows;
use crate::rng::{RngState, Stream};
use crate::tensor::{Activation, AdamState, DenseMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub avg_degree: f64,
    pub feat_dim: usize,
    pub hidden: usize,
    /// Timed repetitions per size after a single warm-up run.
    pub repeats: usize,
    /// InfoNCE temperature.
    pub tau: f64,
    /// Hops in the graph-power timing.
    pub power_hops: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![1024, 2048, 4096, 8192],
            avg_degree: 5.0,
            feat_dim: 64,
            hidden: 256,
            repeats: 3,
            tau: 0.5,
            power_hops: 10,
            seed: 0,
        }
    }
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> LogLogFit {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LogLogFit {
        slope,
        intercept: my - slope * mx,
        r2,
    }
}

/// Random graph and sparse binary features for one bench size.
fn bench_inputs(n: usize, cfg: &BenchConfig) -> Result<(crate::graph::CsrGraph, DenseMatrix)> {
    let mut rng = RngState::derived(cfg.seed, Stream::Data, n as u64, 0);
    let (g, x) = synthetic_graph(n, cfg.avg_degree, cfg.feat_dim, 0.1, &mut rng)?;
    Ok((normalized_adjacency(&g)?, x.into_matrix()))
}

/// One full-batch epoch: corruption, both branches forward and backward,
/// and an Adam step, on a single-conv encoder without projector.
pub struct GdEpoch {
    g: crate::graph::CsrGraph,
    z: DenseMatrix,
    params: EncoderParams,
    adam: AdamState,
    epoch: u64,
    seed: u64,
}

impl GdEpoch {
    pub fn new(n: usize, cfg: &BenchConfig) -> Result<Self> {
        let (g, z) = bench_inputs(n, cfg)?;
        let shape = EncoderShape {
            in_dim: cfg.feat_dim,
            hidden: cfg.hidden,
            num_conv: 1,
            num_proj: 0,
            activation: Activation::PRelu,
            linear_agg: false,
        };
        Ok(Self {
            g,
            z,
            params: EncoderParams::init(shape, &mut RngState::new(cfg.seed, Stream::Init))?,
            adam: AdamState::new(1e-3),
            epoch: 0,
            seed: cfg.seed,
        })
    }

    pub fn run(&mut self) -> Result<f64> {
        self.epoch += 1;
        let (z_neg, _) = shuffle_rows(&self.z, &mut RngState::derived(self.seed, Stream::Corruption, self.epoch, 0))?;
        let (loss, grads) = gd_forward_backward(&self.g, &self.z, &z_neg, &self.params, Objective::Group(Aggregation::Sum))?;
        self.params.apply_adam(&mut self.adam, &grads)?;
        Ok(loss)
    }
}

/// Two-view InfoNCE over all node pairs (no training): for both view
/// orders, anchor `i` is contrasted with its counterpart against every
/// intra-view and inter-view negative. Needs `H1H1ᵀ`, `H2H2ᵀ` and `H1H2ᵀ`.
pub fn pairwise_infonce(h1: &DenseMatrix, h2: &DenseMatrix, tau: f64) -> Result<f64> {
    let normalize = |h: &DenseMatrix| {
        let mut out = h.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            let norm = row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt().max(1e-12);
            row.iter_mut().for_each(|v| *v = (*v as f64 / norm) as f32);
        }
        out
    };
    let (a, b) = (normalize(h1), normalize(h2));
    let s11 = a.matmul_nt(&a)?;
    let s22 = b.matmul_nt(&b)?;
    let s12 = a.matmul_nt(&b)?;
    let n = a.rows();
    let e = |v: f32| (v as f64 / tau).exp();
    let mut total = 0.0;
    for i in 0..n {
        let (mut refl1, mut between1, mut refl2, mut between2) = (0.0, 0.0, 0.0, 0.0);
        for j in 0..n {
            refl1 += e(s11.get(i, j));
            refl2 += e(s22.get(i, j));
            between1 += e(s12.get(i, j));
            between2 += e(s12.get(j, i));
        }
        let pos = e(s12.get(i, i));
        total -= (pos / (between1 + refl1 - e(s11.get(i, i)))).ln();
        total -= (pos / (between2 + refl2 - e(s22.get(i, i)))).ln();
    }
    Ok(total / (2 * n) as f64)
}

/// One pairwise reference pass on `hidden`-wide random embeddings.
pub struct PairwisePass {
    h1: DenseMatrix,
    h2: DenseMatrix,
    tau: f64,
}

impl PairwisePass {
    pub fn new(n: usize, cfg: &BenchConfig) -> Self {
        let mut rng = RngState::derived(cfg.seed, Stream::Data, n as u64, 1);
        let mut draw = || DenseMatrix::from_fn(n, cfg.hidden, |_, _| rng.uniform() as f32 - 0.5);
        let h1 = draw();
        let h2 = draw();
        Self { h1, h2, tau: cfg.tau }
    }

    pub fn run(&self) -> Result<f64> {
        pairwise_infonce(&self.h1, &self.h2, self.tau)
    }
}

/// Median seconds of `repeats` calls after one discarded warm-up call.
pub fn time_median(repeats: usize, mut f: impl FnMut() -> Result<f64>) -> Result<f64> {
    f()?;
    let mut times = Vec::with_capacity(repeats.max(1));
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_secs_f64());
    }
    Ok(median(&mut times))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRow {
    pub method: &'static str,
    pub num_nodes: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    pub gd_fit: LogLogFit,
    pub pairwise_fit: LogLogFit,
}

impl ScalingReport {
    pub fn seconds(&self, method: &str, n: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.num_nodes == n)
            .map(|r| r.seconds)
    }

    /// `method,num_nodes,seconds` rows followed by `fit,slope,r2` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,num_nodes,seconds\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", r.method, r.num_nodes, r.seconds);
        }
        s.push_str("fit,slope,r2\n");
        for (name, f) in [("gd", self.gd_fit), ("pairwise", self.pairwise_fit)] {
            let _ = writeln!(s, "{name},{},{}", f.slope, f.r2);
        }
        s
    }
}

/// Times both methods at every size and fits their scaling exponents.
pub fn run_scaling(cfg: &BenchConfig) -> Result<ScalingReport> {
    let mut rows = Vec::new();
    for &n in &cfg.sizes {
        let mut gd = GdEpoch::new(n, cfg)?;
        rows.push(ScalingRow {
            method: "gd",
            num_nodes: n,
            seconds: time_median(cfg.repeats, || gd.run())?,
        });
    }
    for &n in &cfg.sizes {
        let pass = PairwisePass::new(n, cfg);
        rows.push(ScalingRow {
            method: "pairwise",
            num_nodes: n,
            seconds: time_median(cfg.repeats, || pass.run())?,
        });
    }
    let fit = |method: &str| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| (r.num_nodes as f64, r.seconds))
            .unzip();
        loglog_fit(&xs, &ys)
    };
    Ok(ScalingReport {
        gd_fit: fit("gd"),
        pairwise_fit: fit("pairwise"),
        rows,
    })
}
