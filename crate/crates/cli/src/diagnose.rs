//! Summary-vector statistics, the constant-summary ε sweep and the
//! aggregation ablation.

use std::fmt::Write as _;

use ggd_core::discriminate::{train, train_dgi_constant_summary, Aggregation, TrainConfig};
use ggd_core::encoder::{EncoderParams, EncoderShape};
use ggd_core::graph::{CsrGraph, LabeledSplit, NodeFeatures};
use ggd_core::inference::EmbeddingSet;
use ggd_core::probe::{logistic_probe, summary_stats, synthetic_graph, OuterMap, ProbeConfig, SummaryStats};
use ggd_core::rng::{RngState, Stream};
use ggd_core::tensor::Activation;
use ggd_core::Result;

pub const ACTIVATIONS: [Activation; 4] = [Activation::Relu, Activation::LeakyRelu, Activation::PRelu, Activation::Sigmoid];
pub const EPSILONS: [f32; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
/// A row is collapsed when it trails the mean of the other rows by more
/// than this many accuracy points (as a fraction).
pub const COLLAPSE_MARGIN: f64 = 0.05;

/// Synthetic graph with Cora's node count, feature width and mean degree,
/// and about 18 active words per node.
pub fn cora_shape(seed: u64) -> Result<(CsrGraph, NodeFeatures)> {
    synthetic_graph(2708, 4.0, 1433, 18.0 / 1433.0, &mut RngState::new(seed, Stream::Data))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsRow {
    /// False for a fresh initialization, true after training.
    pub trained: bool,
    pub activation: Activation,
    pub outer: OuterMap,
    pub stats: SummaryStats,
}

/// Summary statistics of a freshly initialized one-layer encoder for every
/// activation, with and without the outer sigmoid.
pub fn activation_stats(g: &CsrGraph, x: &NodeFeatures, hidden: usize, seed: u64) -> Result<Vec<StatsRow>> {
    let mut rows = Vec::new();
    for activation in ACTIVATIONS {
        let shape = EncoderShape {
            in_dim: x.dim(),
            hidden,
            num_conv: 1,
            num_proj: 0,
            activation,
            linear_agg: false,
        };
        let params = EncoderParams::init(shape, &mut RngState::new(seed, Stream::Init))?;
        for outer in [OuterMap::None, OuterMap::Sigmoid] {
            rows.push(StatsRow {
                trained: false,
                activation,
                outer,
                stats: summary_stats(g, x, &params, outer)?,
            });
        }
    }
    Ok(rows)
}

/// Summary statistics of an encoder trained with `cfg`. Nothing bounds
/// these; they show how far training moves the summary.
pub fn trained_stats(g: &CsrGraph, x: &NodeFeatures, cfg: &TrainConfig) -> Result<Vec<StatsRow>> {
    let (params, _) = train(g, x, cfg)?;
    [OuterMap::None, OuterMap::Sigmoid]
        .into_iter()
        .map(|outer| {
            Ok(StatsRow {
                trained: true,
                activation: cfg.activation,
                outer,
                stats: summary_stats(g, x, &params, outer)?,
            })
        })
        .collect()
}

pub fn stats_csv(rows: &[StatsRow]) -> String {
    let mut s = String::from("stage,activation,outer,mean,std,range\n");
    for r in rows {
        let outer = match r.outer {
            OuterMap::None => "none",
            OuterMap::Sigmoid => "sigmoid",
        };
        let stage = if r.trained { "trained" } else { "init" };
        let _ = writeln!(s, "{stage},{},{outer},{},{},{}", r.activation, r.stats.mean, r.stats.std, r.stats.range);
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub label: String,
    pub accuracy: f64,
    pub final_loss: f64,
    pub collapsed: bool,
}

fn flag_collapsed(rows: &mut [SweepRow]) {
    let total: f64 = rows.iter().map(|r| r.accuracy).sum();
    let n = rows.len();
    for r in rows.iter_mut() {
        if n > 1 {
            let others = (total - r.accuracy) / (n - 1) as f64;
            r.collapsed = r.accuracy < others - COLLAPSE_MARGIN;
        }
    }
}

/// Probe test accuracy of the embeddings produced by `params`.
pub fn probe_accuracy(
    g: &CsrGraph,
    x: &NodeFeatures,
    split: &LabeledSplit,
    params: &EncoderParams,
    power: usize,
    probe: &ProbeConfig,
) -> Result<f64> {
    let emb = EmbeddingSet::compute(g, x, params, power, 0, "")?;
    Ok(logistic_probe(&emb.h, split, probe)?.test)
}

/// Trains against the constant summary `ε·1` for every `ε` and probes the
/// result. `power = 0` evaluates the encoder output itself.
pub fn epsilon_sweep(
    g: &CsrGraph,
    x: &NodeFeatures,
    split: &LabeledSplit,
    cfg: &TrainConfig,
    epsilons: &[f32],
    power: usize,
    probe: &ProbeConfig,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let (params, trace) = train_dgi_constant_summary(g, x, cfg, eps)?;
        rows.push(SweepRow {
            label: format!("{eps}"),
            accuracy: probe_accuracy(g, x, split, &params, power, probe)?,
            final_loss: trace.final_loss().unwrap_or(f64::NAN),
            collapsed: false,
        });
    }
    flag_collapsed(&mut rows);
    Ok(rows)
}

/// One training run per aggregation mode with a shared seed.
pub fn aggregation_ablation(
    g: &CsrGraph,
    x: &NodeFeatures,
    split: &LabeledSplit,
    cfg: &TrainConfig,
    power: usize,
    probe: &ProbeConfig,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for mode in Aggregation::ALL {
        let cfg = TrainConfig {
            aggregation: mode,
            ..cfg.clone()
        };
        let (params, trace) = train(g, x, &cfg)?;
        rows.push(SweepRow {
            label: mode.to_string(),
            accuracy: probe_accuracy(g, x, split, &params, power, probe)?,
            final_loss: trace.final_loss().unwrap_or(f64::NAN),
            collapsed: false,
        });
    }
    flag_collapsed(&mut rows);
    Ok(rows)
}

pub fn sweep_csv(key: &str, rows: &[SweepRow]) -> String {
    let mut s = format!("{key},accuracy,final_loss,flag\n");
    for r in rows {
        let flag = if r.collapsed { "collapsed" } else { "" };
        let _ = writeln!(s, "{},{},{},{flag}", r.label, r.accuracy, r.final_loss);
    }
    s
}
