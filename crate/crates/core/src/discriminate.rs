//! Group discrimination: per-node logits, the BCE group loss and the
//! training loop.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::encoder::{encode_backward, encode_forward, EncoderParams, EncoderShape, ParamGrads, Propagation};
use crate::error::{GgdError, Result};
use crate::graph::{hex, normalized_adjacency, prepare, CsrGraph, NodeFeatures};
use crate::perturb::{drop_edges, mask_columns, shuffle_rows, AugmentConfig};
use crate::rng::{RngState, Stream};
use crate::tensor::{bce_with_logits, Activation, AdamState, DenseMatrix};

/// Row reduction that turns an embedding into a scalar logit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aggregation {
    Sum,
    Mean,
    Min,
    Max,
    Linear,
}

impl Aggregation {
    pub const ALL: [Aggregation; 5] = [
        Aggregation::Sum,
        Aggregation::Mean,
        Aggregation::Min,
        Aggregation::Max,
        Aggregation::Linear,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Sum => "sum",
            Aggregation::Mean => "mean",
            Aggregation::Min => "min",
            Aggregation::Max => "max",
            Aggregation::Linear => "linear",
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aggregation {
    type Err = GgdError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| GgdError::config("aggregation", format!("unknown mode {s:?}")))
    }
}

fn first_extreme(row: &[f32], better: impl Fn(f32, f32) -> bool) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if better(v, row[best]) {
            best = j;
        }
    }
    best
}

fn linear_weight<'w>(h: &DenseMatrix, linear_w: Option<&'w [f32]>) -> Result<&'w [f32]> {
    let w = linear_w.ok_or(GgdError::MissingLinearWeight)?;
    if w.len() != h.cols() {
        return Err(GgdError::shape(format!(
            "aggregation weight of length {} for {} columns",
            w.len(),
            h.cols()
        )));
    }
    Ok(w)
}

/// One logit per row of `h`.
pub fn aggregate(h: &DenseMatrix, mode: Aggregation, linear_w: Option<&[f32]>) -> Result<Vec<f32>> {
    if h.cols() == 0 {
        return Err(GgdError::shape("cannot aggregate zero-width rows"));
    }
    let w = match mode {
        Aggregation::Linear => Some(linear_weight(h, linear_w)?),
        _ => None,
    };
    Ok((0..h.rows())
        .map(|i| {
            let row = h.row(i);
            match mode {
                Aggregation::Sum => row.iter().map(|&v| v as f64).sum::<f64>() as f32,
                Aggregation::Mean => (row.iter().map(|&v| v as f64).sum::<f64>() / row.len() as f64) as f32,
                Aggregation::Min => row[first_extreme(row, |a, b| a < b)],
                Aggregation::Max => row[first_extreme(row, |a, b| a > b)],
                Aggregation::Linear => row
                    .iter()
                    .zip(w.unwrap())
                    .map(|(&a, &b)| a as f64 * b as f64)
                    .sum::<f64>() as f32,
            }
        })
        .collect())
}

/// Reverse of [`aggregate`]: gradients with respect to `h` and, in linear
/// mode, the aggregation weight. Min and max send the gradient to the first
/// extreme entry of each row.
pub fn aggregate_backward(
    h: &DenseMatrix,
    mode: Aggregation,
    linear_w: Option<&[f32]>,
    grad_logits: &[f32],
) -> Result<(DenseMatrix, Option<Vec<f32>>)> {
    if grad_logits.len() != h.rows() {
        return Err(GgdError::shape(format!(
            "{} logit gradients for {} rows",
            grad_logits.len(),
            h.rows()
        )));
    }
    let cols = h.cols();
    let mut grad_h = DenseMatrix::zeros(h.rows(), cols);
    let mut grad_w = None;
    match mode {
        Aggregation::Sum | Aggregation::Mean => {
            let div = if mode == Aggregation::Mean { cols as f32 } else { 1.0 };
            for (i, &g) in grad_logits.iter().enumerate() {
                grad_h.row_mut(i).fill(g / div);
            }
        }
        Aggregation::Min | Aggregation::Max => {
            for (i, &g) in grad_logits.iter().enumerate() {
                let j = if mode == Aggregation::Min {
                    first_extreme(h.row(i), |a, b| a < b)
                } else {
                    first_extreme(h.row(i), |a, b| a > b)
                };
                grad_h.set(i, j, g);
            }
        }
        Aggregation::Linear => {
            let w = linear_weight(h, linear_w)?;
            let mut gw = vec![0f64; cols];
            for (i, &g) in grad_logits.iter().enumerate() {
                for ((out, &wj), (acc, &hij)) in grad_h.row_mut(i).iter_mut().zip(w).zip(gw.iter_mut().zip(h.row(i))) {
                    *out = g * wj;
                    *acc += g as f64 * hij as f64;
                }
            }
            grad_w = Some(gw.into_iter().map(|v| v as f32).collect());
        }
    }
    Ok((grad_h, grad_w))
}

/// BCE over the positive group (target 1) followed by the negative group
/// (target 0), averaged over all `2N` samples.
pub fn gd_loss(logits_pos: &[f32], logits_neg: &[f32]) -> Result<(f64, Vec<f32>, Vec<f32>)> {
    if logits_pos.len() != logits_neg.len() {
        return Err(GgdError::shape(format!(
            "{} positive vs {} negative logits",
            logits_pos.len(),
            logits_neg.len()
        )));
    }
    let n = logits_pos.len();
    let logits: Vec<f32> = logits_pos.iter().chain(logits_neg).copied().collect();
    let targets: Vec<f32> = (0..2 * n).map(|i| if i < n { 1.0 } else { 0.0 }).collect();
    let (loss, mut grad) = bce_with_logits(&logits, &targets)?;
    let grad_neg = grad.split_off(n);
    Ok((loss, grad, grad_neg))
}

/// How node embeddings become logits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// `agg(h_i)` with a row reduction.
    Group(Aggregation),
    /// `ε · sum(h_i)`: mutual-information contrast against a constant
    /// summary vector `ε·1` with no bilinear weight.
    ConstantSummary(f32),
}

impl Objective {
    fn logits(self, h: &DenseMatrix, params: &EncoderParams) -> Result<Vec<f32>> {
        match self {
            Objective::Group(a) => aggregate(h, a, params.agg_weight.as_deref()),
            Objective::ConstantSummary(eps) => {
                Ok(aggregate(h, Aggregation::Sum, None)?.into_iter().map(|v| eps * v).collect())
            }
        }
    }

    fn backward(
        self,
        h: &DenseMatrix,
        params: &EncoderParams,
        grad_logits: &[f32],
    ) -> Result<(DenseMatrix, Option<Vec<f32>>)> {
        match self {
            Objective::Group(a) => aggregate_backward(h, a, params.agg_weight.as_deref(), grad_logits),
            Objective::ConstantSummary(eps) => {
                let scaled: Vec<f32> = grad_logits.iter().map(|&g| eps * g).collect();
                aggregate_backward(h, Aggregation::Sum, None, &scaled)
            }
        }
    }
}

/// Loss and parameter gradients for one positive and one negative branch
/// sharing the same propagation operator.
pub fn gd_forward_backward(
    prop: &dyn Propagation,
    z_pos: &DenseMatrix,
    z_neg: &DenseMatrix,
    params: &EncoderParams,
    objective: Objective,
) -> Result<(f64, ParamGrads)> {
    let (pos, neg) = rayon::join(
        || encode_forward(prop, z_pos, params),
        || encode_forward(prop, z_neg, params),
    );
    let (h_pos, cache_pos) = pos?;
    let (h_neg, cache_neg) = neg?;
    let (loss, g_pos, g_neg) = gd_loss(&objective.logits(&h_pos, params)?, &objective.logits(&h_neg, params)?)?;
    let (gh_pos, gw_pos) = objective.backward(&h_pos, params, &g_pos)?;
    let (gh_neg, gw_neg) = objective.backward(&h_neg, params, &g_neg)?;
    let (grads_pos, grads_neg) = rayon::join(
        || encode_backward(&gh_pos, &cache_pos, params),
        || encode_backward(&gh_neg, &cache_neg, params),
    );
    let mut grads = grads_pos?;
    grads.accumulate(&grads_neg?)?;
    if let (Some(total), Some(a), Some(b)) = (grads.agg_weight.as_mut(), gw_pos, gw_neg) {
        for ((t, x), y) in total.iter_mut().zip(a).zip(b) {
            *t = x + y;
        }
    }
    Ok((loss, grads))
}

pub const DEFAULT_PATIENCE: usize = 20;

/// Every knob of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Stop after this many epochs without a new best loss.
    pub patience: Option<usize>,
    pub hidden: usize,
    pub num_conv: usize,
    pub num_proj: usize,
    pub aggregation: Aggregation,
    pub augment: AugmentConfig,
    pub seed: u64,
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 500,
            patience: Some(DEFAULT_PATIENCE),
            hidden: 512,
            num_conv: 1,
            num_proj: 1,
            aggregation: Aggregation::Sum,
            augment: AugmentConfig::default(),
            seed: 0,
            activation: Activation::PRelu,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| GgdError::config(key, format!("cannot parse {value:?}")))
}

impl TrainConfig {
    pub const KEYS: [&'static str; 12] = [
        "activation",
        "aggregation",
        "augment",
        "drop_edge_p",
        "drop_feat_p",
        "epochs",
        "hidden",
        "lr",
        "num_conv",
        "num_proj",
        "patience",
        "seed",
    ];

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(GgdError::config("lr", "must be positive and finite"));
        }
        if self.epochs == 0 {
            return Err(GgdError::config("epochs", "must be at least 1"));
        }
        if self.hidden == 0 {
            return Err(GgdError::config("hidden", "must be at least 1"));
        }
        if self.num_conv == 0 {
            return Err(GgdError::config("num_conv", "must be at least 1"));
        }
        if self.patience == Some(0) {
            return Err(GgdError::config("patience", "must be at least 1 or none"));
        }
        self.augment.validate()
    }

    pub fn encoder_shape(&self, in_dim: usize) -> EncoderShape {
        EncoderShape {
            in_dim,
            hidden: self.hidden,
            num_conv: self.num_conv,
            num_proj: self.num_proj,
            activation: self.activation,
            linear_agg: self.aggregation == Aggregation::Linear,
        }
    }

    /// Sets one key; returns `Ok(false)` if the key is not a training key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "lr" => self.lr = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "patience" => {
                self.patience = match value {
                    "none" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "hidden" => self.hidden = parse_value(key, value)?,
            "num_conv" => self.num_conv = parse_value(key, value)?,
            "num_proj" => self.num_proj = parse_value(key, value)?,
            "aggregation" => self.aggregation = value.parse()?,
            "augment" => self.augment.enabled = parse_value(key, value)?,
            "drop_edge_p" => self.augment.drop_edge_p = parse_value(key, value)?,
            "drop_feat_p" => self.augment.drop_feat_p = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "activation" => {
                self.activation = value
                    .parse()
                    .map_err(|_| GgdError::config(key, format!("unknown activation {value:?}")))?
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Every key with its value, sorted by key.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = vec![
            ("activation", self.activation.to_string()),
            ("aggregation", self.aggregation.to_string()),
            ("augment", self.augment.enabled.to_string()),
            ("drop_edge_p", self.augment.drop_edge_p.to_string()),
            ("drop_feat_p", self.augment.drop_feat_p.to_string()),
            ("epochs", self.epochs.to_string()),
            ("hidden", self.hidden.to_string()),
            ("lr", self.lr.to_string()),
            ("num_conv", self.num_conv.to_string()),
            ("num_proj", self.num_proj.to_string()),
            ("patience", self.patience.map_or("none".into(), |p| p.to_string())),
            ("seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        kv.sort();
        kv
    }

    pub fn from_kv<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in pairs {
            if !cfg.set(k, v)? {
                return Err(GgdError::config(k, "unknown key"));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn hash(&self) -> String {
        config_hash(&self.to_kv())
    }
}

/// SHA-256 over sorted `key=value` lines, so key order never matters.
pub fn config_hash(kv: &[(String, String)]) -> String {
    let mut lines: Vec<String> = kv.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    lines.sort();
    let mut h = Sha256::new();
    for l in lines {
        h.update(l.as_bytes());
    }
    hex(&h.finalize())
}

/// Per-epoch record of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    /// Loss of the parameters entering each epoch.
    pub losses: Vec<f64>,
    pub seconds: Vec<f64>,
    pub best_epoch: usize,
    pub adam_steps: u64,
}

impl TrainTrace {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "epoch,loss,seconds")?;
        for (e, (l, s)) in self.losses.iter().zip(&self.seconds).enumerate() {
            writeln!(w, "{e},{l},{s}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}

/// Tracks the best loss and decides when to stop.
pub(crate) struct EarlyStopping {
    patience: Option<usize>,
    best_loss: f64,
    best_epoch: usize,
    best_params: Option<EncoderParams>,
    waited: usize,
}

impl EarlyStopping {
    pub(crate) fn new(patience: Option<usize>) -> Self {
        Self {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            best_params: None,
            waited: 0,
        }
    }

    /// Records the loss of `params`; returns true when training should stop.
    pub(crate) fn observe(&mut self, epoch: usize, loss: f64, params: &EncoderParams) -> bool {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = epoch;
            self.waited = 0;
            if self.patience.is_some() {
                self.best_params = Some(params.clone());
            }
            false
        } else {
            self.waited += 1;
            self.patience.is_some_and(|p| self.waited >= p)
        }
    }

    /// Best parameters under patience, otherwise `last`.
    pub(crate) fn finish(self, last: EncoderParams, trace: &mut TrainTrace) -> EncoderParams {
        trace.best_epoch = self.best_epoch;
        self.best_params.unwrap_or(last)
    }
}

pub(crate) fn check_finite(epoch: usize, loss: f64, grads: &ParamGrads) -> Result<()> {
    let norms = grads.norms();
    if !loss.is_finite() || norms.iter().any(|n| !n.is_finite()) {
        return Err(GgdError::NonFinite {
            epoch,
            loss,
            grad_norms: norms,
        });
    }
    Ok(())
}

fn run_training(g: &CsrGraph, x: &NodeFeatures, cfg: &TrainConfig, objective: Objective) -> Result<(EncoderParams, TrainTrace)> {
    cfg.validate()?;
    let prep = prepare(g, x)?;
    let mut params = EncoderParams::init(cfg.encoder_shape(x.dim()), &mut RngState::new(cfg.seed, Stream::Init))?;
    let mut adam = AdamState::new(cfg.lr);
    let mut trace = TrainTrace::default();
    let mut stopping = EarlyStopping::new(cfg.patience);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let key = epoch as u64 + 1;
        let (adj, z) = if cfg.augment.enabled {
            let mut rng = RngState::derived(cfg.seed, Stream::Dropout, key, 0);
            let adj = normalized_adjacency(&drop_edges(g, cfg.augment.drop_edge_p, &mut rng)?)?;
            let z = mask_columns(&prep.features, cfg.augment.drop_feat_p, &mut rng)?;
            (Some(adj), Some(z))
        } else {
            (None, None)
        };
        let adj = adj.as_ref().unwrap_or(&prep.adj);
        let z = z.as_ref().unwrap_or(&prep.features);
        let (z_neg, _) = shuffle_rows(z, &mut RngState::derived(cfg.seed, Stream::Corruption, key, 0))?;
        let (loss, grads) = gd_forward_backward(adj, z, &z_neg, &params, objective)?;
        check_finite(epoch, loss, &grads)?;
        trace.losses.push(loss);
        if stopping.observe(epoch, loss, &params) {
            trace.seconds.push(start.elapsed().as_secs_f64());
            break;
        }
        params.apply_adam(&mut adam, &grads)?;
        trace.adam_steps = adam.steps();
        trace.seconds.push(start.elapsed().as_secs_f64());
    }
    let params = stopping.finish(params, &mut trace);
    Ok((params, trace))
}

/// Full-batch group-discrimination training, one Adam step per epoch.
///
/// Each epoch optionally augments the graph, corrupts the (augmented)
/// features by a row shuffle, encodes both branches with shared parameters
/// and minimizes the BCE group loss. Under `patience` the parameters that
/// produced the lowest loss are returned, otherwise the final ones.
pub fn train(g: &CsrGraph, x: &NodeFeatures, cfg: &TrainConfig) -> Result<(EncoderParams, TrainTrace)> {
    run_training(g, x, cfg, Objective::Group(cfg.aggregation))
}

/// Training against a constant summary vector `ε·1`: logits are
/// `ε·sum(h_i)`. The configured aggregation is ignored.
pub fn train_dgi_constant_summary(
    g: &CsrGraph,
    x: &NodeFeatures,
    cfg: &TrainConfig,
    epsilon: f32,
) -> Result<(EncoderParams, TrainTrace)> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(GgdError::config("epsilon", "must be finite and non-negative"));
    }
    let cfg = TrainConfig {
        aggregation: Aggregation::Sum,
        ..cfg.clone()
    };
    run_training(g, x, &cfg, Objective::ConstantSummary(epsilon))
}
