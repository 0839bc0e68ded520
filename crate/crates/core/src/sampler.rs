//! Layered neighborhood sampling and mini-batch training.
//!
//! A [`BlockStack`] holds one bipartite block per conv layer. Block `l`
//! maps its source nodes (the input rows of layer `l`) to its destination
//! nodes (the output rows); the destinations of block `l` are the sources of
//! block `l + 1` and the destinations of the last block are the seeds.

use std::sync::mpsc;
use std::time::Instant;

use crate::discriminate::{check_finite, gd_forward_backward, EarlyStopping, Objective, TrainConfig, TrainTrace};
use crate::encoder::{EncoderParams, Propagation};
use crate::error::{GgdError, Result};
use crate::graph::{prepare, CsrGraph, NodeFeatures};
use crate::perturb::{drop_edges, mask_columns, shuffle_rows};
use crate::rng::{RngState, Stream};
use crate::tensor::{spmm, AdamState, DenseMatrix, SparseRows};

/// Rectangular CSR operator with weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBlock {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    weights: Vec<f64>,
}

impl SparseBlock {
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn transpose(&self) -> SparseBlock {
        let mut counts = vec![0usize; self.cols + 1];
        for &j in &self.col_idx {
            counts[j as usize + 1] += 1;
        }
        for j in 0..self.cols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0u32; self.nnz()];
        let mut weights = vec![0f64; self.nnz()];
        for i in 0..self.rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k] as usize;
                col_idx[next[j]] = i as u32;
                weights[next[j]] = self.weights[k];
                next[j] += 1;
            }
        }
        SparseBlock {
            rows: self.cols,
            cols: self.rows,
            row_ptr,
            col_idx,
            weights,
        }
    }
}

impl SparseRows for SparseBlock {
    fn num_rows(&self) -> usize {
        self.rows
    }

    fn num_cols(&self) -> usize {
        self.cols
    }

    fn row_entries(&self, i: usize) -> (&[u32], Option<&[f64]>) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], Some(&self.weights[r]))
    }
}

/// One hop of sampled edges, normalized by sampled degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    /// Global ids of the output rows, ascending.
    pub dst: Vec<u32>,
    /// Global ids of the input rows, ascending; a superset of `dst`.
    pub src: Vec<u32>,
    /// `dst × src` operator with weights `1/sqrt(r_i · c_j)`, where `r_i` and
    /// `c_j` count sampled entries per row and per column.
    pub op: SparseBlock,
    op_t: SparseBlock,
}

impl Block {
    /// Sampled edges as global `(dst, src)` pairs.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.op.rows).flat_map(move |i| {
            self.op.row_entries(i).0.iter().map(move |&j| (self.dst[i], self.src[j as usize]))
        })
    }
}

/// Per-layer blocks for one batch of seed nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStack {
    pub seeds: Vec<u32>,
    /// `blocks[0]` consumes the input features.
    pub blocks: Vec<Block>,
}

impl BlockStack {
    /// Nodes whose features enter the first layer.
    pub fn input_nodes(&self) -> &[u32] {
        &self.blocks[0].src
    }
}

impl Propagation for BlockStack {
    fn forward(&self, layer: usize, m: &DenseMatrix) -> Result<DenseMatrix> {
        spmm(&self.blocks[layer].op, m)
    }

    fn adjoint(&self, layer: usize, m: &DenseMatrix) -> Result<DenseMatrix> {
        spmm(&self.blocks[layer].op_t, m)
    }
}

fn build_block(dst: Vec<u32>, rows: Vec<Vec<u32>>) -> Block {
    let mut src: Vec<u32> = rows.iter().flatten().copied().collect();
    src.sort_unstable();
    src.dedup();
    let mut col_deg = vec![0usize; src.len()];
    let mut row_ptr = vec![0usize];
    let mut col_idx = Vec::new();
    for row in &rows {
        for &u in row {
            let j = src.binary_search(&u).expect("source collected above");
            col_deg[j] += 1;
            col_idx.push(j as u32);
        }
        row_ptr.push(col_idx.len());
    }
    let inv_sqrt = |d: usize| 1.0 / (d as f64).sqrt();
    let mut weights = Vec::with_capacity(col_idx.len());
    for (i, row) in rows.iter().enumerate() {
        let ri = inv_sqrt(row.len());
        for &j in &col_idx[row_ptr[i]..row_ptr[i + 1]] {
            weights.push(1.0 * ri * inv_sqrt(col_deg[j as usize]));
        }
    }
    let op = SparseBlock {
        rows: dst.len(),
        cols: src.len(),
        row_ptr,
        col_idx,
        weights,
    };
    let op_t = op.transpose();
    Block { dst, src, op, op_t }
}

/// Samples one block per fanout, outermost layer first in the result.
///
/// Each destination node keeps its self loop plus `min(fanout, degree)`
/// distinct neighbors drawn uniformly without replacement. Edge weights of
/// `g` are ignored.
pub fn sample_blocks(g: &CsrGraph, seeds: &[u32], fanouts: &[usize], rng: &mut RngState) -> Result<BlockStack> {
    if fanouts.is_empty() {
        return Err(GgdError::config("fanouts", "need one fanout per conv layer"));
    }
    for &s in seeds {
        if s as usize >= g.num_nodes() {
            return Err(GgdError::InvalidNode {
                id: s as u64,
                num_nodes: g.num_nodes(),
            });
        }
    }
    let mut frontier: Vec<u32> = seeds.to_vec();
    frontier.sort_unstable();
    frontier.dedup();
    let mut blocks = Vec::with_capacity(fanouts.len());
    for &fanout in fanouts.iter().rev() {
        let rows: Vec<Vec<u32>> = frontier
            .iter()
            .map(|&v| {
                let nbrs: Vec<u32> = g.neighbors(v as usize).iter().copied().filter(|&u| u != v).collect();
                let mut row: Vec<u32> = if fanout >= nbrs.len() {
                    nbrs
                } else {
                    rng.sample_distinct(nbrs.len(), fanout).into_iter().map(|k| nbrs[k]).collect()
                };
                row.push(v);
                row.sort_unstable();
                row
            })
            .collect();
        let block = build_block(frontier, rows);
        frontier = block.src.clone();
        blocks.push(block);
    }
    blocks.reverse();
    Ok(BlockStack {
        seeds: blocks.last().expect("at least one block").dst.clone(),
        blocks,
    })
}

/// Mini-batch settings.
#[derive(Debug, Clone, PartialEq)]
pub struct MinibatchConfig {
    pub batch_size: usize,
    /// One entry per conv layer, outermost first.
    pub fanouts: Vec<usize>,
    /// Batches sampled ahead of the optimizer on a helper thread; 0 samples
    /// inline. Results do not depend on the depth.
    pub prefetch: usize,
}

impl Default for MinibatchConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            fanouts: vec![12, 12],
            prefetch: 0,
        }
    }
}

/// Seed batches of one epoch: a shuffled node order cut into chunks, each
/// chunk sorted.
pub fn epoch_batches(num_nodes: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<u32>> {
    let order = RngState::derived(seed, Stream::Sampler, epoch as u64 + 1, 0).permutation(num_nodes);
    order
        .chunks(batch_size.max(1))
        .map(|c| {
            let mut b: Vec<u32> = c.iter().map(|&v| v as u32).collect();
            b.sort_unstable();
            b
        })
        .collect()
}

fn batch_rng(seed: u64, stream: Stream, epoch: usize, batch: usize) -> RngState {
    RngState::derived(seed, stream, epoch as u64 + 1, batch as u64 + 1)
}

/// Group-discrimination training on sampled blocks with one Adam step per
/// batch.
///
/// Negatives shuffle the feature rows of each batch's input nodes. The
/// per-epoch loss in the trace is the batch-size-weighted mean of the batch
/// losses; under patience the parameters at the end of the best epoch are
/// returned.
pub fn minibatch_train(
    g: &CsrGraph,
    x: &NodeFeatures,
    cfg: &TrainConfig,
    mb: &MinibatchConfig,
) -> Result<(EncoderParams, TrainTrace)> {
    cfg.validate()?;
    if mb.batch_size == 0 {
        return Err(GgdError::config("batch_size", "must be at least 1"));
    }
    if mb.fanouts.len() != cfg.num_conv {
        return Err(GgdError::config(
            "fanouts",
            format!("{} fanouts for {} conv layers", mb.fanouts.len(), cfg.num_conv),
        ));
    }
    let prep = prepare(g, x)?;
    let objective = Objective::Group(cfg.aggregation);
    let mut params = EncoderParams::init(cfg.encoder_shape(x.dim()), &mut RngState::new(cfg.seed, Stream::Init))?;
    let mut adam = AdamState::new(cfg.lr);
    let mut trace = TrainTrace::default();
    let mut stopping = EarlyStopping::new(cfg.patience);

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let (graph, z) = if cfg.augment.enabled {
            let mut rng = RngState::derived(cfg.seed, Stream::Dropout, epoch as u64 + 1, 0);
            let dropped = drop_edges(g, cfg.augment.drop_edge_p, &mut rng)?;
            let z = mask_columns(&prep.features, cfg.augment.drop_feat_p, &mut rng)?;
            (dropped, z)
        } else {
            (g.clone(), prep.features.clone())
        };
        let batches = epoch_batches(g.num_nodes(), mb.batch_size, cfg.seed, epoch);
        let sample = |b: usize| {
            sample_blocks(&graph, &batches[b], &mb.fanouts, &mut batch_rng(cfg.seed, Stream::Sampler, epoch, b))
        };

        let mut weighted = 0f64;
        let mut step = |b: usize, stack: BlockStack| -> Result<()> {
            let z_pos = z.gather_rows(&stack.input_nodes().iter().map(|&v| v as usize).collect::<Vec<_>>())?;
            // Batch `b` corrupts with key `(epoch + 1, b)`, so a single batch holding
            // every node draws the same negatives as full-batch training.
            let mut corrupt = RngState::derived(cfg.seed, Stream::Corruption, epoch as u64 + 1, b as u64);
            let (z_neg, _) = shuffle_rows(&z_pos, &mut corrupt)?;
            let (loss, grads) = gd_forward_backward(&stack, &z_pos, &z_neg, &params, objective)?;
            check_finite(epoch, loss, &grads)?;
            weighted += loss * stack.seeds.len() as f64;
            params.apply_adam(&mut adam, &grads)
        };

        if mb.prefetch == 0 {
            for b in 0..batches.len() {
                step(b, sample(b)?)?;
            }
        } else {
            std::thread::scope(|scope| -> Result<()> {
                let (tx, rx) = mpsc::sync_channel(mb.prefetch);
                let sample = &sample;
                let n = batches.len();
                scope.spawn(move || {
                    for b in 0..n {
                        if tx.send(sample(b)).is_err() {
                            break;
                        }
                    }
                });
                for b in 0..n {
                    let stack = rx.recv().map_err(|_| GgdError::Corruption("sampler thread stopped".into()))??;
                    step(b, stack)?;
                }
                Ok(())
            })?;
        }

        let loss = weighted / g.num_nodes() as f64;
        trace.losses.push(loss);
        trace.adam_steps = adam.steps();
        trace.seconds.push(start.elapsed().as_secs_f64());
        if stopping.observe(epoch, loss, &params) {
            break;
        }
    }
    let params = stopping.finish(params, &mut trace);
    Ok((params, trace))
}
