//! Independent f64 reference implementations used as test oracles.
//!
//! The references never call the library's kernels: graphs become dense
//! matrices, the encoder is re-derived from scratch, and gradients come from
//! central finite differences. `worst_gradient_error` is the one driver that
//! runs the library side of a comparison.
#![allow(dead_code)]

use ggd_core::discriminate::{gd_forward_backward, Aggregation, Objective};
use ggd_core::encoder::{EncoderParams, EncoderShape};
use ggd_core::graph::{normalized_adjacency, CsrGraph, LabeledSplit};
use ggd_core::perturb::shuffle_rows;
use ggd_core::rng::{RngState, Stream};
use ggd_core::tensor::{Activation, DenseMatrix};

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(m: &DenseMatrix) -> Mat {
    (0..m.rows()).map(|i| m.row(i).iter().map(|&v| v as f64).collect()).collect()
}

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b.first().map_or(0, |r| r.len()));
    let mut out = zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            out[i][j] = (0..k).map(|t| a[i][t] * b[t][j]).sum();
        }
    }
    out
}

/// Random undirected graph on `n` nodes with roughly `m` edges.
pub fn random_graph(n: usize, m: usize, rng: &mut RngState) -> CsrGraph {
    let edges: Vec<(u32, u32)> = (0..m)
        .map(|_| (rng.below(n) as u32, rng.below(n) as u32))
        .collect();
    CsrGraph::from_edges(n, edges, true).unwrap()
}

pub fn random_matrix(r: usize, c: usize, rng: &mut RngState) -> DenseMatrix {
    DenseMatrix::from_fn(r, c, |_, _| (2.0 * rng.uniform() - 1.0) as f32)
}

/// Dense adjacency (with weights when present).
pub fn dense_adjacency(g: &CsrGraph) -> Mat {
    let n = g.num_nodes();
    let mut a = zeros(n, n);
    for i in 0..n {
        for &j in g.neighbors(i) {
            a[i][j as usize] = g.weight(i, j as usize).unwrap_or(1.0);
        }
    }
    a
}

/// `D^{-1/2}(A + I)D^{-1/2}` from the raw structure of `g`, with any
/// existing diagonal entry replaced by 1.
pub fn dense_normalized(g: &CsrGraph) -> Mat {
    let n = g.num_nodes();
    let mut a = zeros(n, n);
    for (u, v) in g.edges() {
        a[u as usize][v as usize] = 1.0;
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum::<f64>()).collect();
    for i in 0..n {
        for j in 0..n {
            a[i][j] /= (d[i] * d[j]).sqrt();
        }
    }
    a
}

pub fn act(a: Activation, x: f64, slope: f64) -> f64 {
    match a {
        Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        Activation::Relu => x.max(0.0),
        Activation::LeakyRelu => {
            if x > 0.0 {
                x
            } else {
                0.01 * x
            }
        }
        Activation::PRelu => {
            if x > 0.0 {
                x
            } else {
                slope * x
            }
        }
    }
}

/// The encoder, rebuilt in f64 from a flat parameter vector laid out like
/// `EncoderParams::flatten`.
pub struct ShadowNet {
    pub activation: Activation,
    pub dims: Vec<(usize, usize)>,
    pub num_conv: usize,
    pub num_proj: usize,
    pub has_agg: bool,
}

impl ShadowNet {
    pub fn of(p: &EncoderParams) -> Self {
        let mut dims: Vec<(usize, usize)> = p.conv.iter().map(|c| (c.weight.rows(), c.weight.cols())).collect();
        dims.extend(p.proj.iter().map(|c| (c.weight.rows(), c.weight.cols())));
        Self {
            activation: p.activation,
            dims,
            num_conv: p.conv.len(),
            num_proj: p.proj.len(),
            has_agg: p.agg_weight.is_some(),
        }
    }

    pub fn forward(&self, theta: &[f64], adj: &Mat, z: &Mat) -> Mat {
        let mut pos = 0;
        let mut take = |n: usize| {
            let s = theta[pos..pos + n].to_vec();
            pos += n;
            s
        };
        let mut h = z.clone();
        for l in 0..self.num_conv {
            let (r, c) = self.dims[l];
            let w = take(r * c);
            let slope = take(1)[0];
            let w: Mat = (0..r).map(|i| w[i * c..(i + 1) * c].to_vec()).collect();
            let pre = matmul(&matmul(adj, &h), &w);
            h = pre.iter().map(|row| row.iter().map(|&x| act(self.activation, x, slope)).collect()).collect();
        }
        for l in 0..self.num_proj {
            let (r, c) = self.dims[self.num_conv + l];
            let w = take(r * c);
            let b = take(c);
            let w: Mat = (0..r).map(|i| w[i * c..(i + 1) * c].to_vec()).collect();
            let mut pre = matmul(&h, &w);
            for row in pre.iter_mut() {
                for (v, bj) in row.iter_mut().zip(&b) {
                    *v += bj;
                }
            }
            h = if l + 1 < self.num_proj {
                let slope = take(1)[0];
                pre.iter().map(|row| row.iter().map(|&x| act(self.activation, x, slope)).collect()).collect()
            } else {
                pre
            };
        }
        h
    }

    fn agg_weight<'a>(&self, theta: &'a [f64]) -> Option<&'a [f64]> {
        let hidden = self.dims.last().unwrap().1;
        self.has_agg.then(|| &theta[theta.len() - hidden..])
    }

    /// Group-discrimination BCE over `2N` samples.
    pub fn loss(&self, theta: &[f64], adj: &Mat, z_pos: &Mat, z_neg: &Mat, mode: Aggregation) -> f64 {
        let w = self.agg_weight(theta);
        let logits = |h: &Mat| -> Vec<f64> {
            h.iter()
                .map(|row| match mode {
                    Aggregation::Sum => row.iter().sum(),
                    Aggregation::Mean => row.iter().sum::<f64>() / row.len() as f64,
                    Aggregation::Min => row.iter().copied().fold(f64::INFINITY, f64::min),
                    Aggregation::Max => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    Aggregation::Linear => row.iter().zip(w.unwrap()).map(|(a, b)| a * b).sum(),
                })
                .collect()
        };
        let lp = logits(&self.forward(theta, adj, z_pos));
        let ln = logits(&self.forward(theta, adj, z_neg));
        let bce = |x: f64, y: f64| -(y * sigmoid(x).ln() + (1.0 - y) * (1.0 - sigmoid(x)).ln());
        let total: f64 = lp.iter().map(|&x| bce(x, 1.0)).sum::<f64>() + ln.iter().map(|&x| bce(x, 0.0)).sum::<f64>();
        total / (lp.len() + ln.len()) as f64
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Central finite differences of `f` at every coordinate of `theta`.
pub fn fd_gradient(theta: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|k| {
            let orig = t[k];
            t[k] = orig + h;
            let up = f(&t);
            t[k] = orig - h;
            let down = f(&t);
            t[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Relative error with a denominator floor for near-zero gradients.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Softmax regression written directly from its definition: column
/// z-scores from the train rows, softmax, cross-entropy gradient, Adam, all
/// in f64.
pub fn softmax_oracle_accuracy(
    h: &DenseMatrix,
    split: &LabeledSplit,
    init_w: &[f64],
    classes: usize,
    lr: f64,
    epochs: usize,
    l2: f64,
) -> (f64, f64) {
    let d = h.cols();
    let mut x = to_mat(h);
    for k in 0..d {
        let col: Vec<f64> = split.train.iter().map(|&v| x[v][k]).collect();
        let mu = col.iter().sum::<f64>() / col.len() as f64;
        let sd = (col.iter().map(|c| (c - mu) * (c - mu)).sum::<f64>() / col.len() as f64).sqrt();
        let sd = if sd > 0.0 { sd } else { 1.0 };
        for row in x.iter_mut() {
            row[k] = (row[k] - mu) / sd;
        }
    }
    let mut w: Mat = (0..d).map(|i| init_w[i * classes..(i + 1) * classes].to_vec()).collect();
    let mut b = vec![0.0; classes];
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut mw = zeros(d, classes);
    let mut vw = zeros(d, classes);
    let mut mb = vec![0.0; classes];
    let mut vb = vec![0.0; classes];
    let train = &split.train;
    let n = train.len() as f64;
    for t in 1..=epochs {
        let mut gw = zeros(d, classes);
        let mut gb = vec![0.0; classes];
        for &v in train {
            let logits: Vec<f64> = (0..classes).map(|c| b[c] + (0..d).map(|k| x[v][k] * w[k][c]).sum::<f64>()).collect();
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in 0..classes {
                let y = if split.label(v) as usize == c { 1.0 } else { 0.0 };
                let g = (e[c] / z - y) / n;
                gb[c] += g;
                for k in 0..d {
                    gw[k][c] += x[v][k] * g;
                }
            }
        }
        let bc1 = 1.0 - b1.powi(t as i32);
        let bc2 = 1.0 - b2.powi(t as i32);
        for k in 0..d {
            for c in 0..classes {
                let g = gw[k][c] + l2 * w[k][c];
                mw[k][c] = b1 * mw[k][c] + (1.0 - b1) * g;
                vw[k][c] = b2 * vw[k][c] + (1.0 - b2) * g * g;
                w[k][c] -= lr * (mw[k][c] / bc1) / ((vw[k][c] / bc2).sqrt() + eps);
            }
        }
        for c in 0..classes {
            mb[c] = b1 * mb[c] + (1.0 - b1) * gb[c];
            vb[c] = b2 * vb[c] + (1.0 - b2) * gb[c] * gb[c];
            b[c] -= lr * (mb[c] / bc1) / ((vb[c] / bc2).sqrt() + eps);
        }
    }
    let acc = |nodes: &[usize]| {
        let correct = nodes
            .iter()
            .filter(|&&v| {
                let logits: Vec<f64> = (0..classes).map(|c| b[c] + (0..d).map(|k| x[v][k] * w[k][c]).sum::<f64>()).collect();
                let mut best = 0;
                for c in 1..classes {
                    if logits[c] > logits[best] {
                        best = c;
                    }
                }
                best == split.label(v) as usize
            })
            .count();
        correct as f64 / nodes.len() as f64
    };
    (acc(&split.train), acc(&split.test))
}

/// Random labeled dataset whose classes are shifted Gaussian-like clouds.
pub fn blob_dataset(n: usize, d: usize, k: usize, spread: f64, seed: u64) -> (DenseMatrix, LabeledSplit) {
    let mut rng = RngState::new(seed, Stream::Data);
    let centers: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.uniform() * 2.0 - 1.0).collect()).collect();
    let labels: Vec<u32> = (0..n).map(|i| (i % k) as u32).collect();
    let h = DenseMatrix::from_fn(n, d, |i, j| {
        (centers[labels[i] as usize][j] + spread * (rng.uniform() * 2.0 - 1.0)) as f32
    });
    let order = rng.permutation(n);
    let cut = n / 4;
    let split = LabeledSplit::new(
        labels.into_iter().map(Some).collect(),
        order[..cut].to_vec(),
        vec![],
        order[cut..].to_vec(),
    )
    .unwrap();
    (h, split)
}

pub fn graph_from(n: usize, m: usize, self_loops: bool, weighted: bool, seed: u64) -> CsrGraph {
    let mut rng = RngState::new(seed, Stream::Data);
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let u = rng.below(n) as u32;
        let v = rng.below(n) as u32;
        if u != v || self_loops {
            edges.push((u, v));
        }
    }
    let g = CsrGraph::from_edges(n, edges, true).unwrap();
    if !weighted {
        return g;
    }
    let w: Vec<f64> = g.edges().map(|(u, v)| 0.5 + ((u * 31 + v * 17) % 7) as f64 / 4.0).collect();
    CsrGraph::from_parts(n, g.row_ptr().to_vec(), g.col_idx().to_vec(), Some(w)).unwrap()
}

pub fn matrix_from(r: usize, c: usize, seed: u64) -> DenseMatrix {
    let mut rng = RngState::new(seed, Stream::Init);
    DenseMatrix::from_fn(r, c, |_, _| (2.0 * rng.uniform() - 1.0) as f32)
}

pub const FD_STEP: f64 = 1e-4;
pub const GRAD_TOL: f64 = 1e-3;

/// Worst relative error between the analytic gradient and central
/// differences of the f64 shadow loss, over every parameter.
pub fn worst_gradient_error(activation: Activation, mode: Aggregation, num_conv: usize, num_proj: usize, seed: u64) -> f64 {
    let mut rng = RngState::new(seed, Stream::Data);
    let n = 14;
    let g = random_graph(n, 20, &mut rng);
    let z = random_matrix(n, 5, &mut rng);
    let (z_neg, _) = shuffle_rows(&z, &mut rng).unwrap();
    let shape = EncoderShape {
        in_dim: 5,
        hidden: 4,
        num_conv,
        num_proj,
        activation,
        linear_agg: mode == Aggregation::Linear,
    };
    let mut params = EncoderParams::init(shape, &mut RngState::new(seed, Stream::Init)).unwrap();
    // Scale weights up so gradients are well away from zero.
    for w in params.conv.iter_mut().map(|c| &mut c.weight).chain(params.proj.iter_mut().map(|l| &mut l.weight)) {
        w.as_mut_slice().iter_mut().for_each(|v| *v *= 1.5);
    }
    let adj = normalized_adjacency(&g).unwrap();
    let (_, grads) = gd_forward_backward(&adj, &z, &z_neg, &params, Objective::Group(mode)).unwrap();

    let net = ShadowNet::of(&params);
    let dense = dense_normalized(&g);
    let (zp, zn) = (to_mat(&z), to_mat(&z_neg));
    let theta: Vec<f64> = params.flatten().iter().map(|&v| v as f64).collect();
    let numeric = fd_gradient(&theta, FD_STEP, |t| net.loss(t, &dense, &zp, &zn, mode));
    let analytic = grads.flatten();
    assert_eq!(analytic.len(), numeric.len());

    let slope_slots = slope_positions(&params);
    let mut worst = 0.0f64;
    for (k, (a, b)) in analytic.iter().zip(&numeric).enumerate() {
        if !activation.slope_is_learnable() && slope_slots.contains(&k) {
            continue;
        }
        worst = worst.max(rel_err(*a as f64, *b, 1e-4));
    }
    worst
}

fn slope_positions(p: &EncoderParams) -> Vec<usize> {
    let mut out = Vec::new();
    let mut pos = 0;
    for c in &p.conv {
        pos += c.weight.rows() * c.weight.cols();
        out.push(pos);
        pos += 1;
    }
    for l in &p.proj {
        pos += l.weight.rows() * l.weight.cols() + l.bias.len();
        if l.slope.is_some() {
            out.push(pos);
            pos += 1;
        }
    }
    out
}

