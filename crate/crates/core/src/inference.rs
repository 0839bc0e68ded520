//! Frozen-encoder embeddings with graph-power reinforcement.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::encoder::{encode, EncoderParams};
use crate::error::{GgdError, Result};
use crate::graph::{load_matrix, prepare, save_matrix, CsrGraph, NodeFeatures};
use crate::tensor::{spmm_into, DenseMatrix};

pub const DEFAULT_POWER: usize = 5;
pub const BENCH_POWER: usize = 10;

/// Runs the trained encoder (projector included) on the full graph.
pub fn encode_frozen(g: &CsrGraph, x: &NodeFeatures, params: &EncoderParams) -> Result<DenseMatrix> {
    params.validate()?;
    let prep = prepare(g, x)?;
    encode(&prep.adj, &prep.features, params)
}

/// `Ã^n H` by `n` successive sparse products.
pub fn graph_power(g_norm: &CsrGraph, h: &DenseMatrix, n: usize) -> Result<DenseMatrix> {
    if g_norm.num_nodes() != h.rows() {
        return Err(GgdError::shape(format!(
            "{}-node operator for {} rows",
            g_norm.num_nodes(),
            h.rows()
        )));
    }
    let mut out = h.clone();
    if n == 0 {
        return Ok(out);
    }
    let mut next = DenseMatrix::zeros(h.rows(), h.cols());
    for _ in 0..n {
        spmm_into(g_norm, &out, &mut next)?;
        std::mem::swap(&mut out, &mut next);
    }
    Ok(out)
}

/// Local plus global embedding.
pub fn reinforce(h_local: &DenseMatrix, h_global: &DenseMatrix) -> Result<DenseMatrix> {
    h_global.add(h_local)
}

/// Provenance of an embedding file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingMeta {
    pub seed: u64,
    pub power: usize,
    pub config_hash: String,
    pub graph_checksum: String,
}

/// Final node embeddings and where they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub h: DenseMatrix,
    pub meta: EmbeddingMeta,
}

impl EmbeddingSet {
    /// Full inference pipeline: frozen encoding, `n`-hop propagation and
    /// reinforcement.
    pub fn compute(
        g: &CsrGraph,
        x: &NodeFeatures,
        params: &EncoderParams,
        power: usize,
        seed: u64,
        config_hash: &str,
    ) -> Result<Self> {
        params.validate()?;
        let prep = prepare(g, x)?;
        let local = encode(&prep.adj, &prep.features, params)?;
        let global = graph_power(&prep.adj, &local, power)?;
        let h = reinforce(&local, &global)?;
        if !h.is_finite() {
            return Err(GgdError::Range("non-finite embedding".into()));
        }
        Ok(Self {
            h,
            meta: EmbeddingMeta {
                seed,
                power,
                config_hash: config_hash.to_string(),
                graph_checksum: g.checksum(),
            },
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.h.rows()
    }

    pub fn meta_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta");
        PathBuf::from(s)
    }

    pub fn render_meta(&self) -> String {
        let mut s = String::new();
        let m = &self.meta;
        for (k, v) in [
            ("seed", m.seed.to_string()),
            ("power", m.power.to_string()),
            ("config_hash", m.config_hash.clone()),
            ("graph_checksum", m.graph_checksum.clone()),
            ("rows", self.h.rows().to_string()),
            ("cols", self.h.cols().to_string()),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// Writes the matrix and its `<path>.meta` sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        save_matrix(&self.h, path)?;
        std::fs::write(Self::meta_path(path), self.render_meta())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let h = load_matrix(path)?;
        let text = std::fs::read_to_string(Self::meta_path(path))?;
        let mut meta = EmbeddingMeta {
            seed: 0,
            power: 0,
            config_hash: String::new(),
            graph_checksum: String::new(),
        };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| GgdError::Format(format!("bad metadata line {line:?}")))?;
            let num = |v: &str| v.parse::<u64>().map_err(|_| GgdError::Format(format!("bad {k} value {v:?}")));
            match k {
                "seed" => meta.seed = num(v)?,
                "power" => meta.power = num(v)? as usize,
                "config_hash" => meta.config_hash = v.to_string(),
                "graph_checksum" => meta.graph_checksum = v.to_string(),
                "rows" | "cols" => {
                    let want = if k == "rows" { h.rows() } else { h.cols() };
                    if num(v)? as usize != want {
                        return Err(GgdError::shape(format!("metadata {k}={v} but matrix has {want}")));
                    }
                }
                _ => return Err(GgdError::Format(format!("unknown metadata key {k:?}"))),
            }
        }
        Ok(Self { h, meta })
    }
}

/// One timing row of [`bench_graph_power`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerTiming {
    pub num_nodes: usize,
    pub seconds: f64,
}

/// Times `Ã^n H` on random graphs of average degree `avg_degree` with a
/// `hidden`-wide embedding. The first (warm-up) run of each size is
/// discarded and the median of `repeats` runs is reported.
pub fn bench_graph_power(
    sizes: &[usize],
    n: usize,
    avg_degree: f64,
    hidden: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<PowerTiming>> {
    use crate::graph::normalized_adjacency;
    use crate::rng::{RngState, Stream};
    let mut out = Vec::with_capacity(sizes.len());
    for &num_nodes in sizes {
        let mut rng = RngState::derived(seed, Stream::Data, num_nodes as u64, 0);
        let g = normalized_adjacency(&random_graph(num_nodes, avg_degree, &mut rng)?)?;
        let h = DenseMatrix::from_fn(num_nodes, hidden, |_, _| rng.uniform() as f32 - 0.5);
        graph_power(&g, &h, n)?;
        let mut times: Vec<f64> = (0..repeats.max(1))
            .map(|_| {
                let t = Instant::now();
                graph_power(&g, &h, n).map(|_| t.elapsed().as_secs_f64())
            })
            .collect::<Result<_>>()?;
        out.push(PowerTiming {
            num_nodes,
            seconds: median(&mut times),
        });
    }
    Ok(out)
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Undirected Erdős–Rényi-style graph with `num_nodes·avg_degree/2` edge draws.
pub(crate) fn random_graph(
    num_nodes: usize,
    avg_degree: f64,
    rng: &mut crate::rng::RngState,
) -> Result<CsrGraph> {
    let m = (num_nodes as f64 * avg_degree / 2.0).round() as usize;
    let edges: Vec<(u32, u32)> = (0..m)
        .map(|_| (rng.below(num_nodes) as u32, rng.below(num_nodes) as u32))
        .filter(|(u, v)| u != v)
        .collect();
    CsrGraph::from_edges(num_nodes, edges, true)
}
