//! On-disk formats.
//!
//! * Edge lists: UTF-8 text, one `src dst` pair per line, `#` comments.
//! * Dense matrices (`GGDF`): magic, `u32` version, `u64` rows, `u64` cols,
//!   then row-major little-endian `f32` values.
//! * Labels: UTF-8 text, `node_id class_id split` per line.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::csr::CsrGraph;
use super::features::{LabeledSplit, NodeFeatures, SplitKind};
use crate::error::{GgdError, Result};
use crate::tensor::DenseMatrix;

pub const GGDF_MAGIC: &[u8; 4] = b"GGDF";
pub const GGDF_VERSION: u32 = 1;

/// Mapping between node ids as written in files and dense ids `0..N`.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeIdMap {
    /// File ids already are `0..N`.
    Identity(usize),
    /// `originals[dense]` is the file id of a dense node, in ascending order.
    Remapped { originals: Vec<i64> },
}

impl NodeIdMap {
    pub fn len(&self) -> usize {
        match self {
            NodeIdMap::Identity(n) => *n,
            NodeIdMap::Remapped { originals } => originals.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, NodeIdMap::Identity(_))
    }

    /// Dense id of a file id. Identity maps accept any non-negative id, so
    /// nodes that never appear in an edge can still be addressed.
    pub fn to_dense(&self, original: i64) -> Option<usize> {
        match self {
            NodeIdMap::Identity(_) => usize::try_from(original).ok(),
            NodeIdMap::Remapped { originals } => originals.binary_search(&original).ok(),
        }
    }

    pub fn original(&self, dense: usize) -> i64 {
        match self {
            NodeIdMap::Identity(_) => dense as i64,
            NodeIdMap::Remapped { originals } => originals[dense],
        }
    }
}

/// A graph read from an edge list together with its id mapping.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: CsrGraph,
    pub ids: NodeIdMap,
}

fn parse_id(tok: &str, line: usize) -> Result<i64> {
    tok.parse::<i64>().map_err(|e| match e.kind() {
        std::num::IntErrorKind::PosOverflow | std::num::IntErrorKind::NegOverflow => {
            GgdError::Range(format!("node id `{tok}` on line {line} overflows"))
        }
        _ => GgdError::Parse {
            line,
            msg: format!("`{tok}` is not an integer node id"),
        },
    })
}

/// Parses an edge list. Ids forming exactly `0..N` are kept; anything else is
/// remapped to dense ids in ascending order of the original id.
pub fn parse_edge_list(reader: impl BufRead, symmetrize: bool) -> Result<LoadedGraph> {
    let mut raw: Vec<(i64, i64)> = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let mut toks = body.split_whitespace();
        let (Some(a), Some(b), None) = (toks.next(), toks.next(), toks.next()) else {
            return Err(GgdError::Parse {
                line: lineno,
                msg: format!("expected `src dst`, got `{body}`"),
            });
        };
        raw.push((parse_id(a, lineno)?, parse_id(b, lineno)?));
    }

    let mut uniq: Vec<i64> = raw.iter().flat_map(|&(a, b)| [a, b]).collect();
    uniq.sort_unstable();
    uniq.dedup();
    if uniq.len() > u32::MAX as usize {
        return Err(GgdError::Range("more than u32::MAX distinct nodes".into()));
    }
    let identity = uniq.first().is_none_or(|&f| f == 0) && uniq.last().is_none_or(|&l| l as usize + 1 == uniq.len());
    let (n, ids, edges): (usize, NodeIdMap, Vec<(u32, u32)>) = if identity {
        let edges = raw.iter().map(|&(a, b)| (a as u32, b as u32)).collect();
        (uniq.len(), NodeIdMap::Identity(uniq.len()), edges)
    } else {
        let index: HashMap<i64, u32> = uniq.iter().enumerate().map(|(i, &v)| (v, i as u32)).collect();
        let edges = raw.iter().map(|(a, b)| (index[a], index[b])).collect();
        (uniq.len(), NodeIdMap::Remapped { originals: uniq }, edges)
    };
    let graph = CsrGraph::from_edges(n, edges, symmetrize)?;
    Ok(LoadedGraph { graph, ids })
}

pub fn load_edge_list(path: impl AsRef<Path>, symmetrize: bool) -> Result<LoadedGraph> {
    parse_edge_list(BufReader::new(File::open(path)?), symmetrize)
}

/// Writes every stored entry as one `src dst` line (dense ids).
pub fn write_edge_list(g: &CsrGraph, w: impl Write) -> Result<()> {
    let mut w = BufWriter::new(w);
    for (i, j) in g.edges() {
        writeln!(w, "{i} {j}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_edge_list(g: &CsrGraph, path: impl AsRef<Path>) -> Result<()> {
    write_edge_list(g, File::create(path)?)
}

pub fn write_ggdf(m: &DenseMatrix, w: &mut impl Write) -> Result<()> {
    w.write_all(GGDF_MAGIC)?;
    w.write_all(&GGDF_VERSION.to_le_bytes())?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.as_slice().len() * 4);
    for v in m.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_ggdf(r: &mut impl Read) -> Result<DenseMatrix> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != GGDF_MAGIC {
        return Err(GgdError::Format("missing GGDF magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != GGDF_VERSION {
        return Err(GgdError::Format(format!("unsupported GGDF version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let rows = u64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let cols = u64::from_le_bytes(b8);
    let len = rows
        .checked_mul(cols)
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| GgdError::Range(format!("{rows}x{cols} matrix too large")))?;
    let mut bytes = Vec::new();
    r.take(len as u64 * 4).read_to_end(&mut bytes)?;
    if bytes.len() != len * 4 {
        return Err(GgdError::shape(format!(
            "header declares {rows}x{cols} but only {} values are present",
            bytes.len() / 4
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    DenseMatrix::new(rows as usize, cols as usize, data)
}

pub fn save_matrix(m: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ggdf(m, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    read_ggdf(&mut BufReader::new(File::open(path)?))
}

pub fn load_features(path: impl AsRef<Path>) -> Result<NodeFeatures> {
    NodeFeatures::new(load_matrix(path)?)
}

pub fn save_features(x: &NodeFeatures, path: impl AsRef<Path>) -> Result<()> {
    save_matrix(x.matrix(), path)
}

/// Parses a labels file against a graph of `num_nodes` nodes.
pub fn parse_labels(reader: impl BufRead, ids: &NodeIdMap, num_nodes: usize) -> Result<LabeledSplit> {
    let mut labels = vec![None; num_nodes];
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(GgdError::Parse {
                line: lineno,
                msg: format!("expected `node class split`, got `{body}`"),
            });
        }
        let orig = parse_id(toks[0], lineno)?;
        let node = ids.to_dense(orig).filter(|&d| d < num_nodes).ok_or_else(|| {
            GgdError::shape(format!("label for unknown node {orig} on line {lineno}"))
        })?;
        let class: u32 = toks[1].parse().map_err(|_| GgdError::Parse {
            line: lineno,
            msg: format!("bad class id `{}`", toks[1]),
        })?;
        let split = SplitKind::parse(toks[2]).ok_or_else(|| GgdError::Parse {
            line: lineno,
            msg: format!("unknown split `{}`", toks[2]),
        })?;
        if labels[node].is_some() {
            return Err(GgdError::Parse {
                line: lineno,
                msg: format!("node {orig} labeled twice"),
            });
        }
        labels[node] = Some(class);
        match split {
            SplitKind::Train => train.push(node),
            SplitKind::Val => val.push(node),
            SplitKind::Test => test.push(node),
            SplitKind::None => {}
        }
    }
    LabeledSplit::new(labels, train, val, test)
}

pub fn load_labels(path: impl AsRef<Path>, ids: &NodeIdMap, num_nodes: usize) -> Result<LabeledSplit> {
    parse_labels(BufReader::new(File::open(path)?), ids, num_nodes)
}

pub fn write_labels(split: &LabeledSplit, ids: &NodeIdMap, w: impl Write) -> Result<()> {
    let mut kind = vec![SplitKind::None; split.num_nodes()];
    for (k, list) in [
        (SplitKind::Train, &split.train),
        (SplitKind::Val, &split.val),
        (SplitKind::Test, &split.test),
    ] {
        for &i in list {
            kind[i] = k;
        }
    }
    let mut w = BufWriter::new(w);
    for (i, label) in split.labels.iter().enumerate() {
        if let Some(c) = label {
            writeln!(w, "{} {} {}", ids.original(i), c, kind[i].as_str())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_labels(split: &LabeledSplit, ids: &NodeIdMap, path: impl AsRef<Path>) -> Result<()> {
    write_labels(split, ids, File::create(path)?)
}
