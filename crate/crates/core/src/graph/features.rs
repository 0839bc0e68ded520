use crate::error::{GgdError, Result};
use crate::tensor::DenseMatrix;

/// Node attribute matrix, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    matrix: DenseMatrix,
}

impl NodeFeatures {
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        if !matrix.is_finite() {
            return Err(GgdError::Range("non-finite feature value".into()));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.matrix
    }

    pub fn num_nodes(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn check_nodes(&self, num_nodes: usize) -> Result<()> {
        if self.num_nodes() != num_nodes {
            return Err(GgdError::shape(format!(
                "{} feature rows for a {num_nodes}-node graph",
                self.num_nodes()
            )));
        }
        Ok(())
    }
}

/// L1 row normalization; all-zero rows stay zero.
pub fn row_normalize(x: &NodeFeatures) -> NodeFeatures {
    let mut m = x.matrix.clone();
    for i in 0..m.rows() {
        let row = m.row_mut(i);
        let sum: f64 = row.iter().map(|&v| v as f64).sum();
        if sum != 0.0 {
            for v in row.iter_mut() {
                *v = (*v as f64 / sum) as f32;
            }
        }
    }
    NodeFeatures { matrix: m }
}

/// Which evaluation split a node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Val,
    Test,
    None,
}

impl SplitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Val => "val",
            SplitKind::Test => "test",
            SplitKind::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "train" => SplitKind::Train,
            "val" => SplitKind::Val,
            "test" => SplitKind::Test,
            "none" => SplitKind::None,
            _ => return None,
        })
    }
}

/// Class labels plus disjoint train/val/test node lists.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSplit {
    pub labels: Vec<Option<u32>>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl LabeledSplit {
    pub fn new(labels: Vec<Option<u32>>, train: Vec<usize>, val: Vec<usize>, test: Vec<usize>) -> Result<Self> {
        let s = Self {
            labels,
            train,
            val,
            test,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().flatten().map(|&c| c as usize + 1).max().unwrap_or(0)
    }

    pub fn label(&self, node: usize) -> u32 {
        self.labels[node].expect("split nodes are labeled")
    }

    pub fn split_of(&self, node: usize) -> SplitKind {
        if self.train.contains(&node) {
            SplitKind::Train
        } else if self.val.contains(&node) {
            SplitKind::Val
        } else if self.test.contains(&node) {
            SplitKind::Test
        } else {
            SplitKind::None
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        let mut owner = vec![false; n];
        for (name, ids) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &id in ids {
                if id >= n {
                    return Err(GgdError::InvalidNode {
                        id: id as u64,
                        num_nodes: n,
                    });
                }
                if owner[id] {
                    return Err(GgdError::Format(format!("node {id} appears in more than one split ({name})")));
                }
                if self.labels[id].is_none() {
                    return Err(GgdError::Format(format!("{name} node {id} has no label")));
                }
                owner[id] = true;
            }
        }
        Ok(())
    }
}
