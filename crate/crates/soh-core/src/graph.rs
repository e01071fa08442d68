//! Cycle-graph construction: a fixed base graph built from evenly spaced
//! early-life cycles, augmented per training or online cycle with one extra
//! node. Edges are clamped Pearson correlations between the voltage
//! segments, directed from earlier to later cycles (upper-triangular
//! adjacency with unit diagonal).

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segment::{select_segment, NodeFeature, PadPolicy, SegmentError, SegmentSpec};
use crate::series::VoltageCycle;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("feature sequences have different lengths: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("feature sequences must have at least 2 entries, got {len}")]
    TooShort { len: usize },
    #[error("a feature sequence has zero variance")]
    ConstantInput,
    #[error("cycle {0} required by the base-graph configuration is missing")]
    MissingCycle(usize),
    #[error("cycle {0} has no SOH label")]
    MissingLabel(usize),
    #[error("feature length {feature} does not match graph width {expected}")]
    DimensionMismatch { feature: usize, expected: usize },
    #[error("base graph selects cycles up to {last} but only {k} early cycles are considered")]
    ConfigOutOfRange { last: usize, k: usize },
    #[error(transparent)]
    Segment(#[from] SegmentError),
}

/// Which early cycles become base-graph nodes: `n` cycles taken from the
/// first `k`, spaced `d` cycles apart, starting at cycle 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaseGraphConfig {
    /// Number of early cycles considered.
    pub k: usize,
    /// Number of base-graph nodes.
    pub n: usize,
    /// Cycle interval between selected nodes.
    pub d: usize,
}

impl Default for BaseGraphConfig {
    fn default() -> Self {
        Self {
            k: 100,
            n: 10,
            d: 10,
        }
    }
}

impl BaseGraphConfig {
    /// 1-based cycle indices of the selected nodes: 1, 1+d, ..., 1+(n-1)d.
    pub fn node_cycles(&self) -> Vec<usize> {
        (0..self.n).map(|i| 1 + i * self.d).collect()
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let last = 1 + (self.n.saturating_sub(1)) * self.d;
        if self.n == 0 || last > self.k {
            return Err(GraphError::ConfigOutOfRange { last, k: self.k });
        }
        Ok(())
    }
}

/// Feature matrix, adjacency, and labels for n or n+1 cycle-nodes.
///
/// Structural invariants, maintained by every constructor:
/// unit diagonal, zero strict lower triangle, entries in [0, 1],
/// consistent row counts across `x`, `a`, `y`, and `node_cycles`.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleGraph {
    /// Node features; one row per node, m columns.
    pub x: Array2<f64>,
    /// Upper-triangular adjacency with unit diagonal.
    pub a: Array2<f64>,
    /// Per-node SOH labels; `None` for the unlabeled online node.
    pub y: Vec<Option<f64>>,
    /// 1-based source cycle index per node.
    pub node_cycles: Vec<usize>,
    /// True on the last node when its feature was tail-padded.
    pub appended_padded: bool,
}

impl CycleGraph {
    pub fn node_count(&self) -> usize {
        self.x.nrows()
    }

    pub fn width(&self) -> usize {
        self.x.ncols()
    }

    /// Labels as a dense vector; errors on the first unlabeled node.
    pub fn labels(&self) -> Result<Array1<f64>, GraphError> {
        let mut out = Array1::zeros(self.y.len());
        for (i, label) in self.y.iter().enumerate() {
            out[i] = label.ok_or(GraphError::MissingLabel(self.node_cycles[i]))?;
        }
        Ok(out)
    }
}

/// Pearson correlation coefficient between two equal-length sequences.
/// Exactly 1 for positive-affine pairs; [`GraphError::ConstantInput`] when
/// either sequence has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, GraphError> {
    if x.len() != y.len() {
        return Err(GraphError::LengthMismatch {
            a: x.len(),
            b: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(GraphError::TooShort { len: x.len() });
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(GraphError::ConstantInput);
    }
    // sqrt of the product (not product of sqrts) so identical inputs give
    // exactly 1.
    Ok(cov / (var_x * var_y).sqrt())
}

/// Edge weight: Pearson correlation clamped to [0, 1]. A constant feature
/// yields weight 0 (with a warning) rather than an error, so pathological
/// cycles surface in logs without stopping a run.
fn edge_weight(x: &[f64], y: &[f64], from: usize, to: usize) -> Result<f64, GraphError> {
    match pearson(x, y) {
        Ok(r) => Ok(r.clamp(0.0, 1.0)),
        Err(GraphError::ConstantInput) => {
            log::warn!("constant segment between cycles {from} and {to}; edge weight set to 0");
            Ok(0.0)
        }
        Err(e) => Err(e),
    }
}

/// Builds the fixed n-node base graph from labeled early-life cycles.
/// `cycles` is the battery's cycle collection; nodes are looked up by their
/// 1-based cycle index.
pub fn build_base_graph(
    cycles: &[VoltageCycle],
    cfg: &BaseGraphConfig,
    spec: &SegmentSpec,
) -> Result<CycleGraph, GraphError> {
    cfg.validate()?;
    let mut features = Vec::with_capacity(cfg.n);
    let mut labels = Vec::with_capacity(cfg.n);
    for cycle_index in cfg.node_cycles() {
        let cycle = cycles
            .iter()
            .find(|c| c.index == cycle_index)
            .ok_or(GraphError::MissingCycle(cycle_index))?;
        let label = cycle.soh.ok_or(GraphError::MissingLabel(cycle_index))?;
        let feat = select_segment(cycle, spec, PadPolicy::Error)?;
        features.push(feat);
        labels.push(label);
    }

    let n = cfg.n;
    let mut x = Array2::zeros((n, spec.m));
    for (i, feat) in features.iter().enumerate() {
        x.row_mut(i).assign(&Array1::from_vec(feat.x.clone()));
    }
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        a[[i, i]] = 1.0;
        for j in (i + 1)..n {
            a[[i, j]] = edge_weight(
                &features[i].x,
                &features[j].x,
                features[i].cycle_index,
                features[j].cycle_index,
            )?;
        }
    }
    Ok(CycleGraph {
        x,
        a,
        y: labels.into_iter().map(Some).collect(),
        node_cycles: features.iter().map(|f| f.cycle_index).collect(),
        appended_padded: false,
    })
}

/// Appends one cycle's feature to the base graph, producing an (n+1)-node
/// graph. The base graph is never mutated: the appended node receives an
/// edge from every base node and influences none.
pub fn augment_graph(
    base: &CycleGraph,
    feat: &NodeFeature,
    label: Option<f64>,
) -> Result<CycleGraph, GraphError> {
    if feat.x.len() != base.width() {
        return Err(GraphError::DimensionMismatch {
            feature: feat.x.len(),
            expected: base.width(),
        });
    }
    let n = base.node_count();
    let mut x = Array2::zeros((n + 1, base.width()));
    for i in 0..n {
        x.row_mut(i).assign(&base.x.row(i));
    }
    x.row_mut(n).assign(&Array1::from_vec(feat.x.clone()));

    let mut a = Array2::zeros((n + 1, n + 1));
    for i in 0..n {
        for j in i..n {
            a[[i, j]] = base.a[[i, j]];
        }
        let row = base.x.row(i);
        a[[i, n]] = edge_weight(
            row.as_slice().expect("row is contiguous"),
            &feat.x,
            base.node_cycles[i],
            feat.cycle_index,
        )?;
    }
    a[[n, n]] = 1.0;

    let mut y = base.y.clone();
    y.push(label);
    let mut node_cycles = base.node_cycles.clone();
    node_cycles.push(feat.cycle_index);
    Ok(CycleGraph {
        x,
        a,
        y,
        node_cycles,
        appended_padded: feat.padded,
    })
}

/// Checks the structural adjacency invariants; used by tests and accepted
/// as documentation of the `CycleGraph` contract.
pub fn adjacency_invariants_hold(a: &Array2<f64>) -> bool {
    let n = a.nrows();
    if a.ncols() != n {
        return false;
    }
    for i in 0..n {
        if a[[i, i]] != 1.0 {
            return false;
        }
        for j in 0..n {
            let v = a[[i, j]];
            if j < i && v != 0.0 {
                return false;
            }
            if !(0.0..=1.0).contains(&v) {
                return false;
            }
        }
    }
    true
}
