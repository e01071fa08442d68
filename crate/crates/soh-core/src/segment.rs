//! Per-cycle node-feature extraction: the m-step voltage window starting at
//! the first sample at or below the discord-derived reference voltage.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::VoltageCycle;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("cycle {cycle} never reaches the reference voltage {v_ref} V")]
    ThresholdNeverCrossed { cycle: usize, v_ref: f64 },
    #[error("cycle {cycle} has only {available} samples after the crossing but the segment needs {needed}")]
    SegmentTruncated {
        cycle: usize,
        available: usize,
        needed: usize,
    },
    #[error("segment length must be at least 2, got {m}")]
    SegmentTooShort { m: usize },
}

/// The discord-derived segment definition shared by all cycles of one
/// battery: the threshold voltage and the segment length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    /// Threshold voltage in volts; the segment starts at the first sample
    /// at or below this value.
    pub v_ref: f64,
    /// Segment length in time steps.
    pub m: usize,
}

impl SegmentSpec {
    pub fn new(v_ref: f64, m: usize) -> Result<Self, SegmentError> {
        if m < 2 {
            return Err(SegmentError::SegmentTooShort { m });
        }
        Ok(Self { v_ref, m })
    }
}

/// What to do when fewer than m samples remain after the crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadPolicy {
    /// Fail with [`SegmentError::SegmentTruncated`]. The right choice for
    /// training data, where silent padding would corrupt the correlation
    /// structure.
    #[default]
    Error,
    /// Repeat the final sample and mark the feature as padded.
    PadLast,
}

/// One cycle's extracted node feature.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeature {
    /// 1-based source cycle index.
    pub cycle_index: usize,
    /// Exactly m voltage values starting at the threshold crossing.
    pub x: Vec<f64>,
    /// Time step of the threshold crossing within the cycle.
    pub theta: usize,
    /// True when tail padding was applied.
    pub padded: bool,
}

/// Extracts the segment of `cycle` defined by `spec`.
pub fn select_segment(
    cycle: &VoltageCycle,
    spec: &SegmentSpec,
    pad_policy: PadPolicy,
) -> Result<NodeFeature, SegmentError> {
    let theta = cycle
        .samples
        .iter()
        .position(|&v| v <= spec.v_ref)
        .ok_or(SegmentError::ThresholdNeverCrossed {
            cycle: cycle.index,
            v_ref: spec.v_ref,
        })?;
    let available = cycle.len() - theta;
    if available >= spec.m {
        return Ok(NodeFeature {
            cycle_index: cycle.index,
            x: cycle.samples[theta..theta + spec.m].to_vec(),
            theta,
            padded: false,
        });
    }
    match pad_policy {
        PadPolicy::Error => Err(SegmentError::SegmentTruncated {
            cycle: cycle.index,
            available,
            needed: spec.m,
        }),
        PadPolicy::PadLast => {
            let mut x = cycle.samples[theta..].to_vec();
            let last = *x.last().expect("crossing implies at least one sample");
            x.resize(spec.m, last);
            Ok(NodeFeature {
                cycle_index: cycle.index,
                x,
                theta,
                padded: true,
            })
        }
    }
}
