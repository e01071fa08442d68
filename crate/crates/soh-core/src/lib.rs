//! Battery state-of-health (SOH) estimation from partial discharge curves.
//!
//! The pipeline works in three stages:
//!
//! 1. **Segment selection** — the discharge voltage series of the early-life
//!    cycles is concatenated and scanned with a matrix profile
//!    ([`profile`]); the discord found in a reference cycle fixes a voltage
//!    threshold, and every cycle contributes the fixed-length voltage window
//!    starting at its first sample at or below that threshold ([`segment`]).
//! 2. **Graph construction** — selected segments from evenly spaced
//!    early-life cycles form a base graph whose directed edges carry
//!    clamped Pearson correlations; each training or online cycle is
//!    appended as an extra node ([`graph`]).
//! 3. **Estimation** — a single-layer graph convolutional network with
//!    attention pooling and a dense readout maps each graph to per-node SOH
//!    values, trained full-batch with Adam on exact analytic gradients
//!    ([`gcn`]).
//!
//! [`pipeline`] orchestrates the full offline-training / online-estimation
//! flow, [`data`] provides CSV ingestion, a synthetic degradation generator
//! with analytically known ground truth, and versioned JSON persistence.

pub mod data;
pub mod gcn;
pub mod graph;
pub mod pipeline;
pub mod plot;
pub mod profile;
pub mod segment;
pub mod series;


pub use data::{BatteryDataset, SynthConfig};
pub use graph::{BaseGraphConfig, CycleGraph};
pub use pipeline::{EstimationReport, ModelArtifact, RunConfig};

pub use profile::{DiscordResult, MatrixProfile, ProfileConfig};
pub use segment::{NodeFeature, PadPolicy, SegmentSpec};
pub use series::{ConcatSeries, VoltageCycle, WindowStats};
