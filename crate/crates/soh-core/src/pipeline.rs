//! End-to-end orchestration: segment discovery, base-graph construction,
//! offline training over the early portion of post-base cycles, online
//! estimation over the held-out tail, metric computation, and the
//! segment-offset sweep.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

use crate::data::{
    f64_matrix_to_value, f64_slice_to_value, full_precision_number, load_envelope, save_envelope,
    value_to_f64_matrix, value_to_f64_vec, write_atomic, BatteryDataset, DataError, Envelope,
};
use crate::gcn::{forward, train, GcnError, GcnParams, TrainConfig, TrainResult};
use crate::graph::{augment_graph, build_base_graph, BaseGraphConfig, CycleGraph, GraphError};
use crate::profile::{
    find_discord, mp_fast_par, partition_profile, profile_slice, window_length_in_guidance,
    DiscordResult, DistanceKind, ProfileConfig, ProfileError,
};
use crate::segment::{select_segment, PadPolicy, SegmentError, SegmentSpec};
use crate::series::{concat_cycles, SeriesError};

const MODEL_ENVELOPE: Envelope = Envelope::new("soh-model", 1, 1);
const REPORT_ENVELOPE: Envelope = Envelope::new("soh-report", 1, 0);

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Gcn(#[from] GcnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("cycle {0} is missing from the dataset")]
    MissingCycle(usize),
    #[error("cycle {0} has no SOH label")]
    MissingLabel(usize),
    #[error("training range is empty: K_tr {k_tr} does not exceed the base range k = {k}")]
    NoTrainingCycles { k_tr: usize, k: usize },
    #[error("no online cycles: K_tr {k_tr} reaches the end of life {eol}")]
    NoOnlineCycles { k_tr: usize, eol: usize },
    #[error("reference cycle {golden} is shorter than the segment length {m}")]
    ReferenceCycleTooShort { golden: usize, m: usize },
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
}

/// Full configuration of one estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub base: BaseGraphConfig,
    /// Segment (and profile window) length in time steps.
    pub m: usize,
    /// Fraction of the post-base cycles used for training.
    pub train_fraction: f64,
    /// Reference cycle searched for the discord.
    pub golden_cycle: usize,
    /// Distance kernel for the matrix profile.
    pub distance: DistanceKind,
    /// Pad policy for online inference; training always rejects short
    /// segments, since silent padding would corrupt the correlations.
    pub pad_policy: PadPolicy,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            base: BaseGraphConfig::default(),
            m: 100,
            train_fraction: 0.70,
            golden_cycle: 2,
            distance: DistanceKind::default(),
            pad_policy: PadPolicy::PadLast,
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(PipelineError::InvalidConfig(format!(
                "train_fraction {} must be in (0, 1)",
                self.train_fraction
            )));
        }
        if self.m < 2 {
            return Err(PipelineError::InvalidConfig(format!(
                "segment length {} must be at least 2",
                self.m
            )));
        }
        if self.golden_cycle == 0 || self.golden_cycle > self.base.k {
            return Err(PipelineError::InvalidConfig(format!(
                "reference cycle {} must lie within the first k = {} cycles",
                self.golden_cycle, self.base.k
            )));
        }
        self.base.validate()?;
        Ok(())
    }
}

/// Outcome of the discord search on the reference cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentDiscovery {
    pub spec: SegmentSpec,
    pub discord: DiscordResult,
    pub golden_cycle: usize,
}

/// Runs the front half of the method: concatenate the first k cycles,
/// compute the matrix profile with an m/2 exclusion zone, partition it,
/// and locate the discord on the reference cycle. The discord voltage
/// fixes the segment threshold for every cycle of the battery.
pub fn discover_spec(
    battery: &BatteryDataset,
    cfg: &RunConfig,
) -> Result<SegmentDiscovery, PipelineError> {
    cfg.validate()?;
    let mut early = Vec::with_capacity(cfg.base.k);
    for index in 1..=cfg.base.k {
        early.push(
            battery
                .cycle(index)
                .ok_or(PipelineError::MissingCycle(index))?
                .clone(),
        );
    }
    if !window_length_in_guidance(early[0].len(), cfg.m) {
        log::warn!(
            "window length {} outside the [L1/4, L1/2] guidance for L1 = {}",
            cfg.m,
            early[0].len()
        );
    }
    let series = concat_cycles(&early)?;
    let profile_cfg = ProfileConfig::new(cfg.m).with_distance(cfg.distance);
    let mp = mp_fast_par(&series, &profile_cfg)?;
    let slices = partition_profile(&mp, &series)?;
    let slice = slices
        .iter()
        .find(|s| s.cycle_index == cfg.golden_cycle)
        .ok_or(PipelineError::MissingCycle(cfg.golden_cycle))?;
    let golden = &early[cfg.golden_cycle - 1];
    if golden.len() <= cfg.m {
        return Err(PipelineError::ReferenceCycleTooShort {
            golden: cfg.golden_cycle,
            m: cfg.m,
        });
    }
    // Search only window starts whose windows fit inside the reference
    // cycle, keeping boundary artifacts out of the discord.
    let search_len = (golden.len() - cfg.m).min(slice.len);
    let discord = find_discord(profile_slice(&mp, slice), golden, search_len)?;
    let spec = SegmentSpec::new(discord.v_ref, cfg.m)?;
    Ok(SegmentDiscovery {
        spec,
        discord,
        golden_cycle: cfg.golden_cycle,
    })
}

/// End of the training range: K_tr = k + ceil(fraction * (EOL - k)).
pub fn training_cutoff(battery: &BatteryDataset, cfg: &RunConfig) -> Result<usize, PipelineError> {
    let k = cfg.base.k;
    let eol = battery
        .eol_cycle()
        .ok_or_else(|| PipelineError::InvalidConfig("dataset has no labeled cycles".into()))?;
    if eol <= k {
        return Err(PipelineError::NoTrainingCycles { k_tr: eol, k });
    }
    let span = (eol - k) as f64;
    let k_tr = k + (cfg.train_fraction * span).ceil() as usize;
    if k_tr <= k {
        return Err(PipelineError::NoTrainingCycles { k_tr, k });
    }
    Ok(k_tr)
}

/// Everything needed to estimate online: the segment definition, the
/// frozen base graph, and the trained weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub battery_id: String,
    pub segment: SegmentSpec,
    pub base: CycleGraph,
    pub params: GcnParams,
    pub train_seed: u64,
    pub final_loss: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub config: RunConfig,
}

impl ModelArtifact {
    /// Stable short identifier derived from the trained weights.
    pub fn reference(&self) -> String {
        let payload = params_to_value(&self.params);
        let canonical = serde_json::to_string(&payload).expect("weights serialize");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut id = String::from("gcn-");
        for byte in digest.iter().take(6) {
            id.push_str(&format!("{byte:02x}"));
        }
        id
    }
}

/// Summary of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub battery_id: String,
    pub v_ref: f64,
    pub k_tr: usize,
    pub training_graphs: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub final_loss: f64,
    pub loss_history: Vec<f64>,
}

/// Builds the base graph, assembles one training graph per cycle in
/// (k, K_tr], and trains the estimation model on the whole collection.
pub fn run_offline(
    battery: &BatteryDataset,
    cfg: &RunConfig,
) -> Result<(ModelArtifact, TrainingReport), PipelineError> {
    let discovery = discover_spec(battery, cfg)?;
    run_offline_with_spec(battery, cfg, &discovery.spec)
}

/// As [`run_offline`], with an explicit segment definition (used by the
/// sweep and by threshold overrides).
pub fn run_offline_with_spec(
    battery: &BatteryDataset,
    cfg: &RunConfig,
    spec: &SegmentSpec,
) -> Result<(ModelArtifact, TrainingReport), PipelineError> {
    cfg.validate()?;
    if spec.m != cfg.m {
        return Err(PipelineError::InvalidConfig(format!(
            "segment length {} disagrees with configured m = {}",
            spec.m, cfg.m
        )));
    }
    let base = build_base_graph(&battery.cycles, &cfg.base, spec)?;
    let k_tr = training_cutoff(battery, cfg)?;

    let mut graphs = Vec::with_capacity(k_tr - cfg.base.k);
    for zeta in (cfg.base.k + 1)..=k_tr {
        let cycle = battery
            .cycle(zeta)
            .ok_or(PipelineError::MissingCycle(zeta))?;
        let label = cycle.soh.ok_or(PipelineError::MissingLabel(zeta))?;
        let feat = select_segment(cycle, spec, PadPolicy::Error)?;
        graphs.push(augment_graph(&base, &feat, Some(label))?);
    }

    let result: TrainResult = train(&graphs, &cfg.train)?;
    let report = TrainingReport {
        battery_id: battery.battery_id.clone(),
        v_ref: spec.v_ref,
        k_tr,
        training_graphs: graphs.len(),
        epochs_run: result.epochs_run,
        stopped_early: result.stopped_early,
        final_loss: result.final_loss(),
        loss_history: result.loss_history,
    };
    let artifact = ModelArtifact {
        battery_id: battery.battery_id.clone(),
        segment: *spec,
        base,
        params: result.params,
        train_seed: cfg.train.seed,
        final_loss: report.final_loss,
        epochs_run: report.epochs_run,
        stopped_early: report.stopped_early,
        config: cfg.clone(),
    };
    Ok((artifact, report))
}

/// One online cycle's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleEstimate {
    pub cycle: usize,
    pub measured: f64,
    pub estimated: f64,
    pub padded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCycle {
    pub cycle: usize,
    pub reason: String,
}

/// Per-cycle estimates plus the aggregate error metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub battery_id: String,
    pub model_ref: String,
    pub k_tr: usize,
    pub eol: usize,
    pub rows: Vec<CycleEstimate>,
    pub skipped: Vec<SkippedCycle>,
    /// Number of evaluated online cycles.
    pub evaluated: usize,
    pub mae: f64,
    pub rmse: f64,
    pub config: RunConfig,
}

/// Mean absolute and root-mean-square error over the evaluated cycles.
pub fn compute_metrics(rows: &[CycleEstimate]) -> (f64, f64) {
    if rows.is_empty() {
        return (0.0, 0.0);
    }
    let count = rows.len() as f64;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    for row in rows {
        let err = row.measured - row.estimated;
        abs_sum += err.abs();
        sq_sum += err * err;
    }
    (abs_sum / count, (sq_sum / count).sqrt())
}

/// Estimates every online cycle in (K_tr, EOL]: the cycle's segment is
/// appended to the base graph and the trained model's prediction for the
/// appended node is reported. Per-cycle failures are skipped with a
/// logged reason and excluded from the metrics.
pub fn run_online(
    artifact: &ModelArtifact,
    battery: &BatteryDataset,
    cfg: &RunConfig,
) -> Result<EstimationReport, PipelineError> {
    cfg.validate()?;
    let k_tr = training_cutoff(battery, cfg)?;
    let eol = battery
        .eol_cycle()
        .ok_or_else(|| PipelineError::InvalidConfig("dataset has no labeled cycles".into()))?;
    if k_tr >= eol {
        return Err(PipelineError::NoOnlineCycles { k_tr, eol });
    }

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for gamma in (k_tr + 1)..=eol {
        let Some(cycle) = battery.cycle(gamma) else {
            skipped.push(SkippedCycle {
                cycle: gamma,
                reason: "cycle missing from dataset".into(),
            });
            continue;
        };
        let Some(measured) = cycle.soh else {
            skipped.push(SkippedCycle {
                cycle: gamma,
                reason: "no SOH label to evaluate against".into(),
            });
            continue;
        };
        let feat = match select_segment(cycle, &artifact.segment, cfg.pad_policy) {
            Ok(feat) => feat,
            Err(e) => {
                log::warn!("skipping cycle {gamma}: {e}");
                skipped.push(SkippedCycle {
                    cycle: gamma,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let padded = feat.padded;
        let graph = match augment_graph(&artifact.base, &feat, None) {
            Ok(graph) => graph,
            Err(e) => {
                log::warn!("skipping cycle {gamma}: {e}");
                skipped.push(SkippedCycle {
                    cycle: gamma,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let (preds, _) = forward(&graph, &artifact.params)?;
        let estimated = preds[preds.len() - 1];
        rows.push(CycleEstimate {
            cycle: gamma,
            measured,
            estimated,
            padded,
        });
    }

    let (mae, rmse) = compute_metrics(&rows);
    Ok(EstimationReport {
        battery_id: battery.battery_id.clone(),
        model_ref: artifact.reference(),
        k_tr,
        eol,
        evaluated: rows.len(),
        rows,
        skipped,
        mae,
        rmse,
        config: cfg.clone(),
    })
}

/// One candidate threshold's outcome in the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub v_ref: f64,
    /// True for the threshold the matrix profile selected.
    pub mp_selected: bool,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub battery_id: String,
    pub mp_v_ref: f64,
    /// Rows in descending threshold order.
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Rank (1-based) of the MP-selected row under ascending RMSE; failed
    /// candidates rank after every evaluated one.
    pub fn mp_rank(&self) -> Option<usize> {
        let mp = self.rows.iter().find(|r| r.mp_selected)?;
        let mp_rmse = mp.rmse?;
        let better = self
            .rows
            .iter()
            .filter(|r| r.rmse.map(|x| x < mp_rmse).unwrap_or(false))
            .count();
        Some(better + 1)
    }
}

/// Trains and evaluates one full pipeline per candidate threshold (the
/// MP-selected value is added and marked). Candidates share the training
/// seed; failures are recorded in the table rather than aborting.
pub fn sweep_segments(
    battery: &BatteryDataset,
    cfg: &RunConfig,
    offsets: &[f64],
) -> Result<SweepTable, PipelineError> {
    let discovery = discover_spec(battery, cfg)?;
    let mp_v_ref = discovery.spec.v_ref;
    let mut candidates: Vec<f64> = offsets.to_vec();
    if !candidates.iter().any(|&v| (v - mp_v_ref).abs() <= 1e-9) {
        candidates.push(mp_v_ref);
    }
    candidates.sort_by(|a, b| b.partial_cmp(a).expect("finite thresholds"));
    candidates.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);

    let mut rows = Vec::with_capacity(candidates.len());
    for v_ref in candidates {
        let spec = SegmentSpec::new(v_ref, cfg.m)?;
        let outcome = run_offline_with_spec(battery, cfg, &spec)
            .and_then(|(artifact, _)| run_online(&artifact, battery, cfg));
        let mp_selected = (v_ref - mp_v_ref).abs() <= 1e-9;
        match outcome {
            Ok(report) => rows.push(SweepRow {
                v_ref,
                mp_selected,
                rmse: Some(report.rmse),
                mae: Some(report.mae),
                error: None,
            }),
            Err(e) => {
                log::warn!("sweep candidate {v_ref} V failed: {e}");
                rows.push(SweepRow {
                    v_ref,
                    mp_selected,
                    rmse: None,
                    mae: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    Ok(SweepTable {
        battery_id: battery.battery_id.clone(),
        mp_v_ref,
        rows,
    })
}

// --- persistence -------------------------------------------------------

fn params_to_value(params: &GcnParams) -> Value {
    let (m, h) = (params.feature_dim(), params.hidden_dim());
    let r = params.readout_dim();
    json!({
        "feature_dim": m,
        "hidden": h,
        "readout": r,
        "w_gcn": f64_matrix_to_value(m, h, params.w_gcn.as_slice().expect("standard layout")),
        "attn_u": f64_slice_to_value(params.attn_u.as_slice().expect("standard layout")),
        "w_dense": f64_matrix_to_value(2 * h, r, params.w_dense.as_slice().expect("standard layout")),
        "b_dense": f64_slice_to_value(params.b_dense.as_slice().expect("standard layout")),
        "w_out": f64_slice_to_value(params.w_out.as_slice().expect("standard layout")),
        "b_out": Value::Number(full_precision_number(params.b_out)),
        "input_shift": f64_slice_to_value(params.input_shift.as_slice().expect("standard layout")),
        "input_scale": f64_slice_to_value(params.input_scale.as_slice().expect("standard layout")),
    })
}

fn graph_to_value(graph: &CycleGraph) -> Value {
    let nodes = graph.node_count();
    let width = graph.width();
    json!({
        "x": f64_matrix_to_value(nodes, width, graph.x.as_slice().expect("standard layout")),
        "a": f64_matrix_to_value(nodes, nodes, graph.a.as_slice().expect("standard layout")),
        "y": Value::Array(
            graph.y.iter()
                .map(|label| match label {
                    Some(v) => Value::Number(full_precision_number(*v)),
                    None => Value::Null,
                })
                .collect(),
        ),
        "node_cycles": graph.node_cycles,
        "appended_padded": graph.appended_padded,
    })
}

fn field<'v>(value: &'v Value, key: &str) -> Result<&'v Value, DataError> {
    value.get(key).ok_or_else(|| DataError::Corrupt {
        message: format!("missing field {key:?}"),
    })
}

fn usize_field(value: &Value, key: &str) -> Result<usize, DataError> {
    field(value, key)?
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| DataError::Corrupt {
            message: format!("field {key:?} is not an unsigned integer"),
        })
}

fn f64_field(value: &Value, key: &str) -> Result<f64, DataError> {
    field(value, key)?.as_f64().ok_or_else(|| DataError::Corrupt {
        message: format!("field {key:?} is not a number"),
    })
}

fn expect_vector_from(
    value: &Value,
    what: &str,
    len: usize,
) -> Result<ndarray::Array1<f64>, DataError> {
    let data = value_to_f64_vec(value, what)?;
    if data.len() != len {
        return Err(DataError::Corrupt {
            message: format!("{what}: expected length {len}, found {}", data.len()),
        });
    }
    Ok(ndarray::Array1::from_vec(data))
}

fn value_to_params(value: &Value) -> Result<GcnParams, DataError> {
    use ndarray::{Array1, Array2};
    let m = usize_field(value, "feature_dim")?;
    let h = usize_field(value, "hidden")?;
    let r = usize_field(value, "readout")?;
    let expect_matrix = |key: &str, rows: usize, cols: usize| -> Result<Array2<f64>, DataError> {
        let (got_rows, got_cols, data) = value_to_f64_matrix(field(value, key)?, key)?;
        if got_rows != rows || got_cols != cols {
            return Err(DataError::Corrupt {
                message: format!("{key}: expected {rows}x{cols}, found {got_rows}x{got_cols}"),
            });
        }
        Array2::from_shape_vec((rows, cols), data).map_err(|e| DataError::Corrupt {
            message: format!("{key}: {e}"),
        })
    };
    let expect_vector = |key: &str, len: usize| -> Result<Array1<f64>, DataError> {
        let data = value_to_f64_vec(field(value, key)?, key)?;
        if data.len() != len {
            return Err(DataError::Corrupt {
                message: format!("{key}: expected length {len}, found {}", data.len()),
            });
        }
        Ok(Array1::from_vec(data))
    };
    Ok(GcnParams {
        w_gcn: expect_matrix("w_gcn", m, h)?,
        attn_u: expect_vector("attn_u", h)?,
        w_dense: expect_matrix("w_dense", 2 * h, r)?,
        b_dense: expect_vector("b_dense", r)?,
        w_out: expect_vector("w_out", r)?,
        b_out: f64_field(value, "b_out")?,
        // Conditioning constants default to the identity for artifacts
        // predating them.
        input_shift: match value.get("input_shift") {
            Some(v) => expect_vector_from(v, "input_shift", m)?,
            None => Array1::zeros(m),
        },
        input_scale: match value.get("input_scale") {
            Some(v) => expect_vector_from(v, "input_scale", m)?,
            None => Array1::ones(m),
        },
    })
}

fn value_to_graph(value: &Value) -> Result<CycleGraph, DataError> {
    use ndarray::Array2;
    let (nodes, width, x) = value_to_f64_matrix(field(value, "x")?, "base_graph.x")?;
    let (a_rows, a_cols, a) = value_to_f64_matrix(field(value, "a")?, "base_graph.a")?;
    if a_rows != nodes || a_cols != nodes {
        return Err(DataError::Corrupt {
            message: format!("base_graph.a: expected {nodes}x{nodes}, found {a_rows}x{a_cols}"),
        });
    }
    let y = field(value, "y")?
        .as_array()
        .ok_or_else(|| DataError::Corrupt {
            message: "base_graph.y: expected an array".into(),
        })?
        .iter()
        .map(|v| {
            if v.is_null() {
                Ok(None)
            } else {
                v.as_f64().map(Some).ok_or_else(|| DataError::Corrupt {
                    message: "base_graph.y: expected numbers or nulls".into(),
                })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let node_cycles = field(value, "node_cycles")?
        .as_array()
        .ok_or_else(|| DataError::Corrupt {
            message: "base_graph.node_cycles: expected an array".into(),
        })?
        .iter()
        .map(|v| {
            v.as_u64()
                .map(|x| x as usize)
                .ok_or_else(|| DataError::Corrupt {
                    message: "base_graph.node_cycles: expected integers".into(),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if y.len() != nodes || node_cycles.len() != nodes {
        return Err(DataError::Corrupt {
            message: "base_graph: inconsistent node counts".into(),
        });
    }
    Ok(CycleGraph {
        x: Array2::from_shape_vec((nodes, width), x).map_err(|e| DataError::Corrupt {
            message: format!("base_graph.x: {e}"),
        })?,
        a: Array2::from_shape_vec((nodes, nodes), a).map_err(|e| DataError::Corrupt {
            message: format!("base_graph.a: {e}"),
        })?,
        y,
        node_cycles,
        appended_padded: field(value, "appended_padded")?.as_bool().unwrap_or(false),
    })
}

/// Writes the model artifact as versioned, checksummed JSON.
pub fn save_model(artifact: &ModelArtifact, path: &Path) -> Result<(), PipelineError> {
    let payload = json!({
        "battery_id": artifact.battery_id,
        "segment": {
            "v_ref": Value::Number(full_precision_number(artifact.segment.v_ref)),
            "m": artifact.segment.m,
        },
        "model": params_to_value(&artifact.params),
        "base_graph": graph_to_value(&artifact.base),
        "training": {
            "seed": artifact.train_seed,
            "final_loss": Value::Number(full_precision_number(artifact.final_loss)),
            "epochs_run": artifact.epochs_run,
            "stopped_early": artifact.stopped_early,
        },
        "run_config": serde_json::to_value(&artifact.config).expect("config serializes"),
    });
    save_envelope(path, MODEL_ENVELOPE, payload)?;
    Ok(())
}

/// Loads a model artifact, verifying version and checksum. Predictions
/// made with the loaded model are bit-identical to the saved one.
pub fn load_model(path: &Path) -> Result<ModelArtifact, PipelineError> {
    let payload = load_envelope(path, MODEL_ENVELOPE)?;
    let segment = field(&payload, "segment")?;
    let segment = SegmentSpec::new(f64_field(segment, "v_ref")?, usize_field(segment, "m")?)?;
    let params = value_to_params(field(&payload, "model")?)?;
    let base = value_to_graph(field(&payload, "base_graph")?)?;
    let training = field(&payload, "training")?;
    // epochs_run arrived with schema 1.1; default it for 1.0 artifacts.
    let epochs_run = training
        .get("epochs_run")
        .and_then(Value::as_u64)
        .unwrap_or(0) as usize;
    let config: RunConfig = serde_json::from_value(field(&payload, "run_config")?.clone())
        .map_err(|e| DataError::Corrupt {
            message: format!("run_config: {e}"),
        })?;
    Ok(ModelArtifact {
        battery_id: field(&payload, "battery_id")?
            .as_str()
            .unwrap_or("unknown")
            .to_string(),
        segment,
        base,
        params,
        train_seed: training.get("seed").and_then(Value::as_u64).unwrap_or(0),
        final_loss: f64_field(training, "final_loss")?,
        epochs_run,
        stopped_early: training
            .get("stopped_early")
            .and_then(Value::as_bool)
            .unwrap_or(false),
        config,
    })
}

/// Writes an estimation report as versioned, checksummed JSON.
pub fn save_report(report: &EstimationReport, path: &Path) -> Result<(), PipelineError> {
    let payload = serde_json::to_value(report).expect("report serializes");
    save_envelope(path, REPORT_ENVELOPE, payload)?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<EstimationReport, PipelineError> {
    let payload = load_envelope(path, REPORT_ENVELOPE)?;
    let report: EstimationReport =
        serde_json::from_value(payload).map_err(|e| DataError::Corrupt {
            message: format!("report payload: {e}"),
        })?;
    Ok(report)
}

/// Writes the per-cycle rows as CSV (`cycle,measured,estimated,padded`).
pub fn write_report_csv(report: &EstimationReport, path: &Path) -> Result<(), PipelineError> {
    let mut out = String::from("cycle,measured,estimated,padded\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.cycle, row.measured, row.estimated, row.padded
        ));
    }
    write_atomic(path, out.as_bytes())?;
    Ok(())
}

/// Writes the sweep table as CSV (`v_ref,rmse,mae,mp_selected,error`).
pub fn write_sweep_csv(table: &SweepTable, path: &Path) -> Result<(), PipelineError> {
    let mut out = String::from("v_ref,rmse,mae,mp_selected,error\n");
    for row in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.v_ref,
            row.rmse.map(|v| v.to_string()).unwrap_or_default(),
            row.mae.map(|v| v.to_string()).unwrap_or_default(),
            row.mp_selected,
            row.error.clone().unwrap_or_default().replace(',', ";"),
        ));
    }
    write_atomic(path, out.as_bytes())?;
    Ok(())
}
