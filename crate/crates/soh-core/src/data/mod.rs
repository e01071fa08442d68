//! Dataset ingestion, synthetic battery generation with analytically known
//! ground truth, and versioned JSON persistence.

mod artifact;
mod dataset;
mod export;
mod synth;

pub use artifact::{
    f64_matrix_to_value, f64_slice_to_value, full_precision_number, load_envelope, save_envelope,
    value_to_f64_matrix, value_to_f64_vec, Envelope,
};
pub use dataset::{load_battery_csv, write_atomic, write_battery_csv, BatteryDataset};
pub use export::{write_graph_csv, write_profile_csv};
pub use synth::{synth_battery, AnomalySpec, SynthBatteryModel, SynthConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("schema error: {message}")]
    Schema { message: String },
    #[error("validation failure{}: {rule}", cycle.map(|c| format!(" at cycle {c}")).unwrap_or_default())]
    Validation { cycle: Option<usize>, rule: String },
    #[error("invalid configuration: {message}")]
    Config { message: String },
    #[error("unsupported schema version {found} (supported: {supported})")]
    Version { found: String, supported: String },
    #[error("corrupt artifact: {message}")]
    Corrupt { message: String },
    #[error(transparent)]
    Series(#[from] crate::series::SeriesError),
}

impl DataError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
