//! Versioned JSON envelopes for persisted artifacts.
//!
//! Layout:
//!
//! ```json
//! {
//!   "schema": "soh-model",
//!   "schema_version": "1.1",
//!   "checksum": "sha256:…",
//!   "payload": { … }
//! }
//! ```
//!
//! The checksum covers the canonical (sorted-key) serialization of the
//! payload. Loading rejects a different major version outright and warns
//! when the minor version differs, leaving newly added fields to their
//! defaults. Floating-point payload values are rendered with 17
//! significant decimal digits, which reconstructs every f64 bit-exactly.

use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};

use super::dataset::write_atomic;
use super::DataError;

/// One artifact family: its `schema` tag and current version.
#[derive(Debug, Clone, Copy)]
pub struct Envelope {
    pub schema: &'static str,
    pub major: u32,
    pub minor: u32,
}

impl Envelope {
    pub const fn new(schema: &'static str, major: u32, minor: u32) -> Self {
        Self {
            schema,
            major,
            minor,
        }
    }

    fn version_string(&self) -> String {
        format!("{}.{}", self.major, self.minor)
    }
}

fn canonical_checksum(payload: &Value) -> String {
    let canonical = serde_json::to_string(payload).expect("JSON values always serialize");
    let digest = Sha256::digest(canonical.as_bytes());
    let mut out = String::with_capacity(7 + 64);
    out.push_str("sha256:");
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Serializes `payload` under a checksummed, versioned envelope and writes
/// it atomically.
pub fn save_envelope(path: &Path, envelope: Envelope, payload: Value) -> Result<(), DataError> {
    let mut root = Map::new();
    root.insert("schema".into(), Value::String(envelope.schema.into()));
    root.insert(
        "schema_version".into(),
        Value::String(envelope.version_string()),
    );
    root.insert("checksum".into(), Value::String(canonical_checksum(&payload)));
    root.insert("payload".into(), payload);
    let text = serde_json::to_string_pretty(&Value::Object(root))
        .expect("JSON values always serialize");
    write_atomic(path, text.as_bytes())
}

/// Reads an envelope back, verifying schema tag, version, and checksum.
pub fn load_envelope(path: &Path, envelope: Envelope) -> Result<Value, DataError> {
    let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
    let root: Value = serde_json::from_slice(&bytes).map_err(|e| DataError::Corrupt {
        message: format!("{}: {e}", path.display()),
    })?;
    let obj = root.as_object().ok_or_else(|| DataError::Corrupt {
        message: format!("{}: top level is not an object", path.display()),
    })?;

    let schema = obj.get("schema").and_then(Value::as_str).unwrap_or("");
    if schema != envelope.schema {
        return Err(DataError::Schema {
            message: format!(
                "{}: expected schema {:?}, found {schema:?}",
                path.display(),
                envelope.schema
            ),
        });
    }

    let version = obj
        .get("schema_version")
        .and_then(Value::as_str)
        .unwrap_or("");
    let (major, minor) = parse_version(version).ok_or_else(|| DataError::Version {
        found: version.to_string(),
        supported: envelope.version_string(),
    })?;
    if major != envelope.major {
        return Err(DataError::Version {
            found: version.to_string(),
            supported: envelope.version_string(),
        });
    }
    if minor != envelope.minor {
        log::warn!(
            "{}: artifact version {version} differs from current {} (minor revision); \
             missing fields take their defaults",
            path.display(),
            envelope.version_string()
        );
    }

    let payload = obj.get("payload").cloned().ok_or_else(|| DataError::Corrupt {
        message: format!("{}: payload missing", path.display()),
    })?;
    let expected = obj.get("checksum").and_then(Value::as_str).unwrap_or("");
    let actual = canonical_checksum(&payload);
    if expected != actual {
        return Err(DataError::Corrupt {
            message: format!(
                "{}: checksum mismatch (stored {expected}, computed {actual})",
                path.display()
            ),
        });
    }
    Ok(payload)
}

fn parse_version(version: &str) -> Option<(u32, u32)> {
    let (major, minor) = version.split_once('.')?;
    Some((major.parse().ok()?, minor.parse().ok()?))
}

/// A JSON number carrying 17 significant decimal digits: enough to
/// reconstruct the exact f64.
pub fn full_precision_number(v: f64) -> Number {
    Number::from_str(&format!("{v:.16e}")).expect("formatted floats always parse")
}

pub fn f64_slice_to_value(values: &[f64]) -> Value {
    Value::Array(
        values
            .iter()
            .map(|&v| Value::Number(full_precision_number(v)))
            .collect(),
    )
}

pub fn f64_matrix_to_value(rows: usize, cols: usize, data: &[f64]) -> Value {
    Value::Array(
        (0..rows)
            .map(|r| f64_slice_to_value(&data[r * cols..(r + 1) * cols]))
            .collect(),
    )
}

pub fn value_to_f64_vec(value: &Value, what: &str) -> Result<Vec<f64>, DataError> {
    let arr = value.as_array().ok_or_else(|| DataError::Corrupt {
        message: format!("{what}: expected an array"),
    })?;
    arr.iter()
        .map(|v| {
            v.as_f64().ok_or_else(|| DataError::Corrupt {
                message: format!("{what}: expected numbers"),
            })
        })
        .collect()
}

pub fn value_to_f64_matrix(value: &Value, what: &str) -> Result<(usize, usize, Vec<f64>), DataError> {
    let rows = value.as_array().ok_or_else(|| DataError::Corrupt {
        message: format!("{what}: expected an array of rows"),
    })?;
    let mut data = Vec::new();
    let mut cols = None;
    for row in rows {
        let row = value_to_f64_vec(row, what)?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(DataError::Corrupt {
                    message: format!("{what}: ragged rows ({c} vs {})", row.len()),
                })
            }
            _ => {}
        }
        data.extend(row);
    }
    Ok((rows.len(), cols.unwrap_or(0), data))
}
