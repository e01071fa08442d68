//! Battery datasets and their CSV schema.
//!
//! Two files describe one battery:
//!
//! * cycles CSV — header `cycle,t,voltage`, one row per sample. `cycle` is
//!   a positive integer, `t` seconds from the start of the cycle, `voltage`
//!   in volts. UTF-8, LF line endings, `.` decimal separator.
//! * labels CSV — header `cycle,soh`, one row per cycle.
//!
//! Loading is strict: time must be uniform (dt consistent within 1e-6 s)
//! and monotone within each cycle, voltages must stay in the plausible
//! band, and every cycle needs a label row.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::DataError;
use crate::series::VoltageCycle;

const DT_TOLERANCE: f64 = 1e-6;

/// One battery's ordered discharge cycles plus its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryDataset {
    pub battery_id: String,
    pub cycles: Vec<VoltageCycle>,
    /// Nominal capacity in amp-hours.
    pub nominal_capacity: f64,
    /// Shared sampling interval in seconds.
    pub dt: f64,
}

impl BatteryDataset {
    /// Cycle by its 1-based index.
    pub fn cycle(&self, index: usize) -> Option<&VoltageCycle> {
        self.cycles.iter().find(|c| c.index == index)
    }

    pub fn last_cycle_index(&self) -> usize {
        self.cycles.last().map(|c| c.index).unwrap_or(0)
    }

    /// First cycle at or below 80% SOH; falls back to the last labeled
    /// cycle when the battery never reaches end of life.
    pub fn eol_cycle(&self) -> Option<usize> {
        self.cycles
            .iter()
            .find(|c| c.soh.map(|s| s <= 0.8).unwrap_or(false))
            .map(|c| c.index)
            .or_else(|| {
                self.cycles
                    .iter()
                    .rev()
                    .find(|c| c.soh.is_some())
                    .map(|c| c.index)
            })
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.cycles.is_empty() {
            return Err(DataError::Validation {
                cycle: None,
                rule: "dataset holds no cycles".into(),
            });
        }
        let mut prev = 0usize;
        for cycle in &self.cycles {
            if cycle.index <= prev {
                return Err(DataError::Validation {
                    cycle: Some(cycle.index),
                    rule: format!("cycle indices must strictly increase (previous {prev})"),
                });
            }
            prev = cycle.index;
            if (cycle.dt - self.dt).abs() > DT_TOLERANCE {
                return Err(DataError::Validation {
                    cycle: Some(cycle.index),
                    rule: format!(
                        "sampling interval {} differs from dataset dt {}",
                        cycle.dt, self.dt
                    ),
                });
            }
        }
        Ok(())
    }
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: u64,
    name: &str,
    raw: &str,
) -> Result<T, DataError> {
    raw.trim().parse().map_err(|_| DataError::Parse {
        path: path.display().to_string(),
        line,
        message: format!("cannot parse {name} from {raw:?}"),
    })
}

fn open_reader(path: &Path) -> Result<csv::Reader<fs::File>, DataError> {
    let file = fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn check_header(path: &Path, reader: &mut csv::Reader<fs::File>, expected: &[&str]) -> Result<(), DataError> {
    let headers = reader.headers().map_err(|e| DataError::Parse {
        path: path.display().to_string(),
        line: 1,
        message: e.to_string(),
    })?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(DataError::Schema {
            message: format!(
                "{}: expected header {expected:?}, found {got:?}",
                path.display()
            ),
        });
    }
    Ok(())
}

/// Loads one battery from its cycles and labels files.
pub fn load_battery_csv(cycles_path: &Path, labels_path: &Path) -> Result<BatteryDataset, DataError> {
    // Labels first: cycle -> soh.
    let mut labels_reader = open_reader(labels_path)?;
    check_header(labels_path, &mut labels_reader, &["cycle", "soh"])?;
    let mut labels: BTreeMap<usize, f64> = BTreeMap::new();
    for record in labels_reader.records() {
        let record = record.map_err(|e| DataError::Parse {
            path: labels_path.display().to_string(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 2 {
            return Err(DataError::Parse {
                path: labels_path.display().to_string(),
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let cycle: usize = parse_field(labels_path, line, "cycle", &record[0])?;
        let soh: f64 = parse_field(labels_path, line, "soh", &record[1])?;
        if labels.insert(cycle, soh).is_some() {
            return Err(DataError::Validation {
                cycle: Some(cycle),
                rule: "duplicate label row".into(),
            });
        }
    }

    // Sample rows, grouped by cycle, order preserved.
    let mut cycles_reader = open_reader(cycles_path)?;
    check_header(cycles_path, &mut cycles_reader, &["cycle", "t", "voltage"])?;
    struct Raw {
        times: Vec<f64>,
        voltages: Vec<f64>,
    }
    let mut raw: BTreeMap<usize, Raw> = BTreeMap::new();
    for record in cycles_reader.records() {
        let record = record.map_err(|e| DataError::Parse {
            path: cycles_path.display().to_string(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 3 {
            return Err(DataError::Parse {
                path: cycles_path.display().to_string(),
                line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let cycle: usize = parse_field(cycles_path, line, "cycle", &record[0])?;
        if cycle == 0 {
            return Err(DataError::Parse {
                path: cycles_path.display().to_string(),
                line,
                message: "cycle numbers are 1-based".into(),
            });
        }
        let t: f64 = parse_field(cycles_path, line, "t", &record[1])?;
        let v: f64 = parse_field(cycles_path, line, "voltage", &record[2])?;
        let entry = raw.entry(cycle).or_insert_with(|| Raw {
            times: Vec::new(),
            voltages: Vec::new(),
        });
        entry.times.push(t);
        entry.voltages.push(v);
    }
    if raw.is_empty() {
        return Err(DataError::Validation {
            cycle: None,
            rule: format!("{} holds no sample rows", cycles_path.display()),
        });
    }

    // Establish dt from the first multi-sample cycle.
    let dt = raw
        .values()
        .find(|r| r.times.len() >= 2)
        .map(|r| r.times[1] - r.times[0])
        .ok_or_else(|| DataError::Validation {
            cycle: None,
            rule: "no cycle has at least two samples; dt is undefined".into(),
        })?;
    if dt <= 0.0 {
        return Err(DataError::Validation {
            cycle: None,
            rule: format!("non-positive sampling interval {dt}"),
        });
    }

    let mut cycles = Vec::with_capacity(raw.len());
    for (index, data) in &raw {
        for (i, window) in data.times.windows(2).enumerate() {
            let step = window[1] - window[0];
            if step <= 0.0 {
                return Err(DataError::Validation {
                    cycle: Some(*index),
                    rule: format!("time not monotone at sample {}", i + 1),
                });
            }
            if (step - dt).abs() > DT_TOLERANCE {
                return Err(DataError::Validation {
                    cycle: Some(*index),
                    rule: format!(
                        "non-uniform sampling: step {} at sample {} vs dt {}",
                        step,
                        i + 1,
                        dt
                    ),
                });
            }
        }
        let soh = *labels.get(index).ok_or(DataError::Validation {
            cycle: Some(*index),
            rule: "labels file is missing this cycle".into(),
        })?;
        let cycle = VoltageCycle::new(*index, data.voltages.clone(), dt, Some(soh))
            .map_err(DataError::from)?;
        cycles.push(cycle);
    }
    for cycle in labels.keys() {
        if !raw.contains_key(cycle) {
            return Err(DataError::Validation {
                cycle: Some(*cycle),
                rule: "labels file names a cycle absent from the cycles file".into(),
            });
        }
    }

    let battery_id = cycles_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "battery".into());
    let dataset = BatteryDataset {
        battery_id,
        cycles,
        nominal_capacity: 1.1,
        dt,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Atomic whole-file write: temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), DataError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut file = fs::File::create(&tmp).map_err(|e| DataError::io(&tmp, e))?;
        file.write_all(contents).map_err(|e| DataError::io(&tmp, e))?;
        file.sync_all().map_err(|e| DataError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| DataError::io(path, e))?;
    Ok(())
}

/// Writes the two CSV files for a dataset. Floats use the shortest
/// round-trip representation, so load-then-write is a fixpoint.
pub fn write_battery_csv(
    dataset: &BatteryDataset,
    cycles_path: &Path,
    labels_path: &Path,
) -> Result<(), DataError> {
    dataset.validate()?;
    let mut cycles_out = String::from("cycle,t,voltage\n");
    for cycle in &dataset.cycles {
        for (i, &v) in cycle.samples.iter().enumerate() {
            let t = i as f64 * dataset.dt;
            cycles_out.push_str(&format!("{},{},{}\n", cycle.index, t, v));
        }
    }
    let mut labels_out = String::from("cycle,soh\n");
    for cycle in &dataset.cycles {
        let soh = cycle.soh.ok_or(DataError::Validation {
            cycle: Some(cycle.index),
            rule: "cannot write labels CSV for an unlabeled cycle".into(),
        })?;
        labels_out.push_str(&format!("{},{}\n", cycle.index, soh));
    }
    write_atomic(cycles_path, cycles_out.as_bytes())?;
    write_atomic(labels_path, labels_out.as_bytes())?;
    Ok(())
}
