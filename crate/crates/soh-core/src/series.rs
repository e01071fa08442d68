//! Time-series primitives: discharge-cycle containers, concatenation with
//! boundary tracking, sliding-window statistics, and the z-normalized
//! Euclidean distance underlying the matrix profile.

use thiserror::Error;

/// Default plausible voltage band for lithium-ion discharge data, in volts.
pub const DEFAULT_VOLTAGE_BAND: (f64, f64) = (1.5, 4.5);

#[derive(Debug, Error, PartialEq)]
pub enum SeriesError {
    #[error("input collection is empty")]
    EmptyInput,
    #[error("cycle {index} has no samples")]
    EmptyCycle { index: usize },
    #[error("cycle {index} sample {pos} is not finite")]
    NonFiniteSample { index: usize, pos: usize },
    #[error("cycle {index} sample {pos} = {value} V outside band [{lo}, {hi}] V")]
    VoltageOutOfBand {
        index: usize,
        pos: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("cycle {index} SOH label {value} outside (0, 1.2]")]
    SohOutOfRange { index: usize, value: f64 },
    #[error("cycle {index} sampling interval {dt} is not positive and finite")]
    BadSamplingInterval { index: usize, dt: f64 },
    #[error("window length {m} exceeds series length {phi}")]
    WindowTooLong { m: usize, phi: usize },
    #[error("window length must be at least 1")]
    ZeroWindow,
    #[error("window lengths differ: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("window is constant and the flat-window policy is reject")]
    FlatWindow,
}

/// One discharge cycle: its sampled voltage trajectory plus an optional
/// measured SOH label (capacity over nominal capacity).
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageCycle {
    /// 1-based cycle number within the battery's life.
    pub index: usize,
    /// Voltage samples in volts, taken at a fixed interval.
    pub samples: Vec<f64>,
    /// Sampling interval in seconds.
    pub dt: f64,
    /// SOH in (0, 1.2]; `None` for unlabeled online cycles.
    pub soh: Option<f64>,
}

impl VoltageCycle {
    /// Validates against the default voltage band.
    pub fn new(
        index: usize,
        samples: Vec<f64>,
        dt: f64,
        soh: Option<f64>,
    ) -> Result<Self, SeriesError> {
        Self::with_band(index, samples, dt, soh, DEFAULT_VOLTAGE_BAND)
    }

    /// Validates against an explicit plausible band `(lo, hi)` in volts.
    pub fn with_band(
        index: usize,
        samples: Vec<f64>,
        dt: f64,
        soh: Option<f64>,
        band: (f64, f64),
    ) -> Result<Self, SeriesError> {
        if samples.is_empty() {
            return Err(SeriesError::EmptyCycle { index });
        }
        if !dt.is_finite() || dt <= 0.0 {
            return Err(SeriesError::BadSamplingInterval { index, dt });
        }
        for (pos, &v) in samples.iter().enumerate() {
            if !v.is_finite() {
                return Err(SeriesError::NonFiniteSample { index, pos });
            }
            if v < band.0 || v > band.1 {
                return Err(SeriesError::VoltageOutOfBand {
                    index,
                    pos,
                    value: v,
                    lo: band.0,
                    hi: band.1,
                });
            }
        }
        if let Some(s) = soh {
            // Allows minor measurement overshoot above nominal capacity.
            if !s.is_finite() || s <= 0.0 || s > 1.2 {
                return Err(SeriesError::SohOutOfRange { index, value: s });
            }
        }
        Ok(Self {
            index,
            samples,
            dt,
            soh,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Several cycles' voltage readings joined into one flat series, with the
/// start offset of each constituent cycle retained.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcatSeries {
    /// Flat voltage sequence.
    pub values: Vec<f64>,
    /// Start offset of each cycle within `values`; strictly increasing,
    /// first entry 0, one entry per cycle.
    pub boundaries: Vec<usize>,
    /// 1-based source cycle index per boundary entry.
    pub cycle_indices: Vec<usize>,
}

impl ConcatSeries {
    /// Total length of the flat series.
    pub fn phi(&self) -> usize {
        self.values.len()
    }

    /// Number of constituent cycles.
    pub fn cycle_count(&self) -> usize {
        self.boundaries.len()
    }

    /// Length of constituent cycle `i` (0-based position, not cycle index).
    pub fn cycle_len(&self, i: usize) -> usize {
        let start = self.boundaries[i];
        let end = if i + 1 < self.boundaries.len() {
            self.boundaries[i + 1]
        } else {
            self.values.len()
        };
        end - start
    }

    /// Splits the flat series back at its boundaries.
    pub fn split(&self) -> Vec<&[f64]> {
        (0..self.cycle_count())
            .map(|i| {
                let start = self.boundaries[i];
                &self.values[start..start + self.cycle_len(i)]
            })
            .collect()
    }
}

/// Joins cycles into one flat series, preserving order.
pub fn concat_cycles(cycles: &[VoltageCycle]) -> Result<ConcatSeries, SeriesError> {
    if cycles.is_empty() {
        return Err(SeriesError::EmptyInput);
    }
    let mut values = Vec::with_capacity(cycles.iter().map(|c| c.len()).sum());
    let mut boundaries = Vec::with_capacity(cycles.len());
    let mut cycle_indices = Vec::with_capacity(cycles.len());
    for cycle in cycles {
        if cycle.is_empty() {
            return Err(SeriesError::EmptyCycle { index: cycle.index });
        }
        boundaries.push(values.len());
        cycle_indices.push(cycle.index);
        values.extend_from_slice(&cycle.samples);
    }
    Ok(ConcatSeries {
        values,
        boundaries,
        cycle_indices,
    })
}

/// Per-window mean and standard deviation for every window of a fixed
/// length, computed in O(phi) via prefix sums.
#[derive(Debug, Clone)]
pub struct WindowStats {
    pub m: usize,
    pub means: Vec<f64>,
    /// Population standard deviations (divide by m), all >= 0.
    pub stds: Vec<f64>,
}

impl WindowStats {
    pub fn window_count(&self) -> usize {
        self.means.len()
    }
}

/// Sliding mean/std over all windows of length `m`.
///
/// Prefix sums are taken over deviations from the global mean rather than
/// over raw values; this keeps the cancellation in the variance formula
/// small even on long near-constant stretches.
pub fn sliding_stats(values: &[f64], m: usize) -> Result<WindowStats, SeriesError> {
    let phi = values.len();
    if m == 0 {
        return Err(SeriesError::ZeroWindow);
    }
    if m > phi {
        return Err(SeriesError::WindowTooLong { m, phi });
    }
    let global_mean = values.iter().sum::<f64>() / phi as f64;
    // Prefix sums of (x - global_mean) and (x - global_mean)^2.
    let mut sum_d = vec![0.0; phi + 1];
    let mut sum_d2 = vec![0.0; phi + 1];
    for (i, &v) in values.iter().enumerate() {
        let d = v - global_mean;
        sum_d[i + 1] = sum_d[i] + d;
        sum_d2[i + 1] = sum_d2[i] + d * d;
    }
    let count = phi - m + 1;
    let inv_m = 1.0 / m as f64;
    let mut means = Vec::with_capacity(count);
    let mut stds = Vec::with_capacity(count);
    for q in 0..count {
        let dev_mean = (sum_d[q + m] - sum_d[q]) * inv_m;
        let dev_sq = (sum_d2[q + m] - sum_d2[q]) * inv_m;
        means.push(global_mean + dev_mean);
        let var = (dev_sq - dev_mean * dev_mean).max(0.0);
        stds.push(var.sqrt());
    }
    Ok(WindowStats { m, means, stds })
}

/// How a constant (zero-variance) window is treated under z-normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlatWindowPolicy {
    /// Map a constant window to the all-zeros vector: two flat windows are
    /// at distance 0, a flat and a non-flat window at sqrt(m).
    #[default]
    ZeroVector,
    /// Fail with [`SeriesError::FlatWindow`].
    Reject,
}

/// Euclidean distance between the z-normalized copies of two equal-length
/// windows. Zero iff the windows are positive-affine images of each other.
pub fn znorm_distance(a: &[f64], b: &[f64], policy: FlatWindowPolicy) -> Result<f64, SeriesError> {
    if a.len() != b.len() {
        return Err(SeriesError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    let m = a.len();
    if m == 0 {
        return Err(SeriesError::ZeroWindow);
    }
    let (mu_a, sd_a) = mean_std(a);
    let (mu_b, sd_b) = mean_std(b);
    let a_flat = sd_a == 0.0;
    let b_flat = sd_b == 0.0;
    if (a_flat || b_flat) && policy == FlatWindowPolicy::Reject {
        return Err(SeriesError::FlatWindow);
    }
    if a_flat && b_flat {
        return Ok(0.0);
    }
    // A flat window z-normalizes to the all-zeros vector; the distance to a
    // non-flat window is then the norm of its z-normalization, sqrt(m).
    if a_flat || b_flat {
        return Ok((m as f64).sqrt());
    }
    let mut acc = 0.0;
    for i in 0..m {
        let za = (a[i] - mu_a) / sd_a;
        let zb = (b[i] - mu_b) / sd_b;
        let d = za - zb;
        acc += d * d;
    }
    Ok(acc.sqrt())
}

/// Plain Euclidean distance between two equal-length windows.
pub fn raw_distance(a: &[f64], b: &[f64]) -> Result<f64, SeriesError> {
    if a.len() != b.len() {
        return Err(SeriesError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    let mut acc = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    Ok(acc.sqrt())
}

/// Mean and population standard deviation of a window.
pub fn mean_std(window: &[f64]) -> (f64, f64) {
    let m = window.len() as f64;
    let mean = window.iter().sum::<f64>() / m;
    let var = window.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / m;
    (mean, var.max(0.0).sqrt())
}
