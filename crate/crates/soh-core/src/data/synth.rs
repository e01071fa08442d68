//! Synthetic degradation generator.
//!
//! The capacity trajectory follows the common two-stage path: slow linear
//! fade up to a knee, accelerating polynomial fade after it. Each cycle's
//! discharge duration scales with its SOH, and the voltage trace is a
//! gentle linear plateau with an exponential tail that reaches the cutoff
//! voltage exactly at the cycle's duration:
//!
//! ```text
//! SOH(c) = max(0.7, 1 - alpha*c - beta*max(0, c - knee)^p)
//! T_c    = base_duration * SOH(c)
//! v(u)   = v_start - drop*u - A*(exp((u-1)/tau) - exp(-1/tau)),  u = t/T_c
//! ```
//!
//! with `A` solved so that `v(0) = v_start` and `v(1) = v_cutoff`. The
//! model is strictly decreasing in `u`, so threshold crossings invert to
//! machine precision; [`SynthBatteryModel`] exposes those closed-form
//! crossings as a ground-truth oracle for tests.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{BatteryDataset, DataError};
use crate::series::VoltageCycle;

/// A bump planted additively into one early cycle, giving the discord
/// search a known target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    /// 1-based cycle carrying the bump.
    pub cycle: usize,
    /// Cycle-local onset sample.
    pub position: usize,
    /// Peak amplitude in volts.
    pub amplitude: f64,
    /// Width in samples.
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub battery_id: String,
    pub total_cycles: usize,
    /// Cycle-1 discharge duration at SOH 1, in seconds.
    pub base_duration: f64,
    /// Sampling interval in seconds.
    pub dt: f64,
    pub knee_cycle: usize,
    /// Linear fade per cycle (alpha).
    pub linear_rate: f64,
    /// Post-knee fade coefficient (beta).
    pub knee_rate: f64,
    pub knee_exponent: f64,
    pub v_start: f64,
    pub v_cutoff: f64,
    /// Plateau voltage drop over a full discharge, in volts.
    pub plateau_drop: f64,
    /// Tail time constant as a fraction of the cycle duration.
    pub tail_frac: f64,
    /// Gaussian voltage noise, in volts.
    pub noise_std: f64,
    pub nominal_capacity: f64,
    pub anomaly: Option<AnomalySpec>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            battery_id: "synthetic".into(),
            total_cycles: 600,
            base_duration: 750.0,
            dt: 2.0,
            knee_cycle: 380,
            linear_rate: 4e-4,
            knee_rate: 1.2e-6,
            knee_exponent: 2.0,
            v_start: 3.3,
            v_cutoff: 2.0,
            plateau_drop: 0.30,
            tail_frac: 0.04,
            noise_std: 1e-3,
            nominal_capacity: 1.1,
            anomaly: Some(AnomalySpec {
                cycle: 2,
                position: 225,
                amplitude: 0.006,
                width: 100,
            }),
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |message: String| Err(DataError::Config { message });
        if self.total_cycles == 0 {
            return fail("total_cycles must be positive".into());
        }
        if !(self.base_duration > 0.0) || !(self.dt > 0.0) || self.dt > self.base_duration {
            return fail(format!(
                "need 0 < dt <= base_duration, got dt={} base_duration={}",
                self.dt, self.base_duration
            ));
        }
        if !(self.v_cutoff < self.v_start) {
            return fail(format!(
                "v_cutoff {} must be below v_start {}",
                self.v_cutoff, self.v_start
            ));
        }
        if !(self.plateau_drop >= 0.0) || self.plateau_drop >= self.v_start - self.v_cutoff {
            return fail(format!(
                "plateau_drop {} must be in [0, v_start - v_cutoff)",
                self.plateau_drop
            ));
        }
        if !(self.tail_frac > 0.0 && self.tail_frac < 1.0) {
            return fail(format!("tail_frac {} must be in (0, 1)", self.tail_frac));
        }
        if self.linear_rate < 0.0 || self.knee_rate < 0.0 || self.knee_exponent < 1.0 {
            return fail("degradation rates must be non-negative, exponent >= 1".into());
        }
        if !(self.noise_std >= 0.0) || self.noise_std > 0.05 {
            return fail(format!(
                "noise_std {} must be in [0, 0.05] to stay inside the voltage band",
                self.noise_std
            ));
        }
        if let Some(a) = self.anomaly {
            if a.cycle == 0 || a.cycle > self.total_cycles || a.width == 0 {
                return fail(format!(
                    "anomaly cycle {} width {} out of range",
                    a.cycle, a.width
                ));
            }
            // The burst must fit inside its cycle; anything else silently
            // truncates and breaks discord-recovery guarantees.
            let soh_guess = 1.0 - self.linear_rate * a.cycle as f64;
            let cycle_len = (self.base_duration * soh_guess.clamp(0.7, 1.0) / self.dt) as usize + 1;
            if a.position + a.width > cycle_len {
                return fail(format!(
                    "anomaly spans samples {}..{} but cycle {} has only ~{cycle_len}",
                    a.position,
                    a.position + a.width,
                    a.cycle
                ));
            }
        }
        Ok(())
    }
}

/// The noiseless continuous-time model behind a synthetic battery; the
/// analytic ground truth for crossing-time assertions.
#[derive(Debug, Clone)]
pub struct SynthBatteryModel {
    cfg: SynthConfig,
    /// Tail amplitude solved from the boundary conditions.
    tail_amp: f64,
    /// exp(-1/tau), the tail's value at u = 0.
    tail_at_zero: f64,
}

impl SynthBatteryModel {
    pub fn new(cfg: &SynthConfig) -> Result<Self, DataError> {
        cfg.validate()?;
        let tail_at_zero = (-1.0 / cfg.tail_frac).exp();
        let tail_amp = (cfg.v_start - cfg.v_cutoff - cfg.plateau_drop) / (1.0 - tail_at_zero);
        Ok(Self {
            cfg: cfg.clone(),
            tail_amp,
            tail_at_zero,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    /// SOH of cycle `c` (1-based), floored at 0.7.
    pub fn soh(&self, cycle: usize) -> f64 {
        let c = cycle as f64;
        let knee_excess = (c - self.cfg.knee_cycle as f64).max(0.0);
        let soh =
            1.0 - self.cfg.linear_rate * c - self.cfg.knee_rate * knee_excess.powf(self.cfg.knee_exponent);
        soh.max(0.7)
    }

    /// Discharge duration of cycle `c`, in seconds.
    pub fn duration(&self, cycle: usize) -> f64 {
        self.cfg.base_duration * self.soh(cycle)
    }

    /// Sample count of cycle `c`: samples at t = 0, dt, ..., all <= T_c.
    pub fn sample_count(&self, cycle: usize) -> usize {
        (self.duration(cycle) / self.cfg.dt).floor() as usize + 1
    }

    /// First cycle whose SOH is at or below 80%, if any.
    pub fn eol_cycle(&self) -> Option<usize> {
        (1..=self.cfg.total_cycles).find(|&c| self.soh(c) <= 0.8)
    }

    /// Clean voltage at normalized phase u in [0, 1].
    pub fn voltage_at_phase(&self, u: f64) -> f64 {
        self.cfg.v_start - self.cfg.plateau_drop * u
            - self.tail_amp * (((u - 1.0) / self.cfg.tail_frac).exp() - self.tail_at_zero)
    }

    /// Clean voltage of cycle `c` at time t seconds.
    pub fn voltage(&self, cycle: usize, t: f64) -> f64 {
        self.voltage_at_phase(t / self.duration(cycle))
    }

    /// Continuous time at which cycle `c` first reaches voltage `v`.
    /// `None` if `v` is outside (v_cutoff, v_start]. The model is strictly
    /// decreasing, so bisection converges to machine precision.
    pub fn crossing_time(&self, cycle: usize, v: f64) -> Option<f64> {
        if v >= self.cfg.v_start {
            return Some(0.0);
        }
        if v <= self.cfg.v_cutoff {
            return None;
        }
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        for _ in 0..128 {
            let mid = 0.5 * (lo + hi);
            if self.voltage_at_phase(mid) <= v {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi * self.duration(cycle))
    }

    /// First sample index of cycle `c` with clean voltage <= v, matching
    /// the crossing time up to the sampling grid.
    pub fn crossing_sample(&self, cycle: usize, v: f64) -> Option<usize> {
        let t = self.crossing_time(cycle, v)?;
        let idx = (t / self.cfg.dt).ceil() as usize;
        (idx < self.sample_count(cycle)).then_some(idx)
    }
}

/// The planted disturbance is a telegraph-style burst: pseudo-random
/// +/-amplitude offsets over (position, position + width), with the onset
/// sample itself left clean so the reference voltage read at the discord
/// equals the undisturbed curve. A burst has no correlation with smooth
/// discharge shapes, with cycle-boundary jumps, or with shifted copies of
/// itself, so the window most distant from everything else is the one
/// covering the most burst samples: the one starting at the onset.
fn anomaly_bump(spec: &AnomalySpec, local: usize) -> f64 {
    if local <= spec.position || local >= spec.position + spec.width {
        return 0.0;
    }
    // Deterministic per (position, width, offset): an splitmix64 step.
    let mut h = (spec.position as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((spec.width as u64) << 32)
        .wrapping_add(local as u64);
    h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    if h & 1 == 0 {
        spec.amplitude
    } else {
        -spec.amplitude
    }
}

/// Generates a synthetic battery. Deterministic per seed: identical
/// configurations produce byte-identical datasets.
pub fn synth_battery(cfg: &SynthConfig) -> Result<BatteryDataset, DataError> {
    let model = SynthBatteryModel::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = if cfg.noise_std > 0.0 {
        Some(Normal::new(0.0, cfg.noise_std).expect("validated std"))
    } else {
        None
    };

    let mut cycles = Vec::with_capacity(cfg.total_cycles);
    for c in 1..=cfg.total_cycles {
        let duration = model.duration(c);
        let count = model.sample_count(c);
        let mut samples = Vec::with_capacity(count);
        for i in 0..count {
            let t = i as f64 * cfg.dt;
            let mut v = model.voltage_at_phase(t / duration);
            if let Some(anomaly) = &cfg.anomaly {
                if anomaly.cycle == c {
                    v += anomaly_bump(anomaly, i);
                }
            }
            if let Some(dist) = &noise {
                v += dist.sample(&mut rng);
            }
            samples.push(v);
        }
        cycles.push(VoltageCycle::new(c, samples, cfg.dt, Some(model.soh(c)))?);
    }

    let dataset = BatteryDataset {
        battery_id: cfg.battery_id.clone(),
        cycles,
        nominal_capacity: cfg.nominal_capacity,
        dt: cfg.dt,
    };
    dataset.validate()?;
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_degradation_limit_gives_identical_cycles() {
        let cfg = SynthConfig {
            linear_rate: 0.0,
            knee_rate: 0.0,
            noise_std: 0.0,
            anomaly: None,
            total_cycles: 5,
            ..SynthConfig::default()
        };
        let battery = synth_battery(&cfg).unwrap();
        assert!(battery
            .cycles
            .iter()
            .all(|c| c.samples == battery.cycles[0].samples));
        assert!(battery.cycles.iter().all(|c| c.soh == Some(1.0)));
    }

    #[test]
    fn default_config_durations_strictly_decrease() {
        let model = SynthBatteryModel::new(&SynthConfig::default()).unwrap();
        for c in 2..=600 {
            assert!(
                model.duration(c) < model.duration(c - 1),
                "duration did not decrease at cycle {c}"
            );
        }
    }

    #[test]
    fn default_config_eol_is_between_knee_and_end() {
        let cfg = SynthConfig::default();
        let model = SynthBatteryModel::new(&cfg).unwrap();
        let eol = model.eol_cycle().expect("default config reaches EOL");
        assert!(
            eol > cfg.knee_cycle && eol < cfg.total_cycles,
            "EOL {eol} outside ({}, {})",
            cfg.knee_cycle,
            cfg.total_cycles
        );
    }

    #[test]
    fn soh_is_non_increasing_and_floored() {
        let model = SynthBatteryModel::new(&SynthConfig {
            total_cycles: 2000,
            ..SynthConfig::default()
        })
        .unwrap();
        let mut prev = f64::INFINITY;
        for c in 1..=2000 {
            let s = model.soh(c);
            assert!(s <= prev);
            assert!(s >= 0.7);
            prev = s;
        }
        assert_eq!(model.soh(2000), 0.7);
    }

    #[test]
    fn voltage_model_hits_boundary_conditions() {
        let model = SynthBatteryModel::new(&SynthConfig::default()).unwrap();
        assert!((model.voltage_at_phase(0.0) - 3.3).abs() <= 1e-12);
        assert!((model.voltage_at_phase(1.0) - 2.0).abs() <= 1e-12);
        // Strictly decreasing on a fine grid.
        let mut prev = f64::INFINITY;
        for i in 0..=1000 {
            let v = model.voltage_at_phase(i as f64 / 1000.0);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn crossing_sample_matches_scan_on_noiseless_data() {
        let cfg = SynthConfig {
            noise_std: 0.0,
            anomaly: None,
            total_cycles: 40,
            ..SynthConfig::default()
        };
        let model = SynthBatteryModel::new(&cfg).unwrap();
        let battery = synth_battery(&cfg).unwrap();
        for &v in &[3.25, 3.2, 3.1, 3.0, 2.8, 2.5, 2.2] {
            for cycle in [1usize, 10, 25, 40] {
                let scan = battery.cycles[cycle - 1]
                    .samples
                    .iter()
                    .position(|&s| s <= v)
                    .expect("threshold inside the band crosses");
                let oracle = model.crossing_sample(cycle, v).expect("crossing exists");
                assert!(
                    scan.abs_diff(oracle) <= 1,
                    "cycle {cycle} v {v}: scan {scan} vs oracle {oracle}"
                );
            }
        }
    }

    #[test]
    fn seed_determinism_is_bitwise() {
        let cfg = SynthConfig {
            total_cycles: 12,
            ..SynthConfig::default()
        };
        let a = synth_battery(&cfg).unwrap();
        let b = synth_battery(&cfg).unwrap();
        assert_eq!(a.cycles.len(), b.cycles.len());
        for (x, y) in a.cycles.iter().zip(&b.cycles) {
            assert_eq!(x.samples, y.samples);
            assert_eq!(x.soh, y.soh);
        }
        let c = synth_battery(&SynthConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.cycles[0].samples, c.cycles[0].samples);
    }

    #[test]
    fn anomaly_is_additive_and_local() {
        let base_cfg = SynthConfig {
            noise_std: 0.0,
            anomaly: None,
            total_cycles: 3,
            ..SynthConfig::default()
        };
        let with = SynthConfig {
            anomaly: Some(AnomalySpec {
                cycle: 2,
                position: 50,
                amplitude: 0.006,
                width: 40,
            }),
            ..base_cfg.clone()
        };
        let clean = synth_battery(&base_cfg).unwrap();
        let bumped = synth_battery(&with).unwrap();
        assert_eq!(clean.cycles[0].samples, bumped.cycles[0].samples);
        assert_eq!(clean.cycles[2].samples, bumped.cycles[2].samples);
        let c2_clean = &clean.cycles[1].samples;
        let c2_bump = &bumped.cycles[1].samples;
        // The onset sample itself stays clean; the burst spans the rest of
        // [position, position + width).
        assert_eq!(&c2_clean[..51], &c2_bump[..51]);
        assert_eq!(&c2_clean[90..], &c2_bump[90..]);
        for i in 51..90 {
            let delta = (c2_bump[i] - c2_clean[i]).abs();
            assert!((delta - 0.006).abs() <= 1e-12, "sample {i}: delta {delta}");
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad_dt = SynthConfig {
            dt: 0.0,
            ..SynthConfig::default()
        };
        assert!(matches!(
            synth_battery(&bad_dt),
            Err(DataError::Config { .. })
        ));
        let bad_noise = SynthConfig {
            noise_std: 0.5,
            ..SynthConfig::default()
        };
        assert!(matches!(
            synth_battery(&bad_noise),
            Err(DataError::Config { .. })
        ));
    }
}
