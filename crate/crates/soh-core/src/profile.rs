//! Matrix profile of a concatenated discharge series: brute-force reference
//! implementation, streaming fast implementation, per-cycle partitioning,
//! and discord location.
//!
//! The profile holds, for every window start `q`, the smallest distance from
//! window `q` to any other window at least `exclusion` steps away, together
//! with the position of that best match. Minima (motifs) mark repeated
//! structure; the maximum (the discord) marks the most anomalous window.

use rayon::prelude::*;
use thiserror::Error;

use crate::series::{
    sliding_stats, ConcatSeries, FlatWindowPolicy, SeriesError, VoltageCycle, WindowStats,
};

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("series has {windows} windows but the exclusion zone ({exclusion}) requires at least {needed}")]
    DegenerateSeries {
        windows: usize,
        exclusion: usize,
        needed: usize,
    },
    #[error("profile length {profile} inconsistent with series ({expected} windows expected)")]
    BoundaryMismatch { profile: usize, expected: usize },
    #[error("profile slice is empty or search length is zero")]
    EmptySlice,
    #[error("search length {search_len} exceeds slice length {slice_len}")]
    SearchTooLong { search_len: usize, slice_len: usize },
    #[error("cycle of length {cycle_len} cannot cover profile slice of length {slice_len}")]
    CycleTooShort { cycle_len: usize, slice_len: usize },
}

/// Distance kernel used by the profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    /// Euclidean distance between z-normalized windows. Shape-based: what
    /// makes discord detection on voltage traces meaningful.
    #[default]
    ZNormalized,
    /// Plain Euclidean distance between raw windows.
    Raw,
}

/// Parameters of a matrix-profile computation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProfileConfig {
    /// Window (subsequence) length in time steps.
    pub m: usize,
    /// Half-width of the self-match exclusion zone in time steps; matches
    /// with |q - j| < exclusion are ignored.
    pub exclusion: usize,
    pub distance: DistanceKind,
    pub flat: FlatWindowPolicy,
}

impl ProfileConfig {
    /// Window length `m` with the conventional `m/2` exclusion zone.
    pub fn new(m: usize) -> Self {
        Self {
            m,
            exclusion: (m / 2).max(1),
            distance: DistanceKind::default(),
            flat: FlatWindowPolicy::default(),
        }
    }

    pub fn with_exclusion(mut self, exclusion: usize) -> Self {
        self.exclusion = exclusion.max(1);
        self
    }

    pub fn with_distance(mut self, distance: DistanceKind) -> Self {
        self.distance = distance;
        self
    }

    pub fn with_flat_policy(mut self, flat: FlatWindowPolicy) -> Self {
        self.flat = flat;
        self
    }
}

/// Per-position minimum non-trivial-match distances over a series.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixProfile {
    /// Minimum distance per window start; length phi - m + 1.
    pub distances: Vec<f64>,
    /// Window start of the best match per position.
    pub indices: Vec<usize>,
    pub m: usize,
    pub exclusion: usize,
}

impl MatrixProfile {
    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }
}

/// One cycle's span within a matrix profile: the window starts that lie
/// inside that cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileSlice {
    /// 1-based source cycle index.
    pub cycle_index: usize,
    /// Start position within the profile.
    pub start: usize,
    /// Number of profile positions in this slice.
    pub len: usize,
}

/// Discord location within the searched cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscordResult {
    /// Cycle-local time step of the discord window start.
    pub lambda: usize,
    /// Profile value at the discord (the maximum of the searched range).
    pub profile_peak: f64,
    /// Voltage at the discord onset, in volts.
    pub v_ref: f64,
}

fn check_dimensions(phi: usize, cfg: &ProfileConfig) -> Result<usize, ProfileError> {
    if cfg.m == 0 {
        return Err(SeriesError::ZeroWindow.into());
    }
    if cfg.m > phi {
        return Err(SeriesError::WindowTooLong { m: cfg.m, phi }.into());
    }
    let windows = phi - cfg.m + 1;
    let needed = 2 * cfg.exclusion + 1;
    if windows < needed {
        return Err(ProfileError::DegenerateSeries {
            windows,
            exclusion: cfg.exclusion,
            needed,
        });
    }
    Ok(windows)
}

/// Candidate-tracking state: per position, the best (distance^2, index)
/// pair under lexicographic order, so ties go to the smaller match index.
struct Candidates {
    dist_sq: Vec<f64>,
    indices: Vec<usize>,
}

impl Candidates {
    fn new(n: usize) -> Self {
        Self {
            dist_sq: vec![f64::INFINITY; n],
            indices: vec![usize::MAX; n],
        }
    }

    #[inline]
    fn offer(&mut self, q: usize, j: usize, dist_sq: f64) {
        let best = self.dist_sq[q];
        if dist_sq < best || (dist_sq == best && j < self.indices[q]) {
            self.dist_sq[q] = dist_sq;
            self.indices[q] = j;
        }
    }

    /// Elementwise merge under the same total order; associative and
    /// commutative, so any merge schedule yields the serial result.
    fn merge(mut self, other: Self) -> Self {
        for q in 0..self.dist_sq.len() {
            let (d, j) = (other.dist_sq[q], other.indices[q]);
            if d < self.dist_sq[q] || (d == self.dist_sq[q] && j < self.indices[q]) {
                self.dist_sq[q] = d;
                self.indices[q] = j;
            }
        }
        self
    }

    fn into_profile(self, cfg: &ProfileConfig) -> MatrixProfile {
        MatrixProfile {
            distances: self.dist_sq.into_iter().map(|d| d.sqrt()).collect(),
            indices: self.indices,
            m: cfg.m,
            exclusion: cfg.exclusion,
        }
    }
}

/// Squared distance between windows at `i` and `j`, fused over the raw
/// values with precomputed window statistics.
fn direct_dist_sq(
    values: &[f64],
    stats: &WindowStats,
    i: usize,
    j: usize,
    cfg: &ProfileConfig,
) -> Result<f64, ProfileError> {
    let m = cfg.m;
    let a = &values[i..i + m];
    let b = &values[j..j + m];
    match cfg.distance {
        DistanceKind::ZNormalized => {
            let (mu_a, sd_a) = (stats.means[i], stats.stds[i]);
            let (mu_b, sd_b) = (stats.means[j], stats.stds[j]);
            let a_flat = sd_a == 0.0;
            let b_flat = sd_b == 0.0;
            if (a_flat || b_flat) && cfg.flat == FlatWindowPolicy::Reject {
                return Err(SeriesError::FlatWindow.into());
            }
            if a_flat && b_flat {
                return Ok(0.0);
            }
            if a_flat || b_flat {
                return Ok(m as f64);
            }
            let mut acc = 0.0;
            for t in 0..m {
                let d = (a[t] - mu_a) / sd_a - (b[t] - mu_b) / sd_b;
                acc += d * d;
            }
            Ok(acc)
        }
        DistanceKind::Raw => {
            let mut acc = 0.0;
            for t in 0..m {
                let d = a[t] - b[t];
                acc += d * d;
            }
            Ok(acc)
        }
    }
}

/// Exhaustive reference implementation: a double loop over all admissible
/// window pairs, evaluating the distance directly per pair.
pub fn mp_brute(series: &ConcatSeries, cfg: &ProfileConfig) -> Result<MatrixProfile, ProfileError> {
    let values = &series.values;
    let n = check_dimensions(values.len(), cfg)?;
    let stats = sliding_stats(values, cfg.m)?;
    let mut best = Candidates::new(n);
    for q in 0..n {
        for j in (q + cfg.exclusion)..n {
            let d = direct_dist_sq(values, &stats, q, j, cfg)?;
            best.offer(q, j, d);
            best.offer(j, q, d);
        }
    }
    Ok(best.into_profile(cfg))
}

/// Correlations this close to 1 sit inside the cancellation noise of the
/// streaming formula; such pairs are re-evaluated directly.
const NEAR_MOTIF_CORR: f64 = 1.0 - 1e-6;

/// Steps between exact re-evaluations of the running dot product along a
/// diagonal, bounding accumulated rounding drift on long series.
const QT_REFRESH_INTERVAL: usize = 2048;

struct FastKernel {
    /// Series values with the global mean subtracted. Both distance kinds
    /// are shift-invariant, and working near zero keeps the running dot
    /// products well-conditioned.
    values: Vec<f64>,
    /// Window statistics of the shifted values.
    stats: WindowStats,
    /// Sum of squares per shifted window, used by the raw kernel.
    sum_sq: Vec<f64>,
    cfg: ProfileConfig,
    n: usize,
}

impl FastKernel {
    fn new(series: &ConcatSeries, cfg: &ProfileConfig) -> Result<Self, ProfileError> {
        let n = check_dimensions(series.values.len(), cfg)?;
        let global_mean = series.values.iter().sum::<f64>() / series.values.len() as f64;
        let values: Vec<f64> = series.values.iter().map(|&v| v - global_mean).collect();
        let stats = sliding_stats(&values, cfg.m)?;
        let m = cfg.m as f64;
        let sum_sq = match cfg.distance {
            DistanceKind::Raw => stats
                .means
                .iter()
                .zip(&stats.stds)
                .map(|(&mu, &sd)| m * (sd * sd + mu * mu))
                .collect(),
            DistanceKind::ZNormalized => Vec::new(),
        };
        if cfg.distance == DistanceKind::ZNormalized
            && cfg.flat == FlatWindowPolicy::Reject
            && stats.stds.iter().any(|&s| s == 0.0)
        {
            return Err(SeriesError::FlatWindow.into());
        }
        Ok(Self {
            values,
            stats,
            sum_sq,
            cfg: *cfg,
            n,
        })
    }

    /// Squared distance for the pair (i, j) given their running dot product.
    /// Near-motif pairs fall back to the direct evaluation: the closed form
    /// loses all significant digits exactly where the distance approaches 0.
    #[inline]
    fn dist_sq(&self, i: usize, j: usize, qt: f64) -> f64 {
        let m = self.cfg.m as f64;
        match self.cfg.distance {
            DistanceKind::ZNormalized => {
                let sd = self.stats.stds[i] * self.stats.stds[j];
                if sd == 0.0 {
                    let both = self.stats.stds[i] == 0.0 && self.stats.stds[j] == 0.0;
                    return if both { 0.0 } else { m };
                }
                let r = (qt - m * self.stats.means[i] * self.stats.means[j]) / (m * sd);
                if r > NEAR_MOTIF_CORR {
                    return direct_dist_sq(&self.values, &self.stats, i, j, &self.cfg)
                        .expect("flat windows already handled");
                }
                (2.0 * m * (1.0 - r)).max(0.0)
            }
            DistanceKind::Raw => {
                let s = self.sum_sq[i] + self.sum_sq[j];
                let d = s - 2.0 * qt;
                if d < 1e-9 * s.max(1.0) {
                    return direct_dist_sq(&self.values, &self.stats, i, j, &self.cfg)
                        .expect("raw distance is total");
                }
                d.max(0.0)
            }
        }
    }

    /// Walks one diagonal (all pairs with j - i = k), updating the running
    /// dot product in O(1) per step.
    fn walk_diagonal(&self, k: usize, best: &mut Candidates) {
        let m = self.cfg.m;
        let v = &self.values;
        let mut qt: f64 = (0..m).map(|t| v[t] * v[k + t]).sum();
        let d = self.dist_sq(0, k, qt);
        best.offer(0, k, d);
        best.offer(k, 0, d);
        for i in 1..self.n - k {
            let j = i + k;
            if i % QT_REFRESH_INTERVAL == 0 {
                qt = (0..m).map(|t| v[i + t] * v[j + t]).sum();
            } else {
                qt += v[i + m - 1] * v[j + m - 1] - v[i - 1] * v[j - 1];
            }
            let d = self.dist_sq(i, j, qt);
            best.offer(i, j, d);
            best.offer(j, i, d);
        }
    }
}

/// Streaming implementation: one multiply-add per (position, diagonal)
/// pair, O(phi) memory. Output matches [`mp_brute`] within 1e-8 per entry.
pub fn mp_fast(series: &ConcatSeries, cfg: &ProfileConfig) -> Result<MatrixProfile, ProfileError> {
    let kernel = FastKernel::new(series, cfg)?;
    let mut best = Candidates::new(kernel.n);
    for k in cfg.exclusion..kernel.n {
        kernel.walk_diagonal(k, &mut best);
    }
    Ok(best.into_profile(cfg))
}

/// Parallel variant of [`mp_fast`]: diagonals are distributed over worker
/// threads and the per-worker candidates merged elementwise. The merge
/// order cannot change the result (the candidate order is total), so the
/// output is bit-identical to the serial implementation.
pub fn mp_fast_par(
    series: &ConcatSeries,
    cfg: &ProfileConfig,
) -> Result<MatrixProfile, ProfileError> {
    let kernel = FastKernel::new(series, cfg)?;
    let n = kernel.n;
    let best = (cfg.exclusion..n)
        .into_par_iter()
        .fold(
            || Candidates::new(n),
            |mut local, k| {
                kernel.walk_diagonal(k, &mut local);
                local
            },
        )
        .reduce(|| Candidates::new(n), Candidates::merge);
    Ok(best.into_profile(cfg))
}

/// Splits a profile at the series' cycle boundaries. Slice `i` covers the
/// profile positions whose window start lies inside cycle `i`; the final
/// m - 1 positions of the series host no window start and are absent by
/// construction.
pub fn partition_profile(
    mp: &MatrixProfile,
    series: &ConcatSeries,
) -> Result<Vec<ProfileSlice>, ProfileError> {
    let expected = series.phi().saturating_sub(mp.m) + 1;
    if mp.len() != expected || mp.m > series.phi() {
        return Err(ProfileError::BoundaryMismatch {
            profile: mp.len(),
            expected,
        });
    }
    let n = mp.len();
    let mut slices = Vec::with_capacity(series.cycle_count());
    for (i, &start) in series.boundaries.iter().enumerate() {
        let end = if i + 1 < series.boundaries.len() {
            series.boundaries[i + 1]
        } else {
            series.phi()
        };
        let start = start.min(n);
        let end = end.min(n);
        slices.push(ProfileSlice {
            cycle_index: series.cycle_indices[i],
            start,
            len: end - start,
        });
    }
    Ok(slices)
}

/// View of one cycle's profile values.
pub fn profile_slice<'a>(mp: &'a MatrixProfile, slice: &ProfileSlice) -> &'a [f64] {
    &mp.distances[slice.start..slice.start + slice.len]
}

/// Locates the discord: the argmax of the first `search_len` entries of a
/// cycle's profile slice, ties broken toward the smallest index. Returns
/// the cycle-local step, the peak value, and the voltage at that step.
pub fn find_discord(
    profile_slice: &[f64],
    cycle: &VoltageCycle,
    search_len: usize,
) -> Result<DiscordResult, ProfileError> {
    if profile_slice.is_empty() || search_len == 0 {
        return Err(ProfileError::EmptySlice);
    }
    if search_len > profile_slice.len() {
        return Err(ProfileError::SearchTooLong {
            search_len,
            slice_len: profile_slice.len(),
        });
    }
    if cycle.len() < profile_slice.len() {
        return Err(ProfileError::CycleTooShort {
            cycle_len: cycle.len(),
            slice_len: profile_slice.len(),
        });
    }
    let mut lambda = 0;
    let mut peak = profile_slice[0];
    for (t, &p) in profile_slice.iter().enumerate().take(search_len).skip(1) {
        if p > peak {
            peak = p;
            lambda = t;
        }
    }
    Ok(DiscordResult {
        lambda,
        profile_peak: peak,
        v_ref: cycle.samples[lambda],
    })
}

/// Fraction of windows of length `m` that may straddle a cycle boundary.
/// The conventional guidance is L1/4 <= m <= L1/2; outside that range the
/// caller may want to warn but not fail.
pub fn window_length_in_guidance(first_cycle_len: usize, m: usize) -> bool {
    let lo = first_cycle_len as f64 / 4.0;
    let hi = first_cycle_len as f64 / 2.0;
    (m as f64) >= lo && (m as f64) <= hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::concat_cycles;

    fn series_from(values: Vec<f64>) -> ConcatSeries {
        ConcatSeries {
            boundaries: vec![0],
            cycle_indices: vec![1],
            values,
        }
    }

    /// Deterministic pseudo-random walk in a narrow band.
    fn random_walk(len: usize, seed: u64) -> Vec<f64> {
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).max(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut v = 3.0f64;
        (0..len)
            .map(|_| {
                v = (v + 0.02 * next()).clamp(2.0, 4.0);
                v
            })
            .collect()
    }

    /// Test-local oracle: z-normalizes every window up front, then scans all
    /// admissible pairs with a plain Euclidean loop.
    fn double_loop_oracle(values: &[f64], m: usize, exclusion: usize) -> Vec<f64> {
        let n = values.len() - m + 1;
        let znorm: Vec<Vec<f64>> = (0..n)
            .map(|q| {
                let w = &values[q..q + m];
                let mean = w.iter().sum::<f64>() / m as f64;
                let var = w.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / m as f64;
                let sd = var.sqrt();
                if sd == 0.0 {
                    vec![0.0; m]
                } else {
                    w.iter().map(|&x| (x - mean) / sd).collect()
                }
            })
            .collect();
        (0..n)
            .map(|q| {
                let mut best = f64::INFINITY;
                for j in 0..n {
                    if q.abs_diff(j) < exclusion {
                        continue;
                    }
                    let d: f64 = znorm[q]
                        .iter()
                        .zip(&znorm[j])
                        .map(|(&a, &b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    if d < best {
                        best = d;
                    }
                }
                best
            })
            .collect()
    }

    #[test]
    fn brute_periodic_series_is_all_motifs() {
        // Exact tiled copies of one random block: every window repeats.
        let block = random_walk(16, 3);
        let mut values = Vec::new();
        for _ in 0..24 {
            values.extend_from_slice(&block);
        }
        let series = series_from(values);
        let cfg = ProfileConfig::new(32);
        let mp = mp_brute(&series, &cfg).unwrap();
        assert!(mp.distances.iter().all(|&d| d <= 1e-9));
    }

    #[test]
    fn brute_matches_independent_double_loop() {
        let values = random_walk(512, 11);
        let series = series_from(values.clone());
        let cfg = ProfileConfig::new(16);
        let mp = mp_brute(&series, &cfg).unwrap();
        let oracle = double_loop_oracle(&values, 16, 8);
        for (q, (&got, &want)) in mp.distances.iter().zip(&oracle).enumerate() {
            assert!((got - want).abs() <= 1e-9, "position {q}: {got} vs {want}");
        }
    }

    #[test]
    fn brute_finds_injected_bump() {
        // Repetitive base signal so ordinary windows have close matches.
        let mut values: Vec<f64> = (0..400)
            .map(|i| 3.0 + 0.3 * (i as f64 * std::f64::consts::TAU / 25.0).sin())
            .collect();
        // Smooth bump of width m somewhere in the middle.
        let m = 24;
        let at = 190;
        for i in 0..m {
            let x = i as f64 / (m - 1) as f64;
            values[at + i] += 0.4 * (std::f64::consts::PI * x).sin().powi(2);
        }
        let series = series_from(values);
        let mp = mp_brute(&series, &ProfileConfig::new(m)).unwrap();
        let argmax = mp
            .distances
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        // Bump support in window starts.
        assert!(
            (at.saturating_sub(m)..at + m).contains(&argmax),
            "argmax {argmax} outside bump support around {at}"
        );
    }

    #[test]
    fn fast_equals_brute_on_random_series() {
        for (seed, m) in [(1u64, 8usize), (2, 16), (3, 64), (4, 16)] {
            let values = random_walk(700 + 37 * seed as usize, seed);
            let series = series_from(values);
            let cfg = ProfileConfig::new(m);
            let brute = mp_brute(&series, &cfg).unwrap();
            let fast = mp_fast(&series, &cfg).unwrap();
            let max_diff = brute
                .distances
                .iter()
                .zip(&fast.distances)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_diff <= 1e-8, "seed {seed} m {m}: max diff {max_diff}");
        }
    }

    #[test]
    fn fast_equals_brute_on_periodic_series() {
        let block = random_walk(16, 9);
        let mut values = Vec::new();
        for _ in 0..24 {
            values.extend_from_slice(&block);
        }
        let series = series_from(values);
        let cfg = ProfileConfig::new(32);
        let brute = mp_brute(&series, &cfg).unwrap();
        let fast = mp_fast(&series, &cfg).unwrap();
        for (q, (&b, &f)) in brute.distances.iter().zip(&fast.distances).enumerate() {
            assert!((b - f).abs() <= 1e-8, "position {q}: {b} vs {f}");
        }
    }

    #[test]
    fn fast_raw_distance_matches_direct_scan() {
        let values = random_walk(300, 21);
        let series = series_from(values.clone());
        let cfg = ProfileConfig::new(12).with_distance(DistanceKind::Raw);
        let fast = mp_fast(&series, &cfg).unwrap();
        let brute = mp_brute(&series, &cfg).unwrap();
        for (q, (&b, &f)) in brute.distances.iter().zip(&fast.distances).enumerate() {
            assert!((b - f).abs() <= 1e-8, "position {q}: {b} vs {f}");
        }
    }

    #[test]
    fn parallel_is_bit_identical_to_serial() {
        let values = random_walk(900, 17);
        let series = series_from(values);
        let cfg = ProfileConfig::new(16);
        let serial = mp_fast(&series, &cfg).unwrap();
        let parallel = mp_fast_par(&series, &cfg).unwrap();
        assert_eq!(serial.distances, parallel.distances);
        assert_eq!(serial.indices, parallel.indices);
    }

    #[test]
    fn single_window_is_degenerate() {
        let values = random_walk(64, 1);
        let series = series_from(values);
        let cfg = ProfileConfig::new(64);
        assert!(matches!(
            mp_fast(&series, &cfg),
            Err(ProfileError::DegenerateSeries { windows: 1, .. })
        ));
    }

    #[test]
    fn exclusion_zone_is_respected() {
        let values = random_walk(600, 13);
        let series = series_from(values);
        let cfg = ProfileConfig::new(16);
        let mp = mp_fast(&series, &cfg).unwrap();
        for (q, &j) in mp.indices.iter().enumerate() {
            assert!(q.abs_diff(j) >= cfg.exclusion, "self-match at {q} -> {j}");
        }
    }

    #[test]
    fn enlarging_exclusion_never_decreases_profile() {
        let values = random_walk(500, 29);
        let series = series_from(values);
        let narrow = mp_fast(&series, &ProfileConfig::new(16)).unwrap();
        let wide = mp_fast(&series, &ProfileConfig::new(16).with_exclusion(32)).unwrap();
        for (q, (&a, &b)) in narrow.distances.iter().zip(&wide.distances).enumerate() {
            assert!(b >= a - 1e-12, "position {q}: widened {b} < {a}");
        }
    }

    #[test]
    fn appending_copy_zeroes_original_profile() {
        let values = random_walk(256, 41);
        let mut doubled = values.clone();
        doubled.extend_from_slice(&values);
        let series = series_from(doubled);
        let cfg = ProfileConfig::new(16);
        let mp = mp_brute(&series, &cfg).unwrap();
        for q in 0..values.len() - 16 + 1 {
            assert!(mp.distances[q] <= 1e-9, "position {q}: {}", mp.distances[q]);
        }
    }

    #[test]
    fn partition_two_cycles() {
        let cycles = vec![
            VoltageCycle::new(1, random_walk(10, 1), 1.0, None).unwrap(),
            VoltageCycle::new(2, random_walk(10, 2), 1.0, None).unwrap(),
        ];
        let series = concat_cycles(&cycles).unwrap();
        let cfg = ProfileConfig::new(4).with_exclusion(2);
        let mp = mp_fast(&series, &cfg).unwrap();
        let slices = partition_profile(&mp, &series).unwrap();
        assert_eq!(slices.len(), 2);
        assert_eq!((slices[0].start, slices[0].len), (0, 10));
        assert_eq!((slices[1].start, slices[1].len), (10, 7));
    }

    #[test]
    fn partition_single_cycle_is_identity() {
        let cycles = vec![VoltageCycle::new(1, random_walk(50, 7), 1.0, None).unwrap()];
        let series = concat_cycles(&cycles).unwrap();
        let cfg = ProfileConfig::new(8);
        let mp = mp_fast(&series, &cfg).unwrap();
        let slices = partition_profile(&mp, &series).unwrap();
        assert_eq!(slices.len(), 1);
        assert_eq!(slices[0].len, mp.len());
    }

    #[test]
    fn partition_lengths_sum_to_profile_length() {
        let cycles: Vec<VoltageCycle> = (1..=100)
            .map(|i| VoltageCycle::new(i, random_walk(20 + i % 7, i as u64), 1.0, None).unwrap())
            .collect();
        let series = concat_cycles(&cycles).unwrap();
        let cfg = ProfileConfig::new(8);
        let mp = mp_fast(&series, &cfg).unwrap();
        let slices = partition_profile(&mp, &series).unwrap();
        let total: usize = slices.iter().map(|s| s.len).sum();
        assert_eq!(total, series.phi() - 8 + 1);
    }

    #[test]
    fn partition_rejects_mismatched_profile() {
        let cycles = vec![VoltageCycle::new(1, random_walk(50, 7), 1.0, None).unwrap()];
        let series = concat_cycles(&cycles).unwrap();
        let mp = mp_fast(&series, &ProfileConfig::new(8)).unwrap();
        let other = concat_cycles(&[VoltageCycle::new(1, random_walk(60, 8), 1.0, None).unwrap()])
            .unwrap();
        assert!(matches!(
            partition_profile(&mp, &other),
            Err(ProfileError::BoundaryMismatch { .. })
        ));
    }

    #[test]
    fn discord_simple_argmax() {
        let cycle = VoltageCycle::new(2, vec![3.3, 3.25, 3.2], 1.0, None).unwrap();
        let result = find_discord(&[0.1, 0.9, 0.3], &cycle, 3).unwrap();
        assert_eq!(result.lambda, 1);
        assert_eq!(result.v_ref, 3.25);
        assert_eq!(result.profile_peak, 0.9);
    }

    #[test]
    fn discord_tie_breaks_to_smallest_index() {
        let cycle = VoltageCycle::new(2, vec![3.3, 3.25, 3.2, 3.1], 1.0, None).unwrap();
        let result = find_discord(&[0.2, 0.9, 0.9, 0.9], &cycle, 4).unwrap();
        assert_eq!(result.lambda, 1);
    }

    #[test]
    fn discord_respects_search_len() {
        let cycle = VoltageCycle::new(2, vec![3.3, 3.25, 3.2, 3.1], 1.0, None).unwrap();
        let result = find_discord(&[0.2, 0.5, 0.9, 1.5], &cycle, 3).unwrap();
        assert_eq!(result.lambda, 2);
    }

    #[test]
    fn discord_empty_slice() {
        let cycle = VoltageCycle::new(2, vec![3.3], 1.0, None).unwrap();
        assert_eq!(
            find_discord(&[], &cycle, 0).unwrap_err(),
            ProfileError::EmptySlice
        );
    }
}
