//! Attractor measures: largest Lyapunov exponent (Rosenstein), correlation
//! dimension (Grassberger–Procaccia) and bounding-cuboid volume.
//!
//! All estimators work on the full state vectors without delay embedding
//! and are deterministic: subsampling is strided, never random.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("no scaling region: {0}")]
    DegenerateScaling(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{measure}: {source}")]
    Labeled { measure: &'static str, source: Box<MeasureError> },
}

/// Settings of the Rosenstein estimator, in samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LyapunovConfig {
    /// Minimum temporal separation of neighbor pairs. `None` uses the mean
    /// spacing of maxima of the first coordinate (one orbital period).
    pub theiler_window: Option<usize>,
    pub follow_steps: usize,
    /// Start of the fit window. The first ~20 steps carry a transient
    /// while neighbor separations rotate into the unstable direction.
    pub fit_lo: usize,
    pub fit_hi: usize,
    /// Number of reference points.
    pub max_points: usize,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig { theiler_window: None, follow_steps: 150, fit_lo: 20, fit_hi: 100, max_points: 2000 }
    }
}

impl LyapunovConfig {
    pub fn validate(&self) -> Result<(), MeasureError> {
        if self.fit_lo >= self.fit_hi || self.fit_hi > self.follow_steps {
            return Err(MeasureError::Config(format!(
                "need fit_lo < fit_hi <= follow_steps, got {} / {} / {}",
                self.fit_lo, self.fit_hi, self.follow_steps
            )));
        }
        if self.max_points == 0 {
            return Err(MeasureError::Config("max_points must be positive".into()));
        }
        Ok(())
    }
}

/// Settings of the correlation-dimension estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrDimConfig {
    pub n_radii: usize,
    /// Quantile of the pairwise-distance distribution at the smallest radius.
    pub radius_lo_q: f64,
    /// Quantile at the largest radius.
    pub radius_hi_q: f64,
    /// Points kept after strided subsampling.
    pub max_points: usize,
}

impl Default for CorrDimConfig {
    fn default() -> Self {
        CorrDimConfig { n_radii: 24, radius_lo_q: 0.005, radius_hi_q: 0.05, max_points: 4000 }
    }
}

impl CorrDimConfig {
    pub fn validate(&self) -> Result<(), MeasureError> {
        if !(0.0 < self.radius_lo_q && self.radius_lo_q < self.radius_hi_q && self.radius_hi_q < 1.0) {
            return Err(MeasureError::Config(format!(
                "need 0 < radius_lo_q < radius_hi_q < 1, got {} / {}",
                self.radius_lo_q, self.radius_hi_q
            )));
        }
        if self.n_radii < 2 || self.max_points < 2 {
            return Err(MeasureError::Config("need n_radii >= 2 and max_points >= 2".into()));
        }
        Ok(())
    }
}

/// The three numbers that characterize one attractor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureResult {
    /// Per unit model time.
    pub lambda_max: f64,
    pub corr_dim: f64,
    pub volume: f64,
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Least-squares slope of `y` against `x`.
pub(crate) fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Mean number of samples between successive local maxima of the first
/// coordinate, or `None` with fewer than two maxima.
pub fn mean_period(traj: &Trajectory) -> Option<f64> {
    let x: Vec<f64> = traj.samples().map(|s| s[0]).collect();
    let maxima: Vec<usize> = (1..x.len().saturating_sub(1)).filter(|&k| x[k - 1] < x[k] && x[k] >= x[k + 1]).collect();
    match (maxima.first(), maxima.last()) {
        (Some(&a), Some(&b)) if maxima.len() >= 2 => Some((b - a) as f64 / (maxima.len() - 1) as f64),
        _ => None,
    }
}

fn is_degenerate(traj: &Trajectory) -> bool {
    let first = traj.sample(0);
    traj.samples().all(|s| s == first)
}

/// Nearest-neighbor search over candidate indices sorted by the first
/// coordinate; the projection bound prunes the scan exactly.
struct NeighborIndex<'a> {
    traj: &'a Trajectory,
    order: Vec<usize>,
    keys: Vec<f64>,
}

impl<'a> NeighborIndex<'a> {
    fn new(traj: &'a Trajectory, n_candidates: usize) -> Self {
        let mut order: Vec<usize> = (0..n_candidates).collect();
        order.sort_by(|&a, &b| traj.sample(a)[0].total_cmp(&traj.sample(b)[0]).then(a.cmp(&b)));
        let keys = order.iter().map(|&i| traj.sample(i)[0]).collect();
        NeighborIndex { traj, order, keys }
    }

    /// Closest candidate `j` to sample `i` with `|i − j| > theiler` and
    /// nonzero distance. Ties go to the smaller index.
    fn nearest(&self, i: usize, theiler: usize) -> Option<usize> {
        let p = self.traj.sample(i);
        let start = self.keys.partition_point(|&k| k < p[0]);
        let mut best: Option<(f64, usize)> = None;
        let consider = |j: usize, best: &mut Option<(f64, usize)>| {
            if i.abs_diff(j) <= theiler {
                return;
            }
            let d = dist2(p, self.traj.sample(j));
            if d > 0.0 && best.is_none_or(|(bd, bj)| d < bd || (d == bd && j < bj)) {
                *best = Some((d, j));
            }
        };
        let (mut lo, mut hi) = (start, start);
        loop {
            let bound = best.map_or(f64::INFINITY, |(d, _)| d);
            let left_ok = lo > 0 && (p[0] - self.keys[lo - 1]).powi(2) <= bound;
            let right_ok = hi < self.keys.len() && (self.keys[hi] - p[0]).powi(2) <= bound;
            if !left_ok && !right_ok {
                break;
            }
            if left_ok {
                lo -= 1;
                consider(self.order[lo], &mut best);
            }
            if right_ok {
                consider(self.order[hi], &mut best);
                hi += 1;
            }
        }
        best.map(|(_, j)| j)
    }
}

/// Mean log-divergence curve `⟨ln d(k)⟩`, `k = 0..=follow_steps`.
pub fn divergence_curve(traj: &Trajectory, cfg: &LyapunovConfig) -> Result<Vec<f64>, MeasureError> {
    cfg.validate()?;
    if is_degenerate(traj) {
        return Err(MeasureError::DegenerateInput("all samples are identical".into()));
    }
    let n = traj.len();
    if n <= cfg.follow_steps + 2 {
        return Err(MeasureError::InsufficientData(format!(
            "{n} samples cannot be followed for {} steps",
            cfg.follow_steps
        )));
    }
    let theiler = match cfg.theiler_window {
        Some(w) => w,
        None => mean_period(traj).map_or(10, |p| p.round().max(1.0) as usize),
    };
    let m = n - cfg.follow_steps;
    let index = NeighborIndex::new(traj, m);
    let n_refs = cfg.max_points.min(m);
    let mut sums = vec![0.0; cfg.follow_steps + 1];
    let mut counts = vec![0usize; cfg.follow_steps + 1];
    for r in 0..n_refs {
        let i = r * m / n_refs;
        let Some(j) = index.nearest(i, theiler) else { continue };
        for k in 0..=cfg.follow_steps {
            let d = dist2(traj.sample(i + k), traj.sample(j + k)).sqrt();
            if d > 0.0 {
                sums[k] += d.ln();
                counts[k] += 1;
            }
        }
    }
    if counts.contains(&0) {
        return Err(MeasureError::InsufficientData(format!(
            "no admissible neighbors outside a Theiler window of {theiler} samples"
        )));
    }
    Ok(sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect())
}

/// Largest Lyapunov exponent per unit time by the Rosenstein method.
pub fn largest_lyapunov(traj: &Trajectory, cfg: &LyapunovConfig) -> Result<f64, MeasureError> {
    let curve = divergence_curve(traj, cfg)?;
    let xs: Vec<f64> = (cfg.fit_lo..=cfg.fit_hi).map(|k| k as f64).collect();
    Ok(slope(&xs, &curve[cfg.fit_lo..=cfg.fit_hi]) / traj.dt())
}

/// Fraction of ordered pairs `(i, j)`, `i ≠ j`, closer than `r`.
pub fn correlation_integral<P: AsRef<[f64]>>(points: &[P], r: f64) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut close = 0u64;
    for i in 0..n {
        let a = points[i].as_ref();
        for b in &points[i + 1..] {
            if dist2(a, b.as_ref()).sqrt() < r {
                close += 1;
            }
        }
    }
    2.0 * close as f64 / (n as f64 * (n as f64 - 1.0))
}

fn strided(traj: &Trajectory, max_points: usize) -> Vec<&[f64]> {
    let stride = traj.len().div_ceil(max_points).max(1);
    traj.samples().step_by(stride).collect()
}

fn quantile(values: &mut [f64], q: f64) -> f64 {
    let k = ((values.len() - 1) as f64 * q).round() as usize;
    *values.select_nth_unstable_by(k, f64::total_cmp).1
}

/// Radii and `C(r)` values used by [`correlation_dimension`].
pub fn correlation_sum_curve(traj: &Trajectory, cfg: &CorrDimConfig) -> Result<(Vec<f64>, Vec<f64>), MeasureError> {
    cfg.validate()?;
    let points = strided(traj, cfg.max_points);
    let n = points.len();
    if n < 50 {
        return Err(MeasureError::InsufficientData(format!("{n} points after subsampling; need 50")));
    }

    // Quantiles come from all pairs of a further-thinned set of points.
    let q_points: Vec<&[f64]> = points.iter().step_by(n.div_ceil(1000)).copied().collect();
    let mut pair_d: Vec<f64> = Vec::with_capacity(q_points.len() * q_points.len() / 2);
    for (i, a) in q_points.iter().enumerate() {
        for b in &q_points[i + 1..] {
            pair_d.push(dist2(a, b).sqrt());
        }
    }
    let r_lo = quantile(&mut pair_d, cfg.radius_lo_q);
    let r_hi = quantile(&mut pair_d, cfg.radius_hi_q);
    if !(r_lo > 0.0 && r_hi > r_lo) {
        return Err(MeasureError::DegenerateScaling(format!(
            "distance quantiles {r_lo} and {r_hi} do not span a range"
        )));
    }
    let ratio = r_hi / r_lo;
    let last = (cfg.n_radii - 1) as f64;
    let radii: Vec<f64> = (0..cfg.n_radii).map(|i| r_lo * ratio.powf(i as f64 / last)).collect();

    // bins[b]: pairs with radii[b-1] <= d < radii[b]; the first bin is d < radii[0].
    let mut bins = vec![0u64; cfg.n_radii];
    let r_max = radii[cfg.n_radii - 1];
    for i in 0..n {
        let a = points[i];
        for b in &points[i + 1..] {
            let d = dist2(a, b).sqrt();
            if d < r_max {
                bins[radii.partition_point(|&r| r <= d)] += 1;
            }
        }
    }
    let total = (n as f64) * (n as f64 - 1.0) / 2.0;
    let mut acc = 0u64;
    let c: Vec<f64> = bins
        .iter()
        .map(|b| {
            acc += b;
            acc as f64 / total
        })
        .collect();
    Ok((radii, c))
}

/// Slope of `log C(r)` against `log r` over the configured radius range.
pub fn correlation_dimension(traj: &Trajectory, cfg: &CorrDimConfig) -> Result<f64, MeasureError> {
    let (radii, c) = correlation_sum_curve(traj, cfg)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        radii.iter().zip(&c).filter(|(_, &c)| c > 0.0 && c < 1.0).map(|(r, c)| (r.ln(), c.ln())).unzip();
    if xs.len() < 2 {
        return Err(MeasureError::DegenerateScaling(format!("only {} radii with 0 < C(r) < 1", xs.len())));
    }
    Ok(slope(&xs, &ys).max(0.0))
}

/// Product over coordinates of `max − min`.
pub fn bounding_volume(traj: &Trajectory) -> f64 {
    (0..traj.dim())
        .map(|k| {
            let (lo, hi) =
                traj.samples().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s[k]), hi.max(s[k])));
            hi - lo
        })
        .product()
}

/// All three measures of one trajectory.
pub fn measure_attractor(
    traj: &Trajectory,
    lcfg: &LyapunovConfig,
    ccfg: &CorrDimConfig,
) -> Result<MeasureResult, MeasureError> {
    let label = |measure| move |e| MeasureError::Labeled { measure, source: Box::new(e) };
    Ok(MeasureResult {
        lambda_max: largest_lyapunov(traj, lcfg).map_err(label("largest Lyapunov exponent"))?,
        corr_dim: correlation_dimension(traj, ccfg).map_err(label("correlation dimension"))?,
        volume: bounding_volume(traj),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(points: &[[f64; 3]]) -> Trajectory {
        Trajectory::from_flat(1.0, 0.0, 3, points.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn correlation_integral_hand_counts() {
        let pts = [[0.0], [1.0], [2.0]];
        assert!((correlation_integral(&pts, 1.5) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(correlation_integral(&pts, 0.0), 0.0);
        assert_eq!(correlation_integral(&pts, 2.5), 1.0);
    }

    #[test]
    fn bounding_volume_cases() {
        assert_eq!(bounding_volume(&traj(&[[1.0, 2.0, 3.0]])), 0.0);
        assert_eq!(bounding_volume(&traj(&[[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]])), 6.0);
    }

    #[test]
    fn constant_trajectory_is_degenerate() {
        let t = traj(&[[1.0, 1.0, 1.0]; 400]);
        assert!(matches!(largest_lyapunov(&t, &LyapunovConfig::default()), Err(MeasureError::DegenerateInput(_))));
    }

    #[test]
    fn short_trajectory_is_insufficient() {
        let pts: Vec<[f64; 3]> = (0..100).map(|k| [k as f64, 0.0, 0.0]).collect();
        assert!(matches!(
            largest_lyapunov(&traj(&pts), &LyapunovConfig::default()),
            Err(MeasureError::InsufficientData(_))
        ));
    }

    #[test]
    fn bad_configs_are_rejected() {
        let l = LyapunovConfig { fit_lo: 10, fit_hi: 5, ..Default::default() };
        assert!(l.validate().is_err());
        let c = CorrDimConfig { radius_lo_q: 0.5, radius_hi_q: 0.1, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn mean_period_of_sampled_sine() {
        let pts: Vec<[f64; 3]> = (0..1000).map(|k| [(k as f64 * 0.1).sin(), 0.0, 0.0]).collect();
        let p = mean_period(&traj(&pts)).unwrap();
        assert!((p - 62.83).abs() < 1.0, "{p}");
    }

    #[test]
    fn neighbor_search_matches_brute_force() {
        let pts: Vec<[f64; 3]> = (0..600)
            .map(|k| {
                let t = k as f64 * 0.37;
                [t.sin() * 3.0, (1.7 * t).cos(), (0.3 * t).sin()]
            })
            .collect();
        let t = traj(&pts);
        let idx = NeighborIndex::new(&t, 500);
        for i in (0..600usize).step_by(37) {
            let brute = (0..500)
                .filter(|&j| i.abs_diff(j) > 7)
                .map(|j| (dist2(t.sample(i), t.sample(j)), j))
                .filter(|(d, _)| *d > 0.0)
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|(_, j)| j);
            assert_eq!(idx.nearest(i, 7), brute, "reference {i}");
        }
    }

    #[test]
    fn points_without_scaling_range_are_degenerate() {
        // Two clusters of identical points: every quantile is 0 or the gap.
        let mut pts = vec![[0.0, 0.0, 0.0]; 200];
        pts.extend(vec![[1.0, 0.0, 0.0]; 200]);
        assert!(matches!(
            correlation_dimension(&traj(&pts), &CorrDimConfig::default()),
            Err(MeasureError::DegenerateScaling(_))
        ));
    }
}
