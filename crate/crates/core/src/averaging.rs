//! Occupancy distribution of the firing rate and the averaged adaptation dynamics.
//!
//! When adaptation is slow compared with the variations of `x(t)`, the gain sees
//! only the time average of `f(x(t))`, i.e. `mu' ~ sum_i P_i f(x_i) - g(mu)` with
//! `P` the fraction of time `x` spends in each bin.

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::laws::AdaptationLaw;
use crate::scalar::Real;

pub const DEFAULT_BINS: usize = 256;
/// Fraction of the run, counted from the end, treated as the periodic regime.
pub const PERIODIC_FRACTION: f64 = 0.25;
/// Allowed per-period drift of the mean gain, relative to `|mu0|`.
pub const DRIFT_GUARD: f64 = 1e-3;

/// Time-weighted histogram over uniform bins.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyHistogram<T> {
    edges: Vec<T>,
    weights: Vec<T>,
    window: (T, T),
}

impl<T: Real> OccupancyHistogram<T> {
    pub fn edges(&self) -> &[T] {
        &self.edges
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn window(&self) -> (T, T) {
        self.window
    }

    pub fn n_bins(&self) -> usize {
        self.weights.len()
    }

    pub fn bin_width(&self) -> T {
        self.edges[1] - self.edges[0]
    }

    pub fn centers(&self) -> Vec<T> {
        self.edges
            .windows(2)
            .map(|e| (e[0] + e[1]) / T::lit(2.0))
            .collect()
    }

    /// `sum_i w_i alpha(center_i)`.
    pub fn functional(&self, alpha: impl Fn(T) -> T) -> T {
        self.centers()
            .into_iter()
            .zip(&self.weights)
            .fold(T::zero(), |s, (c, &w)| s + w * alpha(c))
    }

    pub fn mean(&self) -> T {
        self.functional(|x| x)
    }

    /// Histogram with all mass at the given points, on bins spanning them.
    pub fn from_point_masses(points: &[(T, T)], n_bins: usize) -> Result<Self> {
        if points.is_empty() || n_bins == 0 {
            return Err(Error::Range(
                "need at least one point mass and one bin".into(),
            ));
        }
        let lo = points.iter().map(|p| p.0).fold(T::infinity(), T::min);
        let hi = points.iter().map(|p| p.0).fold(T::neg_infinity(), T::max);
        let (lo, hi) = widen(lo, hi);
        let mut h = Self::empty(lo, hi, n_bins, (T::zero(), T::one()));
        for &(x, w) in points {
            let i = h.bin_of(x);
            h.weights[i] = h.weights[i] + w;
        }
        h.normalize()?;
        Ok(h)
    }

    /// Total-variation distance to a histogram on the same bins.
    pub fn total_variation(&self, other: &Self) -> Result<T> {
        if self.edges != other.edges {
            return Err(Error::Range("histograms use different bins".into()));
        }
        let s = self
            .weights
            .iter()
            .zip(&other.weights)
            .fold(T::zero(), |s, (&a, &b)| s + (a - b).abs());
        Ok(s / T::lit(2.0))
    }

    fn empty(lo: T, hi: T, n_bins: usize, window: (T, T)) -> Self {
        let width = (hi - lo) / T::lit(n_bins as f64);
        let edges = (0..=n_bins)
            .map(|i| {
                if i == n_bins {
                    hi
                } else {
                    lo + width * T::lit(i as f64)
                }
            })
            .collect();
        Self {
            edges,
            weights: vec![T::zero(); n_bins],
            window,
        }
    }

    fn bin_of(&self, x: T) -> usize {
        let n = self.weights.len();
        let i = ((x - self.edges[0]) / self.bin_width()).floor();
        i.to_usize().unwrap_or(0).min(n - 1)
    }

    fn add_segment(&mut self, xa: T, xb: T, duration: T) {
        if duration <= T::zero() {
            return;
        }
        if xa == xb {
            let i = self.bin_of(xa);
            self.weights[i] = self.weights[i] + duration;
            return;
        }
        let (lo, hi) = if xa < xb { (xa, xb) } else { (xb, xa) };
        let (i0, i1) = (self.bin_of(lo), self.bin_of(hi));
        let span = hi - lo;
        for i in i0..=i1 {
            let a = if i == i0 { lo } else { self.edges[i] };
            let b = if i == i1 { hi } else { self.edges[i + 1] };
            if b > a {
                self.weights[i] = self.weights[i] + duration * (b - a) / span;
            }
        }
    }

    fn normalize(&mut self) -> Result<()> {
        let total = self.weights.iter().fold(T::zero(), |s, &w| s + w);
        if !(total > T::zero()) {
            return Err(Error::Range("histogram has no mass".into()));
        }
        for w in &mut self.weights {
            *w = *w / total;
        }
        Ok(())
    }
}

fn widen<T: Real>(lo: T, hi: T) -> (T, T) {
    let scale = lo.abs().max(hi.abs()).max(T::one());
    if hi - lo > scale * T::lit(1e-9) {
        (lo, hi)
    } else {
        let mid = (lo + hi) / T::lit(2.0);
        let h = scale * T::lit(1e-6);
        (mid - h, mid + h)
    }
}

/// Piecewise-linear segments `(t0, t1, v0, v1)` of one column inside `window`.
///
/// A segment ending on a jump uses the event's pre-jump value, so interpolation
/// never bridges a discontinuity.
pub fn segments<T: Real>(
    traj: &Trajectory<T>,
    column: usize,
    window: (T, T),
) -> Result<Vec<(T, T, T, T)>> {
    let (Some(first), Some(last)) = (traj.first_time(), traj.last_time()) else {
        return Err(Error::Range("trajectory is empty".into()));
    };
    let (w0, w1) = window;
    if !(w1 > w0) {
        return Err(Error::Range(format!("empty window [{w0}, {w1}]")));
    }
    if w0 < first || w1 > last {
        return Err(Error::Range(format!(
            "window [{w0}, {w1}] outside trajectory span [{first}, {last}]"
        )));
    }
    let times = traj.times();
    let start = times.partition_point(|&t| t <= w0).saturating_sub(1);
    let mut out = Vec::new();
    for i in start..traj.len() - 1 {
        let (t0, t1) = (times[i], times[i + 1]);
        if t0 >= w1 {
            break;
        }
        let v0 = traj.state(i)[column];
        let v1 = match traj.event_at(t1) {
            Some(e) => e.pre[column],
            None => traj.state(i + 1)[column],
        };
        let lerp = |t: T| v0 + (v1 - v0) * (t - t0) / (t1 - t0);
        let (a, b) = (t0.max(w0), t1.min(w1));
        if b > a {
            let va = if a == t0 { v0 } else { lerp(a) };
            let vb = if b == t1 { v1 } else { lerp(b) };
            out.push((a, b, va, vb));
        }
    }
    Ok(out)
}

/// Time-weighted histogram of column `x` over `window`, bins spanning the
/// window's `[min x, max x]`.
pub fn occupancy<T: Real>(
    traj: &Trajectory<T>,
    window: (T, T),
    n_bins: usize,
) -> Result<OccupancyHistogram<T>> {
    occupancy_impl(traj, window, n_bins, None)
}

/// As [`occupancy`], with an explicit bin range.
pub fn occupancy_in_range<T: Real>(
    traj: &Trajectory<T>,
    window: (T, T),
    n_bins: usize,
    range: (T, T),
) -> Result<OccupancyHistogram<T>> {
    if !(range.1 > range.0) {
        return Err(Error::Range(format!(
            "empty bin range [{}, {}]",
            range.0, range.1
        )));
    }
    occupancy_impl(traj, window, n_bins, Some(range))
}

fn occupancy_impl<T: Real>(
    traj: &Trajectory<T>,
    window: (T, T),
    n_bins: usize,
    range: Option<(T, T)>,
) -> Result<OccupancyHistogram<T>> {
    if n_bins == 0 {
        return Err(Error::Range("n_bins must be >= 1".into()));
    }
    let ix = traj
        .column_index("x")
        .ok_or_else(|| Error::Protocol("trajectory lacks an x column".into()))?;
    let segs = segments(traj, ix, window)?;
    let (lo, hi) = match range {
        Some(r) => r,
        None => {
            let lo = segs
                .iter()
                .map(|s| s.2.min(s.3))
                .fold(T::infinity(), T::min);
            let hi = segs
                .iter()
                .map(|s| s.2.max(s.3))
                .fold(T::neg_infinity(), T::max);
            widen(lo, hi)
        }
    };
    let mut h = OccupancyHistogram::empty(lo, hi, n_bins, window);
    for (t0, t1, va, vb) in segs {
        h.add_segment(va, vb, t1 - t0);
    }
    h.normalize()?;
    Ok(h)
}

fn centers_in_domain<T: Real>(hist: &OccupancyHistogram<T>, law: &AdaptationLaw<T>) -> Result<()> {
    let dom = law.domain_x();
    for (c, &w) in hist.centers().iter().zip(hist.weights()) {
        if w > T::zero() && !dom.contains(*c) {
            return Err(Error::Range(format!("bin center {c} outside {dom}")));
        }
    }
    Ok(())
}

/// `sum_i w_i f(center_i) - g(mu)`.
pub fn averaged_rate<T: Real>(
    hist: &OccupancyHistogram<T>,
    law: &AdaptationLaw<T>,
    mu: T,
) -> Result<T> {
    law.ensure_valid()?;
    centers_in_domain(hist, law)?;
    Ok(hist.functional(|x| law.f(x)) - law.g(mu))
}

/// `sum_i w_i f(center_i) - f(x*)`. Zero predicts `mu -> mu0` under slow adaptation.
pub fn compatibility_residual<T: Real>(
    hist: &OccupancyHistogram<T>,
    law: &AdaptationLaw<T>,
    mu0: T,
) -> Result<T> {
    let fp = law.fixed_point(mu0)?;
    centers_in_domain(hist, law)?;
    Ok(hist.functional(|x| law.f(x)) - law.f(fp.x_star))
}

/// `(1/T) int alpha(v(t)) dt` over `window` for one column, by Simpson's rule
/// on each linear segment.
pub fn time_average<T: Real>(
    traj: &Trajectory<T>,
    column: usize,
    window: (T, T),
    alpha: impl Fn(T) -> T,
) -> Result<T> {
    let segs = segments(traj, column, window)?;
    let mut acc = T::zero();
    for (t0, t1, a, b) in segs {
        let m = (a + b) / T::lit(2.0);
        acc = acc + (t1 - t0) * (alpha(a) + T::lit(4.0) * alpha(m) + alpha(b)) / T::lit(6.0);
    }
    Ok(acc / (window.1 - window.0))
}

/// Statistics of the final stretch of a driven run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicRegime<T> {
    pub window: (T, T),
    pub mean_mu_minus_mu0: T,
    /// `|mean over last period - mean over first period| / (periods - 1)`.
    pub drift_per_period: T,
    pub drift_ok: bool,
}

/// Window covering the final [`PERIODIC_FRACTION`] of the trajectory.
pub fn periodic_window<T: Real>(traj: &Trajectory<T>) -> Result<(T, T)> {
    let (Some(a), Some(b)) = (traj.first_time(), traj.last_time()) else {
        return Err(Error::Range("trajectory is empty".into()));
    };
    Ok((b - (b - a) * T::lit(PERIODIC_FRACTION), b))
}

/// Mean of `mu - mu0` over the periodic-regime window, with the drift guard
/// evaluated on consecutive windows of length `period`.
pub fn periodic_regime<T: Real>(
    traj: &Trajectory<T>,
    mu0: T,
    period: T,
) -> Result<PeriodicRegime<T>> {
    let imu = traj
        .column_index("mu")
        .ok_or_else(|| Error::Protocol("trajectory lacks a mu column".into()))?;
    let window = periodic_window(traj)?;
    let mean = time_average(traj, imu, window, |m| m - mu0)?;
    let n_periods = ((window.1 - window.0) / period)
        .floor()
        .to_usize()
        .unwrap_or(0);
    if n_periods < 2 {
        return Err(Error::Range(format!(
            "periodic window [{}, {}] holds fewer than two periods of {period}",
            window.0, window.1
        )));
    }
    let period_mean = |k: usize| {
        let a = window.0 + period * T::lit(k as f64);
        time_average(traj, imu, (a, a + period), |m| m)
    };
    let first = period_mean(0)?;
    let last = period_mean(n_periods - 1)?;
    let drift = (last - first).abs() / T::lit((n_periods - 1) as f64);
    Ok(PeriodicRegime {
        window,
        mean_mu_minus_mu0: mean,
        drift_per_period: drift,
        drift_ok: drift <= T::lit(DRIFT_GUARD) * mu0.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TimeGrid;
    use crate::integrator::{simulate_driven, IntegratorParams, SaccadeSchedule};
    use crate::laws::AffineLawParams;
    use approx::assert_relative_eq;

    fn reference_law(c: f64) -> AdaptationLaw<f64> {
        AdaptationLaw::affine(AffineLawParams::new(1.0, 0.01, c, 0.01))
    }

    fn traj_x(points: &[(f64, f64)]) -> Trajectory<f64> {
        let mut tr = Trajectory::new(vec!["x".into()]);
        for &(t, x) in points {
            tr.push(t, &[x]).unwrap();
        }
        tr
    }

    fn tuned_saccades(t_end: f64) -> Trajectory<f64> {
        let p = IntegratorParams::new(200.0, 20.0, 200.0).unwrap();
        let law = AdaptationLaw::<f64>::frozen();
        let g = TimeGrid::new(0.0, t_end, 1e-3).unwrap();
        simulate_driven(&p, &law, &SaccadeSchedule::alternating_20_60(), &g, 10)
            .unwrap()
            .trajectory
    }

    #[test]
    fn constant_trajectory_single_bin() {
        let tr = traj_x(&[(0.0, 40.0), (1.0, 40.0), (2.0, 40.0)]);
        let h = occupancy(&tr, (0.0, 2.0), 16).unwrap();
        let nz: Vec<_> = h.weights().iter().filter(|&&w| w > 0.0).collect();
        assert_eq!(nz, vec![&1.0]);
        let i = h.weights().iter().position(|&w| w > 0.0).unwrap();
        assert!(h.edges()[i] <= 40.0 && 40.0 <= h.edges()[i + 1]);
    }

    #[test]
    fn tuned_saccades_split_evenly() {
        let tr = tuned_saccades(10.0);
        let h = occupancy(&tr, (0.0, 10.0), DEFAULT_BINS).unwrap();
        let w = h.weights();
        assert_relative_eq!(w[0], 0.5, max_relative = 1e-12);
        assert_relative_eq!(w[DEFAULT_BINS - 1], 0.5, max_relative = 1e-12);
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn linear_segment_spreads_uniformly() {
        let tr = traj_x(&[(0.0, 0.0), (1.0, 4.0)]);
        let h = occupancy(&tr, (0.0, 1.0), 4).unwrap();
        for &w in h.weights() {
            assert_relative_eq!(w, 0.25, max_relative = 1e-12);
        }
        let half = occupancy_in_range(&tr, (0.0, 0.5), 4, (0.0, 4.0)).unwrap();
        assert_eq!(half.weights()[2..], [0.0, 0.0]);
    }

    #[test]
    fn window_errors() {
        let tr = traj_x(&[(0.0, 1.0), (1.0, 1.0)]);
        assert!(matches!(
            occupancy(&tr, (0.5, 0.5), 4),
            Err(Error::Range(_))
        ));
        assert!(matches!(
            occupancy(&tr, (0.5, 1.5), 4),
            Err(Error::Range(_))
        ));
        assert!(matches!(
            occupancy(&tr, (0.0, 1.0), 0),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn averaged_rate_point_masses() {
        let law = reference_law(42.0);
        let at_fixed = OccupancyHistogram::from_point_masses(&[(40.0, 1.0)], 1).unwrap();
        assert!(averaged_rate(&at_fixed, &law, 200.0).unwrap().abs() < 1e-12);
        let split = OccupancyHistogram::from_point_masses(&[(20.0, 0.5), (60.0, 0.5)], 2).unwrap();
        assert_eq!(split.centers(), vec![30.0, 50.0]);
    }

    #[test]
    fn averaged_rate_on_tuned_occupancy() {
        let h = occupancy(&tuned_saccades(10.0), (0.0, 10.0), DEFAULT_BINS).unwrap();
        // bin-centre offsets are symmetric at the two levels
        let r = averaged_rate(&h, &reference_law(42.0), 200.0).unwrap();
        assert!(r.abs() < 1e-12, "{r}");
        let r = averaged_rate(&h, &reference_law(43.0), 200.0).unwrap();
        assert_relative_eq!(r, 0.01, max_relative = 1e-9);
    }

    #[test]
    fn compatibility_residuals() {
        let h = occupancy(&tuned_saccades(10.0), (0.0, 10.0), DEFAULT_BINS).unwrap();
        assert!(
            compatibility_residual(&h, &reference_law(42.0), 200.0)
                .unwrap()
                .abs()
                < 1e-12
        );
        let at60 = OccupancyHistogram::from_point_masses(&[(60.0, 1.0)], 1).unwrap();
        assert_relative_eq!(
            compatibility_residual(&at60, &reference_law(42.0), 200.0).unwrap(),
            -0.2,
            max_relative = 1e-9
        );
        let at_star = OccupancyHistogram::from_point_masses(&[(40.0, 1.0)], 1).unwrap();
        assert!(
            compatibility_residual(&at_star, &reference_law(42.0), 200.0)
                .unwrap()
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn bin_centers_outside_domain_rejected() {
        let h = OccupancyHistogram::from_point_masses(&[(5000.0, 1.0)], 1).unwrap();
        assert!(matches!(
            averaged_rate(&h, &reference_law(42.0), 200.0),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn segments_do_not_bridge_jumps() {
        let tr = tuned_saccades(4.0);
        let segs = segments(&tr, 0, (0.0, 4.0)).unwrap();
        assert!(segs.iter().all(|s| s.2 == s.3));
        let avg = time_average(&tr, 0, (0.0, 4.0), |x| x).unwrap();
        assert_relative_eq!(avg, 40.0, max_relative = 1e-12);
    }

    #[test]
    fn stationarity_of_tuned_run() {
        let tr = tuned_saccades(40.0);
        let a = occupancy_in_range(&tr, (20.0, 30.0), 64, (19.0, 61.0)).unwrap();
        let b = occupancy_in_range(&tr, (30.0, 40.0), 64, (19.0, 61.0)).unwrap();
        assert!(a.total_variation(&b).unwrap() <= 0.01);
    }
}
