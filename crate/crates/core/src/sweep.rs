//! Robustness sweeps over the parameters of an affine adaptation law.
//!
//! Each grid point scales one of `a`, `b`, `c` or `mu0` by a multiplier, runs
//! the saccade-driven integrator into its periodic regime and records the mean
//! of `mu - mu0` there. Grid points run in parallel; rows come back in grid
//! order.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::averaging::{
    occupancy, periodic_regime, periodic_window, OccupancyHistogram, PeriodicRegime,
};
use crate::dynamics::TimeGrid;
use crate::error::{Error, Result};
use crate::integrator::{
    recommended_dt, simulate_driven, IntegratorParams, SaccadeSchedule, SimulationRun,
};
use crate::laws::{AdaptationLaw, AffineLawParams};

/// Tuning accuracy of a biological integrator, `|mu - mu0| <= 0.1 1/s`.
pub const TUNING_TOLERANCE: f64 = 0.1;
/// Relative tolerance on the nominal compatibility identity.
pub const COMPATIBILITY_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweptParam {
    A,
    B,
    C,
    Mu0,
}

impl SweptParam {
    pub const LAW: [SweptParam; 3] = [SweptParam::A, SweptParam::B, SweptParam::C];

    pub fn name(self) -> &'static str {
        match self {
            SweptParam::A => "a",
            SweptParam::B => "b",
            SweptParam::C => "c",
            SweptParam::Mu0 => "mu0",
        }
    }
}

impl fmt::Display for SweptParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweptParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "a" => Ok(SweptParam::A),
            "b" => Ok(SweptParam::B),
            "c" => Ok(SweptParam::C),
            "mu0" => Ok(SweptParam::Mu0),
            other => Err(Error::Config(format!(
                "unknown sweep parameter {other:?} (expected a, b, c or mu0)"
            ))),
        }
    }
}

/// Saccade-driven integrator with an affine law.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivenConfig {
    pub integrator: IntegratorParams<f64>,
    pub law: AffineLawParams<f64>,
    pub schedule: SaccadeSchedule<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub record_stride: usize,
}

impl DrivenConfig {
    /// Saccade-driven reference run: `mu0 = 200`, `a = 1`, `b = 0.01`, `c = 42`, `eps = 0.01`,
    /// mis-tuned by `-2 1/s`.
    pub fn neural_integrator_default() -> Self {
        let mu0 = 200.0;
        Self::with_stride_for_dt(
            IntegratorParams {
                mu0,
                x_init: 20.0,
                mu_init: mu0 - 2.0,
            },
            AffineLawParams::new(1.0, 0.01, 42.0, 0.01),
            400.0,
        )
    }

    /// Robustness panel with slow adaptation (prefactor `0.001`), `1/mu0 = 100 ms`.
    pub fn slow_decay_panel() -> Self {
        Self::with_stride_for_dt(
            IntegratorParams {
                mu0: 10.0,
                x_init: 20.0,
                mu_init: 8.0,
            },
            AffineLawParams::new(1.0, 0.01, 40.1, 0.001),
            3000.0,
        )
    }

    /// Robustness panel with slow adaptation (prefactor `0.001`), `1/mu0 = 5 ms`.
    pub fn fast_decay_panel() -> Self {
        Self::with_stride_for_dt(
            IntegratorParams {
                mu0: 200.0,
                x_init: 20.0,
                mu_init: 198.0,
            },
            AffineLawParams::new(1.0, 0.01, 42.0, 0.001),
            3000.0,
        )
    }

    fn with_stride_for_dt(
        integrator: IntegratorParams<f64>,
        law: AffineLawParams<f64>,
        t_end: f64,
    ) -> Self {
        let dt = recommended_dt(integrator.mu0);
        Self {
            integrator,
            law,
            schedule: SaccadeSchedule::alternating_20_60(),
            t_end,
            dt,
            record_stride: default_stride(dt),
        }
    }

    pub fn adaptation_law(&self) -> AdaptationLaw<f64> {
        AdaptationLaw::affine(self.law)
    }

    /// `(c - a * mean_level - b * mu0) / c`.
    pub fn relative_compatibility_residual(&self) -> f64 {
        let p = &self.law;
        (p.c - p.a * self.schedule.mean_level() - p.b * self.integrator.mu0) / p.c
    }

    pub fn value(&self, param: SweptParam) -> f64 {
        match param {
            SweptParam::A => self.law.a,
            SweptParam::B => self.law.b,
            SweptParam::C => self.law.c,
            SweptParam::Mu0 => self.integrator.mu0,
        }
    }

    /// Copy with one parameter scaled. Scaling `mu0` keeps the initial
    /// mis-tuning `mu_init - mu0` and tightens `dt` if needed.
    pub fn perturbed(&self, param: SweptParam, multiplier: f64) -> Self {
        let mut out = self.clone();
        match param {
            SweptParam::A => out.law.a *= multiplier,
            SweptParam::B => out.law.b *= multiplier,
            SweptParam::C => out.law.c *= multiplier,
            SweptParam::Mu0 => {
                let offset = self.integrator.mu_init - self.integrator.mu0;
                out.integrator.mu0 *= multiplier;
                out.integrator.mu_init = out.integrator.mu0 + offset;
                let dt = self.dt.min(recommended_dt(out.integrator.mu0));
                if dt < self.dt {
                    out.record_stride =
                        ((self.record_stride as f64 * self.dt / dt).round() as usize).max(1);
                    out.dt = dt;
                }
            }
        }
        out
    }

    pub fn grid(&self) -> Result<TimeGrid<f64>> {
        TimeGrid::new(0.0, self.t_end, self.dt)
    }

    pub fn simulate(&self) -> Result<SimulationRun<f64>> {
        simulate_driven(
            &self.integrator,
            &self.adaptation_law(),
            &self.schedule,
            &self.grid()?,
            self.record_stride,
        )
    }

    /// Periodic-regime statistics, with the drift guard measured per saccade cycle.
    pub fn periodic_regime(&self) -> Result<PeriodicRegime<f64>> {
        let run = self.simulate()?;
        periodic_regime(&run.trajectory, self.integrator.mu0, self.schedule.cycle())
    }

    /// Occupancy of `x` over the periodic-regime window.
    pub fn occupancy(&self, n_bins: usize) -> Result<OccupancyHistogram<f64>> {
        let run = self.simulate()?;
        occupancy(&run.trajectory, periodic_window(&run.trajectory)?, n_bins)
    }
}

/// Stride that records roughly every 10 ms.
pub fn default_stride(dt: f64) -> usize {
    ((0.01 / dt).round() as usize).max(1)
}

/// `n` multipliers log-uniform on `[lo, hi]`, with `1` inserted if absent.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut out: Vec<f64> = match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
            .map(|m| if (m - 1.0).abs() < 1e-12 { 1.0 } else { m })
            .collect(),
    };
    if !out.contains(&1.0) {
        out.push(1.0);
        out.sort_by(f64::total_cmp);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: DrivenConfig,
    pub params: Vec<SweptParam>,
    pub multipliers: Vec<f64>,
    pub replicates: usize,
}

impl SweepSpec {
    /// Default grid: 21 points log-uniform in `[0.8, 1.25]` over `a`, `b`, `c`.
    pub fn new(base: DrivenConfig) -> Self {
        Self {
            base,
            params: SweptParam::LAW.to_vec(),
            multipliers: log_grid(0.8, 1.25, 21),
            replicates: 1,
        }
    }

    fn check(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(Error::Config("no sweep parameters".into()));
        }
        if self
            .multipliers
            .iter()
            .any(|m| !(m.is_finite() && *m > 0.0))
        {
            return Err(Error::Config("multipliers must be finite and > 0".into()));
        }
        if !self.multipliers.contains(&1.0) {
            return Err(Error::Config("multiplier grid must contain 1".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        let r = self.base.relative_compatibility_residual();
        if r.abs() > COMPATIBILITY_RTOL {
            return Err(Error::Incompatible(format!(
                "nominal parameters violate a * mean_level + b * mu0 = c (relative residual {r:e})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowFlag {
    Clean,
    /// Drift guard failed; the value is the per-period drift of the mean gain.
    Drift(f64),
    Failed(String),
    /// Replicates disagreed.
    Nondeterministic,
}

impl RowFlag {
    pub fn is_clean(&self) -> bool {
        matches!(self, RowFlag::Clean)
    }
}

impl fmt::Display for RowFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowFlag::Clean => f.write_str("ok"),
            RowFlag::Drift(_) => f.write_str("drift"),
            RowFlag::Failed(_) => f.write_str("failed"),
            RowFlag::Nondeterministic => f.write_str("nondeterministic"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: SweptParam,
    pub multiplier: f64,
    pub value: f64,
    /// NaN when the run failed.
    pub mean_mu_minus_mu0: f64,
    pub flag: RowFlag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub mu0: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn rows_for(&self, param: SweptParam) -> impl Iterator<Item = &SweepRow> + '_ {
        self.rows.iter().filter(move |r| r.param == param)
    }

    pub fn params(&self) -> Vec<SweptParam> {
        let mut out: Vec<SweptParam> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.param) {
                out.push(r.param);
            }
        }
        out
    }
}

fn run_point(base: &DrivenConfig, param: SweptParam, m: f64, replicates: usize) -> SweepRow {
    let cfg = base.perturbed(param, m);
    let value = cfg.value(param);
    let first = cfg.periodic_regime();
    let mut flag = match &first {
        Ok(pr) if pr.drift_ok => RowFlag::Clean,
        Ok(pr) => RowFlag::Drift(pr.drift_per_period),
        Err(e) => RowFlag::Failed(e.to_string()),
    };
    for _ in 1..replicates {
        if cfg.periodic_regime() != first {
            flag = RowFlag::Nondeterministic;
        }
    }
    SweepRow {
        param,
        multiplier: m,
        value,
        mean_mu_minus_mu0: first.map(|p| p.mean_mu_minus_mu0).unwrap_or(f64::NAN),
        flag,
    }
}

/// Runs every `(param, multiplier)` job on the current rayon pool.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.check()?;
    let jobs: Vec<(SweptParam, f64)> = spec
        .params
        .iter()
        .flat_map(|&p| spec.multipliers.iter().map(move |&m| (p, m)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(p, m)| run_point(&spec.base, p, m, spec.replicates))
        .collect();
    Ok(SweepResult {
        mu0: spec.base.integrator.mu0,
        rows,
    })
}

/// As [`run_sweep`] on a dedicated pool of `threads` workers.
pub fn run_sweep_with_threads(spec: &SweepSpec, threads: usize) -> Result<SweepResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_sweep(spec))
}

/// Tolerable relative perturbation of one law parameter and the resulting
/// robustness gain over tuning `mu` directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Robustness {
    pub param: SweptParam,
    /// `|multiplier - 1|` at which `|mean(mu - mu0)|` first reaches the tuning tolerance.
    pub tolerable: f64,
    /// `tolerable / (0.1 / mu0)`.
    pub factor: f64,
}

fn crossing(path: &[(f64, f64)]) -> Option<f64> {
    // path starts at multiplier 1 and walks outward
    path.windows(2).find_map(|w| {
        let ((m0, v0), (m1, v1)) = (w[0], w[1]);
        let (a0, a1) = (v0.abs(), v1.abs());
        (a0 <= TUNING_TOLERANCE && a1 > TUNING_TOLERANCE)
            .then(|| m0 + (m1 - m0) * (TUNING_TOLERANCE - a0) / (a1 - a0))
    })
}

/// Interpolates the `|mean(mu - mu0)| = 0.1` contour on both sides of the
/// nominal point and keeps the nearer one.
pub fn robustness_factor(result: &SweepResult, param: SweptParam, mu0: f64) -> Result<Robustness> {
    let mut pts: Vec<(f64, f64)> = result
        .rows_for(param)
        .filter(|r| r.flag.is_clean() && r.mean_mu_minus_mu0.is_finite())
        .map(|r| (r.multiplier, r.mean_mu_minus_mu0))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let Some(one) = pts.iter().position(|p| p.0 == 1.0) else {
        return Err(Error::InsufficientRange(format!(
            "{param}: no clean nominal row"
        )));
    };
    let up = crossing(&pts[one..]);
    let down: Vec<_> = pts[..=one].iter().rev().copied().collect();
    let down = crossing(&down);
    let tolerable = [up, down]
        .into_iter()
        .flatten()
        .map(|m| (m - 1.0).abs())
        .fold(f64::INFINITY, f64::min);
    if !tolerable.is_finite() {
        return Err(Error::InsufficientRange(format!(
            "{param}: |mean(mu - mu0)| never reaches {TUNING_TOLERANCE} on the grid"
        )));
    }
    Ok(Robustness {
        param,
        tolerable,
        factor: tolerable / (TUNING_TOLERANCE / mu0),
    })
}

/// Robustness of the most sensitive swept parameter that brackets the contour.
pub fn panel_robustness(result: &SweepResult) -> Result<Robustness> {
    result
        .params()
        .into_iter()
        .filter_map(|p| robustness_factor(result, p, result.mu0).ok())
        .min_by(|a, b| a.tolerable.total_cmp(&b.tolerable))
        .ok_or_else(|| {
            Error::InsufficientRange("no swept parameter brackets the tolerance contour".into())
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(points: &[(f64, f64)]) -> SweepResult {
        SweepResult {
            mu0: 10.0,
            rows: points
                .iter()
                .map(|&(m, v)| SweepRow {
                    param: SweptParam::C,
                    multiplier: m,
                    value: m,
                    mean_mu_minus_mu0: v,
                    flag: RowFlag::Clean,
                })
                .collect(),
        }
    }

    #[test]
    fn log_grid_contains_identity() {
        let g = log_grid(0.8, 1.25, 21);
        assert_eq!(g.len(), 21);
        assert_eq!(g[10], 1.0);
        assert!((g[0] - 0.8).abs() < 1e-15 && (g[20] - 1.25).abs() < 1e-12);
        let g = log_grid(0.9, 1.2, 4);
        assert_eq!(g.len(), 5);
        assert!(g.contains(&1.0));
    }

    #[test]
    fn params_parse() {
        assert_eq!("mu0".parse::<SweptParam>().unwrap(), SweptParam::Mu0);
        assert!("d".parse::<SweptParam>().is_err());
    }

    #[test]
    fn nominal_panels_are_compatible() {
        for cfg in [
            DrivenConfig::neural_integrator_default(),
            DrivenConfig::slow_decay_panel(),
            DrivenConfig::fast_decay_panel(),
        ] {
            assert!(cfg.relative_compatibility_residual().abs() <= COMPATIBILITY_RTOL);
        }
    }

    #[test]
    fn incompatible_nominal_rejected() {
        let mut base = DrivenConfig::slow_decay_panel();
        base.law.c = 41.0;
        let err = run_sweep(&SweepSpec::new(base)).unwrap_err();
        assert!(matches!(err, Error::Incompatible(_)));
    }

    #[test]
    fn mu0_perturbation_keeps_offset_and_tightens_dt() {
        let base = DrivenConfig::fast_decay_panel();
        let p = base.perturbed(SweptParam::Mu0, 1.25);
        assert_eq!(p.integrator.mu0, 250.0);
        assert_eq!(p.integrator.mu_init, 248.0);
        assert_eq!(p.dt, 4e-5);
        assert_eq!(p.record_stride, 250);
    }

    #[test]
    fn robustness_of_exact_tolerance_is_one() {
        // tolerable perturbation equal to 0.1 / mu0 = 0.01
        let r = synthetic(&[
            (0.98, -0.2),
            (0.99, -0.1),
            (1.0, 0.0),
            (1.01, 0.1),
            (1.02, 0.2),
        ]);
        let rob = robustness_factor(&r, SweptParam::C, 10.0).unwrap();
        assert!((rob.tolerable - 0.01).abs() < 1e-12);
        assert!((rob.factor - 1.0).abs() < 1e-9);
    }

    #[test]
    fn robustness_uses_nearer_crossing() {
        let r = synthetic(&[(0.9, -0.2), (1.0, 0.0), (1.05, 0.2)]);
        let rob = robustness_factor(&r, SweptParam::C, 10.0).unwrap();
        assert!((rob.tolerable - 0.025).abs() < 1e-12);
    }

    #[test]
    fn unbracketed_contour_is_an_error() {
        let r = synthetic(&[(0.9, -0.01), (1.0, 0.0), (1.1, 0.01)]);
        assert!(matches!(
            robustness_factor(&r, SweptParam::C, 10.0),
            Err(Error::InsufficientRange(_))
        ));
        assert!(panel_robustness(&r).is_err());
    }
}
