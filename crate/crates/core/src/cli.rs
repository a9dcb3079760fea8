//! Subcommand implementations behind the `critlab` binary.
//!
//! Each command returns the lines to print on stdout and the exit code.

use std::path::Path;

use crate::averaging::{
    compatibility_residual, occupancy_in_range, periodic_regime, periodic_window, time_average,
};
use crate::config::{integrator_run, load_sweep_spec, oscillator_run, RunConfig};
use crate::dynamics::TimeGrid;
use crate::error::{Error, Result};
use crate::integrator::{
    check_energy_decrease, simulate_autonomous, simulate_driven, IntegratorParams,
};
use crate::io::{
    sibling, write_energy, write_events, write_histogram, write_sweep, write_trajectory,
};
use crate::laws::AdaptationLaw;
use crate::oscillator::{harmonic_balance_prediction, simulate_oscillator};
use crate::sweep::{panel_robustness, robustness_factor, run_sweep, run_sweep_with_threads};

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPAT_FAILED: i32 = 1;

/// Default `compat.threshold` on `|residual|` for the closed-form residual.
pub const DEFAULT_COMPAT_THRESHOLD: f64 = 1e-9;
/// Default `compat.threshold` for the histogram residual of a probe run.
pub const DEFAULT_PROBE_THRESHOLD: f64 = 1e-3;
/// Default `compat.bins` for probe runs; levels on a 1/1024 lattice of
/// their range land exactly on bin centers.
pub const DEFAULT_COMPAT_BINS: usize = 1025;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Report {
    pub lines: Vec<String>,
    pub code: i32,
}

impl Report {
    fn push(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }
}

/// One-line stderr rendering of an error.
pub fn error_line(err: &Error) -> String {
    format!(
        "error code={} kind={} message={:?}",
        err.exit_code(),
        err.kind(),
        err.to_string()
    )
}

pub fn simulate_integrator(config: &Path, out: &Path) -> Result<Report> {
    let run = integrator_run(&RunConfig::load(config)?)?;
    let grid = TimeGrid::new(0.0, run.t_end, run.dt)?;
    let mu0 = run.params.mu0;
    let mut rep = Report::default();
    let sim = match &run.schedule {
        Some(s) => simulate_driven(&run.params, &run.law, s, &grid, run.record_stride)?,
        None => simulate_autonomous(&run.params, &run.law, &grid, run.record_stride)?,
    };
    for w in &sim.warnings {
        rep.push(format!("warning: {w}"));
    }
    let traj = &sim.trajectory;
    write_trajectory(out, traj)?;
    let last = traj.last_state().unwrap_or(&[]);
    rep.push(format!("samples = {}", traj.len()));
    rep.push(format!("final x = {:.6e}, mu = {:.6e}", last[0], last[1]));
    match &run.schedule {
        Some(s) => {
            let events = sibling(out, "events");
            write_events(&events, traj)?;
            rep.push(format!(
                "events = {} ({})",
                traj.events().len(),
                events.display()
            ));
            match periodic_regime(traj, mu0, s.cycle()) {
                Ok(pr) => {
                    rep.push(format!("mean(mu - mu0) = {:.6e}", pr.mean_mu_minus_mu0));
                    rep.push(format!(
                        "drift per cycle = {:.3e} ({})",
                        pr.drift_per_period,
                        if pr.drift_ok {
                            "ok"
                        } else {
                            "not yet periodic"
                        }
                    ));
                }
                Err(e) => rep.push(format!("periodic regime: n/a ({e})")),
            }
        }
        None if run.law.is_frozen() => rep.push("energy: n/a (frozen adaptation)"),
        None => {
            let fp = run.law.fixed_point(mu0)?;
            rep.push(format!("fixed point x* = {:.6e}", fp.x_star));
            let energy = check_energy_decrease(traj, &run.law, mu0, run.kappa)?;
            let path = sibling(out, "energy");
            write_energy(&path, &energy)?;
            rep.push(format!(
                "energy non-increasing: {} (max increment {:.3e}, {})",
                energy.passed,
                energy.max_increment,
                path.display()
            ));
        }
    }
    Ok(rep)
}

pub fn simulate_oscillator_cmd(config: &Path, out: &Path) -> Result<Report> {
    let run = oscillator_run(&RunConfig::load(config)?)?;
    let grid = TimeGrid::new(0.0, run.t_end, run.dt)?;
    let traj = simulate_oscillator(&run.params, &run.law, &grid, run.record_stride)?;
    write_trajectory(out, &traj)?;
    let mut rep = Report::default();
    match harmonic_balance_prediction(&run.params, &run.law, run.r_max) {
        _ if run.law.is_frozen() => rep.push("predicted: n/a (frozen adaptation)"),
        Ok(b) => rep.push(format!("predicted r = {:.6}, mu = {:.6}", b.r, b.mu)),
        Err(e @ Error::Subcritical(_)) => rep.push(format!("predicted: {e}")),
        Err(e) => return Err(e),
    }
    let window = periodic_window(&traj)?;
    let (ir, imu) = (3, 2); // columns x, xdot, mu, r
    let r = time_average(&traj, ir, window, |v| v)?;
    let mu = time_average(&traj, imu, window, |v| v)?;
    rep.push(format!(
        "measured r = {r:.6}, mu = {mu:.6} (mean over t in [{:.1}, {:.1}])",
        window.0, window.1
    ));
    Ok(rep)
}

pub fn sweep_cmd(config: &Path, out: &Path, threads: Option<usize>) -> Result<Report> {
    let spec = load_sweep_spec(config)?;
    let result = match threads {
        Some(n) => run_sweep_with_threads(&spec, n)?,
        None => run_sweep(&spec)?,
    };
    write_sweep(out, &result)?;
    let mut rep = Report::default();
    rep.push(format!("rows = {}", result.rows.len()));
    for p in result.params() {
        match robustness_factor(&result, p, result.mu0) {
            Ok(r) => rep.push(format!(
                "{p}: tolerable perturbation = {:.4}, robustness factor = {:.3}",
                r.tolerable, r.factor
            )),
            Err(e) => rep.push(format!("{p}: n/a ({e})")),
        }
    }
    match panel_robustness(&result) {
        Ok(r) => {
            rep.push(format!(
                "tolerable perturbation = {:.4} ({})",
                r.tolerable, r.param
            ));
            rep.push(format!("robustness factor = {:.3}", r.factor));
        }
        Err(e) => rep.push(format!("robustness factor = n/a ({e})")),
    }
    Ok(rep)
}

/// Probe run with adaptation frozen at `mu0`: the firing rate then sits
/// exactly on the desired levels.
fn probe_residual(
    run: &crate::config::IntegratorRun,
    n_bins: usize,
    hist_out: Option<&Path>,
) -> Result<f64> {
    let sched = run.schedule.as_ref().expect("schedule checked by caller");
    let mu0 = run.params.mu0;
    let params = IntegratorParams::new(mu0, sched.level(0), mu0)?;
    let t_end = sched.t_first.max(0.0) + 4.0 * sched.cycle();
    let grid = TimeGrid::new(0.0, t_end, run.dt)?;
    let frozen = AdaptationLaw::frozen().with_domain_x(run.law.domain_x())?;
    let sim = simulate_driven(&params, &frozen, sched, &grid, run.record_stride)?;
    let lo = sched.levels.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sched
        .levels
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let half = if hi > lo {
        (hi - lo) / (2.0 * (n_bins - 1).max(1) as f64)
    } else {
        0.5
    };
    let window = (t_end - 2.0 * sched.cycle(), t_end);
    let hist = occupancy_in_range(&sim.trajectory, window, n_bins, (lo - half, hi + half))?;
    if let Some(p) = hist_out {
        write_histogram(p, &hist)?;
    }
    compatibility_residual(&hist, &run.law, mu0)
}

pub fn check_compat(config: &Path, out: Option<&Path>) -> Result<Report> {
    let cfg = RunConfig::load(config)?;
    let run = integrator_run(&cfg)?;
    let n_bins: usize = cfg.get("compat.bins")?.unwrap_or(DEFAULT_COMPAT_BINS);
    if n_bins == 0 {
        return Err(Error::Config("compat.bins must be >= 1".into()));
    }
    let Some(sched) = &run.schedule else {
        return Err(Error::Config(
            "check-compat needs a saccade schedule".into(),
        ));
    };
    let mu0 = run.params.mu0;
    let (method, residual) = match run.law.affine_params() {
        Some(p) => (
            "analytic",
            p.compatibility_residual(sched.mean_level(), mu0),
        ),
        None => {
            run.law.ensure_valid()?;
            let hist = out.map(|p| sibling(p, "histogram"));
            ("probe", probe_residual(&run, n_bins, hist.as_deref())?)
        }
    };
    let default = if method == "analytic" {
        DEFAULT_COMPAT_THRESHOLD
    } else {
        DEFAULT_PROBE_THRESHOLD
    };
    let threshold: f64 = cfg.get("compat.threshold")?.unwrap_or(default);
    let ok = residual.abs() <= threshold;
    let line = format!(
        "residual={residual:.16e} threshold={threshold:e} method={method} status={}",
        if ok { "ok" } else { "fail" }
    );
    if let Some(p) = out {
        std::fs::write(p, format!("{line}\n"))?;
    }
    Ok(Report {
        lines: vec![line],
        code: if ok { EXIT_OK } else { EXIT_COMPAT_FAILED },
    })
}
