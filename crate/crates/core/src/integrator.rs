//! Self-tuned neural integrator.
//!
//! Firing rate `x > 0` with natural decay `mu0` and synaptic feedback gain `mu`:
//!
//! ```text
//! x'  = (mu - mu0) x + u(t)
//! mu' = f(x) - g(mu)
//! ```
//!
//! The input `u(t)` is a train of saccade impulses, each of which resets `x`
//! to the next desired level. Impulses are realized as exact state jumps.
//!
//! In the coordinates `q = ln(x / x*)`, `p = mu - mu0` the autonomous system is
//! a unit-mass oscillator with spring `f(x* e^q)` and damper `g(p + mu0)`, and
//! `V = p^2 / 2 + U(q)` never increases along trajectories.

use crate::dynamics::{integrate_guarded, EventRule, IntegrateOptions, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::laws::{AdaptationLaw, LawKind};
use crate::quadrature::adaptive_simpson;
use crate::scalar::Real;

pub const COLUMNS: [&str; 2] = ["x", "mu"];
pub const SACCADE_LABEL: &str = "saccade";

/// Default slack coefficient for [`check_energy_decrease`].
pub const DEFAULT_KAPPA: f64 = 1e-2;

const POTENTIAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorParams<T> {
    /// Natural decay rate, 1/s.
    pub mu0: T,
    /// Initial firing rate, Hz.
    pub x_init: T,
    /// Initial feedback gain, 1/s.
    pub mu_init: T,
}

impl<T: Real> IntegratorParams<T> {
    pub fn new(mu0: T, x_init: T, mu_init: T) -> Result<Self> {
        if !(mu0 > T::zero() && mu0.is_finite()) {
            return Err(Error::Config(format!("mu0 must be > 0, got {mu0}")));
        }
        if !(x_init > T::zero() && x_init.is_finite()) {
            return Err(Error::Config(format!("x_init must be > 0, got {x_init}")));
        }
        if !mu_init.is_finite() {
            return Err(Error::Config("mu_init must be finite".into()));
        }
        Ok(Self {
            mu0,
            x_init,
            mu_init,
        })
    }
}

/// Largest step allowed for a given decay rate: `min(1e-3, 0.01 / mu0)`.
pub fn recommended_dt<T: Real>(mu0: T) -> T {
    T::lit(1e-3).min(T::lit(0.01) / mu0)
}

/// Periodic saccades; the k-th saccade (at `t_first + k * period`) moves the
/// firing rate to `levels[k % levels.len()]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaccadeSchedule<T> {
    pub period: T,
    pub levels: Vec<T>,
    pub t_first: T,
}

impl<T: Real> SaccadeSchedule<T> {
    pub fn new(period: T, levels: Vec<T>, t_first: T) -> Result<Self> {
        if !(period > T::zero() && period.is_finite()) {
            return Err(Error::Config(format!(
                "saccade period must be > 0, got {period}"
            )));
        }
        if levels.is_empty() || levels.iter().any(|&l| !(l > T::zero() && l.is_finite())) {
            return Err(Error::Config(
                "saccade levels must be non-empty and > 0".into(),
            ));
        }
        if !t_first.is_finite() {
            return Err(Error::Config("saccade t_first must be finite".into()));
        }
        Ok(Self {
            period,
            levels,
            t_first,
        })
    }

    /// 20 Hz / 60 Hz alternation every second, starting at `t = 0`.
    pub fn alternating_20_60() -> Self {
        Self {
            period: T::one(),
            levels: vec![T::lit(20.0), T::lit(60.0)],
            t_first: T::zero(),
        }
    }

    pub fn level(&self, k: usize) -> T {
        self.levels[k % self.levels.len()]
    }

    /// Time-weighted mean of the desired levels (every dwell has length `period`).
    pub fn mean_level(&self) -> T {
        self.levels.iter().fold(T::zero(), |s, &l| s + l) / T::lit(self.levels.len() as f64)
    }

    /// Duration of one full cycle through the levels.
    pub fn cycle(&self) -> T {
        self.period * T::lit(self.levels.len() as f64)
    }

    /// Saccade times falling on `grid`.
    pub fn times(&self, grid: &TimeGrid<T>) -> Vec<T> {
        let half = grid.dt() / T::lit(2.0);
        let mut out = Vec::new();
        for k in 0usize.. {
            let t = self.t_first + self.period * T::lit(k as f64);
            if t > grid.t_end() + half {
                break;
            }
            if t >= grid.t_start() - half {
                out.push(t);
            }
        }
        out
    }

    fn event_rule(&self, grid: &TimeGrid<T>) -> Result<EventRule<T>> {
        let times = self.times(grid);
        let skipped = {
            let half = grid.dt() / T::lit(2.0);
            let mut n = 0usize;
            while self.t_first + self.period * T::lit(n as f64) < grid.t_start() - half {
                n += 1;
            }
            n
        };
        let sched = self.clone();
        EventRule::new(
            SACCADE_LABEL,
            times,
            Box::new(move |i, _t, s: &[T]| vec![sched.level(i + skipped), s[1]]),
        )
    }
}

/// Trajectory plus non-fatal diagnostics collected during the run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun<T> {
    pub trajectory: Trajectory<T>,
    pub warnings: Vec<String>,
}

fn run<T: Real>(
    params: &IntegratorParams<T>,
    law: &AdaptationLaw<T>,
    grid: &TimeGrid<T>,
    events: &EventRule<T>,
    record_stride: usize,
) -> Result<SimulationRun<T>> {
    law.ensure_simulable()?;
    let dom_x = law.domain_x();
    if !dom_x.contains(params.x_init) {
        return Err(Error::Config(format!(
            "x_init = {} outside {}",
            params.x_init, dom_x
        )));
    }
    let dom_mu = law.domain_mu();
    let mu0 = params.mu0;
    let field = |_t: T, s: &[T; 2]| [(s[1] - mu0) * s[0], law.rate_unchecked(s[0], s[1])];
    let mut mu_exit: Option<(T, T)> = None;
    let guard = |t: T, s: &[T; 2]| {
        if !dom_x.contains(s[0]) {
            return Err(Error::DomainExit {
                t: t.as_f64(),
                what: format!("x = {} outside {}", s[0], dom_x),
            });
        }
        if mu_exit.is_none() && !dom_mu.contains(s[1]) {
            mu_exit = Some((t, s[1]));
        }
        Ok(())
    };
    let opts = IntegrateOptions::with_columns(&COLUMNS).stride(record_stride);
    let trajectory = integrate_guarded(
        field,
        [params.x_init, params.mu_init],
        grid,
        events,
        &opts,
        guard,
    )?;
    let warnings = mu_exit
        .map(|(t, mu)| format!("mu = {mu} left {dom_mu} at t = {t}"))
        .into_iter()
        .collect();
    Ok(SimulationRun {
        trajectory,
        warnings,
    })
}

/// Unforced system `x' = (mu - mu0) x`, `mu' = f(x) - g(mu)`.
pub fn simulate_autonomous<T: Real>(
    params: &IntegratorParams<T>,
    law: &AdaptationLaw<T>,
    grid: &TimeGrid<T>,
    record_stride: usize,
) -> Result<SimulationRun<T>> {
    run(params, law, grid, &EventRule::none(), record_stride)
}

/// Saccade-driven system. `mu` is continuous across saccades; `x` jumps.
pub fn simulate_driven<T: Real>(
    params: &IntegratorParams<T>,
    law: &AdaptationLaw<T>,
    schedule: &SaccadeSchedule<T>,
    grid: &TimeGrid<T>,
    record_stride: usize,
) -> Result<SimulationRun<T>> {
    let events = schedule.event_rule(grid)?;
    run(params, law, grid, &events, record_stride)
}

/// `(post-saccade rate, pre-next-saccade rate)` for every inter-saccade interval.
pub fn saccade_dwells<T: Real>(traj: &Trajectory<T>) -> Vec<(T, T, T)> {
    traj.events()
        .windows(2)
        .map(|w| (w[0].t, w[0].post[0], w[1].pre[0]))
        .collect()
}

/// Mass-spring-damper coordinates and energy of a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyState<T> {
    pub q: T,
    pub p: T,
    pub v: T,
}

/// Energy `V(q, p) = p^2/2 + U(q)` for one law and decay rate.
#[derive(Debug, Clone)]
pub struct EnergyFunction<'a, T> {
    law: &'a AdaptationLaw<T>,
    mu0: T,
    x_star: T,
    g0: T,
}

impl<'a, T: Real> EnergyFunction<'a, T> {
    pub fn new(law: &'a AdaptationLaw<T>, mu0: T) -> Result<Self> {
        let fp = law.fixed_point(mu0)?;
        Ok(Self {
            law,
            mu0,
            x_star: fp.x_star,
            g0: law.g(mu0),
        })
    }

    pub fn x_star(&self) -> T {
        self.x_star
    }

    /// `U(q) = -int_0^q [f(x* e^s) - g(mu0)] ds`.
    pub fn potential(&self, q: T) -> T {
        match self.law.kind() {
            LawKind::Affine(p) => p.eps * p.a * self.x_star * (q.exp_m1() - q),
            _ => {
                let integrand = |s: T| self.g0 - self.law.f(s.exp() * self.x_star);
                adaptive_simpson(integrand, T::zero(), q, T::tol_floor(POTENTIAL_TOL))
            }
        }
    }

    pub fn eval(&self, x: T, mu: T) -> Result<EnergyState<T>> {
        if !(x > T::zero()) {
            return Err(Error::Range(format!("energy needs x > 0, got {x}")));
        }
        let q = (x / self.x_star).ln();
        let p = mu - self.mu0;
        let v = p * p / T::lit(2.0) + self.potential(q);
        Ok(EnergyState { q, p, v })
    }
}

/// Energy of the state `(x, mu)`.
pub fn energy<T: Real>(state: (T, T), law: &AdaptationLaw<T>, mu0: T) -> Result<EnergyState<T>> {
    EnergyFunction::new(law, mu0)?.eval(state.0, state.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport<T> {
    pub samples: Vec<(T, EnergyState<T>)>,
    /// Largest `V(t_{k+1}) - V(t_k)`; zero when `V` never increases.
    pub max_increment: T,
    /// Largest `V(t_{k+1}) - V(t_k) - kappa (t_{k+1} - t_k)^2`.
    pub max_excess: T,
    pub kappa: T,
    pub passed: bool,
}

/// Checks that `V` is non-increasing along an unforced trajectory, up to a
/// slack of `kappa * dt^2` per sample interval.
pub fn check_energy_decrease<T: Real>(
    traj: &Trajectory<T>,
    law: &AdaptationLaw<T>,
    mu0: T,
    kappa: T,
) -> Result<EnergyReport<T>> {
    if !traj.events().is_empty() {
        return Err(Error::Protocol(
            "energy certificate only applies to unforced trajectories (found jumps)".into(),
        ));
    }
    let (ix, imu) = match (traj.column_index("x"), traj.column_index("mu")) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Protocol("trajectory lacks x / mu columns".into())),
    };
    let ef = EnergyFunction::new(law, mu0)?;
    let samples = traj
        .times()
        .iter()
        .zip(traj.states())
        .map(|(&t, s)| Ok((t, ef.eval(s[ix], s[imu])?)))
        .collect::<Result<Vec<_>>>()?;
    let mut max_increment = T::zero();
    let mut max_excess = T::neg_infinity();
    for w in samples.windows(2) {
        let dv = w[1].1.v - w[0].1.v;
        let dt = w[1].0 - w[0].0;
        max_increment = max_increment.max(dv);
        max_excess = max_excess.max(dv - kappa * dt * dt);
    }
    let passed = !(max_excess > T::zero());
    Ok(EnergyReport {
        samples,
        max_increment,
        max_excess,
        kappa,
        passed,
    })
}

/// Rest points of the unforced system: `mu = mu0` and every sign change of
/// `f(x) - g(mu0)` on an `n_grid`-point probe of the firing-rate domain.
pub fn rest_points<T: Real>(law: &AdaptationLaw<T>, mu0: T, n_grid: usize) -> Vec<(T, T)> {
    let target = law.g(mu0);
    let xs = law.domain_x().probes(n_grid.max(2));
    let d: Vec<T> = xs.iter().map(|&x| law.f(x) - target).collect();
    let mut out = Vec::new();
    if d[0] == T::zero() {
        out.push((xs[0], mu0));
    }
    for i in 0..d.len() - 1 {
        let (a, b) = (d[i], d[i + 1]);
        if b == T::zero() && a != T::zero() {
            out.push((xs[i + 1], mu0));
        } else if a * b < T::zero() {
            let (mut lo, mut hi) = (xs[i], xs[i + 1]);
            for _ in 0..200 {
                let mid = (lo + hi) / T::lit(2.0);
                if mid <= lo || mid >= hi {
                    break;
                }
                if (law.f(mid) - target) * a > T::zero() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(((lo + hi) / T::lit(2.0), mu0));
        }
    }
    out
}
