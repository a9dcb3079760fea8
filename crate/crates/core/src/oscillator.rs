//! Self-tuned nonlinear oscillator (hair-cell model).
//!
//! ```text
//! x'' + (mu0 - mu) x' + lambda x'^3 + omega^2 x = 0
//! mu' = f(r) - g(mu),   r^2 = x^2 + (x' / omega)^2
//! ```
//!
//! For `mu < mu0` the origin is a damped focus; for `mu > mu0` a limit cycle of
//! amplitude set by the cubic damping appears (Hopf bifurcation at `mu = mu0`).

use crate::dynamics::{integrate, EventRule, IntegrateOptions, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::laws::AdaptationLaw;
use crate::scalar::Real;

pub const STATE_COLUMNS: [&str; 3] = ["x", "xdot", "mu"];
pub const DEFAULT_R_MAX: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatorParams<T> {
    pub mu0: T,
    pub lambda: T,
    pub omega: T,
    pub x_init: T,
    pub xdot_init: T,
    pub mu_init: T,
}

impl<T: Real> OscillatorParams<T> {
    pub fn new(mu0: T, lambda: T, omega: T, x_init: T, xdot_init: T, mu_init: T) -> Result<Self> {
        if !(omega > T::zero()) {
            return Err(Error::Config(format!("omega must be > 0, got {omega}")));
        }
        if !(lambda > T::zero()) {
            return Err(Error::Config(format!("lambda must be > 0, got {lambda}")));
        }
        if [mu0, lambda, omega, x_init, xdot_init, mu_init]
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(Error::Config("oscillator parameters must be finite".into()));
        }
        Ok(Self {
            mu0,
            lambda,
            omega,
            x_init,
            xdot_init,
            mu_init,
        })
    }

    /// `mu0 = lambda = omega = 1`, starting at `(x, x', mu) = (0.1, 0, 0.2)`.
    pub fn hair_cell_default() -> Self {
        Self {
            mu0: T::one(),
            lambda: T::one(),
            omega: T::one(),
            x_init: T::lit(0.1),
            xdot_init: T::zero(),
            mu_init: T::lit(0.2),
        }
    }

    #[inline]
    pub fn amplitude(&self, x: T, xdot: T) -> T {
        let v = xdot / self.omega;
        (x * x + v * v).sqrt()
    }
}

/// Integrates `(x, x', mu)` and appends the amplitude column `r`.
pub fn simulate_oscillator<T: Real>(
    params: &OscillatorParams<T>,
    law: &AdaptationLaw<T>,
    grid: &TimeGrid<T>,
    record_stride: usize,
) -> Result<Trajectory<T>> {
    law.ensure_simulable()?;
    let p = *params;
    let w2 = p.omega * p.omega;
    let field = |_t: T, s: &[T; 3]| {
        let [x, v, mu] = *s;
        let r = p.amplitude(x, v);
        [
            v,
            -(p.mu0 - mu) * v - p.lambda * v * v * v - w2 * x,
            law.rate_unchecked(r, mu),
        ]
    };
    let opts = IntegrateOptions::with_columns(&STATE_COLUMNS).stride(record_stride);
    let traj = integrate(
        field,
        [p.x_init, p.xdot_init, p.mu_init],
        grid,
        &EventRule::none(),
        &opts,
    )?;
    Ok(traj.with_derived_column("r", |s| p.amplitude(s[0], s[1])))
}

/// Steady state predicted by first-harmonic averaging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalancePrediction<T> {
    pub r: T,
    pub mu: T,
}

/// Solves `mu - mu0 = (3/4) lambda omega^2 r^2` together with `f(r) = g(mu)`
/// by bisection in `s = r^2` on `(0, r_max^2]`.
///
/// Averaging `d/dt (x'^2 + omega^2 x^2) / 2 = (mu - mu0) x'^2 - lambda x'^4`
/// over `x = r cos(omega t)` gives the first equation; the second is the rest
/// condition of the gain.
pub fn harmonic_balance_prediction<T: Real>(
    params: &OscillatorParams<T>,
    law: &AdaptationLaw<T>,
    r_max: T,
) -> Result<BalancePrediction<T>> {
    law.ensure_valid()?;
    let k = T::lit(0.75) * params.lambda * params.omega * params.omega;
    let gain = |s: T| params.mu0 + k * s;
    // Non-increasing in s for valid laws.
    let h = |s: T| law.f(s.sqrt()) - law.g(gain(s));
    let h0 = h(T::zero());
    let tol = T::tol_floor(1e-10);
    if h0.abs() <= tol {
        return Ok(BalancePrediction {
            r: T::zero(),
            mu: params.mu0,
        });
    }
    if h0 < T::zero() {
        return Err(Error::Subcritical(format!(
            "f(0) - g(mu0) = {h0} < 0: oscillations die out"
        )));
    }
    let s_max = r_max * r_max;
    if h(s_max) > T::zero() {
        return Err(Error::Subcritical(format!(
            "no amplitude balance in r <= {r_max}"
        )));
    }
    let (mut lo, mut hi) = (T::zero(), s_max);
    for _ in 0..400 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi || hi - lo <= tol * hi.max(T::lit(1e-300)) {
            break;
        }
        if h(mid) > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = (lo + hi) / T::lit(2.0);
    Ok(BalancePrediction {
        r: s.sqrt(),
        mu: gain(s),
    })
}

/// Per-period maxima of the `r` column, periods of `2 pi / omega` from `t_start`.
pub fn envelope<T: Real>(traj: &Trajectory<T>, omega: T) -> Result<Vec<T>> {
    let ir = traj
        .column_index("r")
        .ok_or_else(|| Error::Protocol("trajectory lacks an r column".into()))?;
    let t0 = traj
        .first_time()
        .ok_or_else(|| Error::Range("empty trajectory".into()))?;
    let period = T::lit(2.0) * T::PI() / omega;
    let mut out: Vec<T> = Vec::new();
    for (t, s) in traj.times().iter().zip(traj.states()) {
        let k = ((*t - t0) / period).floor().to_usize().unwrap_or(0);
        if k >= out.len() {
            out.resize(k + 1, T::neg_infinity());
        }
        out[k] = out[k].max(s[ir]);
    }
    // last period is usually partial
    if out.len() > 1 {
        out.pop();
    }
    Ok(out)
}
