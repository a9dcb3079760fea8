//! Adaptation laws `mu' = f(x) - g(mu)`.
//!
//! A law is valid when `g` is strictly increasing, `f` is non-increasing, and
//! `f(x*) = g(mu0)` has a solution `x*` in the firing-rate domain. Those three
//! conditions make `(x*, mu0)` the unique, globally attracting rest point of
//! `x' = (mu - mu0) x` coupled with the law.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::{linspace, Real};

/// Default number of probe points per domain used by [`AdaptationLaw::validate`].
pub const DEFAULT_PROBES: usize = 1024;

/// Closed interval `[lo, hi]`, optionally open at `lo`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
    pub lo_open: bool,
}

impl<T: Real> Interval<T> {
    pub fn closed(lo: T, hi: T) -> Self {
        Self {
            lo,
            hi,
            lo_open: false,
        }
    }

    pub fn left_open(lo: T, hi: T) -> Self {
        Self {
            lo,
            hi,
            lo_open: true,
        }
    }

    pub fn contains(&self, v: T) -> bool {
        let above = if self.lo_open {
            v > self.lo
        } else {
            v >= self.lo
        };
        above && v <= self.hi
    }

    fn check(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.hi > self.lo) {
            return Err(Error::Config(format!("degenerate domain {self}")));
        }
        Ok(())
    }

    /// `n` probe points; the open end is excluded.
    pub fn probes(&self, n: usize) -> Vec<T> {
        if self.lo_open {
            let step = (self.hi - self.lo) / T::lit(n as f64);
            (1..=n)
                .map(|i| {
                    if i == n {
                        self.hi
                    } else {
                        self.lo + step * T::lit(i as f64)
                    }
                })
                .collect()
        } else {
            linspace(self.lo, self.hi, n)
        }
    }
}

impl<T: fmt::Display> fmt::Display for Interval<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lo_open { '(' } else { '[' };
        write!(f, "{open}{}, {}]", self.lo, self.hi)
    }
}

/// `f(x) = eps (c - a x)`, `g(mu) = eps b mu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineLawParams<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub eps: T,
}

impl<T: Real> AffineLawParams<T> {
    pub fn new(a: T, b: T, c: T, eps: T) -> Self {
        Self { a, b, c, eps }
    }

    /// Residual of `a * mean_level + b * mu0 = c`, scaled by `eps`.
    ///
    /// Zero means the level-averaged adaptation rate vanishes at `mu0`.
    pub fn compatibility_residual(&self, mean_level: T, mu0: T) -> T {
        self.eps * (self.c - self.a * mean_level - self.b * mu0)
    }
}

/// `f(r) = gain / (1 + (r / scale)^2)`, `g(mu) = slope * mu - offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianLawParams<T> {
    pub gain: T,
    pub scale: T,
    pub slope: T,
    pub offset: T,
}

impl<T: Real> Default for LorentzianLawParams<T> {
    fn default() -> Self {
        Self {
            gain: T::one(),
            scale: T::one(),
            slope: T::one(),
            offset: T::lit(0.5),
        }
    }
}

/// Piecewise-linear function through tabulated points, linearly extrapolated
/// past both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneTable<T> {
    xs: Vec<T>,
    ys: Vec<T>,
}

impl<T: Real> MonotoneTable<T> {
    pub fn new(xs: Vec<T>, ys: Vec<T>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::Config(
                "table needs at least two (x, y) rows of equal length".into(),
            ));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::Config("table values must be finite".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "table abscissae must be strictly increasing".into(),
            ));
        }
        let up = ys.windows(2).all(|w| w[1] >= w[0]);
        let down = ys.windows(2).all(|w| w[1] <= w[0]);
        if !(up || down) {
            return Err(Error::Config("table values are not monotone".into()));
        }
        Ok(Self { xs, ys })
    }

    /// Reads a two-column CSV. A non-numeric first row is treated as a header.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::Config(format!(
                    "{}: row {} has {} columns, expected 2",
                    path.display(),
                    row + 1,
                    rec.len()
                )));
            }
            let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match parsed {
                (Ok(x), Ok(y)) => {
                    xs.push(T::lit(x));
                    ys.push(T::lit(y));
                }
                _ if row == 0 => continue,
                _ => {
                    return Err(Error::Config(format!(
                        "{}: row {} is not numeric",
                        path.display(),
                        row + 1
                    )))
                }
            }
        }
        Self::new(xs, ys)
    }

    pub fn span(&self) -> (T, T) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn eval(&self, x: T) -> T {
        let n = self.xs.len();
        let i = self.xs.partition_point(|&v| v < x).clamp(1, n - 1);
        let (x0, x1, y0, y1) = (self.xs[i - 1], self.xs[i], self.ys[i - 1], self.ys[i]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

pub type ScalarFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

#[derive(Clone)]
pub enum LawKind<T> {
    Affine(AffineLawParams<T>),
    Lorentzian(LorentzianLawParams<T>),
    Table {
        f: MonotoneTable<T>,
        g: MonotoneTable<T>,
    },
    Custom {
        name: String,
        f: ScalarFn<T>,
        g: ScalarFn<T>,
    },
    /// `mu' = 0`: adaptation switched off.
    Frozen,
}

impl<T: fmt::Debug> fmt::Debug for LawKind<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LawKind::Affine(p) => f.debug_tuple("Affine").field(p).finish(),
            LawKind::Lorentzian(p) => f.debug_tuple("Lorentzian").field(p).finish(),
            LawKind::Table { f: ft, g } => f
                .debug_struct("Table")
                .field("f", ft)
                .field("g", g)
                .finish(),
            LawKind::Custom { name, .. } => f.debug_struct("Custom").field("name", name).finish(),
            LawKind::Frozen => f.write_str("Frozen"),
        }
    }
}

/// The pair `(f, g)` with the domains on which it is validated.
#[derive(Debug, Clone)]
pub struct AdaptationLaw<T> {
    kind: LawKind<T>,
    domain_x: Interval<T>,
    domain_mu: Interval<T>,
}

/// Outcome of [`AdaptationLaw::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityReport<T> {
    pub f_decreasing: bool,
    pub g_increasing: bool,
    /// First adjacent probe pair `(x1, x2)` with `f(x1) < f(x2)`.
    pub f_violation: Option<(T, T)>,
    /// First adjacent probe pair `(mu1, mu2)` with `g(mu1) >= g(mu2)`.
    pub g_violation: Option<(T, T)>,
    /// `f` took the same value at every probe.
    pub f_constant: bool,
    pub frozen: bool,
}

impl<T: Real> ValidityReport<T> {
    pub fn is_valid(&self) -> bool {
        self.f_decreasing && self.g_increasing
    }

    /// Valid, or adaptation switched off entirely.
    pub fn is_simulable(&self) -> bool {
        self.frozen || self.is_valid()
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.f_constant && !self.frozen {
            w.push("f is constant on its domain; x* is not unique".to_owned());
        }
        w
    }
}

impl<T: Real> fmt::Display for ValidityReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.frozen {
            return f.write_str("adaptation frozen");
        }
        let mut parts = Vec::new();
        if let Some((x1, x2)) = self.f_violation {
            parts.push(format!("f is not decreasing: f({x1}) < f({x2})"));
        }
        if let Some((m1, m2)) = self.g_violation {
            parts.push(format!("g is not strictly increasing: g({m1}) >= g({m2})"));
        }
        if parts.is_empty() {
            f.write_str("valid")
        } else {
            f.write_str(&parts.join("; "))
        }
    }
}

/// Rest point `(x*, mu0)` of the coupled system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint<T> {
    pub x_star: T,
    pub mu_star: T,
}

impl<T: Real> AdaptationLaw<T> {
    fn default_domain_x() -> Interval<T> {
        Interval::left_open(T::zero(), T::lit(1000.0))
    }

    fn default_domain_mu() -> Interval<T> {
        Interval::closed(T::zero(), T::lit(1000.0))
    }

    pub fn new(kind: LawKind<T>, domain_x: Interval<T>, domain_mu: Interval<T>) -> Result<Self> {
        domain_x.check()?;
        domain_mu.check()?;
        Ok(Self {
            kind,
            domain_x,
            domain_mu,
        })
    }

    pub fn affine(p: AffineLawParams<T>) -> Self {
        Self {
            kind: LawKind::Affine(p),
            domain_x: Self::default_domain_x(),
            domain_mu: Self::default_domain_mu(),
        }
    }

    pub fn lorentzian(p: LorentzianLawParams<T>) -> Self {
        Self {
            kind: LawKind::Lorentzian(p),
            domain_x: Self::default_domain_x(),
            domain_mu: Self::default_domain_mu(),
        }
    }

    /// Table law; domains default to the table spans.
    pub fn table(f: MonotoneTable<T>, g: MonotoneTable<T>) -> Result<Self> {
        let (x0, x1) = f.span();
        let (m0, m1) = g.span();
        Self::new(
            LawKind::Table { f, g },
            Interval::closed(x0, x1),
            Interval::closed(m0, m1),
        )
    }

    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(T) -> T + Send + Sync + 'static,
        g: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self {
            kind: LawKind::Custom {
                name: name.into(),
                f: Arc::new(f),
                g: Arc::new(g),
            },
            domain_x: Self::default_domain_x(),
            domain_mu: Self::default_domain_mu(),
        }
    }

    pub fn frozen() -> Self {
        Self {
            kind: LawKind::Frozen,
            domain_x: Self::default_domain_x(),
            domain_mu: Self::default_domain_mu(),
        }
    }

    pub fn with_domain_x(mut self, d: Interval<T>) -> Result<Self> {
        d.check()?;
        self.domain_x = d;
        Ok(self)
    }

    pub fn with_domain_mu(mut self, d: Interval<T>) -> Result<Self> {
        d.check()?;
        self.domain_mu = d;
        Ok(self)
    }

    /// Sets the gain domain to `[0, 2 mu0]`.
    pub fn with_mu0(self, mu0: T) -> Result<Self> {
        self.with_domain_mu(Interval::closed(T::zero(), mu0 + mu0))
    }

    pub fn kind(&self) -> &LawKind<T> {
        &self.kind
    }

    pub fn affine_params(&self) -> Option<&AffineLawParams<T>> {
        match &self.kind {
            LawKind::Affine(p) => Some(p),
            _ => None,
        }
    }

    pub fn domain_x(&self) -> Interval<T> {
        self.domain_x
    }

    pub fn domain_mu(&self) -> Interval<T> {
        self.domain_mu
    }

    pub fn is_frozen(&self) -> bool {
        match &self.kind {
            LawKind::Frozen => true,
            LawKind::Affine(p) => p.eps == T::zero(),
            _ => false,
        }
    }

    /// `f(x)` without a domain check.
    #[inline]
    pub fn f(&self, x: T) -> T {
        match &self.kind {
            LawKind::Affine(p) => p.eps * (p.c - p.a * x),
            LawKind::Lorentzian(p) => {
                let s = x / p.scale;
                p.gain / (T::one() + s * s)
            }
            LawKind::Table { f, .. } => f.eval(x),
            LawKind::Custom { f, .. } => f(x),
            LawKind::Frozen => T::zero(),
        }
    }

    /// `g(mu)` without a domain check.
    #[inline]
    pub fn g(&self, mu: T) -> T {
        match &self.kind {
            LawKind::Affine(p) => p.eps * p.b * mu,
            LawKind::Lorentzian(p) => p.slope * mu - p.offset,
            LawKind::Table { g, .. } => g.eval(mu),
            LawKind::Custom { g, .. } => g(mu),
            LawKind::Frozen => T::zero(),
        }
    }

    /// `f(x) - g(mu)` without domain checks; used inside vector fields.
    #[inline]
    pub fn rate_unchecked(&self, x: T, mu: T) -> T {
        self.f(x) - self.g(mu)
    }

    /// `f(x) - g(mu)` with both arguments required to lie in their domains.
    pub fn rate(&self, x: T, mu: T) -> Result<T> {
        if !self.domain_x.contains(x) {
            return Err(Error::Range(format!("x = {x} outside {}", self.domain_x)));
        }
        if !self.domain_mu.contains(mu) {
            return Err(Error::Range(format!(
                "mu = {mu} outside {}",
                self.domain_mu
            )));
        }
        let r = self.rate_unchecked(x, mu);
        if !r.is_finite() {
            return Err(Error::Evaluation(format!("f({x}) - g({mu}) = {r}")));
        }
        Ok(r)
    }

    /// Samples `f` and `g` on `n_probe` points per domain and checks monotonicity.
    pub fn validate(&self, n_probe: usize) -> Result<ValidityReport<T>> {
        if n_probe < 2 {
            return Err(Error::Config(format!(
                "n_probe must be >= 2, got {n_probe}"
            )));
        }
        let eval = |name: &str, func: &dyn Fn(T) -> T, pts: &[T]| -> Result<Vec<T>> {
            pts.iter()
                .map(|&p| {
                    let v = func(p);
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(Error::Evaluation(format!("{name}({p}) = {v}")))
                    }
                })
                .collect()
        };
        let xs = self.domain_x.probes(n_probe);
        let mus = self.domain_mu.probes(n_probe);
        let fv = eval("f", &|x| self.f(x), &xs)?;
        let gv = eval("g", &|m| self.g(m), &mus)?;

        let f_violation = fv
            .windows(2)
            .position(|w| w[1] > w[0])
            .map(|i| (xs[i], xs[i + 1]));
        let g_violation = gv
            .windows(2)
            .position(|w| w[1] <= w[0])
            .map(|i| (mus[i], mus[i + 1]));
        let f_constant = fv.iter().all(|&v| v == fv[0]);
        Ok(ValidityReport {
            f_decreasing: f_violation.is_none(),
            g_increasing: g_violation.is_none(),
            f_violation,
            g_violation,
            f_constant,
            frozen: self.is_frozen(),
        })
    }

    /// Validates with [`DEFAULT_PROBES`] and fails unless the law is valid.
    pub fn ensure_valid(&self) -> Result<ValidityReport<T>> {
        let report = self.validate(DEFAULT_PROBES)?;
        if !report.is_valid() {
            return Err(Error::InvalidLaw(report.to_string()));
        }
        Ok(report)
    }

    /// Validates and fails unless the law is valid or frozen.
    pub fn ensure_simulable(&self) -> Result<ValidityReport<T>> {
        let report = self.validate(DEFAULT_PROBES)?;
        if !report.is_simulable() {
            return Err(Error::InvalidLaw(report.to_string()));
        }
        Ok(report)
    }

    /// Solves `f(x*) = g(mu0)` on `domain_x` by bisection.
    pub fn fixed_point(&self, mu0: T) -> Result<FixedPoint<T>> {
        self.ensure_valid()?;
        self.solve_fixed_point(mu0)
    }

    /// Bisection without the validity pre-check. `f` must be non-increasing.
    pub fn solve_fixed_point(&self, mu0: T) -> Result<FixedPoint<T>> {
        let target = self.g(mu0);
        if !target.is_finite() {
            return Err(Error::Evaluation(format!("g({mu0}) = {target}")));
        }
        let mut lo = self.domain_x.lo;
        let mut hi = self.domain_x.hi;
        let mut f_lo = self.f(lo);
        if !f_lo.is_finite() {
            lo = lo + (hi - lo) * T::lit(1e-12);
            f_lo = self.f(lo);
        }
        let f_hi = self.f(hi);
        if !(f_lo.is_finite() && f_hi.is_finite()) {
            return Err(Error::Evaluation(format!(
                "f is not finite at the ends of {}",
                self.domain_x
            )));
        }
        if target > f_lo || target < f_hi {
            return Err(Error::NoFixedPoint {
                target: target.as_f64(),
                f_min: f_hi.as_f64(),
                f_max: f_lo.as_f64(),
            });
        }
        let tol = T::tol_floor(1e-12) * T::one().max(target.abs());
        let mut best = if (f_lo - target).abs() <= (f_hi - target).abs() {
            lo
        } else {
            hi
        };
        // Invariant: f(lo) >= target >= f(hi).
        for _ in 0..400 {
            let mid = lo + (hi - lo) / T::lit(2.0);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = self.f(mid);
            if (fm - target).abs() < (self.f(best) - target).abs() {
                best = mid;
            }
            if fm == target {
                break;
            }
            if fm > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let residual = (self.f(best) - target).abs();
        if residual > tol {
            return Err(Error::NoFixedPoint {
                target: target.as_f64(),
                f_min: f_hi.as_f64(),
                f_max: f_lo.as_f64(),
            });
        }
        Ok(FixedPoint {
            x_star: best,
            mu_star: mu0,
        })
    }
}
