//! Flat `key = value` run configuration.
//!
//! Keys use dotted namespaces (`law.a`, `saccade.period`); `#` starts a comment.
//! Unknown keys are rejected. Physical quantities are SI (s, 1/s, 1/s^2, Hz).

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::integrator::{recommended_dt, IntegratorParams, SaccadeSchedule};
use crate::laws::{AdaptationLaw, AffineLawParams, Interval, LorentzianLawParams, MonotoneTable};
use crate::oscillator::OscillatorParams;
use crate::sweep::{default_stride, log_grid, DrivenConfig, SweepSpec, SweptParam};

pub const SCHEMA_VERSION: &str = "1";

const RUN_KEYS: &[&str] = &[
    "schema",
    "mu0",
    "x_init",
    "mu_init",
    "t_end",
    "dt",
    "record_stride",
    "law",
    "law.a",
    "law.b",
    "law.c",
    "law.eps",
    "law.f_table",
    "law.g_table",
    "law.gain",
    "law.scale",
    "law.slope",
    "law.offset",
    "law.x_min",
    "law.x_max",
    "law.mu_min",
    "law.mu_max",
    "saccade.period",
    "saccade.levels",
    "saccade.t_first",
    "energy.kappa",
    "compat.threshold",
    "compat.bins",
    "oscillator.mu0",
    "oscillator.lambda",
    "oscillator.omega",
    "oscillator.x_init",
    "oscillator.xdot_init",
    "oscillator.mu_init",
    "oscillator.r_max",
];

const SWEEP_KEYS: &[&str] = &[
    "schema",
    "base",
    "sweep.params",
    "sweep.multipliers",
    "sweep.min",
    "sweep.max",
    "sweep.points",
    "sweep.replicates",
    "sweep.t_end",
];

/// Parsed key-value map plus the directory relative paths resolve against.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl RunConfig {
    /// Parses text, accepting only `allowed` keys.
    pub fn parse_with(text: &str, allowed: &[&str]) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`",
                    n + 1
                )));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(Error::Config(format!("line {}: empty key or value", n + 1)));
            }
            if !allowed.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key {k:?}", n + 1)));
            }
            if entries.insert(k.to_owned(), v.to_owned()).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key {k:?}",
                    n + 1
                )));
            }
        }
        if let Some(v) = entries.get("schema") {
            if v != SCHEMA_VERSION {
                return Err(Error::Config(format!(
                    "unsupported schema {v:?} (expected {SCHEMA_VERSION})"
                )));
            }
        }
        Ok(Self {
            entries,
            base_dir: PathBuf::new(),
        })
    }

    /// Parses a run configuration.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, RUN_KEYS)
    }

    fn load_with(path: &Path, allowed: &[&str]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse_with(&text, allowed)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with(path, RUN_KEYS)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_owned(), value.to_string());
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        self.entries.keys().any(|k| k.starts_with(prefix))
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<V: FromStr>(&self, key: &str) -> Result<Option<V>> {
        self.str(key)
            .map(|v| {
                v.parse::<V>()
                    .map_err(|_| Error::Config(format!("{key} = {v:?} is not a valid value")))
            })
            .transpose()
    }

    pub fn require<V: FromStr>(&self, key: &str) -> Result<V> {
        self.get(key)?
            .ok_or_else(|| Error::Config(format!("missing required key {key:?}")))
    }

    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.str(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Config(format!("{key}: {s:?} is not a number")))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        Ok(self.str(key).map(|p| self.base_dir.join(p)))
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "schema = {SCHEMA_VERSION}")?;
        for (k, v) in self.entries.iter().filter(|(k, _)| *k != "schema") {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Builds the adaptation law described by `law.*` keys.
pub fn law_from(cfg: &RunConfig, mu0: Option<f64>) -> Result<AdaptationLaw<f64>> {
    let kind = cfg.str("law").unwrap_or("affine");
    let mut law = match kind {
        "affine" => {
            let p: AffineLawParams<f64> = AffineLawParams::new(
                cfg.require("law.a")?,
                cfg.require("law.b")?,
                cfg.require("law.c")?,
                cfg.require("law.eps")?,
            );
            if [p.a, p.b, p.c, p.eps].iter().any(|v| !v.is_finite()) || p.eps < 0.0 {
                return Err(Error::Config(
                    "affine law needs finite a, b, c and eps >= 0".into(),
                ));
            }
            let law = AdaptationLaw::affine(p);
            match mu0 {
                Some(m) => law.with_mu0(m)?,
                None => law,
            }
        }
        "lorentzian" => {
            let d = LorentzianLawParams::default();
            AdaptationLaw::lorentzian(LorentzianLawParams {
                gain: cfg.get("law.gain")?.unwrap_or(d.gain),
                scale: cfg.get("law.scale")?.unwrap_or(d.scale),
                slope: cfg.get("law.slope")?.unwrap_or(d.slope),
                offset: cfg.get("law.offset")?.unwrap_or(d.offset),
            })
        }
        "table" => {
            let f = cfg
                .path("law.f_table")?
                .ok_or_else(|| Error::Config("missing law.f_table".into()))?;
            let g = cfg
                .path("law.g_table")?
                .ok_or_else(|| Error::Config("missing law.g_table".into()))?;
            AdaptationLaw::table(MonotoneTable::from_csv(&f)?, MonotoneTable::from_csv(&g)?)?
        }
        "frozen" => AdaptationLaw::frozen(),
        other => {
            return Err(Error::Config(format!(
                "law = {other:?}; expected affine, table, lorentzian or frozen"
            )))
        }
    };
    let dx = law.domain_x();
    if cfg.has("law.x_min") || cfg.has("law.x_max") {
        let lo = cfg.get("law.x_min")?.unwrap_or(dx.lo);
        let hi = cfg.get("law.x_max")?.unwrap_or(dx.hi);
        law = law.with_domain_x(Interval {
            lo,
            hi,
            lo_open: dx.lo_open && lo == dx.lo,
        })?;
    }
    let dm = law.domain_mu();
    if cfg.has("law.mu_min") || cfg.has("law.mu_max") {
        let lo = cfg.get("law.mu_min")?.unwrap_or(dm.lo);
        let hi = cfg.get("law.mu_max")?.unwrap_or(dm.hi);
        law = law.with_domain_mu(Interval::closed(lo, hi))?;
    }
    Ok(law)
}

/// Integrator run settings.
#[derive(Debug, Clone)]
pub struct IntegratorRun {
    pub params: IntegratorParams<f64>,
    pub law: AdaptationLaw<f64>,
    pub schedule: Option<SaccadeSchedule<f64>>,
    pub t_end: f64,
    pub dt: f64,
    pub record_stride: usize,
    pub kappa: f64,
}

pub fn schedule_from(cfg: &RunConfig) -> Result<Option<SaccadeSchedule<f64>>> {
    if !cfg.has_prefix("saccade.") {
        return Ok(None);
    }
    let levels = cfg
        .list("saccade.levels")?
        .ok_or_else(|| Error::Config("missing saccade.levels".into()))?;
    SaccadeSchedule::new(
        cfg.require("saccade.period")?,
        levels,
        cfg.get("saccade.t_first")?.unwrap_or(0.0),
    )
    .map(Some)
}

pub fn integrator_run(cfg: &RunConfig) -> Result<IntegratorRun> {
    let mu0: f64 = cfg.require("mu0")?;
    let schedule = schedule_from(cfg)?;
    let x_init = match (cfg.get("x_init")?, &schedule) {
        (Some(x), _) => x,
        (None, Some(s)) => s.level(0),
        (None, None) => return Err(Error::Config("missing required key \"x_init\"".into())),
    };
    let params = IntegratorParams::new(mu0, x_init, cfg.get("mu_init")?.unwrap_or(mu0 - 2.0))?;
    let law = law_from(cfg, Some(mu0))?;
    let limit = recommended_dt(mu0);
    let dt = cfg.get("dt")?.unwrap_or(limit);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "dt = {dt} must lie in (0, min(1e-3, 0.01 / mu0)] = (0, {limit}]"
        )));
    }
    Ok(IntegratorRun {
        params,
        law,
        schedule,
        t_end: cfg.require("t_end")?,
        dt,
        record_stride: cfg
            .get("record_stride")?
            .unwrap_or_else(|| default_stride(dt)),
        kappa: cfg
            .get("energy.kappa")?
            .unwrap_or(crate::integrator::DEFAULT_KAPPA),
    })
}

/// Oscillator run settings.
#[derive(Debug, Clone)]
pub struct OscillatorRun {
    pub params: OscillatorParams<f64>,
    pub law: AdaptationLaw<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub record_stride: usize,
    pub r_max: f64,
}

pub fn oscillator_run(cfg: &RunConfig) -> Result<OscillatorRun> {
    let d = OscillatorParams::<f64>::hair_cell_default();
    let params = OscillatorParams::new(
        cfg.get("oscillator.mu0")?.unwrap_or(d.mu0),
        cfg.get("oscillator.lambda")?.unwrap_or(d.lambda),
        cfg.get("oscillator.omega")?.unwrap_or(d.omega),
        cfg.get("oscillator.x_init")?.unwrap_or(d.x_init),
        cfg.get("oscillator.xdot_init")?.unwrap_or(d.xdot_init),
        cfg.get("oscillator.mu_init")?.unwrap_or(d.mu_init),
    )?;
    let law = if cfg.has("law") {
        law_from(cfg, None)?
    } else {
        AdaptationLaw::lorentzian(LorentzianLawParams::default())
    };
    let dt = cfg.get("dt")?.unwrap_or(1e-3);
    Ok(OscillatorRun {
        params,
        law,
        t_end: cfg.get("t_end")?.unwrap_or(2000.0),
        dt,
        record_stride: cfg
            .get("record_stride")?
            .unwrap_or_else(|| default_stride(dt)),
        r_max: cfg
            .get("oscillator.r_max")?
            .unwrap_or(crate::oscillator::DEFAULT_R_MAX),
    })
}

/// Driven affine configuration used as a sweep base.
pub fn driven_config(cfg: &RunConfig) -> Result<DrivenConfig> {
    let run = integrator_run(cfg)?;
    let law = *run
        .law
        .affine_params()
        .ok_or_else(|| Error::Config("sweeps need law = affine".into()))?;
    let schedule = run
        .schedule
        .ok_or_else(|| Error::Config("sweeps need a saccade schedule".into()))?;
    Ok(DrivenConfig {
        integrator: run.params,
        law,
        schedule,
        t_end: run.t_end,
        dt: run.dt,
        record_stride: run.record_stride,
    })
}

/// Loads a sweep spec; `base` is resolved relative to the spec file.
pub fn load_sweep_spec(path: &Path) -> Result<SweepSpec> {
    let spec = RunConfig::load_with(path, SWEEP_KEYS)?;
    let base_path = spec
        .path("base")?
        .ok_or_else(|| Error::Config("missing required key \"base\"".into()))?;
    let mut base = driven_config(&RunConfig::load(&base_path)?)?;
    if let Some(t) = spec.get("sweep.t_end")? {
        base.t_end = t;
    }
    let params = match spec.str("sweep.params") {
        Some(list) => list
            .split(',')
            .map(str::parse)
            .collect::<Result<Vec<SweptParam>>>()?,
        None => SweptParam::LAW.to_vec(),
    };
    let multipliers = match spec.list("sweep.multipliers")? {
        Some(mut m) => {
            if !m.contains(&1.0) {
                m.push(1.0);
            }
            m.sort_by(f64::total_cmp);
            m.dedup();
            m
        }
        None => log_grid(
            spec.get("sweep.min")?.unwrap_or(0.8),
            spec.get("sweep.max")?.unwrap_or(1.25),
            spec.get("sweep.points")?.unwrap_or(21),
        ),
    };
    Ok(SweepSpec {
        base,
        params,
        multipliers,
        replicates: spec.get("sweep.replicates")?.unwrap_or(1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DRIVEN: &str = "
# neural integrator, driven
mu0 = 200
law = affine
law.a = 1
law.b = 0.01
law.c = 42
law.eps = 0.01
saccade.period = 1
saccade.levels = 20, 60
t_end = 100
";

    #[test]
    fn parses_and_builds_integrator_run() {
        let cfg = RunConfig::parse(DRIVEN).unwrap();
        let run = integrator_run(&cfg).unwrap();
        assert_eq!(run.params.x_init, 20.0);
        assert_eq!(run.params.mu_init, 198.0);
        assert_eq!(run.dt, 5e-5);
        assert_eq!(run.record_stride, 200);
        assert_eq!(run.schedule.unwrap().levels, vec![20.0, 60.0]);
        assert_eq!(run.law.domain_mu().hi, 400.0);
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        assert!(RunConfig::parse("mu1 = 3").is_err());
        assert!(RunConfig::parse("mu0 = 3\nmu0 = 4").is_err());
        assert!(RunConfig::parse("mu0 3").is_err());
        assert!(RunConfig::parse("schema = 2").is_err());
    }

    #[test]
    fn missing_required_key() {
        let cfg = RunConfig::parse("law = affine\nt_end = 1").unwrap();
        let err = integrator_run(&cfg).unwrap_err();
        assert!(err.to_string().contains("mu0"));
    }

    #[test]
    fn coarse_dt_rejected() {
        let cfg = RunConfig::parse(&format!("{DRIVEN}dt = 1e-3\n")).unwrap();
        assert!(matches!(integrator_run(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn display_round_trips() {
        let cfg = RunConfig::parse(DRIVEN).unwrap();
        let again = RunConfig::parse(&cfg.to_string()).unwrap();
        assert_eq!(
            again
                .entries()
                .iter()
                .filter(|(k, _)| *k != "schema")
                .collect::<Vec<_>>(),
            cfg.entries().iter().collect::<Vec<_>>()
        );
    }

    #[test]
    fn oscillator_defaults() {
        let run = oscillator_run(&RunConfig::parse("").unwrap()).unwrap();
        assert_eq!(run.params, OscillatorParams::hair_cell_default());
        assert_eq!(run.t_end, 2000.0);
        assert!(matches!(
            run.law.kind(),
            crate::laws::LawKind::Lorentzian(_)
        ));
    }
}
