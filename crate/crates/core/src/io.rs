//! CSV writers. Floats are printed with 17 significant digits so files
//! round-trip bit-exactly.

use std::path::{Path, PathBuf};

use crate::averaging::OccupancyHistogram;
use crate::dynamics::Trajectory;
use crate::error::Result;
use crate::integrator::EnergyReport;
use crate::scalar::Real;
use crate::sweep::SweepResult;

pub fn fmt_num<T: Real>(v: T) -> String {
    format!("{:.16e}", v.as_f64())
}

/// `dir/stem.<suffix>.csv` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

/// Header `t,<columns...>`.
pub fn write_trajectory<T: Real>(path: &Path, traj: &Trajectory<T>) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["t".to_owned()];
    header.extend(traj.columns().iter().cloned());
    w.write_record(&header)?;
    for (t, s) in traj.times().iter().zip(traj.states()) {
        w.write_record(std::iter::once(fmt_num(*t)).chain(s.iter().map(|v| fmt_num(*v))))?;
    }
    w.flush()?;
    Ok(())
}

/// Header `t,label,pre,post`; state vectors are `;`-separated.
pub fn write_events<T: Real>(path: &Path, traj: &Trajectory<T>) -> Result<()> {
    let join = |v: &[T]| v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(";");
    let mut w = writer(path)?;
    w.write_record(["t", "label", "pre", "post"])?;
    for e in traj.events() {
        w.write_record([fmt_num(e.t), e.label.clone(), join(&e.pre), join(&e.post)])?;
    }
    w.flush()?;
    Ok(())
}

/// Header `t,q,p,V`.
pub fn write_energy<T: Real>(path: &Path, report: &EnergyReport<T>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "q", "p", "V"])?;
    for (t, e) in &report.samples {
        w.write_record([fmt_num(*t), fmt_num(e.q), fmt_num(e.p), fmt_num(e.v)])?;
    }
    w.flush()?;
    Ok(())
}

/// Header `bin_lo,bin_hi,weight`.
pub fn write_histogram<T: Real>(path: &Path, hist: &OccupancyHistogram<T>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["bin_lo", "bin_hi", "weight"])?;
    for (e, wt) in hist.edges().windows(2).zip(hist.weights()) {
        w.write_record([fmt_num(e[0]), fmt_num(e[1]), fmt_num(*wt)])?;
    }
    w.flush()?;
    Ok(())
}

/// Header `param,multiplier,value,mean_mu_minus_mu0,flag`.
pub fn write_sweep(path: &Path, result: &SweepResult) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["param", "multiplier", "value", "mean_mu_minus_mu0", "flag"])?;
    for r in &result.rows {
        w.write_record([
            r.param.to_string(),
            fmt_num(r.multiplier),
            fmt_num(r.value),
            fmt_num(r.mean_mu_minus_mu0),
            r.flag.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric CSV with a header row into `(header, rows)`.
pub fn read_numeric(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| {
                    crate::Error::Io(format!("{}: {s:?} is not a number", path.display()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        let mut tr = Trajectory::<f64>::new(vec!["x".into(), "mu".into()]);
        tr.push(0.0, &[0.1, 1.0 / 3.0]).unwrap();
        tr.push(0.1 + 0.2, &[std::f64::consts::PI, -1e-300])
            .unwrap();
        write_trajectory(&path, &tr).unwrap();
        let (h, rows) = read_numeric(&path).unwrap();
        assert_eq!(h, ["t", "x", "mu"]);
        assert_eq!(rows[0], [0.0, 0.1, 1.0 / 3.0]);
        assert_eq!(rows[1], [0.1 + 0.2, std::f64::consts::PI, -1e-300]);
    }

    #[test]
    fn sibling_names() {
        assert_eq!(
            sibling(Path::new("/tmp/run.csv"), "events"),
            Path::new("/tmp/run.events.csv")
        );
    }
}
