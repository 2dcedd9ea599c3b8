//! Result files. Everything is rendered in memory first, checked for
//! non-finite numbers, then moved into place one file at a time.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use dcphd::experiment::{BenchRow, RunOutput};
use dcphd::models::MeasurementSet;
use dcphd::sim::GroundTruth;

/// 17 significant digits, enough to round-trip any f64.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn finite(what: &str, v: f64) -> Result<f64> {
    if !v.is_finite() {
        bail!("refusing to write non-finite value {v} in {what}");
    }
    Ok(v)
}

pub fn per_scan_csv(runs: &[RunOutput]) -> Result<String> {
    let mut s = String::from("run,scan,true_n,est_n,ospa\n");
    for r in runs {
        for (k, &d) in r.stats.ospa.iter().enumerate() {
            let d = finite("per_scan.csv", d)?;
            writeln!(
                s,
                "{},{k},{},{},{}",
                r.run,
                r.stats.true_count[k],
                r.stats.estimated_count[k],
                num(d)
            )?;
        }
    }
    Ok(s)
}

pub fn estimates_csv(runs: &[RunOutput]) -> Result<String> {
    let mut s = String::from("run,scan,label,x,y\n");
    for r in runs {
        for (k, scan) in r.estimates.iter().enumerate() {
            for e in scan {
                let x = finite("estimates.csv", e.state.x)?;
                let y = finite("estimates.csv", e.state.y)?;
                writeln!(s, "{},{k},{},{},{}", r.run, e.label, num(x), num(y))?;
            }
        }
    }
    Ok(s)
}

pub fn truth_csv(items: &[(usize, GroundTruth)]) -> Result<String> {
    let mut s = String::from("run,scan,track,x,vx,y,vy\n");
    for (run, truth) in items {
        for (k, live) in truth.scans.iter().enumerate() {
            for (id, st) in live {
                let [x, vx, y, vy] = st.to_array().map(|v| finite("truth.csv", v));
                writeln!(s, "{run},{k},{id},{},{},{},{}", num(x?), num(vx?), num(y?), num(vy?))?;
            }
        }
    }
    Ok(s)
}

pub fn measurements_csv(items: &[(usize, Vec<MeasurementSet>)]) -> Result<String> {
    let mut s = String::from("run,scan,label,range,bearing\n");
    for (run, scans) in items {
        for (k, z) in scans.iter().enumerate() {
            for m in z.iter() {
                let r = finite("measurements.csv", m.range)?;
                let b = finite("measurements.csv", m.bearing)?;
                writeln!(s, "{run},{k},{},{},{}", m.label, num(r), num(b))?;
            }
        }
    }
    Ok(s)
}

pub fn bench_csv(rows: &[BenchRow]) -> Result<String> {
    let mut s = String::from(
        "method,groups,total_particles,clutter_rate,mean_wall_time,median_wall_time,mean_ospa,std_ospa,speedup\n",
    );
    for r in rows {
        let vals = [r.clutter_rate, r.mean_wall_time, r.median_wall_time, r.mean_ospa, r.std_ospa, r.speedup];
        for v in vals {
            finite("bench.csv", v)?;
        }
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.method,
            r.groups,
            r.total_particles,
            num(r.clutter_rate),
            num(r.mean_wall_time),
            num(r.median_wall_time),
            num(r.mean_ospa),
            num(r.std_ospa),
            num(r.speedup)
        )?;
    }
    Ok(s)
}

/// Fails if any number anywhere in `v` is not finite. serde_json would
/// otherwise write them as `null`.
pub fn check_json(v: &serde_json::Value, path: &str) -> Result<()> {
    match v {
        serde_json::Value::Number(n) => {
            if n.as_f64().is_some_and(|f| !f.is_finite()) {
                bail!("non-finite number at {path}");
            }
        }
        serde_json::Value::Null => bail!("null (non-finite number?) at {path}"),
        serde_json::Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                check_json(x, &format!("{path}[{i}]"))?;
            }
        }
        serde_json::Value::Object(o) => {
            for (k, x) in o {
                check_json(x, &format!("{path}.{k}"))?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// Writes every `(name, contents)` pair into `dir`. Each file is written to
/// a temporary sibling and renamed, so readers never see a partial file.
pub fn write_all(dir: &Path, files: &[(&str, String)]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let mut tmp = tempfile::Builder::new()
            .prefix(&format!(".{name}."))
            .tempfile_in(dir)
            .with_context(|| format!("cannot stage {name} in {}", dir.display()))?;
        tmp.write_all(contents.as_bytes())?;
        tmp.as_file().sync_all()?;
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, target) in staged {
        tmp.persist(&target)
            .with_context(|| format!("cannot write {}", target.display()))?;
    }
    Ok(())
}
