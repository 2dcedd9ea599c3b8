use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dcphd::config::Config;

fn repo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml")
}

fn dcphd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcphd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Smaller budget so debug builds stay quick.
const SMALL: [&str; 6] = [
    "--set",
    "filter.particles_per_group=100",
    "--set",
    "filter.particles_per_target=40",
    "--set",
    "filter.exchange=10",
];

fn run_into(dir: &Path, extra: &[&str]) -> Output {
    let cfg = repo_config();
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--runs", "2", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    dcphd(&args)
}

fn json_shape(v: &serde_json::Value, prefix: &str, out: &mut BTreeSet<String>) {
    match v {
        serde_json::Value::Object(o) => {
            for (k, x) in o {
                json_shape(x, &format!("{prefix}.{k}"), out);
            }
        }
        _ => {
            out.insert(prefix.to_string());
        }
    }
}

#[test]
fn shipped_config_is_the_default_scenario() {
    let text = fs::read_to_string(repo_config()).unwrap();
    let parsed: Config = toml::from_str(&text).unwrap();
    assert_eq!(parsed, Config::default_scenario());
}

#[test]
fn validate_accepts_default() {
    let cfg = repo_config();
    let o = dcphd(&["validate", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = dcphd(&["validate"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn validate_rejects_half_exchange() {
    let cfg = repo_config();
    let o = dcphd(&["validate", "--config", cfg.to_str().unwrap(), "--exchange", "250"]);
    assert!(!o.status.success());
    let e = stderr(&o);
    assert!(e.contains("filter.exchange") && e.contains("L < M/2"), "{e}");

    // from the file itself the message carries the line number
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(&cfg).unwrap().replace("exchange = 50", "exchange = 250");
    let line = text.lines().position(|l| l.starts_with("exchange = 250")).unwrap() + 1;
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, text).unwrap();
    let o = dcphd(&["validate", "--config", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains(&format!("bad.toml:{line}: filter.exchange")), "{}", stderr(&o));
}

#[test]
fn validate_names_missing_sensor() {
    let text = fs::read_to_string(repo_config()).unwrap();
    let (head, tail) = text.split_at(text.find("[sensor]").unwrap());
    let tail = &tail[tail.find("[clutter]").unwrap()..];
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("nosensor.toml");
    fs::write(&p, format!("{head}{tail}")).unwrap();
    let o = dcphd(&["validate", "--config", p.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("missing field `sensor`"), "{}", stderr(&o));
}

#[test]
fn syntax_errors_point_at_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.toml");
    fs::write(&p, "[scenario]\nscan_count = 50\nseed = = 3\n").unwrap();
    let o = dcphd(&["validate", "--config", p.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn run_writes_consistent_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res");
    let o = run_into(&out, &["--export-scenario"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let per_scan = fs::read_to_string(out.join("per_scan.csv")).unwrap();
    let mut lines = per_scan.lines();
    assert_eq!(lines.next(), Some("run,scan,true_n,est_n,ospa"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2 * 50);
    let est_total: usize = rows.iter().map(|r| r[3].parse::<usize>().unwrap()).sum();
    for r in &rows {
        let d: f64 = r[4].parse().unwrap();
        assert!((0.0..=100.0).contains(&d));
    }

    let estimates = fs::read_to_string(out.join("estimates.csv")).unwrap();
    assert_eq!(estimates.lines().next(), Some("run,scan,label,x,y"));
    assert_eq!(estimates.lines().count() - 1, est_total);

    let truth = fs::read_to_string(out.join("truth.csv")).unwrap();
    let true_total: usize = rows.iter().map(|r| r[2].parse::<usize>().unwrap()).sum();
    assert_eq!(truth.lines().count() - 1, true_total);
    assert!(out.join("measurements.csv").exists());

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let m = &summary["manifest"];
    assert_eq!(m["seed"], 2014);
    assert_eq!(m["filter"], "dcp");
    assert_eq!((m["groups"].as_u64(), m["particles_per_group"].as_u64()), (Some(4), Some(100)));
    assert_eq!((m["exchange"].as_u64(), m["particles_per_target"].as_u64()), (Some(10), Some(40)));
    assert!(m["config_digest"].as_str().unwrap().starts_with("sha256:"));
    assert_eq!(summary["per_run"].as_array().unwrap().len(), 2);
    assert_eq!(summary["results"]["scan_count"], 50);
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run_into(&a, &[]).status.success());
    // a different thread count must not change any number
    let cfg = repo_config();
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--runs", "2", "--out", b.to_str().unwrap()];
    args.extend_from_slice(&SMALL);
    let o = Command::new(env!("CARGO_BIN_EXE_dcphd"))
        .args(&args)
        .env("RAYON_NUM_THREADS", "3")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["per_scan.csv", "estimates.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let digest = |p: &Path| {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("summary.json")).unwrap()).unwrap();
        v["manifest"]["config_digest"].clone()
    };
    assert_eq!(digest(&a), digest(&b));
}

#[test]
fn seed_override_changes_results_not_shape() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run_into(&a, &[]).status.success());
    assert!(run_into(&b, &["--seed", "7"]).status.success());
    assert_ne!(
        fs::read(a.join("estimates.csv")).unwrap(),
        fs::read(b.join("estimates.csv")).unwrap()
    );
    let load = |p: &Path| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(p.join("summary.json")).unwrap()).unwrap()
    };
    let (sa, sb) = (load(&a), load(&b));
    assert_eq!(sb["manifest"]["seed"], 7);
    assert_ne!(sa["manifest"]["config_digest"], sb["manifest"]["config_digest"]);
    let (mut ka, mut kb) = (BTreeSet::new(), BTreeSet::new());
    json_shape(&sa["manifest"], "", &mut ka);
    json_shape(&sb["manifest"], "", &mut kb);
    assert_eq!(ka, kb);
}

#[test]
fn failed_run_leaves_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res");
    let o = run_into(&out, &["--set", "sensor.sigma_range=-1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("sensor.sigma_range"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn bench_emits_one_block_per_clutter_rate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    let cfg = repo_config();
    let mut args = vec![
        "bench",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--k-list",
        "1,2",
        "--repeats",
        "1",
        "--clutter-list",
        "0,5",
    ];
    args.extend_from_slice(&SMALL);
    let o = dcphd(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("bench.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("method,groups,total_particles,clutter_rate"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let methods: Vec<&str> = rows.iter().map(|r| r[0]).collect();
    assert_eq!(
        methods,
        ["PHD", "DCPPHD(K=1)", "DCPPHD(K=2)", "partPHD(1/2)", "PHD", "DCPPHD(K=1)", "DCPPHD(K=2)", "partPHD(1/2)"]
    );
    let totals: Vec<&str> = rows.iter().map(|r| r[2]).take(4).collect();
    assert_eq!(totals, ["400", "400", "400", "200"]);
    assert_eq!(rows[0][8].parse::<f64>().unwrap(), 1.0);
}
