//! `dcphd` command-line front end.

mod load;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use sha2::{Digest, Sha256};
use toml::Value;

use dcphd::config::{Config, FilterKind};
use dcphd::experiment::{bench, run_experiment, run_seed, synthesize};
use dcphd::metrics::{aggregate, RunStats};

use load::{Loaded, Override, Source};

#[derive(Parser)]
#[command(name = "dcphd", version, about = "Particle PHD multi-target tracking, serial and distributed")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run Monte-Carlo experiments and write per-scan results.
    Run(RunArgs),
    /// Time the serial filter against the distributed filter.
    Bench(BenchArgs),
    /// Parse and check a configuration without running it.
    Validate(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Serial,
    Dcp,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML). Without it the built-in default scenario is used.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (scenario.seed).
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Filter variant (filter.kind).
    #[arg(long, value_enum)]
    filter: Option<KindArg>,
    /// Number of groups K (filter.groups).
    #[arg(long, value_name = "K")]
    groups: Option<usize>,
    /// Particles exchanged per ring hop L (filter.exchange).
    #[arg(long, value_name = "L")]
    exchange: Option<usize>,
    /// Expected clutter returns per scan (clutter.rate).
    #[arg(long, value_name = "R")]
    clutter: Option<f64>,
    /// Monte-Carlo runs (scenario.runs).
    #[arg(long, value_name = "N")]
    runs: Option<usize>,
    /// Dotted-path override, e.g. `--set sensor.sigma_range=2.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Also write the simulated truth.csv and measurements.csv.
    #[arg(long)]
    export_scenario: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Group counts to compare against the serial filter.
    #[arg(long, value_name = "K,..", value_delimiter = ',', default_value = "1,2,4")]
    k_list: Vec<usize>,
    /// Timed runs per configuration.
    #[arg(long, value_name = "N", default_value_t = 5)]
    repeats: usize,
    /// Clutter rates, one block of rows each.
    #[arg(long, value_name = "R,..", value_delimiter = ',', default_value = "0,10,20")]
    clutter_list: Vec<f64>,
}

impl Common {
    fn overrides(&self) -> Result<Vec<Override>> {
        let mut v = Vec::new();
        if let Some(s) = self.seed {
            let s = i64::try_from(s).context("--seed must fit in a signed 64-bit TOML integer")?;
            v.push(Override::flag("--seed", "scenario.seed", Value::Integer(s)));
        }
        if let Some(k) = self.filter {
            let name = match k {
                KindArg::Serial => "serial",
                KindArg::Dcp => "dcp",
            };
            v.push(Override::flag("--filter", "filter.kind", Value::String(name.into())));
        }
        let int = |x: usize| Value::Integer(x as i64);
        if let Some(k) = self.groups {
            v.push(Override::flag("--groups", "filter.groups", int(k)));
        }
        if let Some(l) = self.exchange {
            v.push(Override::flag("--exchange", "filter.exchange", int(l)));
        }
        if let Some(r) = self.clutter {
            v.push(Override::flag("--clutter", "clutter.rate", Value::Float(r)));
        }
        if let Some(n) = self.runs {
            v.push(Override::flag("--runs", "scenario.runs", int(n)));
        }
        for s in &self.set {
            v.push(Override::parse(s)?);
        }
        Ok(v)
    }

    fn load(&self) -> Result<Loaded> {
        let source = Source::read(self.config.as_deref())?;
        source.load(&self.overrides()?)
    }
}

/// SHA-256 of the resolved configuration serialized as JSON.
fn digest(config: &Config) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn manifest(loaded: &Loaded, started: u64, finished: u64) -> serde_json::Value {
    let f = &loaded.resolved.filter;
    json!({
        "config_digest": format!("sha256:{}", digest(&loaded.config)),
        "seed": loaded.resolved.seed,
        "filter": f.kind.to_string(),
        "groups": f.groups,
        "particles_per_group": f.particles_per_group,
        "exchange": f.exchange,
        "particles_per_target": f.particles_per_target,
        "total_particles": f.total_particles(),
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix": started,
        "finished_unix": finished,
    })
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let loaded = args.common.load()?;
    let cfg = &loaded.resolved;
    let started = unix_now();
    let runs = run_experiment(cfg, &cfg.filter, cfg.runs, true)?;
    let finished = unix_now();

    let stats: Vec<RunStats> = runs.iter().map(|r| r.stats.clone()).collect();
    let s = aggregate(&stats);
    let card: Vec<f64> = stats.iter().map(RunStats::mean_abs_cardinality_error).collect();
    let summary = json!({
        "manifest": manifest(&loaded, started, finished),
        "config": loaded.config,
        "results": {
            "runs": s.runs,
            "scan_count": cfg.scenario.scan_count,
            "mean_ospa": s.mean_ospa,
            "std_ospa": s.std_ospa,
            "mean_abs_cardinality_error": dcphd::metrics::mean(&card),
            "mean_wall_time": s.mean_wall_time,
            "median_wall_time": s.median_wall_time,
        },
        "per_run": runs.iter().map(|r| json!({
            "run": r.run,
            "seed": r.seed,
            "mean_ospa": r.stats.mean_ospa(),
            "mean_abs_cardinality_error": r.stats.mean_abs_cardinality_error(),
            "wall_time": r.stats.wall_time,
        })).collect::<Vec<_>>(),
    });
    output::check_json(&summary, "$")?;

    let mut files = vec![
        ("per_scan.csv", output::per_scan_csv(&runs)?),
        ("estimates.csv", output::estimates_csv(&runs)?),
        ("summary.json", serde_json::to_string_pretty(&summary)? + "\n"),
    ];
    if args.export_scenario {
        let synth: Vec<_> = (0..cfg.runs).map(|r| (r, synthesize(cfg, run_seed(cfg.seed, r)))).collect();
        let truth: Vec<_> = synth.iter().map(|(r, (t, _))| (*r, t.clone())).collect();
        let meas: Vec<_> = synth.into_iter().map(|(r, (_, z))| (r, z)).collect();
        files.push(("truth.csv", output::truth_csv(&truth)?));
        files.push(("measurements.csv", output::measurements_csv(&meas)?));
    }
    output::write_all(&args.out, &files)?;

    println!(
        "{} filter, {} runs x {} scans: mean OSPA {:.4} (std {:.4}), mean filter time {:.4}s",
        cfg.filter.kind, s.runs, cfg.scenario.scan_count, s.mean_ospa, s.std_ospa, s.mean_wall_time
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let loaded = args.common.load()?;
    let rows = bench(&loaded.resolved, &args.k_list, args.repeats, &args.clutter_list)?;
    let csv = output::bench_csv(&rows)?;
    output::write_all(&args.out, &[("bench.csv", csv)])?;
    println!(
        "{:<16} {:>9} {:>6} {:>12} {:>10} {:>10} {:>8}",
        "method", "particles", "r", "median time", "OSPA", "std", "speedup"
    );
    for r in &rows {
        println!(
            "{:<16} {:>9} {:>6} {:>11.4}s {:>10.4} {:>10.4} {:>8.2}",
            r.method, r.total_particles, r.clutter_rate, r.median_wall_time, r.mean_ospa, r.std_ospa, r.speedup
        );
    }
    println!("wrote {}", args.out.join("bench.csv").display());
    Ok(())
}

fn cmd_validate(args: &Common) -> Result<()> {
    let loaded = args.load()?;
    let r = &loaded.resolved;
    let f = &r.filter;
    let name = args.config.as_deref().map_or(Path::new("<built-in default>"), |p| p);
    println!(
        "{}: ok ({} scans, {} tracks, {} filter, K={} M={} L={} R={}, digest {})",
        name.display(),
        r.scenario.scan_count,
        r.scenario.tracks.len(),
        f.kind,
        f.groups,
        f.particles_per_group,
        f.exchange,
        f.particles_per_target,
        &digest(&loaded.config)[..16]
    );
    if f.kind == FilterKind::Serial && f.groups > 1 {
        println!(
            "note: serial filter uses the whole budget ({} particles, {} per target)",
            f.total_particles(),
            f.groups * f.particles_per_target
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
