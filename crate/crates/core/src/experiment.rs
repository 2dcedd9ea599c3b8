//! Monte-Carlo runs and the serial-vs-distributed timing study.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{FilterKind, FilterSettings, Resolved};
use crate::dcp::{group_stream, init_ensemble, step_ensemble};
use crate::error::FilterError;
use crate::metrics::{aggregate, ospa, RunStats};
use crate::models::{ClutterModel, MeasurementSet, StateVector};
use crate::phd::{PhdModels, SerialPhdFilter};
use crate::rng::{self, Domain};
use crate::sim::{generate_measurements, generate_truth, GroundTruth};

/// A labeled position estimate emitted for one scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanEstimate {
    pub label: usize,
    pub state: StateVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub run: usize,
    pub seed: u64,
    pub stats: RunStats,
    pub estimates: Vec<Vec<ScanEstimate>>,
    pub truth: GroundTruth,
}

/// Seed of Monte-Carlo run `run` under `master`.
pub fn run_seed(master: u64, run: usize) -> u64 {
    rng::derive_seed(master, Domain::MonteCarloRun, run as u64)
}

/// Truth and all scans of one run. Both come from streams that no filter uses.
pub fn synthesize(cfg: &Resolved, seed: u64) -> (GroundTruth, Vec<MeasurementSet>) {
    let mut truth_rng = rng::stream(seed, Domain::Truth, 0);
    let truth = generate_truth(&cfg.scenario, &cfg.truth_motion, &mut truth_rng);
    let mut meas_rng = rng::stream(seed, Domain::Measurements, 0);
    let scans = (0..cfg.scenario.scan_count)
        .map(|k| {
            generate_measurements(
                &truth,
                k,
                &cfg.models.sensor,
                &cfg.models.clutter,
                cfg.models.detection_probability,
                &mut meas_rng,
            )
        })
        .collect();
    (truth, scans)
}

/// Runs one filter over prepared scans, returning per-scan estimates and the
/// wall time of the filter loop alone.
pub fn run_filter(
    models: &PhdModels,
    settings: &FilterSettings,
    scans: &[MeasurementSet],
    seed: u64,
) -> Result<(Vec<Vec<ScanEstimate>>, f64), FilterError> {
    let mut out = Vec::with_capacity(scans.len());
    let started;
    match settings.kind {
        FilterKind::Serial => {
            let mut filter = SerialPhdFilter::new(
                settings.total_particles(),
                settings.groups * settings.particles_per_target,
                models,
                1,
                group_stream(seed, 1),
            )?;
            started = Instant::now();
            for z in scans {
                let ex = filter.step(z, models)?;
                out.push(
                    ex.estimates
                        .iter()
                        .map(|e| ScanEstimate {
                            label: e.label,
                            state: e.state,
                        })
                        .collect(),
                );
            }
        }
        FilterKind::Dcp => {
            let mut ensemble = init_ensemble(
                settings.groups,
                settings.particles_per_group,
                settings.exchange,
                settings.particles_per_target,
                models,
                seed,
            )?;
            started = Instant::now();
            for z in scans {
                let report = step_ensemble(&mut ensemble, z, models)?;
                let g = report.fusion.estimate;
                out.push(
                    g.labels
                        .iter()
                        .zip(&g.states)
                        .map(|(&label, &state)| ScanEstimate { label, state })
                        .collect(),
                );
            }
        }
    }
    Ok((out, started.elapsed().as_secs_f64()))
}

/// One end-to-end run: synthesize, filter, score.
pub fn run_once(cfg: &Resolved, settings: &FilterSettings, run: usize) -> Result<RunOutput, FilterError> {
    let seed = run_seed(cfg.seed, run);
    let (truth, scans) = synthesize(cfg, seed);
    let (estimates, wall_time) = run_filter(&cfg.models, settings, &scans, seed)?;
    let ospa_series = estimates
        .iter()
        .enumerate()
        .map(|(k, est)| {
            let pts: Vec<[f64; 2]> = est.iter().map(|e| e.state.position()).collect();
            ospa(&truth.positions(k), &pts, &cfg.ospa)
        })
        .collect();
    let stats = RunStats {
        ospa: ospa_series,
        true_count: truth.counts(),
        estimated_count: estimates.iter().map(Vec::len).collect(),
        wall_time,
    };
    Ok(RunOutput {
        run,
        seed,
        stats,
        estimates,
        truth,
    })
}

/// `mc_runs` independent runs. With `parallel` the runs share the rayon pool;
/// results are identical either way, only wall times differ.
pub fn run_experiment(
    cfg: &Resolved,
    settings: &FilterSettings,
    mc_runs: usize,
    parallel: bool,
) -> Result<Vec<RunOutput>, FilterError> {
    if parallel {
        (0..mc_runs).into_par_iter().map(|r| run_once(cfg, settings, r)).collect()
    } else {
        (0..mc_runs).map(|r| run_once(cfg, settings, r)).collect()
    }
}

/// One row of the timing study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub groups: usize,
    pub total_particles: usize,
    pub clutter_rate: f64,
    pub mean_wall_time: f64,
    pub median_wall_time: f64,
    pub mean_ospa: f64,
    pub std_ospa: f64,
    /// Median serial time over this row's median time.
    pub speedup: f64,
}

fn scaled(base: &FilterSettings, kind: FilterKind, groups: usize, budget_groups: usize) -> Result<FilterSettings, FilterError> {
    let total = base.total_particles();
    let per_target_total = base.groups * base.particles_per_target;
    if !total.is_multiple_of(budget_groups) || !per_target_total.is_multiple_of(budget_groups) {
        return Err(FilterError::parameter(
            "groups",
            format!("particle budget {total} (per target {per_target_total}) is not divisible by K = {budget_groups}"),
        ));
    }
    let m = total / budget_groups;
    let exchange = (base.exchange * m / base.particles_per_group).min((m / 2).saturating_sub(1));
    Ok(FilterSettings {
        kind,
        groups,
        particles_per_group: m,
        particles_per_target: per_target_total / budget_groups,
        exchange,
    })
}

fn bench_row(
    cfg: &Resolved,
    method: String,
    settings: &FilterSettings,
    repeats: usize,
) -> Result<(BenchRow, f64), FilterError> {
    let runs = run_experiment(cfg, settings, repeats, false)?;
    let stats: Vec<RunStats> = runs.into_iter().map(|r| r.stats).collect();
    let summary = aggregate(&stats);
    let row = BenchRow {
        method,
        groups: settings.groups,
        total_particles: settings.total_particles(),
        clutter_rate: cfg.models.clutter.rate,
        mean_wall_time: summary.mean_wall_time,
        median_wall_time: summary.median_wall_time,
        mean_ospa: summary.mean_ospa,
        std_ospa: summary.std_ospa,
        speedup: 1.0,
    };
    let t = row.median_wall_time;
    Ok((row, t))
}

/// Times the serial filter at the configured total budget against the
/// distributed filter for each `K` in `group_counts` (same total budget,
/// split evenly), plus a serial filter holding only one group's share
/// (`partPHD`). One block of rows per clutter rate; repeats run sequentially.
pub fn bench(
    cfg: &Resolved,
    group_counts: &[usize],
    repeats: usize,
    clutter_rates: &[f64],
) -> Result<Vec<BenchRow>, FilterError> {
    if repeats == 0 {
        return Err(FilterError::parameter("repeats", "must be >= 1"));
    }
    let base = cfg.filter;
    let mut rows = Vec::new();
    for &rate in clutter_rates {
        let mut cfg = cfg.clone();
        cfg.models.clutter = ClutterModel::new(rate, cfg.models.clutter.bearing, cfg.models.clutter.range)?;
        let serial = scaled(&base, FilterKind::Serial, 1, 1)?;
        let (mut serial_row, serial_time) = bench_row(&cfg, "PHD".into(), &serial, repeats)?;
        serial_row.speedup = 1.0;
        rows.push(serial_row);
        for &k in group_counts {
            let dcp = scaled(&base, FilterKind::Dcp, k, k)?;
            let (mut row, t) = bench_row(&cfg, format!("DCPPHD(K={k})"), &dcp, repeats)?;
            row.speedup = serial_time / t;
            rows.push(row);
        }
        for &k in group_counts.iter().filter(|&&k| k > 1) {
            let part = scaled(&base, FilterKind::Serial, 1, k)?;
            let (mut row, t) = bench_row(&cfg, format!("partPHD(1/{k})"), &part, repeats)?;
            row.speedup = serial_time / t;
            rows.push(row);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    fn small() -> Resolved {
        let mut c = Config::default_scenario();
        c.scenario.scan_count = 12;
        c.scenario.tracks.truncate(2);
        c.scenario.tracks[1].death = 12;
        c.scenario.tracks[0].death = 12;
        c.filter.particles_per_group = 100;
        c.filter.particles_per_target = 40;
        c.filter.exchange = 10;
        c.validate().unwrap()
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = small();
        let a = run_once(&cfg, &cfg.filter, 0).unwrap();
        let b = run_once(&cfg, &cfg.filter, 0).unwrap();
        assert_eq!(a.estimates, b.estimates);
        assert_eq!(a.stats.ospa, b.stats.ospa);
        assert_eq!(a.stats.ospa.len(), 12);
    }

    #[test]
    fn parallel_runs_match_sequential() {
        let cfg = small();
        let a = run_experiment(&cfg, &cfg.filter, 3, true).unwrap();
        let b = run_experiment(&cfg, &cfg.filter, 3, false).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.estimates, y.estimates);
            assert_eq!(x.seed, y.seed);
        }
        assert_ne!(a[0].seed, a[1].seed);
    }

    #[test]
    fn serial_gets_whole_budget() {
        let cfg = small();
        let s = scaled(&cfg.filter, FilterKind::Serial, 1, 1).unwrap();
        assert_eq!((s.particles_per_group, s.particles_per_target), (400, 160));
        let d = scaled(&cfg.filter, FilterKind::Dcp, 4, 4).unwrap();
        assert_eq!((d.particles_per_group, d.particles_per_target, d.exchange), (100, 40, 10));
        assert!(scaled(&cfg.filter, FilterKind::Dcp, 3, 3).is_err());
    }

    #[test]
    fn bench_layout() {
        let cfg = small();
        let rows = bench(&cfg, &[1, 2], 1, &[0.0, 5.0]).unwrap();
        let names: Vec<_> = rows.iter().map(|r| (r.method.as_str(), r.clutter_rate)).collect();
        assert_eq!(
            names,
            vec![
                ("PHD", 0.0),
                ("DCPPHD(K=1)", 0.0),
                ("DCPPHD(K=2)", 0.0),
                ("partPHD(1/2)", 0.0),
                ("PHD", 5.0),
                ("DCPPHD(K=1)", 5.0),
                ("DCPPHD(K=2)", 5.0),
                ("partPHD(1/2)", 5.0),
            ]
        );
        assert!(rows.iter().all(|r| r.total_particles > 0 && r.speedup.is_finite()));
    }
}
