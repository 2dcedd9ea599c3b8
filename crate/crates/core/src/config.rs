//! Experiment configuration: the on-disk schema and its validated form.
//!
//! The schema is format-agnostic serde; the command-line front end reads it
//! from TOML. Every section is required so that a run is fully described by
//! its file.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::metrics::OspaParams;
use crate::models::{BirthModel, ClutterModel, MotionModel, SensorModel, StateVector};
use crate::phd::PhdModels;
use crate::sim::{Scenario, TrackSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioSection,
    pub motion: MotionSection,
    pub sensor: SensorSection,
    pub clutter: ClutterSection,
    pub birth: BirthSection,
    pub filter: FilterSection,
    pub ospa: OspaSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub scan_count: usize,
    pub seed: u64,
    pub runs: usize,
    /// Process-noise stds `[x, y]` used for the true trajectories. Defaults
    /// to the filter's motion noise when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_noise: Option<[f64; 2]>,
    pub tracks: Vec<TrackSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackSection {
    pub initial: [f64; 4],
    pub birth: usize,
    pub death: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionSection {
    pub period: f64,
    pub sigma_wx: f64,
    pub sigma_wy: f64,
    pub survival_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    pub position: [f64; 2],
    pub sigma_range: f64,
    pub sigma_bearing: f64,
    pub detection_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClutterSection {
    pub rate: f64,
    pub bearing: [f64; 2],
    pub range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BirthSection {
    pub mean: [f64; 4],
    pub covariance: [[f64; 4]; 4],
    pub expected_births: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Serial,
    Dcp,
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::Serial => "serial",
            FilterKind::Dcp => "dcp",
        })
    }
}

/// Particle budget. `groups * particles_per_group` is the total initial
/// budget; a serial filter gets the whole budget in one population
/// (`groups * particles_per_group` initial particles and
/// `groups * particles_per_target` per estimated target).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub kind: FilterKind,
    pub groups: usize,
    pub particles_per_group: usize,
    pub particles_per_target: usize,
    pub exchange: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OspaSection {
    pub p: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn bad(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.into(),
        message: message.into(),
    }
}

/// Filter budget after validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSettings {
    pub kind: FilterKind,
    pub groups: usize,
    pub particles_per_group: usize,
    pub particles_per_target: usize,
    pub exchange: usize,
}

impl FilterSettings {
    pub fn total_particles(&self) -> usize {
        self.groups * self.particles_per_group
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.groups == 0 {
            return Err(bad("filter.groups", "need at least one group"));
        }
        if self.particles_per_group < 2 {
            return Err(bad("filter.particles_per_group", "must be >= 2"));
        }
        if self.particles_per_target == 0 {
            return Err(bad("filter.particles_per_target", "must be >= 1"));
        }
        if 2 * self.exchange >= self.particles_per_group {
            return Err(bad(
                "filter.exchange",
                format!(
                    "exchanged particles per hop must satisfy L < M/2 (L = {}, M = {})",
                    self.exchange, self.particles_per_group
                ),
            ));
        }
        Ok(())
    }
}

/// A validated configuration ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub scenario: Scenario,
    pub models: PhdModels,
    /// Motion model for the true trajectories.
    pub truth_motion: MotionModel,
    pub filter: FilterSettings,
    pub ospa: OspaParams,
    pub seed: u64,
    pub runs: usize,
}

fn field_err(prefix: &str) -> impl Fn(crate::ModelError) -> ConfigError + '_ {
    move |e| match e {
        crate::ModelError::Invalid { field, reason } => {
            let name = field.split_once('.').map_or(field, |(_, rest)| rest);
            bad(format!("{prefix}.{name}"), reason)
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<Resolved, ConfigError> {
        let s = &self.scenario;
        if s.scan_count == 0 {
            return Err(bad("scenario.scan_count", "must be >= 1"));
        }
        if s.runs == 0 {
            return Err(bad("scenario.runs", "must be >= 1"));
        }
        let mut tracks = Vec::with_capacity(s.tracks.len());
        for (i, t) in s.tracks.iter().enumerate() {
            let initial = StateVector::from_array(t.initial);
            if !initial.is_finite() {
                return Err(bad(format!("scenario.tracks[{i}].initial"), "must be finite"));
            }
            if t.birth >= t.death {
                return Err(bad(
                    format!("scenario.tracks[{i}]"),
                    format!("birth scan {} must precede death scan {}", t.birth, t.death),
                ));
            }
            if t.death > s.scan_count {
                return Err(bad(
                    format!("scenario.tracks[{i}].death"),
                    format!("death scan {} exceeds scan_count {}", t.death, s.scan_count),
                ));
            }
            tracks.push(TrackSpec {
                initial,
                birth: t.birth,
                death: t.death,
            });
        }

        let m = &self.motion;
        let motion = MotionModel::new(m.period, m.sigma_wx, m.sigma_wy, m.survival_probability)
            .map_err(field_err("motion"))?;
        let truth_motion = match s.truth_noise {
            Some([wx, wy]) => MotionModel::new(m.period, wx, wy, m.survival_probability)
                .map_err(|e| bad("scenario.truth_noise", e.to_string()))?,
            None => motion,
        };
        let se = &self.sensor;
        let sensor = SensorModel::new(se.position, se.sigma_range, se.sigma_bearing)
            .map_err(field_err("sensor"))?;
        if !(0.0..=1.0).contains(&se.detection_probability) {
            return Err(bad("sensor.detection_probability", "must lie in [0, 1]"));
        }
        let c = &self.clutter;
        let clutter = ClutterModel::new(c.rate, c.bearing, c.range).map_err(field_err("clutter"))?;
        let b = &self.birth;
        let birth = BirthModel::new(StateVector::from_array(b.mean), b.covariance, b.expected_births)
            .map_err(field_err("birth"))?;
        let models = PhdModels::new(motion, sensor, birth, clutter, se.detection_probability)
            .map_err(|e| bad("sensor.detection_probability", e.to_string()))?;

        let f = &self.filter;
        let filter = FilterSettings {
            kind: f.kind,
            groups: f.groups,
            particles_per_group: f.particles_per_group,
            particles_per_target: f.particles_per_target,
            exchange: f.exchange,
        };
        filter.check()?;
        let ospa = OspaParams::new(self.ospa.p, self.ospa.c).map_err(field_err("ospa"))?;

        Ok(Resolved {
            scenario: Scenario {
                scan_count: s.scan_count,
                tracks,
            },
            models,
            truth_motion,
            filter,
            ospa,
            seed: s.seed,
            runs: s.runs,
        })
    }

    /// Five staggered tracks over 50 scans seen by a range-bearing sensor at
    /// the origin, K = 4 groups of 500 particles, 200 particles per target.
    pub fn default_scenario() -> Self {
        let track = |initial: [f64; 4], birth, death| TrackSection { initial, birth, death };
        Config {
            scenario: ScenarioSection {
                scan_count: 50,
                seed: 2014,
                runs: 20,
                truth_noise: None,
                tracks: vec![
                    track([2.0, 3.0, -1.0, -3.0], 0, 50),
                    track([-1.5, 2.5, 2.0, -3.5], 5, 40),
                    track([1.0, 3.5, 1.0, -2.5], 10, 50),
                    track([-2.0, 2.0, -2.0, -3.0], 15, 35),
                    track([0.5, 3.0, 0.5, -4.0], 20, 45),
                ],
            },
            motion: MotionSection {
                period: 1.0,
                sigma_wx: 0.025,
                sigma_wy: 4.0,
                survival_probability: 0.9,
            },
            sensor: SensorSection {
                position: [0.0, 0.0],
                sigma_range: 5.0,
                sigma_bearing: 0.05,
                detection_probability: 1.0,
            },
            clutter: ClutterSection {
                rate: 0.0,
                bearing: [-FRAC_PI_2, FRAC_PI_2],
                range: [0.0, 200.0],
            },
            birth: BirthSection {
                mean: [0.0, 3.0, 0.0, -3.0],
                covariance: [
                    [10.0, 0.0, 0.0, 0.0],
                    [0.0, 1.0, 0.0, 0.0],
                    [0.0, 0.0, 10.0, 0.0],
                    [0.0, 0.0, 0.0, 1.0],
                ],
                expected_births: 0.2,
            },
            filter: FilterSection {
                kind: FilterKind::Dcp,
                groups: 4,
                particles_per_group: 500,
                particles_per_target: 200,
                exchange: 50,
            },
            ospa: OspaSection { p: 1.0, c: 100.0 },
        }
    }
}
