//! Ground truth and measurement synthesis.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::models::{
    cv_transition, generate_clutter, measure, ClutterModel, MeasurementSet, MotionModel, SensorModel,
    StateVector,
};

/// A scripted track: present in scans `birth..death`, starting from `initial`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackSpec {
    pub initial: StateVector,
    pub birth: usize,
    pub death: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub scan_count: usize,
    pub tracks: Vec<TrackSpec>,
}

/// Live `(track id, state)` pairs per scan; track ids index `Scenario::tracks`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub scans: Vec<Vec<(usize, StateVector)>>,
}

impl GroundTruth {
    pub fn count(&self, scan: usize) -> usize {
        self.scans[scan].len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.scans.iter().map(Vec::len).collect()
    }

    pub fn positions(&self, scan: usize) -> Vec<[f64; 2]> {
        self.scans[scan].iter().map(|(_, s)| s.position()).collect()
    }
}

/// Propagates every track with the motion model from its birth scan. Tracks
/// draw from `rng` in declaration order.
pub fn generate_truth<R: Rng + ?Sized>(scenario: &Scenario, motion: &MotionModel, rng: &mut R) -> GroundTruth {
    let mut scans = vec![Vec::new(); scenario.scan_count];
    for (id, track) in scenario.tracks.iter().enumerate() {
        let end = track.death.min(scenario.scan_count);
        let mut state = track.initial;
        for (k, scan) in scans.iter_mut().enumerate().take(end).skip(track.birth) {
            if k > track.birth {
                state = cv_transition(&state, motion, rng);
            }
            scan.push((id, state));
        }
    }
    GroundTruth { scans }
}

/// Detections of the live tracks (each kept with probability `p_D`) plus
/// Poisson clutter, shuffled and labeled `1..=M_k`.
pub fn generate_measurements<R: Rng + ?Sized>(
    truth: &GroundTruth,
    scan: usize,
    sensor: &SensorModel,
    clutter: &ClutterModel,
    detection_probability: f64,
    rng: &mut R,
) -> MeasurementSet {
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (_, state) in &truth.scans[scan] {
        if rng.random::<f64>() < detection_probability {
            let z = measure(state, sensor, rng);
            points.push((z.range, z.bearing));
        }
    }
    points.extend(generate_clutter(clutter, rng).into_iter().map(|z| (z.range, z.bearing)));
    points.shuffle(rng);
    MeasurementSet::from_points(points)
}
