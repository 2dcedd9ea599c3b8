//! Target dynamics, range-bearing sensor, birth and clutter models.
//!
//! All models are immutable once built. Every sampling routine takes the
//! random stream explicitly so that parallel callers can own disjoint streams.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Planar constant-velocity state `[x, vx, y, vy]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVector {
    pub x: f64,
    pub vx: f64,
    pub y: f64,
    pub vy: f64,
}

impl StateVector {
    pub const fn new(x: f64, vx: f64, y: f64, vy: f64) -> Self {
        Self { x, vx, y, vy }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.vx, self.y, self.vy]
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// A single range-bearing detection. `label` is the 1-based index of the
/// detection inside its scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub range: f64,
    pub bearing: f64,
    pub label: usize,
}

/// Measurements of one scan. Labels are `1..=len()` in storage order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeasurementSet {
    measurements: Vec<Measurement>,
}

impl MeasurementSet {
    /// Builds a set from `(range, bearing)` pairs, assigning labels by position.
    pub fn from_points(points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let measurements = points
            .into_iter()
            .enumerate()
            .map(|(i, (range, bearing))| Measurement {
                range,
                bearing,
                label: i + 1,
            })
            .collect();
        Self { measurements }
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Measurement> {
        self.measurements.iter()
    }

    /// Looks a measurement up by its 1-based label.
    pub fn get(&self, label: usize) -> Option<&Measurement> {
        label.checked_sub(1).and_then(|i| self.measurements.get(i))
    }

    pub fn as_slice(&self) -> &[Measurement] {
        &self.measurements
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(TAU);
    if t > PI {
        t -= TAU;
    }
    // rem_euclid maps -pi to pi, which is already the closed end.
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionModel {
    pub period: f64,
    pub sigma_wx: f64,
    pub sigma_wy: f64,
    pub survival_probability: f64,
}

impl MotionModel {
    pub fn new(
        period: f64,
        sigma_wx: f64,
        sigma_wy: f64,
        survival_probability: f64,
    ) -> Result<Self, ModelError> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(ModelError::invalid("motion.period", "must be > 0"));
        }
        if !(sigma_wx >= 0.0 && sigma_wy >= 0.0) {
            return Err(ModelError::invalid("motion.sigma_w", "noise stds must be >= 0"));
        }
        if !(0.0..=1.0).contains(&survival_probability) {
            return Err(ModelError::invalid(
                "motion.survival_probability",
                "must lie in [0, 1]",
            ));
        }
        Ok(Self {
            period,
            sigma_wx,
            sigma_wy,
            survival_probability,
        })
    }

    /// Noiseless propagation `F * state`.
    pub fn propagate_mean(&self, s: &StateVector) -> StateVector {
        let t = self.period;
        StateVector::new(s.x + t * s.vx, s.vx, s.y + t * s.vy, s.vy)
    }

    /// The 4x4 transition matrix, used by tests as an independent oracle.
    pub fn transition_matrix(&self) -> Matrix4<f64> {
        let t = self.period;
        Matrix4::new(
            1.0, t, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, t, //
            0.0, 0.0, 0.0, 1.0,
        )
    }
}

/// Draws `F * state + G * w` with `w ~ N(0, diag(sigma_wx^2, sigma_wy^2))`.
pub fn cv_transition<R: Rng + ?Sized>(
    state: &StateVector,
    motion: &MotionModel,
    rng: &mut R,
) -> StateVector {
    let wx: f64 = motion.sigma_wx * rng.sample::<f64, _>(StandardNormal);
    let wy: f64 = motion.sigma_wy * rng.sample::<f64, _>(StandardNormal);
    let t = motion.period;
    let half_t2 = 0.5 * t * t;
    let m = motion.propagate_mean(state);
    StateVector::new(m.x + half_t2 * wx, m.vx + t * wx, m.y + half_t2 * wy, m.vy + t * wy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub position: [f64; 2],
    pub sigma_range: f64,
    pub sigma_bearing: f64,
}

impl SensorModel {
    pub fn new(position: [f64; 2], sigma_range: f64, sigma_bearing: f64) -> Result<Self, ModelError> {
        if !(sigma_range > 0.0 && sigma_range.is_finite()) {
            return Err(ModelError::invalid("sensor.sigma_range", "must be > 0"));
        }
        if !(sigma_bearing > 0.0 && sigma_bearing.is_finite()) {
            return Err(ModelError::invalid("sensor.sigma_bearing", "must be > 0"));
        }
        if !position.iter().all(|v| v.is_finite()) {
            return Err(ModelError::invalid("sensor.position", "must be finite"));
        }
        Ok(Self {
            position,
            sigma_range,
            sigma_bearing,
        })
    }

    /// Noiseless `(range, bearing)` of a state. A target sitting exactly on
    /// the sensor has bearing 0.
    pub fn project(&self, state: &StateVector) -> (f64, f64) {
        let dx = state.x - self.position[0];
        let dy = state.y - self.position[1];
        let range = dx.hypot(dy);
        let bearing = if dx == 0.0 && dy == 0.0 {
            0.0
        } else {
            wrap_angle(dy.atan2(dx))
        };
        (range, bearing)
    }

    /// Cartesian point for a `(range, bearing)` pair.
    pub fn to_cartesian(&self, range: f64, bearing: f64) -> [f64; 2] {
        [
            self.position[0] + range * bearing.cos(),
            self.position[1] + range * bearing.sin(),
        ]
    }
}

/// Noisy range-bearing detection of `state`. The returned label is 0; the
/// scan assembler assigns real labels.
///
/// A negative noisy range is reflected through the sensor (`|r|`, bearing
/// rotated by pi), which denotes the same Cartesian point.
pub fn measure<R: Rng + ?Sized>(state: &StateVector, sensor: &SensorModel, rng: &mut R) -> Measurement {
    let (r, b) = sensor.project(state);
    let nr: f64 = rng.sample(StandardNormal);
    let nb: f64 = rng.sample(StandardNormal);
    let mut range = r + sensor.sigma_range * nr;
    let mut bearing = b + sensor.sigma_bearing * nb;
    if range < 0.0 {
        range = -range;
        bearing += PI;
    }
    Measurement {
        range,
        bearing: wrap_angle(bearing),
        label: 0,
    }
}

const INV_TWO_PI: f64 = 1.0 / TAU;

/// Sensor density `g(z | x)`: independent Gaussians on the range residual and
/// the wrapped bearing residual.
pub fn likelihood(z: &Measurement, state: &StateVector, sensor: &SensorModel) -> f64 {
    let (r, b) = sensor.project(state);
    likelihood_projected(z, r, b, sensor)
}

/// [`likelihood`] for a state whose `(range, bearing)` is already known.
pub(crate) fn likelihood_projected(z: &Measurement, range: f64, bearing: f64, sensor: &SensorModel) -> f64 {
    let er = (z.range - range) / sensor.sigma_range;
    let eb = wrap_angle(z.bearing - bearing) / sensor.sigma_bearing;
    INV_TWO_PI / (sensor.sigma_range * sensor.sigma_bearing) * (-0.5 * (er * er + eb * eb)).exp()
}

/// Gaussian birth intensity `expected_births * N(mean, covariance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthModel {
    mean: StateVector,
    covariance: Matrix4<f64>,
    factor: Matrix4<f64>,
    expected_births: f64,
}

impl BirthModel {
    /// Validates the covariance (symmetric PSD) and caches a square-root
    /// factor `A` with `A * A^T = covariance`.
    pub fn new(mean: StateVector, covariance: [[f64; 4]; 4], expected_births: f64) -> Result<Self, ModelError> {
        if !mean.is_finite() {
            return Err(ModelError::invalid("birth.mean", "must be finite"));
        }
        if !(expected_births >= 0.0 && expected_births.is_finite()) {
            return Err(ModelError::invalid("birth.expected_births", "must be >= 0"));
        }
        let cov = Matrix4::from_fn(|i, j| covariance[i][j]);
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::invalid("birth.covariance", "must be finite"));
        }
        let scale = cov.amax().max(1.0);
        if (cov - cov.transpose()).amax() > 1e-12 * scale {
            return Err(ModelError::invalid("birth.covariance", "must be symmetric"));
        }
        let eig = SymmetricEigen::new(cov);
        if eig.eigenvalues.iter().any(|&l| l < -1e-9 * scale) {
            return Err(ModelError::invalid(
                "birth.covariance",
                "must be positive semidefinite",
            ));
        }
        let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let factor = eig.eigenvectors * Matrix4::from_diagonal(&sqrt_vals);
        Ok(Self {
            mean,
            covariance: cov,
            factor,
            expected_births,
        })
    }

    pub fn mean(&self) -> StateVector {
        self.mean
    }

    pub fn covariance(&self) -> [[f64; 4]; 4] {
        let c = &self.covariance;
        std::array::from_fn(|i| std::array::from_fn(|j| c[(i, j)]))
    }

    pub fn expected_births(&self) -> f64 {
        self.expected_births
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> StateVector {
        let z = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let d = self.factor * z;
        StateVector::new(
            self.mean.x + d[0],
            self.mean.vx + d[1],
            self.mean.y + d[2],
            self.mean.vy + d[3],
        )
    }
}

/// `n` independent draws from the birth density.
pub fn sample_births<R: Rng + ?Sized>(n: usize, birth: &BirthModel, rng: &mut R) -> Vec<StateVector> {
    (0..n).map(|_| birth.sample(rng)).collect()
}

/// Poisson clutter, uniform over a bearing x range box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutterModel {
    pub rate: f64,
    pub bearing: [f64; 2],
    pub range: [f64; 2],
}

impl ClutterModel {
    pub fn new(rate: f64, bearing: [f64; 2], range: [f64; 2]) -> Result<Self, ModelError> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(ModelError::invalid("clutter.rate", "must be >= 0"));
        }
        if !(bearing[0] < bearing[1]) || bearing.iter().any(|b| !b.is_finite()) {
            return Err(ModelError::invalid("clutter.bearing", "interval must be nonempty"));
        }
        if !(range[0] < range[1]) || range[0] < 0.0 || !range[1].is_finite() {
            return Err(ModelError::invalid(
                "clutter.range",
                "interval must be nonempty and nonnegative",
            ));
        }
        Ok(Self { rate, bearing, range })
    }

    /// Area of the clutter region in rad·m.
    pub fn volume(&self) -> f64 {
        (self.bearing[1] - self.bearing[0]) * (self.range[1] - self.range[0])
    }

    pub fn contains(&self, z: &Measurement) -> bool {
        (self.bearing[0]..=self.bearing[1]).contains(&z.bearing)
            && (self.range[0]..=self.range[1]).contains(&z.range)
    }
}

/// `kappa(z) = rate / V` inside the region, 0 outside; integrates to `rate`.
pub fn clutter_intensity(z: &Measurement, clutter: &ClutterModel) -> f64 {
    if clutter.rate == 0.0 || !clutter.contains(z) {
        0.0
    } else {
        clutter.rate / clutter.volume()
    }
}

/// One scan of clutter: `Poisson(rate)` points uniform over the region.
pub fn generate_clutter<R: Rng + ?Sized>(clutter: &ClutterModel, rng: &mut R) -> Vec<Measurement> {
    if clutter.rate == 0.0 {
        return Vec::new();
    }
    let count = Poisson::new(clutter.rate)
        .map(|d| d.sample(rng) as usize)
        .unwrap_or(0);
    (0..count)
        .map(|_| Measurement {
            range: rng.random_range(clutter.range[0]..clutter.range[1]),
            bearing: rng.random_range(clutter.bearing[0]..clutter.bearing[1]),
            label: 0,
        })
        .collect()
}
