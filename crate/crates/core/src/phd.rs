//! Serial particle PHD filter with per-measurement weight decomposition.
//!
//! One scan of the recursion is
//!
//! 1. [`predict`]: bootstrap proposal for survivors, birth density for the
//!    `J_k` new-born particles;
//! 2. [`compute_normalizers`]: `C(z) = sum_i psi_z(x_i) w_i` for every detection;
//! 3. [`update_stphd`]: every particle weight is split into one sub-weight per
//!    detection label plus an undetected slot, and the new weight is their sum;
//! 4. [`extract_states_stphd`]: the labels with the largest aggregated
//!    sub-weight become state estimates tagged with that label;
//! 5. [`resample`]: systematic resampling to `max(N_k, 1) * R_k` particles.
//!
//! The detection probability is a constant, so the missed-detection factor is
//! `1 - p_D` for every particle.

use rand::Rng;

use crate::error::FilterError;
use crate::models::{
    clutter_intensity, cv_transition, likelihood_projected, BirthModel, ClutterModel,
    MeasurementSet, MotionModel, SensorModel, StateVector,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub state: StateVector,
    pub weight: f64,
}

impl Particle {
    pub fn new(state: StateVector, weight: f64) -> Self {
        Self { state, weight }
    }
}

/// Weighted particle set of one filter (or one group).
///
/// After [`update_stphd`] the population also carries a dense sub-weight
/// table: row `i` holds `M_k + 1` entries, slot 0 for "undetected" and slot
/// `p` for measurement label `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticlePopulation {
    particles: Vec<Particle>,
    per_target_count: usize,
    sub_weights: Vec<f64>,
    stride: usize,
}

impl ParticlePopulation {
    pub fn new(particles: Vec<Particle>, per_target_count: usize) -> Result<Self, FilterError> {
        if per_target_count == 0 {
            return Err(FilterError::parameter("per_target_count", "must be >= 1"));
        }
        if let Some(p) = particles.iter().find(|p| !(p.weight >= 0.0 && p.weight.is_finite())) {
            return Err(FilterError::parameter(
                "weight",
                format!("particle weights must be finite and >= 0, got {}", p.weight),
            ));
        }
        Ok(Self::from_parts(particles, per_target_count))
    }

    fn from_parts(particles: Vec<Particle>, per_target_count: usize) -> Self {
        Self {
            particles,
            per_target_count,
            sub_weights: Vec::new(),
            stride: 0,
        }
    }

    /// `count` particles drawn from the birth density, each with weight `1/count`.
    pub fn from_birth<R: Rng + ?Sized>(
        count: usize,
        per_target_count: usize,
        birth: &BirthModel,
        rng: &mut R,
    ) -> Result<Self, FilterError> {
        if count == 0 {
            return Err(FilterError::parameter("particle count", "must be >= 1"));
        }
        let w = 1.0 / count as f64;
        let particles = (0..count).map(|_| Particle::new(birth.sample(rng), w)).collect();
        Self::new(particles, per_target_count)
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn per_target_count(&self) -> usize {
        self.per_target_count
    }

    pub fn mass(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    /// Sub-weights of particle `i`, or `None` before an update.
    pub fn sub_weights(&self, i: usize) -> Option<&[f64]> {
        if self.stride == 0 || i >= self.particles.len() {
            return None;
        }
        Some(&self.sub_weights[i * self.stride..(i + 1) * self.stride])
    }

    pub fn has_sub_weights(&self) -> bool {
        self.stride > 0
    }

    /// Overwrites particle `slot` and drops any stale sub-weight table.
    pub(crate) fn replace(&mut self, slot: usize, particle: Particle) {
        self.particles[slot] = particle;
        self.clear_sub_weights();
    }

    fn clear_sub_weights(&mut self) {
        self.sub_weights.clear();
        self.stride = 0;
    }
}

/// Static models shared by every filter instance of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct PhdModels {
    pub motion: MotionModel,
    pub sensor: SensorModel,
    pub birth: BirthModel,
    pub clutter: ClutterModel,
    pub detection_probability: f64,
}

impl PhdModels {
    pub fn new(
        motion: MotionModel,
        sensor: SensorModel,
        birth: BirthModel,
        clutter: ClutterModel,
        detection_probability: f64,
    ) -> Result<Self, FilterError> {
        if !(0.0..=1.0).contains(&detection_probability) {
            return Err(FilterError::parameter(
                "detection_probability",
                "must lie in [0, 1]",
            ));
        }
        Ok(Self {
            motion,
            sensor,
            birth,
            clutter,
            detection_probability,
        })
    }
}

/// Propagates survivors through the motion prior (weight `* e_{k|k-1}`) and
/// appends `births` particles from the birth density sharing the birth mass.
pub fn predict<R: Rng + ?Sized>(
    population: ParticlePopulation,
    motion: &MotionModel,
    birth: &BirthModel,
    births: usize,
    rng: &mut R,
) -> Result<ParticlePopulation, FilterError> {
    let birth_mass = birth.expected_births();
    if births == 0 && birth_mass > 0.0 {
        return Err(FilterError::NoBirthParticles { mass: birth_mass });
    }
    let per_target_count = population.per_target_count;
    let survival = motion.survival_probability;
    let mut particles = population.particles;
    particles.reserve(births);
    for p in particles.iter_mut() {
        p.state = cv_transition(&p.state, motion, rng);
        p.weight *= survival;
    }
    if births > 0 {
        let w = birth_mass / births as f64;
        particles.extend((0..births).map(|_| Particle::new(birth.sample(rng), w)));
    }
    Ok(ParticlePopulation::from_parts(particles, per_target_count))
}

/// `C(z_p)` for every label `p`; index `p - 1` holds label `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementNormalizers {
    values: Vec<f64>,
}

impl MeasurementNormalizers {
    pub fn get(&self, label: usize) -> Option<f64> {
        label.checked_sub(1).and_then(|i| self.values.get(i).copied())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Fills row-major `psi[i * stride + p] = p_D * g(z_p | x_i)` for labels
/// `p = 1..=M_k`; slot 0 is left at 0.
fn fill_detection_terms(
    particles: &[Particle],
    measurements: &MeasurementSet,
    sensor: &SensorModel,
    detection_probability: f64,
    out: &mut Vec<f64>,
) -> usize {
    let stride = measurements.len() + 1;
    out.clear();
    out.resize(particles.len() * stride, 0.0);
    if detection_probability == 0.0 {
        return stride;
    }
    for (row, p) in out.chunks_exact_mut(stride).zip(particles) {
        let (range, bearing) = sensor.project(&p.state);
        for (slot, z) in row[1..].iter_mut().zip(measurements.iter()) {
            *slot = detection_probability * likelihood_projected(z, range, bearing, sensor);
        }
    }
    stride
}

fn normalizers_from_terms(particles: &[Particle], psi: &[f64], stride: usize) -> Vec<f64> {
    let mut c = vec![0.0; stride - 1];
    for (row, p) in psi.chunks_exact(stride).zip(particles) {
        for (acc, &v) in c.iter_mut().zip(&row[1..]) {
            *acc += v * p.weight;
        }
    }
    c
}

/// Turns a detection-term table into sub-weights in place and sets each
/// particle weight to the sum of its row.
fn apply_update(
    particles: &mut [Particle],
    table: &mut [f64],
    stride: usize,
    denominators: &[f64],
    detection_probability: f64,
) {
    let missed = 1.0 - detection_probability;
    for (row, p) in table.chunks_exact_mut(stride).zip(particles.iter_mut()) {
        let w = p.weight;
        let mut total = 0.0;
        for (slot, &den) in row[1..].iter_mut().zip(denominators) {
            // den == 0 implies psi * w == 0 for every particle of this label
            *slot = if den > 0.0 { *slot / den * w } else { 0.0 };
            total += *slot;
        }
        row[0] = missed * w;
        p.weight = total + row[0];
    }
}

fn denominators(measurements: &MeasurementSet, clutter: &ClutterModel, c: &[f64]) -> Vec<f64> {
    measurements
        .iter()
        .zip(c)
        .map(|(z, &c)| clutter_intensity(z, clutter) + c)
        .collect()
}

pub fn compute_normalizers(
    population: &ParticlePopulation,
    measurements: &MeasurementSet,
    sensor: &SensorModel,
    detection_probability: f64,
) -> MeasurementNormalizers {
    let mut psi = Vec::new();
    let stride = fill_detection_terms(
        &population.particles,
        measurements,
        sensor,
        detection_probability,
        &mut psi,
    );
    MeasurementNormalizers {
        values: normalizers_from_terms(&population.particles, &psi, stride),
    }
}

/// Weight update with per-label decomposition:
/// `dw[i][p] = psi_p(x_i) w_i / (kappa(z_p) + C(z_p))`, `dw[i][0] = (1 - p_D) w_i`,
/// new `w_i = sum_p dw[i][p] + dw[i][0]`.
pub fn update_stphd(
    population: ParticlePopulation,
    measurements: &MeasurementSet,
    normalizers: &MeasurementNormalizers,
    sensor: &SensorModel,
    clutter: &ClutterModel,
    detection_probability: f64,
) -> Result<ParticlePopulation, FilterError> {
    if normalizers.values.len() != measurements.len() {
        return Err(FilterError::parameter(
            "normalizers",
            format!(
                "{} normalizers for {} measurements",
                normalizers.values.len(),
                measurements.len()
            ),
        ));
    }
    let mut population = population;
    let mut table = std::mem::take(&mut population.sub_weights);
    let stride = fill_detection_terms(
        &population.particles,
        measurements,
        sensor,
        detection_probability,
        &mut table,
    );
    let den = denominators(measurements, clutter, &normalizers.values);
    apply_update(&mut population.particles, &mut table, stride, &den, detection_probability);
    population.sub_weights = table;
    population.stride = stride;
    Ok(population)
}

/// Normalizers and update in one pass over the likelihood table.
fn update_fused(
    mut population: ParticlePopulation,
    measurements: &MeasurementSet,
    models: &PhdModels,
) -> ParticlePopulation {
    let mut table = std::mem::take(&mut population.sub_weights);
    let stride = fill_detection_terms(
        &population.particles,
        measurements,
        &models.sensor,
        models.detection_probability,
        &mut table,
    );
    let c = normalizers_from_terms(&population.particles, &table, stride);
    let den = denominators(measurements, &models.clutter, &c);
    apply_update(
        &mut population.particles,
        &mut table,
        stride,
        &den,
        models.detection_probability,
    );
    population.sub_weights = table;
    population.stride = stride;
    population
}

/// Total weight and its nearest integer (halves round away from zero).
pub fn estimate_cardinality(population: &ParticlePopulation) -> (f64, usize) {
    let mass = population.mass();
    let count = if mass > 0.0 { mass.round() as usize } else { 0 };
    (mass, count)
}

/// Systematic resampling to exactly `target` particles of weight `mass / target`.
/// A massless population resamples to an empty one.
pub fn resample<R: Rng + ?Sized>(
    population: &ParticlePopulation,
    target: usize,
    rng: &mut R,
) -> Result<ParticlePopulation, FilterError> {
    if target == 0 {
        return Err(FilterError::parameter("target_particle_count", "must be >= 1"));
    }
    let per_target_count = population.per_target_count;
    let mass = population.mass();
    if !(mass > 0.0) {
        return Ok(ParticlePopulation::from_parts(Vec::new(), per_target_count));
    }
    let particles = &population.particles;
    let step = 1.0 / target as f64;
    let start: f64 = rng.random::<f64>() * step;
    let w_out = mass / target as f64;
    let mut out = Vec::with_capacity(target);
    let mut idx = 0;
    let mut cum = particles[0].weight / mass;
    let last = particles.len() - 1;
    for k in 0..target {
        let u = start + k as f64 * step;
        while u >= cum && idx < last {
            idx += 1;
            cum += particles[idx].weight / mass;
        }
        // rounding can leave the running sum short of 1 on a zero-weight tail
        let mut pick = idx;
        while particles[pick].weight == 0.0 && pick > 0 {
            pick -= 1;
        }
        out.push(Particle::new(particles[pick].state, w_out));
    }
    Ok(ParticlePopulation::from_parts(out, per_target_count))
}

/// A state estimate tied to the measurement label that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalEstimate {
    pub state: StateVector,
    pub label: usize,
    pub group: usize,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Extraction {
    /// Sorted by label.
    pub estimates: Vec<LocalEstimate>,
    /// Per-label aggregated sub-weight; index `p` is label `p`, index 0 the
    /// undetected mass.
    pub label_mass: Vec<f64>,
    pub cardinality: usize,
    /// Set when fewer estimates than the rounded cardinality could be formed.
    pub truncated: bool,
}

/// Picks the `round(mass)` labels with the largest aggregated sub-weight
/// (ties to the smaller label) and returns the sub-weight-normalized mean
/// state for each.
pub fn extract_states_stphd(
    population: &ParticlePopulation,
    measurements: &MeasurementSet,
    group: usize,
) -> Result<Extraction, FilterError> {
    let stride = population.stride;
    if stride != measurements.len() + 1 {
        return Err(FilterError::parameter(
            "population",
            "sub-weights missing or computed for a different measurement set",
        ));
    }
    let mut label_mass = vec![0.0; stride];
    for row in population.sub_weights.chunks_exact(stride) {
        for (acc, &v) in label_mass.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let (_, cardinality) = estimate_cardinality(population);

    let mut order: Vec<usize> = (1..stride).collect();
    order.sort_by(|&a, &b| label_mass[b].total_cmp(&label_mass[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = order
        .into_iter()
        .take(cardinality)
        .filter(|&l| label_mass[l] > 0.0)
        .collect();
    chosen.sort_unstable();
    let truncated = chosen.len() < cardinality;

    let estimates = chosen
        .into_iter()
        .map(|label| {
            let total = label_mass[label];
            let mut acc = [0.0; 4];
            for (row, p) in population.sub_weights.chunks_exact(stride).zip(&population.particles) {
                let w = row[label] / total;
                if w != 0.0 {
                    for (a, v) in acc.iter_mut().zip(p.state.to_array()) {
                        *a += w * v;
                    }
                }
            }
            LocalEstimate {
                state: StateVector::from_array(acc),
                label,
                group,
                mass: total,
            }
        })
        .collect();

    Ok(Extraction {
        estimates,
        label_mass,
        cardinality,
        truncated,
    })
}

/// Result of one scan of the filter.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub population: ParticlePopulation,
    pub extraction: Extraction,
    /// Total weight after the update, before resampling.
    pub updated_mass: f64,
}

/// predict, update, extract, resample. `J_k` equals the per-target particle
/// count and the resample target is `max(N_k, 1) * R_k`. The returned
/// population may be empty when the updated mass is zero.
pub fn step_serial<R: Rng + ?Sized>(
    population: ParticlePopulation,
    measurements: &MeasurementSet,
    models: &PhdModels,
    group: usize,
    rng: &mut R,
) -> Result<StepOutput, FilterError> {
    let per_target = population.per_target_count;
    let predicted = predict(population, &models.motion, &models.birth, per_target, rng)?;
    let updated = update_fused(predicted, measurements, models);
    let extraction = extract_states_stphd(&updated, measurements, group)?;
    let updated_mass = updated.mass();
    let target = extraction.cardinality.max(1) * per_target;
    let population = resample(&updated, target, rng)?;
    Ok(StepOutput {
        population,
        extraction,
        updated_mass,
    })
}

/// Replaces an empty population with `R_k` birth-density particles of weight
/// `1/R_k`; otherwise returns it unchanged.
pub fn recover_if_empty<R: Rng + ?Sized>(
    population: ParticlePopulation,
    birth: &BirthModel,
    rng: &mut R,
) -> Result<ParticlePopulation, FilterError> {
    if population.is_empty() {
        let r = population.per_target_count;
        ParticlePopulation::from_birth(r, r, birth, rng)
    } else {
        Ok(population)
    }
}

/// Stateful serial filter: one population, one random stream.
#[derive(Debug, Clone)]
pub struct SerialPhdFilter<R> {
    population: ParticlePopulation,
    rng: R,
    group: usize,
}

impl<R: Rng> SerialPhdFilter<R> {
    /// `initial_particles` draws from the birth density with weight `1/count`.
    pub fn new(
        initial_particles: usize,
        per_target_count: usize,
        models: &PhdModels,
        group: usize,
        mut rng: R,
    ) -> Result<Self, FilterError> {
        let population =
            ParticlePopulation::from_birth(initial_particles, per_target_count, &models.birth, &mut rng)?;
        Ok(Self {
            population,
            rng,
            group,
        })
    }

    pub fn population(&self) -> &ParticlePopulation {
        &self.population
    }

    pub fn population_mut(&mut self) -> &mut ParticlePopulation {
        &mut self.population
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }

    pub fn group(&self) -> usize {
        self.group
    }

    /// Runs one scan; a population emptied by the update is re-seeded from
    /// the birth density.
    pub fn step(&mut self, measurements: &MeasurementSet, models: &PhdModels) -> Result<Extraction, FilterError> {
        let placeholder = ParticlePopulation::from_parts(Vec::new(), self.population.per_target_count);
        let current = std::mem::replace(&mut self.population, placeholder);
        let out = step_serial(current, measurements, models, self.group, &mut self.rng)?;
        self.population = recover_if_empty(out.population, &models.birth, &mut self.rng)?;
        Ok(out.extraction)
    }
}
