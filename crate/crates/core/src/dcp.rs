//! Distributed-computation particle PHD filter.
//!
//! `K` groups each own a slice of the particle budget and a private random
//! stream, and run the serial recursion against the full measurement set.
//! Per scan the order is fixed:
//!
//! 1. every group steps locally (in parallel; groups share no mutable state);
//! 2. the central unit fuses the labeled local estimates, keeping labels
//!    reported by a strict majority of groups;
//! 3. neighbouring groups swap `L` particles around the ring `1 -> 2 -> ... -> K -> 1`.
//!
//! Steps 2 and 3 are barriers. Results depend only on the master seed.

use std::collections::BTreeMap;

use rand::seq::index;
use rayon::prelude::*;

use crate::error::FilterError;
use crate::models::{MeasurementSet, StateVector};
use crate::phd::{Extraction, LocalEstimate, Particle, ParticlePopulation, PhdModels, SerialPhdFilter};
use crate::rng::{self, Domain, Stream};

/// One processing element: a serial filter with its own stream. Ids are 1-based.
#[derive(Debug, Clone)]
pub struct GroupState {
    id: usize,
    filter: SerialPhdFilter<Stream>,
}

impl GroupState {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn population(&self) -> &ParticlePopulation {
        self.filter.population()
    }
}

/// Creates the stream of group `id` (1-based). A serial filter built from
/// `group_stream(seed, 1)` follows the same trajectory as a one-group ensemble.
pub fn group_stream(master_seed: u64, id: usize) -> Stream {
    rng::stream(master_seed, Domain::FilterGroup, id as u64 - 1)
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    groups: Vec<GroupState>,
    exchange_count: usize,
    per_group_particles: usize,
    exchange_rng: Stream,
    parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GlobalEstimate {
    pub states: Vec<StateVector>,
    pub labels: Vec<usize>,
    pub supporting_groups: Vec<usize>,
}

impl GlobalEstimate {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Fusion result plus the number of repeated `(group, label)` reports that
/// were dropped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Fusion {
    pub estimate: GlobalEstimate,
    pub duplicate_reports: usize,
}

/// Particles moved from one group to its ring successor.
#[derive(Debug, Clone, PartialEq)]
pub struct Transfer {
    pub from: usize,
    pub to: usize,
    /// `(destination slot, particle)` pairs.
    pub moved: Vec<(usize, Particle)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    pub fusion: Fusion,
    /// One extraction per group, in group order.
    pub local: Vec<Extraction>,
    pub transfers: Vec<Transfer>,
}

/// Builds `groups` groups of `per_group_particles` birth-density particles
/// (weight `1/M` each). `exchange_count` must stay below `M/2`.
pub fn init_ensemble(
    groups: usize,
    per_group_particles: usize,
    exchange_count: usize,
    per_target_count: usize,
    models: &PhdModels,
    master_seed: u64,
) -> Result<Ensemble, FilterError> {
    if groups == 0 {
        return Err(FilterError::parameter("groups", "need at least one group"));
    }
    if per_group_particles < 2 {
        return Err(FilterError::parameter("particles_per_group", "must be >= 2"));
    }
    if 2 * exchange_count >= per_group_particles {
        return Err(FilterError::parameter(
            "exchange",
            format!(
                "L = {exchange_count} must be < M/2 = {}",
                per_group_particles as f64 / 2.0
            ),
        ));
    }
    let groups = (1..=groups)
        .map(|id| {
            let filter = SerialPhdFilter::new(
                per_group_particles,
                per_target_count,
                models,
                id,
                group_stream(master_seed, id),
            )?;
            Ok(GroupState { id, filter })
        })
        .collect::<Result<Vec<_>, FilterError>>()?;
    Ok(Ensemble {
        groups,
        exchange_count,
        per_group_particles,
        exchange_rng: rng::stream(master_seed, Domain::Exchange, 0),
        parallel: true,
    })
}

impl Ensemble {
    /// Steps groups on the rayon pool (default) or one after another.
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn groups(&self) -> &[GroupState] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [GroupState] {
        &mut self.groups
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn exchange_count(&self) -> usize {
        self.exchange_count
    }

    pub fn per_group_particles(&self) -> usize {
        self.per_group_particles
    }

    pub fn total_particles(&self) -> usize {
        self.groups.iter().map(|g| g.population().len()).sum()
    }
}

/// One local scan on one group: predict, update, extract and resample to
/// `max(N_k(j), 1) * R_k` particles, re-seeding from the birth density if the
/// local mass vanished.
pub fn step_group(
    group: &mut GroupState,
    measurements: &MeasurementSet,
    models: &PhdModels,
) -> Result<Extraction, FilterError> {
    group.filter.step(measurements, models)
}

/// Central-unit fusion: estimates are bucketed by label; a label survives if
/// more than `K/2` distinct groups report it, and its state is the plain mean
/// of the supporting states.
pub fn fuse(local: &[LocalEstimate], groups: usize) -> Fusion {
    let mut buckets: BTreeMap<usize, BTreeMap<usize, LocalEstimate>> = BTreeMap::new();
    let mut duplicate_reports = 0;
    for e in local {
        let bucket = buckets.entry(e.label).or_default();
        match bucket.get(&e.group) {
            Some(prev) => {
                duplicate_reports += 1;
                if e.mass > prev.mass {
                    bucket.insert(e.group, *e);
                }
            }
            None => {
                bucket.insert(e.group, *e);
            }
        }
    }

    let mut estimate = GlobalEstimate::default();
    for (label, supporters) in buckets {
        let n = supporters.len();
        if 2 * n <= groups {
            continue;
        }
        let mut it = supporters.values().map(|e| e.state.to_array());
        let first = it.next().expect("bucket is nonempty");
        let sum = it.fold(first, |mut acc, s| {
            for (a, v) in acc.iter_mut().zip(s) {
                *a += v;
            }
            acc
        });
        let mean = sum.map(|v| v / n as f64);
        estimate.states.push(StateVector::from_array(mean));
        estimate.labels.push(label);
        estimate.supporting_groups.push(n);
    }
    Fusion {
        estimate,
        duplicate_reports,
    }
}

/// Ring exchange. Each group `j` sends `L` uniformly chosen particles to group
/// `j + 1` (group `K` to group 1), overwriting `L` uniformly chosen slots.
/// All transfers read the pre-exchange populations. When a hop has fewer than
/// `2L` particles on either side, `L` for that hop drops to `floor(n/2) - 1`.
pub fn exchange(ensemble: &mut Ensemble) -> Vec<Transfer> {
    let k = ensemble.groups.len();
    if k < 2 || ensemble.exchange_count == 0 {
        return Vec::new();
    }
    let rng = &mut ensemble.exchange_rng;
    let mut transfers = Vec::with_capacity(k);
    for from in 0..k {
        let to = (from + 1) % k;
        let src = ensemble.groups[from].population();
        let dst_len = ensemble.groups[to].population().len();
        let smallest = src.len().min(dst_len);
        let count = if smallest >= 2 * ensemble.exchange_count {
            ensemble.exchange_count
        } else {
            (smallest / 2).saturating_sub(1)
        };
        if count == 0 {
            continue;
        }
        let picks = index::sample(rng, src.len(), count);
        let slots = index::sample(rng, dst_len, count);
        let moved = slots
            .iter()
            .zip(picks.iter())
            .map(|(slot, pick)| (slot, src.particles()[pick]))
            .collect();
        transfers.push(Transfer {
            from: from + 1,
            to: to + 1,
            moved,
        });
    }
    for t in &transfers {
        let dst = ensemble.groups[t.to - 1].filter.population_mut();
        for &(slot, particle) in &t.moved {
            dst.replace(slot, particle);
        }
    }
    transfers
}

/// Local steps, fusion, then exchange.
pub fn step_ensemble(
    ensemble: &mut Ensemble,
    measurements: &MeasurementSet,
    models: &PhdModels,
) -> Result<ScanReport, FilterError> {
    let local: Vec<Extraction> = if ensemble.parallel && ensemble.groups.len() > 1 {
        ensemble
            .groups
            .par_iter_mut()
            .map(|g| step_group(g, measurements, models))
            .collect::<Result<_, _>>()?
    } else {
        ensemble
            .groups
            .iter_mut()
            .map(|g| step_group(g, measurements, models))
            .collect::<Result<_, _>>()?
    };
    let reports: Vec<LocalEstimate> = local.iter().flat_map(|e| e.estimates.iter().copied()).collect();
    let fusion = fuse(&reports, ensemble.groups.len());
    let transfers = exchange(ensemble);
    Ok(ScanReport {
        fusion,
        local,
        transfers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{BirthModel, ClutterModel, MotionModel, SensorModel};
    use std::f64::consts::PI;

    fn models() -> PhdModels {
        let mut q = [[0.0; 4]; 4];
        for (i, v) in [10.0, 1.0, 10.0, 1.0].into_iter().enumerate() {
            q[i][i] = v;
        }
        PhdModels::new(
            MotionModel::new(1.0, 0.025, 4.0, 0.9).unwrap(),
            SensorModel::new([0.0, 0.0], 5.0, 0.05).unwrap(),
            BirthModel::new(StateVector::new(0.0, 3.0, 0.0, -3.0), q, 0.2).unwrap(),
            ClutterModel::new(0.0, [-PI / 2.0, PI / 2.0], [0.0, 200.0]).unwrap(),
            1.0,
        )
        .unwrap()
    }

    fn est(group: usize, label: usize, x: f64, mass: f64) -> LocalEstimate {
        LocalEstimate {
            state: StateVector::new(x, 0.0, 2.0 * x, 0.0),
            label,
            group,
            mass,
        }
    }

    #[test]
    fn init_sizes_and_weights() {
        let m = models();
        let e = init_ensemble(4, 500, 50, 200, &m, 3).unwrap();
        assert_eq!(e.total_particles(), 2000);
        for g in e.groups() {
            assert!(g.population().particles().iter().all(|p| p.weight == 1.0 / 500.0));
            assert!((g.population().mass() - 1.0).abs() < 1e-12);
        }
        let ids: Vec<_> = e.groups().iter().map(|g| g.id()).collect();
        assert_eq!(ids, vec![1, 2, 3, 4]);
    }

    #[test]
    fn init_validates() {
        let m = models();
        assert!(init_ensemble(0, 500, 50, 200, &m, 3).is_err());
        assert!(init_ensemble(2, 1, 0, 200, &m, 3).is_err());
        assert!(init_ensemble(2, 100, 50, 200, &m, 3).is_err());
        assert!(init_ensemble(2, 100, 49, 200, &m, 3).is_ok());
    }

    #[test]
    fn single_group_matches_serial_initial_population() {
        let m = models();
        let e = init_ensemble(1, 300, 0, 100, &m, 11).unwrap();
        let f = SerialPhdFilter::new(300, 100, &m, 1, group_stream(11, 1)).unwrap();
        assert_eq!(e.groups()[0].population(), f.population());
    }

    #[test]
    fn group_population_scales_with_cardinality() {
        let m = models();
        let mut e = init_ensemble(1, 300, 0, 200, &m, 5).unwrap();
        let targets = [StateVector::new(20.0, 0.0, 30.0, 0.0), StateVector::new(80.0, 0.0, -60.0, 0.0)];
        let z = MeasurementSet::from_points(targets.iter().map(|t| m.sensor.project(t)));
        let ex = step_group(&mut e.groups_mut()[0], &z, &m).unwrap();
        // no clutter, p_D = 1: each detection carries unit mass
        assert_eq!(ex.cardinality, 2);
        assert_eq!(e.groups()[0].population().len(), 400);
    }

    #[test]
    fn empty_scan_applies_recovery_floor() {
        let m = models();
        let mut e = init_ensemble(2, 300, 0, 120, &m, 5).unwrap();
        let ex = step_group(&mut e.groups_mut()[1], &MeasurementSet::default(), &m).unwrap();
        assert!(ex.estimates.is_empty());
        let pop = e.groups()[1].population();
        assert_eq!(pop.len(), 120);
        assert!((pop.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fuse_strict_majority() {
        let f = fuse(&[est(1, 3, 1.0, 1.0), est(2, 3, 2.0, 1.0), est(4, 3, 6.0, 1.0)], 4);
        assert_eq!(f.estimate.labels, vec![3]);
        assert_eq!(f.estimate.supporting_groups, vec![3]);
        assert_eq!(f.estimate.states[0], StateVector::new(3.0, 0.0, 6.0, 0.0));

        let f = fuse(&[est(1, 3, 1.0, 1.0), est(2, 3, 2.0, 1.0)], 4);
        assert!(f.estimate.is_empty());

        let one = est(1, 7, 1.2345, 0.9);
        let f = fuse(&[one], 1);
        assert_eq!(f.estimate.states, vec![one.state]);
        assert_eq!(f.estimate.labels, vec![7]);
    }

    #[test]
    fn fuse_counts_groups_not_reports() {
        // three reports of label 2 all from group 1 do not form a majority of 4
        let f = fuse(&[est(1, 2, 1.0, 0.2), est(1, 2, 5.0, 0.9), est(1, 2, 3.0, 0.5)], 4);
        assert!(f.estimate.is_empty());
        assert_eq!(f.duplicate_reports, 2);
        // the heaviest duplicate is the one kept
        let f = fuse(&[est(1, 2, 1.0, 0.2), est(1, 2, 5.0, 0.9)], 1);
        assert_eq!(f.estimate.states[0].x, 5.0);
    }

    #[test]
    fn exchange_follows_ring() {
        let m = models();
        let mut e = init_ensemble(3, 100, 2, 50, &m, 9).unwrap();
        let before: Vec<_> = e.groups().iter().map(|g| g.population().clone()).collect();
        let transfers = exchange(&mut e);
        let hops: Vec<_> = transfers.iter().map(|t| (t.from, t.to)).collect();
        assert_eq!(hops, vec![(1, 2), (2, 3), (3, 1)]);
        for t in &transfers {
            assert_eq!(t.moved.len(), 2);
            let src = &before[t.from - 1];
            let dst = e.groups()[t.to - 1].population();
            for &(slot, p) in &t.moved {
                assert!(src.particles().contains(&p));
                assert_eq!(dst.particles()[slot], p);
            }
        }
        for (g, b) in e.groups().iter().zip(&before) {
            assert_eq!(g.population().len(), b.len());
        }
    }

    #[test]
    fn exchange_noop_cases() {
        let m = models();
        let mut e = init_ensemble(3, 100, 0, 50, &m, 9).unwrap();
        let before: Vec<_> = e.groups().iter().map(|g| g.population().clone()).collect();
        assert!(exchange(&mut e).is_empty());
        let after: Vec<_> = e.groups().iter().map(|g| g.population().clone()).collect();
        assert_eq!(before, after);

        let mut single = init_ensemble(1, 100, 10, 50, &m, 9).unwrap();
        let before = single.groups()[0].population().clone();
        assert!(exchange(&mut single).is_empty());
        assert_eq!(single.groups()[0].population(), &before);
    }

    #[test]
    fn exchange_clamps_small_hops() {
        let m = models();
        let mut e = init_ensemble(2, 100, 40, 10, &m, 1).unwrap();
        // shrink group 2 to 30 particles: hops touching it use floor(30/2) - 1 = 14
        let z = MeasurementSet::default();
        step_group(&mut e.groups_mut()[1], &z, &m).unwrap();
        let small = e.groups()[1].population().len();
        assert_eq!(small, 10);
        let transfers = exchange(&mut e);
        assert!(transfers.iter().all(|t| t.moved.len() == small / 2 - 1));
    }

    #[test]
    fn group_order_does_not_matter() {
        let m = models();
        let target = StateVector::new(10.0, 3.0, -10.0, -3.0);
        let z = MeasurementSet::from_points([m.sensor.project(&target), (50.0, 0.5)]);
        let mut a = init_ensemble(3, 200, 10, 100, &m, 21).unwrap();
        let mut b = a.clone();
        let forward: Vec<_> = a.groups_mut().iter_mut().map(|g| step_group(g, &z, &m).unwrap()).collect();
        let mut backward: Vec<_> = b
            .groups_mut()
            .iter_mut()
            .rev()
            .map(|g| step_group(g, &z, &m).unwrap())
            .collect();
        backward.reverse();
        assert_eq!(forward, backward);
    }

    #[test]
    fn parallel_and_sequential_scans_agree() {
        let m = models();
        let z = MeasurementSet::from_points([(20.0, -0.7), (80.0, 0.2)]);
        let mut par = init_ensemble(4, 200, 20, 100, &m, 2).unwrap();
        let mut seq = par.clone().with_parallel(false);
        for _ in 0..3 {
            let a = step_ensemble(&mut par, &z, &m).unwrap();
            let b = step_ensemble(&mut seq, &z, &m).unwrap();
            assert_eq!(a, b);
        }
    }
}
