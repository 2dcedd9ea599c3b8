//! OSPA miss distance, cardinality series and Monte-Carlo aggregation.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OspaParams {
    pub p: f64,
    pub c: f64,
}

impl OspaParams {
    pub fn new(p: f64, c: f64) -> Result<Self, ModelError> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(ModelError::invalid("ospa.p", "order must be >= 1"));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(ModelError::invalid("ospa.c", "cutoff must be > 0"));
        }
        Ok(Self { p, c })
    }
}

impl Default for OspaParams {
    fn default() -> Self {
        Self { p: 1.0, c: 100.0 }
    }
}

/// Minimum-cost assignment of every row to a distinct column
/// (`rows <= cols`), Hungarian method with potentials, O(rows^2 * cols).
/// Returns the column chosen for each row and the total cost.
pub fn hungarian(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = cost.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let m = cost[0].len();
    assert!(n <= m, "hungarian: more rows ({n}) than columns ({m})");
    // 1-based arrays, index 0 is the virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    let total = assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    (assignment, total)
}

fn compare_sets(a: &[[f64; 2]], b: &[[f64; 2]]) -> Ordering {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(u, v)| u.total_cmp(v))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn euclid(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// OSPA distance between two planar point sets.
///
/// The smaller set indexes the rows of the assignment problem. Equal-size sets
/// are ordered by content so that `ospa(x, y)` and `ospa(y, x)` run the same
/// computation and agree bit for bit.
pub fn ospa(xs: &[[f64; 2]], ys: &[[f64; 2]], params: &OspaParams) -> f64 {
    let x_first = match xs.len().cmp(&ys.len()) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => compare_sets(xs, ys) != Ordering::Greater,
    };
    let (small, large) = if x_first { (xs, ys) } else { (ys, xs) };
    let (m, n) = (small.len(), large.len());
    if n == 0 {
        return 0.0;
    }
    let OspaParams { p, c } = *params;
    let cost: Vec<Vec<f64>> = small
        .iter()
        .map(|a| large.iter().map(|b| euclid(a, b).min(c).powf(p)).collect())
        .collect();
    let (_, localisation) = hungarian(&cost);
    let cardinality = c.powf(p) * (n - m) as f64;
    let d = ((localisation + cardinality) / n as f64).powf(1.0 / p);
    d.min(c)
}

/// Per-scan `(true count, estimated count)`.
pub fn cardinality_series(truth: &[usize], estimated: &[usize]) -> Vec<(usize, usize)> {
    assert_eq!(truth.len(), estimated.len(), "series lengths differ");
    truth.iter().copied().zip(estimated.iter().copied()).collect()
}

/// Measurements of one end-to-end run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub ospa: Vec<f64>,
    pub true_count: Vec<usize>,
    pub estimated_count: Vec<usize>,
    pub wall_time: f64,
}

impl RunStats {
    pub fn mean_ospa(&self) -> f64 {
        mean(&self.ospa)
    }

    pub fn mean_abs_cardinality_error(&self) -> f64 {
        let errs: Vec<f64> = self
            .true_count
            .iter()
            .zip(&self.estimated_count)
            .map(|(&t, &e)| (t as f64 - e as f64).abs())
            .collect();
        mean(&errs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub mean_ospa: f64,
    pub std_ospa: f64,
    pub mean_wall_time: f64,
    pub median_wall_time: f64,
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mu = mean(values);
    let ss: f64 = values.iter().map(|v| (v - mu) * (v - mu)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Mean and sample std over runs of the per-run mean OSPA, plus wall times.
pub fn aggregate(runs: &[RunStats]) -> Summary {
    let per_run: Vec<f64> = runs.iter().map(RunStats::mean_ospa).collect();
    let times: Vec<f64> = runs.iter().map(|r| r.wall_time).collect();
    Summary {
        runs: runs.len(),
        mean_ospa: mean(&per_run),
        std_ospa: sample_std(&per_run),
        mean_wall_time: mean(&times),
        median_wall_time: median(&times),
    }
}

/// Serial time over distributed time.
pub fn speedup(serial_time: f64, distributed_time: f64) -> f64 {
    serial_time / distributed_time
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(ospa: &[f64], time: f64) -> RunStats {
        RunStats {
            ospa: ospa.to_vec(),
            true_count: vec![0; ospa.len()],
            estimated_count: vec![0; ospa.len()],
            wall_time: time,
        }
    }

    #[test]
    fn ospa_examples() {
        let prm = OspaParams::default();
        let set = [[1.0, 2.0], [-3.0, 4.5], [7.0, 7.0]];
        assert_eq!(ospa(&set, &set, &prm), 0.0);
        assert_eq!(ospa(&[], &[], &prm), 0.0);
        assert_eq!(ospa(&[[0.0, 0.0]], &[], &prm), 100.0);
        assert_eq!(ospa(&[[0.0, 0.0]], &[[3.0, 4.0]], &prm), 5.0);
        let d = ospa(&[[0.0, 0.0], [10.0, 0.0]], &[[0.0, 1.0], [10.0, 1.0]], &prm);
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ospa_cutoff_and_order() {
        let prm = OspaParams::new(2.0, 10.0).unwrap();
        // one pair beyond the cutoff, one at distance 2, one missing point
        let d = ospa(&[[0.0, 0.0], [50.0, 0.0]], &[[0.0, 2.0], [0.0, 100.0], [9.0, 9.0]], &prm);
        let expect = ((4.0 + 100.0 + 100.0) / 3.0f64).sqrt();
        assert!((d - expect).abs() < 1e-12);
        assert!(OspaParams::new(0.5, 1.0).is_err());
        assert!(OspaParams::new(1.0, 0.0).is_err());
    }

    #[test]
    fn hungarian_small_cases() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let (a, total) = hungarian(&cost);
        assert_eq!(total, 5.0);
        assert_eq!(a, vec![1, 0, 2]);
        let rect = vec![vec![10.0, 1.0, 7.0, 3.0]];
        assert_eq!(hungarian(&rect), (vec![1], 1.0));
        assert_eq!(hungarian(&[]), (vec![], 0.0));
    }

    #[test]
    fn cardinality_series_pairs() {
        assert_eq!(cardinality_series(&[0, 0], &[0, 0]), vec![(0, 0), (0, 0)]);
        assert_eq!(cardinality_series(&[1, 2, 1], &[1, 1, 1]), vec![(1, 1), (2, 1), (1, 1)]);
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate(&[run(&[3.0, 3.0], 1.0)]);
        assert_eq!((s.mean_ospa, s.std_ospa, s.runs), (3.0, 0.0, 1));
        let s = aggregate(&[run(&[3.0], 2.0), run(&[3.2], 4.0)]);
        assert!((s.mean_ospa - 3.1).abs() < 1e-12);
        assert!((s.std_ospa - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.mean_wall_time, 3.0);
        assert_eq!(s.median_wall_time, 3.0);
        assert!((speedup(17.6540, 8.6331) - 2.0449).abs() < 1e-4);
    }

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
