//! K-means with k-means++ seeding and Lloyd iterations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Independent restarts; the lowest-inertia run wins.
    pub n_init: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterResult {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every assignment step of the winning run.
    pub history: Vec<f64>,
}

impl KMeans {
    pub fn new(k: usize) -> Self {
        KMeans {
            k,
            max_iter: 300,
            tol: 1e-6,
            n_init: 1,
        }
    }

    pub fn with_n_init(mut self, n_init: usize) -> Self {
        self.n_init = n_init;
        self
    }

    pub fn fit(&self, data: &Matrix, seed: u64) -> Result<ClusterResult> {
        let n = data.rows();
        if self.k < 2 || self.k > n {
            return Err(Error::InvalidArgument(format!(
                "k-means needs 2 <= k <= N, got k = {} for N = {n}",
                self.k
            )));
        }
        if self.n_init == 0 {
            return Err(Error::InvalidArgument("n_init must be at least 1".into()));
        }
        data.ensure_finite("kmeans input")?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best: Option<ClusterResult> = None;
        for _ in 0..self.n_init {
            let run = self.lloyd(data, &mut rng);
            if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
                best = Some(run);
            }
        }
        Ok(best.expect("n_init >= 1"))
    }

    fn lloyd(&self, data: &Matrix, rng: &mut ChaCha8Rng) -> ClusterResult {
        let mut centroids = plus_plus(data, self.k, rng);
        let mut history = Vec::new();
        let mut iterations = 0;
        while iterations < self.max_iter {
            iterations += 1;
            let (assign, dist) = assign(data, &centroids);
            history.push(dist.iter().sum());
            let next = update(data, &assign, &dist, self.k);
            let shift = (0..self.k)
                .map(|c| squared(centroids.row(c), next.row(c)).sqrt())
                .fold(0.0, f64::max);
            centroids = next;
            if shift < self.tol {
                break;
            }
        }
        let (assignments, dist) = assign(data, &centroids);
        let inertia = dist.iter().sum();
        history.push(inertia);
        ClusterResult {
            assignments,
            centroids,
            inertia,
            iterations,
            history,
        }
    }
}

/// Single k-means run-set with default settings.
pub fn kmeans(data: &Matrix, k: usize, seed: u64) -> Result<ClusterResult> {
    KMeans::new(k).fit(data, seed)
}

fn squared(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per row (lower index on ties) and its squared distance.
fn assign(data: &Matrix, centroids: &Matrix) -> (Vec<usize>, Vec<f64>) {
    data.iter_rows()
        .map(|row| {
            let mut best = (0, squared(row, centroids.row(0)));
            for c in 1..centroids.rows() {
                let d = squared(row, centroids.row(c));
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .unzip()
}

/// Cluster means. An empty cluster takes the point farthest from its
/// current centroid that has not already been used for such a repair.
fn update(data: &Matrix, assign: &[usize], dist: &[f64], k: usize) -> Matrix {
    let mut sums = Matrix::zeros(k, data.cols());
    let mut counts = vec![0usize; k];
    for (row, &c) in data.iter_rows().zip(assign) {
        counts[c] += 1;
        for (s, v) in sums.row_mut(c).iter_mut().zip(row) {
            *s += v;
        }
    }
    let mut by_distance: Vec<usize> = (0..data.rows()).collect();
    by_distance.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    let mut donors = by_distance.into_iter();
    for (c, &count) in counts.iter().enumerate().take(k) {
        if count == 0 {
            let p = donors.next().expect("k <= N leaves a donor for each empty cluster");
            sums.row_mut(c).copy_from_slice(data.row(p));
        } else {
            let inv = 1.0 / count as f64;
            sums.row_mut(c).iter_mut().for_each(|v| *v *= inv);
        }
    }
    sums
}

/// k-means++ seeding: each new centroid is drawn with probability
/// proportional to its squared distance from the nearest chosen one.
fn plus_plus(data: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = data.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = data.iter_rows().map(|r| squared(r, data.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total has a positive entry")
        } else {
            // every point coincides with a centroid: take an unused index
            let unused: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            unused[rng.random_range(0..unused.len())]
        };
        chosen.push(next);
        for (d, row) in nearest.iter_mut().zip(data.iter_rows()) {
            *d = d.min(squared(row, data.row(next)));
        }
    }
    data.select_rows(&chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn two_pairs() {
        let data = Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]]).unwrap();
        let r = kmeans(&data, 2, 3).unwrap();
        assert_eq!(r.assignments[0], r.assignments[1]);
        assert_eq!(r.assignments[2], r.assignments[3]);
        assert_ne!(r.assignments[0], r.assignments[2]);
        let mut cs: Vec<Vec<f64>> = r.centroids.iter_rows().map(|c| c.to_vec()).collect();
        cs.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(cs, vec![vec![0.0, 0.5], vec![10.0, 0.5]]);
        assert!((r.inertia - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let data = Matrix::from_rows(&[[0.0], [1.0], [3.0], [7.0]]).unwrap();
        let r = kmeans(&data, 4, 0).unwrap();
        let mut seen = r.assignments.clone();
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3]);
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn duplicated_dataset_keeps_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut rows = Vec::new();
        for c in 0..3 {
            for _ in 0..10 {
                let v: Vec<f64> = (0..2).map(|d| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * 0.1 + if d == c % 2 { 5.0 * c as f64 } else { 0.0 }
                }).collect();
                rows.push(v);
            }
        }
        let base = Matrix::from_rows(&rows).unwrap();
        let mut doubled_rows = rows.clone();
        doubled_rows.extend(rows.iter().cloned());
        let doubled = Matrix::from_rows(&doubled_rows).unwrap();
        let a = KMeans::new(3).with_n_init(5).fit(&base, 1).unwrap();
        let b = KMeans::new(3).with_n_init(5).fit(&doubled, 1).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                assert_eq!(a.assignments[i] == a.assignments[j], b.assignments[i] == b.assignments[j]);
            }
            assert_eq!(b.assignments[i], b.assignments[i + 30]);
        }
    }

    #[test]
    fn inertia_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data = Matrix::standard_normal(60, 3, &mut rng);
        for seed in 0..5 {
            let r = KMeans::new(4).fit(&data, seed).unwrap();
            for w in r.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", r.history);
            }
        }
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let data = Matrix::standard_normal(40, 2, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(kmeans(&data, 3, 11).unwrap(), kmeans(&data, 3, 11).unwrap());
    }

    #[test]
    fn identical_points_are_handled() {
        let data = Matrix::ones(5, 2);
        let r = kmeans(&data, 3, 0).unwrap();
        assert_eq!(r.inertia, 0.0);
        assert_eq!(r.assignments, vec![0; 5]);
    }

    #[test]
    fn rejects_bad_input() {
        let data = Matrix::zeros(3, 2);
        assert!(kmeans(&data, 1, 0).is_err());
        assert!(kmeans(&data, 4, 0).is_err());
        let mut nan = data.clone();
        nan[(1, 1)] = f64::NAN;
        assert!(kmeans(&nan, 2, 0).is_err());
        assert!(KMeans::new(2).with_n_init(0).fit(&data, 0).is_err());
    }
}
