//! Seeded Lloyd's k-means with k-means++ initialization.
//!
//! Shared by the region partitioner and the cell-signature clusterer.
//! Everything is deterministic given the seed: weighted draws go through a
//! cumulative-sum scan and every tie breaks toward the lowest index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index per input point.
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squares recorded after every assignment step.
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

/// k-means++ seeding: first centroid uniform, later ones D²-weighted.
fn init_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.gen_range(0..n);
    centroids.push(points[first].clone());

    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total <= 0.0 {
            // all remaining points coincide with a centroid; take the lowest
            // index that is not an exact duplicate, else just the lowest
            (0..n)
                .find(|&i| !centroids.iter().any(|c| sq_dist(&points[i], c) == 0.0))
                .unwrap_or(0)
        } else {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc >= target {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centroids.push(points[idx].clone());
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p, centroids.last().unwrap());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

/// Lloyd's algorithm. Empty clusters are reseeded at the point farthest from
/// its current centroid (lowest point index on ties) so every cluster ends
/// non-empty whenever `k <=` number of distinct points.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("k-means needs at least one point".into()));
    }
    if k == 0 || k > points.len() {
        return Err(Error::InvalidArgument(format!(
            "k must be in 1..={}, got {k}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidArgument("points must share one arity".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = init_plus_plus(points, k, &mut rng);
    let mut assignment = vec![0usize; points.len()];
    let mut wcss_history = Vec::new();
    let mut iterations = 0usize;

    for _ in 0..max_iters.max(1) {
        iterations += 1;
        let mut changed = false;
        let mut wcss = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            wcss += d;
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        wcss_history.push(wcss);

        // update step
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            let c = assignment[i];
            counts[c] += 1;
            for (j, v) in p.iter().enumerate() {
                sums[c][j] += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // reseed at the point farthest from its assigned centroid
                let mut far_i = 0usize;
                let mut far_d = -1.0;
                for (i, p) in points.iter().enumerate() {
                    let d = sq_dist(p, &centroids[assignment[i]]);
                    if d > far_d {
                        far_d = d;
                        far_i = i;
                    }
                }
                centroids[c] = points[far_i].clone();
                changed = true;
            } else {
                for j in 0..dim {
                    centroids[c][j] = sums[c][j] / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }

    // final assignment against the final centroids (ties to lowest index)
    let mut wcss = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (c, d) = nearest(p, &centroids);
        assignment[i] = c;
        wcss += d;
    }
    wcss_history.push(wcss);

    Ok(KMeansResult {
        centroids,
        assignment,
        wcss_history,
        iterations,
    })
}
