//! K-means, silhouette coefficient and SSE over latent vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricsError;

pub const MAX_ITERATIONS: usize = 300;

pub fn euclidean(u: &[f64], v: &[f64]) -> f64 {
    squared(u, v).sqrt()
}

fn squared(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
    /// SSE after each update step.
    pub sse_trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterBlock {
    pub k: usize,
    pub sc: f64,
    pub sse: f64,
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn count_distinct(z: &[Vec<f64>], limit: usize) -> usize {
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for x in z {
        if !distinct.contains(&x) {
            distinct.push(x);
            if distinct.len() >= limit {
                break;
            }
        }
    }
    distinct.len()
}

fn plus_plus(z: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![z[rng.random_range(0..z.len())].clone()];
    let mut d2: Vec<f64> = z.iter().map(|x| squared(x, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut r = rng.random::<f64>() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && r < d {
                pick = i;
                break;
            }
            r -= d;
        }
        centroids.push(z[pick].clone());
        for (i, x) in z.iter().enumerate() {
            d2[i] = d2[i].min(squared(x, &z[pick]));
        }
    }
    centroids
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or [`MAX_ITERATIONS`]. An emptied cluster is moved onto the point
/// farthest from its own centroid.
pub fn kmeans(z: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans, MetricsError> {
    if k == 0 || k > z.len() {
        return Err(MetricsError::InvalidK { k, n: z.len() });
    }
    if count_distinct(z, k) < k {
        return Err(MetricsError::DuplicatePointsDegenerate);
    }
    let dim = z[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(z, k, &mut rng);
    let mut labels: Vec<usize> = z.iter().map(|x| nearest(x, &centroids).0).collect();
    let mut sse_trace: Vec<f64> = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &l) in z.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(x) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..z.len())
                    .max_by(|&a, &b| {
                        squared(&z[a], &centroids[labels[a]]).total_cmp(&squared(&z[b], &centroids[labels[b]]))
                    })
                    .expect("non-empty");
                centroids[j] = z[far].clone();
                labels[far] = j;
            }
        }
        let cur = sse(z, &labels, &centroids);
        if let Some(&prev) = sse_trace.last() {
            assert!(cur <= prev + 1e-9 * prev.max(1.0), "SSE rose from {prev} to {cur}");
        }
        sse_trace.push(cur);
        let next: Vec<usize> = z.iter().map(|x| nearest(x, &centroids).0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(KMeans {
        labels,
        centroids,
        iterations,
        sse_trace,
    })
}

/// Mean silhouette; singleton clusters contribute 0, as does a point with
/// `max(a, b) = 0`.
pub fn silhouette(z: &[Vec<f64>], labels: &[usize]) -> Result<f64, MetricsError> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(MetricsError::SingleCluster);
    }
    let mut total = 0.0;
    for (i, x) in z.iter().enumerate() {
        let li = labels[i];
        if sizes[li] == 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for (j, y) in z.iter().enumerate() {
            if j != i {
                sums[labels[j]] += euclidean(x, y);
            }
        }
        let a = sums[li] / (sizes[li] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != li && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / z.len() as f64)
}

pub fn sse(z: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    z.iter().zip(labels).map(|(x, &l)| squared(x, &centroids[l])).sum()
}

/// K-means then SC and SSE of the result.
pub fn cluster_quality(z: &[Vec<f64>], k: usize, seed: u64) -> Result<(KMeans, ClusterBlock), MetricsError> {
    let km = kmeans(z, k, seed)?;
    let sc = silhouette(z, &km.labels)?;
    let s = sse(z, &km.labels, &km.centroids);
    Ok((km, ClusterBlock { k, sc, sse: s }))
}
