//! One-dimensional k-means over pixel relevance values.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{build, ensure_normalized, ClusterSelection, SelectionParams};
use crate::attribution::Heatmap;
use crate::error::{Error, Result};

pub const MAX_LLOYD_ITERATIONS: usize = 300;

/// Sorted distinct values, their multiplicities, and each input's index into them.
pub(crate) fn distinct_values(values: &[f64]) -> (Vec<f64>, Vec<usize>, Vec<usize>) {
    // `+ 0.0` folds -0.0 into 0.0 so total ordering matches numeric equality
    let canon: Vec<f64> = values.iter().map(|v| v + 0.0).collect();
    let mut distinct = canon.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut counts = vec![0usize; distinct.len()];
    let index: Vec<usize> = canon
        .iter()
        .map(|v| {
            let i = distinct
                .binary_search_by(|d| d.total_cmp(v))
                .expect("value present");
            counts[i] += 1;
            i
        })
        .collect();
    (distinct, counts, index)
}

/// Picks an index with probability proportional to `weights`.
fn sample_weighted(weights: &[f64], rng: &mut impl Rng) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = Some(i);
        if acc > target {
            return Some(i);
        }
    }
    last
}

/// k-means++ seeding on weighted points.
fn plus_plus_init(points: &[f64], counts: &[usize], k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mass: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let first = sample_weighted(&mass, rng).expect("non-empty data");
    let mut centroids = vec![points[first]];
    let mut d2: Vec<f64> = points.iter().map(|p| (p - points[first]).powi(2)).collect();
    while centroids.len() < k {
        let weights: Vec<f64> = d2.iter().zip(&mass).map(|(d, m)| d * m).collect();
        let Some(next) = sample_weighted(&weights, rng) else {
            break;
        };
        let c = points[next];
        centroids.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min((p - c).powi(2));
        }
    }
    centroids
}

fn nearest(points: &[f64], centroids: &[f64]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = (p - centroids[0]).abs();
            for (i, c) in centroids.iter().enumerate().skip(1) {
                let d = (p - c).abs();
                if d < best_d {
                    best = i;
                    best_d = d;
                }
            }
            best
        })
        .collect()
}

fn update_centroids(points: &[f64], counts: &[usize], assign: &[usize], centroids: &mut [f64]) -> Vec<usize> {
    let k = centroids.len();
    let mut sums = vec![0.0; k];
    let mut mass = vec![0usize; k];
    let mut members = vec![0usize; k];
    for ((p, &c), &a) in points.iter().zip(counts).zip(assign) {
        sums[a] += p * c as f64;
        mass[a] += c;
        members[a] += 1;
    }
    for i in 0..k {
        if mass[i] > 0 {
            centroids[i] = sums[i] / mass[i] as f64;
        }
    }
    members
}

/// Lloyd iterations on weighted 1-D points. Returns the cluster of each point.
pub(crate) fn lloyd(points: &[f64], counts: &[usize], mut centroids: Vec<f64>) -> Vec<usize> {
    let mut assign = nearest(points, &centroids);
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut members = update_centroids(points, counts, &assign, &mut centroids);
        let mut repaired = false;
        for empty in 0..centroids.len() {
            if members[empty] > 0 {
                continue;
            }
            // move the point farthest from its own centroid into the empty cluster
            let donor = (0..points.len())
                .filter(|&j| members[assign[j]] > 1)
                .max_by(|&a, &b| {
                    let da = (points[a] - centroids[assign[a]]).abs();
                    let db = (points[b] - centroids[assign[b]]).abs();
                    da.total_cmp(&db).then(b.cmp(&a))
                });
            let Some(j) = donor else { break };
            members[assign[j]] -= 1;
            members[empty] = 1;
            assign[j] = empty;
            repaired = true;
        }
        if repaired {
            update_centroids(points, counts, &assign, &mut centroids);
        }
        let next = nearest(points, &centroids);
        if next == assign {
            break;
        }
        assign = next;
    }
    assign
}

/// Lloyd's algorithm on the 1-D relevance values with seeded k-means++
/// initialization. With fewer distinct values than `k`, each distinct value
/// becomes its own cluster.
pub fn select_kmeans(h: &Heatmap, k: usize, seed: u64) -> Result<ClusterSelection> {
    if k == 0 {
        return Err(Error::input("k must be at least 1"));
    }
    if h.is_empty() {
        return Err(Error::input("cannot cluster an empty heatmap"));
    }
    let h = ensure_normalized(h);
    let (points, counts, index) = distinct_values(h.values());
    let (assign, groups_len) = if points.len() < k {
        warn!(
            "k = {k} exceeds the {} distinct heatmap values; using one cluster per value",
            points.len()
        );
        ((0..points.len()).collect(), points.len())
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init = plus_plus_init(&points, &counts, k, &mut rng);
        (lloyd(&points, &counts, init), k)
    };
    let mut groups = vec![Vec::new(); groups_len];
    for (p, &i) in index.iter().enumerate() {
        groups[assign[i]].push(p);
    }
    Ok(build(
        &h,
        "kmeans",
        SelectionParams {
            k: Some(k),
            seed: Some(seed),
            ..Default::default()
        },
        groups,
    ))
}
