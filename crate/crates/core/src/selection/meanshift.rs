//! Flat-kernel mean shift over pixel relevance values.

use super::kmeans::distinct_values;
use super::{build, ensure_normalized, Bandwidth, ClusterSelection, SelectionParams};
use crate::attribution::Heatmap;
use crate::error::{Error, Result};

pub const SHIFT_TOLERANCE: f64 = 1e-6;
pub const MAX_SHIFT_ITERATIONS: usize = 500;

/// Prefix sums over sorted distinct values for O(log n) window means.
struct Window<'a> {
    points: &'a [f64],
    mass: Vec<f64>,
    moment: Vec<f64>,
}

impl<'a> Window<'a> {
    fn new(points: &'a [f64], counts: &[usize]) -> Self {
        let mut mass = Vec::with_capacity(points.len() + 1);
        let mut moment = Vec::with_capacity(points.len() + 1);
        mass.push(0.0);
        moment.push(0.0);
        for (p, &c) in points.iter().zip(counts) {
            mass.push(mass.last().unwrap() + c as f64);
            moment.push(moment.last().unwrap() + p * c as f64);
        }
        Self {
            points,
            mass,
            moment,
        }
    }

    /// Mean of all samples within `radius` of `center`, inclusive.
    fn mean(&self, center: f64, radius: f64) -> Option<f64> {
        let lo = self.points.partition_point(|&p| p < center - radius);
        let hi = self.points.partition_point(|&p| p <= center + radius);
        let m = self.mass[hi] - self.mass[lo];
        (m > 0.0).then(|| (self.moment[hi] - self.moment[lo]) / m)
    }
}

fn seek_mode(window: &Window<'_>, start: f64, bandwidth: f64) -> f64 {
    let mut m = start;
    for _ in 0..MAX_SHIFT_ITERATIONS {
        let Some(next) = window.mean(m, bandwidth) else {
            break;
        };
        let shift = (next - m).abs();
        m = next;
        if shift < SHIFT_TOLERANCE {
            break;
        }
    }
    m
}

/// Mean shift on the 1-D relevance values with a flat kernel of radius
/// `bandwidth`. Modes closer than half a bandwidth are merged, pixels are
/// grouped by mode, and only the `top` most relevant clusters are kept.
pub fn select_meanshift(h: &Heatmap, bandwidth: Bandwidth, top: usize) -> Result<ClusterSelection> {
    if top == 0 {
        return Err(Error::input("meanshift must keep at least one cluster"));
    }
    let h = ensure_normalized(h);
    let (points, counts, index) = distinct_values(h.values());
    let span = points.last().unwrap() - points[0];
    let bw = match bandwidth {
        Bandwidth::Fixed(b) if b > 0.0 && b.is_finite() => b,
        Bandwidth::Fixed(b) => {
            return Err(Error::input(format!("bandwidth must be positive, got {b}")));
        }
        Bandwidth::Auto => span / 10.0,
    };
    let params = SelectionParams {
        bandwidth: Some(bw),
        top: Some(top),
        ..Default::default()
    };
    if span == 0.0 {
        return Ok(build(&h, "meanshift", params, vec![(0..h.len()).collect()]));
    }

    let window = Window::new(&points, &counts);
    let modes: Vec<f64> = points.iter().map(|&p| seek_mode(&window, p, bw)).collect();

    // single-linkage merge of sorted modes closer than bw / 2
    let mut order: Vec<usize> = (0..modes.len()).collect();
    order.sort_by(|&a, &b| modes[a].total_cmp(&modes[b]));
    let mut group_of_point = vec![0usize; points.len()];
    let mut group = 0;
    for w in 0..order.len() {
        if w > 0 && modes[order[w]] - modes[order[w - 1]] >= bw / 2.0 {
            group += 1;
        }
        group_of_point[order[w]] = group;
    }

    let mut groups = vec![Vec::new(); group + 1];
    for (p, &i) in index.iter().enumerate() {
        groups[group_of_point[i]].push(p);
    }
    let mut sel = build(&h, "meanshift", params, groups);
    sel.clusters.truncate(top);
    Ok(sel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::tests::heatmap;

    #[test]
    fn unimodal_is_one_cluster() {
        let sel = select_meanshift(&heatmap(&[0.40, 0.42, 0.45, 0.47]), Bandwidth::Fixed(0.1), 10)
            .unwrap();
        assert_eq!(sel.len(), 1);
        assert_eq!(sel.covered(), 4);
    }

    #[test]
    fn bimodal_ranks_high_group_first() {
        let vals = [0.19, 0.2, 0.21, 0.22, 0.79, 0.8, 0.81];
        let sel = select_meanshift(&heatmap(&vals), Bandwidth::Fixed(0.1), 10).unwrap();
        assert_eq!(sel.len(), 2);
        assert_eq!(sel.clusters[0].pixels, vec![4, 5, 6]);
        assert_eq!(sel.clusters[1].pixels, vec![0, 1, 2, 3]);
    }

    #[test]
    fn top_truncates() {
        let vals = [0.0, 0.01, 0.5, 0.51, 0.99, 1.0];
        let sel = select_meanshift(&heatmap(&vals), Bandwidth::Fixed(0.1), 1).unwrap();
        assert_eq!(sel.len(), 1);
        assert_eq!(sel.clusters[0].pixels, vec![4, 5]);
        assert!(sel.covered() < vals.len());
    }

    #[test]
    fn constant_heatmap_is_one_cluster() {
        let sel = select_meanshift(&heatmap(&[0.0; 6]), Bandwidth::Auto, 10).unwrap();
        assert_eq!(sel.len(), 1);
        assert_eq!(sel.covered(), 6);
    }

    #[test]
    fn auto_bandwidth_is_tenth_of_span() {
        let sel = select_meanshift(&heatmap(&[0.0, 0.5, 1.0]), Bandwidth::Auto, 10).unwrap();
        assert_eq!(sel.params.bandwidth, Some(0.1));
    }

    #[test]
    fn bad_bandwidth() {
        let h = heatmap(&[0.0, 1.0]);
        assert!(select_meanshift(&h, Bandwidth::Fixed(0.0), 10).is_err());
        assert!(select_meanshift(&h, Bandwidth::Fixed(-0.5), 10).is_err());
    }
}
