//! Grouping heatmap pixels into importance-ordered clusters.
//!
//! All three schemes cluster on the normalized relevance value of each
//! pixel alone; pixel coordinates play no part. Clusters are ranked by mean
//! relevance, highest first, with ties going to the cluster holding the
//! smaller pixel index.

mod kmeans;
mod meanshift;

pub use kmeans::{select_kmeans, MAX_LLOYD_ITERATIONS};
pub use meanshift::{select_meanshift, MAX_SHIFT_ITERATIONS, SHIFT_TOLERANCE};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attribution::{normalize_heatmap, Heatmap};
use crate::error::{Error, Result};

pub const DEFAULT_CLUSTERS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    Bins,
    KMeans,
    MeanShift,
}

impl SelectionMethod {
    pub const ALL: [SelectionMethod; 3] = [
        SelectionMethod::Bins,
        SelectionMethod::KMeans,
        SelectionMethod::MeanShift,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SelectionMethod::Bins => "bins",
            SelectionMethod::KMeans => "kmeans",
            SelectionMethod::MeanShift => "meanshift",
        }
    }
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bins" => Ok(SelectionMethod::Bins),
            "kmeans" => Ok(SelectionMethod::KMeans),
            "meanshift" => Ok(SelectionMethod::MeanShift),
            other => Err(Error::input(format!(
                "unknown selection method {other:?}, expected bins, kmeans or meanshift"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// One tenth of the normalized value span.
    Auto,
    Fixed(f64),
}

impl FromStr for Bandwidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Bandwidth::Auto);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::input(format!("bandwidth must be a number or \"auto\", got {s:?}")))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::input(format!("bandwidth must be positive, got {v}")));
        }
        Ok(Bandwidth::Fixed(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    pub method: SelectionMethod,
    pub bins: usize,
    pub kmeans_k: usize,
    pub kmeans_seed: u64,
    pub meanshift_bandwidth: Bandwidth,
    pub meanshift_top: usize,
}

impl SelectionConfig {
    pub fn new(method: SelectionMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    /// Sets the count that matters for the configured method.
    pub fn with_clusters(mut self, n: usize) -> Self {
        self.bins = n;
        self.kmeans_k = n;
        self.meanshift_top = n;
        self
    }
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            method: SelectionMethod::MeanShift,
            bins: DEFAULT_CLUSTERS,
            kmeans_k: DEFAULT_CLUSTERS,
            kmeans_seed: 0,
            meanshift_bandwidth: Bandwidth::Auto,
            meanshift_top: DEFAULT_CLUSTERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub rank: usize,
    pub mean_relevance: f64,
    /// Row-major pixel indices, ascending.
    pub pixels: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSelection {
    pub method: String,
    pub params: SelectionParams,
    pub heatmap_id: String,
    pub width: usize,
    pub height: usize,
    pub clusters: Vec<Cluster>,
}

impl ClusterSelection {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn covered(&self) -> usize {
        self.clusters.iter().map(|c| c.pixels.len()).sum()
    }

    /// Union of the pixels in clusters of rank `1..=upto`, sorted.
    pub fn cumulative_pixels(&self, upto: usize) -> Vec<usize> {
        let mut px: Vec<usize> = self
            .clusters
            .iter()
            .take(upto)
            .flat_map(|c| c.pixels.iter().copied())
            .collect();
        px.sort_unstable();
        px
    }

    /// Checks pixel bounds, disjointness and rank numbering.
    pub fn validate(&self) -> Result<()> {
        let n = self.pixel_count();
        let mut seen = vec![false; n];
        for (i, c) in self.clusters.iter().enumerate() {
            if c.rank != i + 1 {
                return Err(Error::format(format!(
                    "cluster {i} has rank {}, expected {}",
                    c.rank,
                    i + 1
                )));
            }
            for &p in &c.pixels {
                if p >= n {
                    return Err(Error::input(format!("pixel index {p} out of range for {n} pixels")));
                }
                if std::mem::replace(&mut seen[p], true) {
                    return Err(Error::format(format!("pixel {p} appears in two clusters")));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn ensure_normalized(h: &Heatmap) -> std::borrow::Cow<'_, Heatmap> {
    if h.is_normalized() {
        std::borrow::Cow::Borrowed(h)
    } else {
        std::borrow::Cow::Owned(normalize_heatmap(h))
    }
}

/// Ranks groups of pixel indices into clusters.
pub(crate) fn rank_groups(groups: Vec<Vec<usize>>, values: &[f64]) -> Vec<Cluster> {
    let mut clusters: Vec<Cluster> = groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|mut pixels| {
            pixels.sort_unstable();
            let mean = pixels.iter().map(|&p| values[p]).sum::<f64>() / pixels.len() as f64;
            Cluster {
                rank: 0,
                mean_relevance: mean,
                pixels,
            }
        })
        .collect();
    clusters.sort_by(|a, b| {
        b.mean_relevance
            .total_cmp(&a.mean_relevance)
            .then(a.pixels[0].cmp(&b.pixels[0]))
    });
    for (i, c) in clusters.iter_mut().enumerate() {
        c.rank = i + 1;
    }
    clusters
}

pub(crate) fn build(
    h: &Heatmap,
    method: &str,
    params: SelectionParams,
    groups: Vec<Vec<usize>>,
) -> ClusterSelection {
    ClusterSelection {
        method: method.to_string(),
        params,
        heatmap_id: h.id(),
        width: h.width(),
        height: h.height(),
        clusters: rank_groups(groups, h.values()),
    }
}

/// Equal-width value bins over `[0, 1]`: a pixel with value `v` lands in
/// bin `floor(v * bins)`, with `v = 1` kept in the top bin.
pub fn select_bins(h: &Heatmap, bins: usize) -> Result<ClusterSelection> {
    if bins == 0 {
        return Err(Error::input("bin count must be at least 1"));
    }
    let h = ensure_normalized(h);
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (p, &v) in h.values().iter().enumerate() {
        let bin = ((v * bins as f64).floor() as usize).min(bins - 1);
        groups.entry(bin).or_default().push(p);
    }
    Ok(build(
        &h,
        "bins",
        SelectionParams {
            bins: Some(bins),
            ..Default::default()
        },
        groups.into_values().collect(),
    ))
}

/// Runs the configured selection method.
pub fn select(h: &Heatmap, config: &SelectionConfig) -> Result<ClusterSelection> {
    match config.method {
        SelectionMethod::Bins => select_bins(h, config.bins),
        SelectionMethod::KMeans => select_kmeans(h, config.kmeans_k, config.kmeans_seed),
        SelectionMethod::MeanShift => {
            select_meanshift(h, config.meanshift_bandwidth, config.meanshift_top)
        }
    }
}

/// Random-order baseline: shuffles all pixels with `seed` and cuts the
/// permutation into consecutive clusters of the given sizes. The clusters
/// keep their shuffled order rather than being ranked by relevance.
pub fn select_random(h: &Heatmap, sizes: &[usize], seed: u64) -> Result<ClusterSelection> {
    let total: usize = sizes.iter().sum();
    if total > h.len() {
        return Err(Error::input(format!(
            "cluster sizes cover {total} pixels but the heatmap has {}",
            h.len()
        )));
    }
    let mut order: Vec<usize> = (0..h.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut rest = order.as_slice();
    let mut clusters = Vec::with_capacity(sizes.len());
    for (i, &size) in sizes.iter().enumerate().filter(|(_, &s)| s > 0) {
        let (head, tail) = rest.split_at(size);
        rest = tail;
        let mut pixels = head.to_vec();
        pixels.sort_unstable();
        let mean = pixels.iter().map(|&p| h.values()[p]).sum::<f64>() / size as f64;
        clusters.push(Cluster {
            rank: i + 1,
            mean_relevance: mean,
            pixels,
        });
    }
    for (i, c) in clusters.iter_mut().enumerate() {
        c.rank = i + 1;
    }
    Ok(ClusterSelection {
        method: "random".into(),
        params: SelectionParams {
            seed: Some(seed),
            ..Default::default()
        },
        heatmap_id: h.id(),
        width: h.width(),
        height: h.height(),
        clusters,
    })
}

pub fn write_selection(sel: &ClusterSelection, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut json = serde_json::to_vec(sel)?;
    json.push(b'\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_selection(path: impl AsRef<Path>) -> Result<ClusterSelection> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let sel: ClusterSelection = serde_json::from_str(&text)?;
    sel.validate()?;
    Ok(sel)
}
