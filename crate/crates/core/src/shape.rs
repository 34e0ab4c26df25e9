//! Shape comparison and clustering of change trajectories.
//!
//! Profiles are compared pairwise with dynamic time warping. Each token is
//! then described by a one-hot vector marking its nearest shapes, and those
//! vectors are grouped by agglomerative clustering.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{monthly_stats, CurvePoint};
use crate::error::{Error, Result};
use crate::format::sig9;
use crate::month::Month;
use crate::neighbors::{csv_error, ChangeSeries};
use crate::pipeline::ShapeProfile;

/// Classic DTW with absolute-difference local cost, steps (1,0), (0,1),
/// (1,1), no window, aligning first-to-first and last-to-last.
pub fn dtw(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Insufficient("dtw needs non-empty sequences".into()));
    }
    let mut prev = vec![f64::INFINITY; b.len() + 1];
    let mut curr = vec![f64::INFINITY; b.len() + 1];
    prev[0] = 0.0;
    for &x in a {
        curr[0] = f64::INFINITY;
        for (j, &y) in b.iter().enumerate() {
            let best = prev[j].min(prev[j + 1]).min(curr[j]);
            curr[j + 1] = (x - y).abs() + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[b.len()])
}

pub fn dtw_distance(a: &ShapeProfile, b: &ShapeProfile) -> Result<f64> {
    dtw(&a.values, &b.values)
}

/// Symmetric pairwise DTW distances over tokens in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDistanceMatrix {
    tokens: Vec<String>,
    distances: Vec<f64>,
}

impl ShapeDistanceMatrix {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.distances[i * self.tokens.len() + j]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["token".to_string()];
        header.extend(self.tokens.iter().cloned());
        out.write_record(&header).map_err(csv_error)?;
        for (i, t) in self.tokens.iter().enumerate() {
            let mut row = vec![t.clone()];
            row.extend((0..self.len()).map(|j| sig9(self.get(i, j))));
            out.write_record(&row).map_err(csv_error)?;
        }
        out.flush().map_err(|e| Error::io("<distance csv>", e))?;
        Ok(())
    }
}

/// All pairwise DTW distances, each unordered pair computed once.
pub fn distance_matrix(profiles: &[ShapeProfile]) -> Result<ShapeDistanceMatrix> {
    if profiles.len() < 2 {
        return Err(Error::Insufficient(format!(
            "distance matrix needs at least 2 profiles, got {}",
            profiles.len()
        )));
    }
    let mut sorted: Vec<&ShapeProfile> = profiles.iter().collect();
    sorted.sort_by(|a, b| a.token.cmp(&b.token));
    if let Some(w) = sorted.windows(2).find(|w| w[0].token == w[1].token) {
        return Err(Error::Config(format!("duplicate profile for token {:?}", w[0].token)));
    }
    let n = sorted.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| dtw_distance(sorted[i], sorted[j]))
        .collect::<Result<Vec<f64>>>()?;
    let mut distances = vec![0.0; n * n];
    for (&(i, j), d) in pairs.iter().zip(values) {
        distances[i * n + j] = d;
        distances[j * n + i] = d;
    }
    Ok(ShapeDistanceMatrix {
        tokens: sorted.into_iter().map(|p| p.token.clone()).collect(),
        distances,
    })
}

/// One-hot encoding of a token's most similar shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestShapeFeatures {
    pub token: String,
    pub neighbors: Vec<String>,
    /// Indexed by the matrix's token order.
    pub feature_vector: Vec<u8>,
}

/// For each token, the `m` other tokens at smallest DTW distance
/// (lexicographic tie-break), one-hot encoded over the matrix token order.
pub fn nearest_shape_features(matrix: &ShapeDistanceMatrix, m: usize) -> Vec<NearestShapeFeatures> {
    let n = matrix.len();
    let take = m.min(n.saturating_sub(1));
    (0..n)
        .map(|i| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            // Tokens are sorted, so index order is lexicographic order.
            others.sort_by(|&a, &b| matrix.get(i, a).total_cmp(&matrix.get(i, b)).then(a.cmp(&b)));
            others.truncate(take);
            let mut feature_vector = vec![0u8; n];
            for &j in &others {
                feature_vector[j] = 1;
            }
            NearestShapeFeatures {
                token: matrix.tokens[i].clone(),
                neighbors: others.iter().map(|&j| matrix.tokens[j].clone()).collect(),
                feature_vector,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Average,
    Single,
    Complete,
}

impl std::str::FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(Linkage::Average),
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            other => Err(Error::Config(format!("unknown linkage {other:?}"))),
        }
    }
}

/// One agglomeration step. Leaves are `0..n`; the cluster formed at step `s`
/// gets id `n + s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Merge {
    pub step: usize,
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    /// Tokens in sorted order.
    pub tokens: Vec<String>,
    /// Cluster id per token. Ids are numbered by each cluster's first token.
    pub assignments: Vec<usize>,
    pub n_clusters: usize,
    pub sizes: Vec<usize>,
    /// The complete merge tree, down to a single cluster.
    pub merges: Vec<Merge>,
}

impl ClusterReport {
    pub fn cluster_of(&self, token: &str) -> Option<usize> {
        self.tokens
            .binary_search_by(|t| t.as_str().cmp(token))
            .ok()
            .map(|i| self.assignments[i])
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = &str> {
        self.tokens
            .iter()
            .zip(&self.assignments)
            .filter(move |(_, &c)| c == cluster)
            .map(|(t, _)| t.as_str())
    }

    pub fn write_assignments_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["token", "cluster"]).map_err(csv_error)?;
        for (t, c) in self.tokens.iter().zip(&self.assignments) {
            out.write_record([t.as_str(), &c.to_string()]).map_err(csv_error)?;
        }
        out.flush().map_err(|e| Error::io("<assignments csv>", e))?;
        Ok(())
    }

    pub fn write_linkage_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["step", "left", "right", "distance", "size"]).map_err(csv_error)?;
        for m in &self.merges {
            out.write_record([
                m.step.to_string(),
                m.left.to_string(),
                m.right.to_string(),
                sig9(m.distance),
                m.size.to_string(),
            ])
            .map_err(csv_error)?;
        }
        out.flush().map_err(|e| Error::io("<linkage csv>", e))?;
        Ok(())
    }
}

fn euclidean(a: &[u8], b: &[u8]) -> f64 {
    let differing = a.iter().zip(b).filter(|(x, y)| x != y).count();
    (differing as f64).sqrt()
}

/// Agglomerative clustering of feature vectors under Euclidean distance, cut
/// at `n_clusters`. Equal-distance candidates merge in order of their first
/// member token.
pub fn hierarchical_cluster(
    features: &[NearestShapeFeatures],
    n_clusters: usize,
    linkage: Linkage,
) -> Result<ClusterReport> {
    let n = features.len();
    if n_clusters < 1 || n_clusters > n {
        return Err(Error::Config(format!(
            "cluster count must be between 1 and {n}, got {n_clusters}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| features[a].token.cmp(&features[b].token));
    let tokens: Vec<String> = order.iter().map(|&i| features[i].token.clone()).collect();

    // Slot `i` holds the cluster whose smallest leaf is `i`.
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = euclidean(&features[order[i]].feature_vector, &features[order[j]].feature_vector);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let mut active: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut node_id: Vec<usize> = (0..n).collect();
    let mut label_at_cut: Option<Vec<usize>> = (n_clusters == n).then(|| (0..n).collect());
    let mut leaf_slot: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for step in 0..n.saturating_sub(1) {
        let mut best = (f64::INFINITY, 0, 0);
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                if dist[i][j] < best.0 {
                    best = (dist[i][j], i, j);
                }
            }
        }
        let (d, keep, gone) = best;
        merges.push(Merge {
            step,
            left: node_id[keep],
            right: node_id[gone],
            distance: d,
            size: size[keep] + size[gone],
        });
        for &k in &active {
            if k == keep || k == gone {
                continue;
            }
            let merged = match linkage {
                Linkage::Average => {
                    (size[keep] as f64 * dist[k][keep] + size[gone] as f64 * dist[k][gone])
                        / (size[keep] + size[gone]) as f64
                }
                Linkage::Single => dist[k][keep].min(dist[k][gone]),
                Linkage::Complete => dist[k][keep].max(dist[k][gone]),
            };
            dist[k][keep] = merged;
            dist[keep][k] = merged;
        }
        size[keep] += size[gone];
        node_id[keep] = n + step;
        active.retain(|&s| s != gone);
        for slot in leaf_slot.iter_mut() {
            if *slot == gone {
                *slot = keep;
            }
        }
        if active.len() == n_clusters {
            label_at_cut = Some(leaf_slot.clone());
        }
    }

    let slots = label_at_cut.expect("cut reached");
    // Renumber clusters by their first (smallest) leaf.
    let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
    for &s in &slots {
        let next = ids.len();
        ids.entry(s).or_insert(next);
    }
    let assignments: Vec<usize> = slots.iter().map(|s| ids[s]).collect();
    let mut sizes = vec![0; n_clusters];
    for &c in &assignments {
        sizes[c] += 1;
    }
    Ok(ClusterReport {
        tokens,
        assignments,
        n_clusters,
        sizes,
        merges,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Znormed,
    Raw,
}

/// Monthly mean/std over a cluster's members; `cluster == None` is the all-token curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterCurve {
    pub cluster: Option<usize>,
    pub kind: CurveKind,
    pub points: Vec<CurvePoint>,
}

/// Per-cluster characteristic shapes aligned on calendar months.
///
/// For every cluster (and for all tokens together) this emits the mean and
/// std of members' z-normed profile values, and, when `raw` is given, of
/// their observed raw scores. Months average only the members present.
pub fn characteristic_shapes(
    report: &ClusterReport,
    profiles: &[ShapeProfile],
    raw: Option<&[ChangeSeries]>,
) -> Result<Vec<ClusterCurve>> {
    let profile_of: BTreeMap<&str, &ShapeProfile> =
        profiles.iter().map(|p| (p.token.as_str(), p)).collect();
    let raw_of: Option<BTreeMap<&str, &ChangeSeries>> =
        raw.map(|r| r.iter().map(|s| (s.token.as_str(), s)).collect());

    let groups: Vec<Option<usize>> = std::iter::once(None)
        .chain((0..report.n_clusters).map(Some))
        .collect();
    let mut curves = Vec::new();
    for cluster in groups {
        let members: Vec<&str> = match cluster {
            Some(c) => report.members(c).collect(),
            None => report.tokens.iter().map(String::as_str).collect(),
        };
        let mut shaped: Vec<(Month, f64)> = Vec::new();
        for t in &members {
            let p = profile_of
                .get(t)
                .ok_or_else(|| Error::Insufficient(format!("no profile for clustered token {t:?}")))?;
            shaped.extend(p.months().zip(p.values.iter().copied()));
        }
        curves.push(ClusterCurve {
            cluster,
            kind: CurveKind::Znormed,
            points: monthly_stats(shaped),
        });
        if let Some(raw_of) = &raw_of {
            let observed = members
                .iter()
                .filter_map(|t| raw_of.get(t))
                .flat_map(|s| s.observed());
            curves.push(ClusterCurve {
                cluster,
                kind: CurveKind::Raw,
                points: monthly_stats(observed),
            });
        }
    }
    Ok(curves)
}

/// Writes `cluster,month,mean,std,n_members,kind`; the all-token curve uses cluster `all`.
pub fn write_shapes_csv<W: Write>(writer: W, curves: &[ClusterCurve]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["cluster", "month", "mean", "std", "n_members", "kind"])
        .map_err(csv_error)?;
    for c in curves {
        let cluster = c.cluster.map_or_else(|| "all".to_string(), |id| id.to_string());
        let kind = match c.kind {
            CurveKind::Znormed => "znormed",
            CurveKind::Raw => "raw",
        };
        for p in &c.points {
            out.write_record([
                cluster.clone(),
                p.month.to_string(),
                sig9(p.mean),
                sig9(p.std),
                p.count.to_string(),
                kind.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    out.flush().map_err(|e| Error::io("<shapes csv>", e))?;
    Ok(())
}
