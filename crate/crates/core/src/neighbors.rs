//! Local-neighbourhood change scoring.
//!
//! For a token, the first month it appears in is its anchor. At every later
//! month `t` the token's `k` nearest neighbours at the anchor and at `t` are
//! unioned, restricted to tokens present in both months, and sorted. Two
//! second-order vectors hold the token's cosine to each of those neighbours
//! in either month; the change score is one minus their cosine.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::sig9;
use crate::month::Month;
use crate::snapshot::{cosine, EmbeddingSnapshot, TemporalDataset, TokenFilter};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoringConfig {
    /// Neighbours kept per second-order vector.
    pub k: usize,
    /// Nearest candidates ranked before filtering.
    pub pool: usize,
    /// Shared components below which a score is reported missing.
    pub min_components: usize,
    pub filter: TokenFilter,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            k: 25,
            pool: 500,
            min_components: 2,
            filter: TokenFilter::standard(),
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.k > self.pool {
            return Err(Error::Config(format!(
                "need 1 <= k <= pool, got k={} pool={}",
                self.k, self.pool
            )));
        }
        if self.min_components < 2 {
            return Err(Error::Config(format!(
                "min_components must be at least 2, got {}",
                self.min_components
            )));
        }
        Ok(())
    }
}

/// Ranked neighbours of a token in one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    pub token: String,
    pub month: Month,
    pub neighbors: Vec<(String, f64)>,
}

/// Cosine profile of a token against a shared neighbour index.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderVector {
    pub token: String,
    pub month: Month,
    pub index: Vec<String>,
    pub components: Vec<f64>,
}

/// Similarity descending, then token ascending.
fn rank_order(snapshot: &EmbeddingSnapshot, a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then_with(|| snapshot.tokens()[a.1].cmp(&snapshot.tokens()[b.1]))
}

/// Row indices of the accepted top-k neighbours of row `target`, with similarities.
fn ranked_neighbors(
    snapshot: &EmbeddingSnapshot,
    target: usize,
    config: &ScoringConfig,
) -> Vec<(f64, usize)> {
    let mut candidates: Vec<(f64, usize)> = (0..snapshot.len())
        .filter(|&j| j != target)
        .map(|j| (snapshot.row_cosine(target, j), j))
        .collect();
    if config.pool < candidates.len() {
        candidates.select_nth_unstable_by(config.pool - 1, |a, b| rank_order(snapshot, a, b));
        candidates.truncate(config.pool);
    }
    candidates.sort_unstable_by(|a, b| rank_order(snapshot, a, b));
    candidates
        .into_iter()
        .filter(|&(_, j)| config.filter.accepts(&snapshot.tokens()[j]))
        .take(config.k)
        .collect()
}

/// The `k` nearest accepted neighbours of `token`, taken from its `pool`
/// nearest candidates. Ties rank lexicographically by token.
pub fn top_k_neighbors(
    snapshot: &EmbeddingSnapshot,
    token: &str,
    config: &ScoringConfig,
) -> Result<NeighborList> {
    let target = snapshot.position(token).ok_or_else(|| Error::TokenAbsent {
        token: token.to_string(),
        month: snapshot.month(),
    })?;
    let neighbors = ranked_neighbors(snapshot, target, config)
        .into_iter()
        .map(|(sim, j)| (snapshot.tokens()[j].clone(), sim))
        .collect();
    Ok(NeighborList {
        token: token.to_string(),
        month: snapshot.month(),
        neighbors,
    })
}

fn profile(snapshot: &EmbeddingSnapshot, token: &str, index: &[String]) -> Result<SecondOrderVector> {
    let target = snapshot.vector(token).ok_or_else(|| Error::TokenAbsent {
        token: token.to_string(),
        month: snapshot.month(),
    })?;
    let components = index
        .iter()
        .map(|n| cosine(target, snapshot.vector(n).expect("index restricted to shared vocabulary")))
        .collect::<Result<Vec<f64>>>()?;
    Ok(SecondOrderVector {
        token: token.to_string(),
        month: snapshot.month(),
        index: index.to_vec(),
        components,
    })
}

fn pair_from_lists(
    anchor: &EmbeddingSnapshot,
    current: &EmbeddingSnapshot,
    token: &str,
    anchor_list: &NeighborList,
    current_list: &NeighborList,
    config: &ScoringConfig,
) -> Result<(SecondOrderVector, SecondOrderVector)> {
    let index: Vec<String> = anchor_list
        .neighbors
        .iter()
        .chain(&current_list.neighbors)
        .map(|(n, _)| n.as_str())
        .filter(|n| anchor.contains(n) && current.contains(n))
        .collect::<BTreeSet<&str>>()
        .into_iter()
        .map(str::to_string)
        .collect();
    if index.len() < config.min_components {
        return Err(Error::TooFewComponents {
            found: index.len(),
            required: config.min_components,
        });
    }
    Ok((profile(anchor, token, &index)?, profile(current, token, &index)?))
}

/// Second-order vectors of `token` at the anchor and current snapshots over
/// their shared, lexicographically sorted neighbour index.
pub fn second_order_pair(
    anchor: &EmbeddingSnapshot,
    current: &EmbeddingSnapshot,
    token: &str,
    config: &ScoringConfig,
) -> Result<(SecondOrderVector, SecondOrderVector)> {
    let anchor_list = top_k_neighbors(anchor, token, config)?;
    let current_list = top_k_neighbors(current, token, config)?;
    pair_from_lists(anchor, current, token, &anchor_list, &current_list, config)
}

/// Outcome of scoring one month; `value` is `None` when the score is missing.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeScore {
    pub value: Option<f64>,
    pub components: usize,
    pub reason: Option<String>,
}

impl ChangeScore {
    fn missing(reason: impl ToString) -> Self {
        ChangeScore {
            value: None,
            components: 0,
            reason: Some(reason.to_string()),
        }
    }
}

/// Cosine distance between two second-order profiles, in `[0, 2]`.
/// Bitwise-identical profiles score exactly zero.
pub fn profile_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    Ok((1.0 - cosine(a, b)?).clamp(0.0, 2.0))
}

fn score_pair(pair: Result<(SecondOrderVector, SecondOrderVector)>) -> ChangeScore {
    match pair {
        Ok((a, b)) => match profile_distance(&a.components, &b.components) {
            Ok(value) => ChangeScore {
                value: Some(value),
                components: a.index.len(),
                reason: None,
            },
            Err(e) => ChangeScore {
                components: a.index.len(),
                ..ChangeScore::missing(e)
            },
        },
        Err(Error::TooFewComponents { found, required }) => ChangeScore {
            components: found,
            ..ChangeScore::missing(format!("{found} shared components < {required}"))
        },
        Err(e) => ChangeScore::missing(e),
    }
}

/// Local-neighbourhood change of `token` between the anchor and current snapshots.
pub fn change_score(
    anchor: &EmbeddingSnapshot,
    current: &EmbeddingSnapshot,
    token: &str,
    config: &ScoringConfig,
) -> ChangeScore {
    score_pair(second_order_pair(anchor, current, token, config))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub month: Month,
    pub score: Option<f64>,
    pub components: usize,
    pub reason: Option<String>,
}

/// A token's change scores relative to its anchor month.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeSeries {
    pub token: String,
    pub anchor_month: Month,
    pub points: Vec<SeriesPoint>,
}

impl ChangeSeries {
    /// Non-missing `(month, score)` pairs.
    pub fn observed(&self) -> impl Iterator<Item = (Month, f64)> + '_ {
        self.points.iter().filter_map(|p| p.score.map(|s| (p.month, s)))
    }

    pub fn scores(&self) -> Vec<f64> {
        self.observed().map(|(_, s)| s).collect()
    }
}

/// Scores `token` at every month it appears in, relative to its first month.
pub fn change_series(
    dataset: &TemporalDataset,
    token: &str,
    config: &ScoringConfig,
) -> Result<ChangeSeries> {
    config.validate()?;
    let present: Vec<&EmbeddingSnapshot> = dataset
        .snapshots()
        .iter()
        .filter(|s| s.contains(token))
        .collect();
    let Some((&anchor, rest)) = present.split_first() else {
        return Err(Error::TokenNeverSeen(token.to_string()));
    };
    let anchor_list = top_k_neighbors(anchor, token, config)?;
    let anchor_components = anchor_list.neighbors.len();

    let mut points = Vec::with_capacity(present.len());
    points.push(SeriesPoint {
        month: anchor.month(),
        score: Some(0.0),
        components: anchor_components,
        reason: None,
    });
    let later: Vec<SeriesPoint> = rest
        .par_iter()
        .map(|&current| {
            let scored = top_k_neighbors(current, token, config).and_then(|current_list| {
                pair_from_lists(anchor, current, token, &anchor_list, &current_list, config)
            });
            let score = score_pair(scored);
            SeriesPoint {
                month: current.month(),
                score: score.value,
                components: score.components,
                reason: score.reason,
            }
        })
        .collect();
    points.extend(later);
    Ok(ChangeSeries {
        token: token.to_string(),
        anchor_month: anchor.month(),
        points,
    })
}

/// Scores many tokens in parallel; results keep the input order.
pub fn score_tokens(
    dataset: &TemporalDataset,
    tokens: &[String],
    config: &ScoringConfig,
) -> Vec<Result<ChangeSeries>> {
    tokens
        .par_iter()
        .map(|t| change_series(dataset, t, config))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesRow {
    token: String,
    anchor_month: Month,
    month: Month,
    score: String,
    components: usize,
    reason: String,
}

/// Writes `token,anchor_month,month,score,components,reason` rows.
/// Missing scores have an empty score field and a reason.
pub fn write_series_csv<W: Write>(writer: W, series: &[ChangeSeries]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for s in series {
        for p in &s.points {
            out.serialize(SeriesRow {
                token: s.token.clone(),
                anchor_month: s.anchor_month,
                month: p.month,
                score: p.score.map(sig9).unwrap_or_default(),
                components: p.components,
                reason: p.reason.clone().unwrap_or_default(),
            })
            .map_err(csv_error)?;
        }
    }
    out.flush().map_err(|e| Error::io("<series csv>", e))?;
    Ok(())
}

/// Reads series written by [`write_series_csv`], preserving token order of first appearance.
pub fn read_series_csv<R: Read>(reader: R) -> Result<Vec<ChangeSeries>> {
    let mut input = csv::Reader::from_reader(reader);
    let mut series: Vec<ChangeSeries> = Vec::new();
    for (i, row) in input.deserialize::<SeriesRow>().enumerate() {
        let row = row.map_err(csv_error)?;
        let score = if row.score.is_empty() {
            None
        } else {
            Some(row.score.parse::<f64>().map_err(|_| Error::Parse {
                line: i + 2,
                message: format!("bad score {:?}", row.score),
            })?)
        };
        let point = SeriesPoint {
            month: row.month,
            score,
            components: row.components,
            reason: (!row.reason.is_empty()).then_some(row.reason),
        };
        match series.iter_mut().find(|s| s.token == row.token) {
            Some(s) => {
                if s.anchor_month != row.anchor_month
                    || s.points.last().is_some_and(|last| last.month >= point.month)
                {
                    return Err(Error::Parse {
                        line: i + 2,
                        message: format!("rows for {:?} out of order or inconsistent anchor", row.token),
                    });
                }
                s.points.push(point);
            }
            None => series.push(ChangeSeries {
                token: row.token,
                anchor_month: row.anchor_month,
                points: vec![point],
            }),
        }
    }
    Ok(series)
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}
