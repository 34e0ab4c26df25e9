//! Independent reference implementations used by the integration tests.
//! Everything here works from raw vectors and explicit loops.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semchange::{ChangeSeries, EmbeddingSnapshot, Month, TokenFilter};
use semchange::neighbors::SeriesPoint;

pub fn month(s: &str) -> Month {
    s.parse().unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn raw_cosine(u: &[f64], v: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    dot / (uu.sqrt() * vv.sqrt())
}

/// Every other token ranked by cosine (descending), ties by token.
pub fn full_scan(s: &EmbeddingSnapshot, token: &str) -> Vec<(String, f64)> {
    let target = s.vector(token).unwrap();
    let mut all: Vec<(String, f64)> = s
        .tokens()
        .iter()
        .filter(|t| t.as_str() != token)
        .map(|t| (t.clone(), raw_cosine(target, s.vector(t).unwrap()).clamp(-1.0, 1.0)))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all
}

/// Scan, filter, truncate: the reference neighbour list when the pool covers the vocabulary.
pub fn knn_oracle(s: &EmbeddingSnapshot, token: &str, k: usize, filter: &TokenFilter) -> Vec<String> {
    full_scan(s, token)
        .into_iter()
        .filter(|(t, _)| filter.accepts(t))
        .take(k)
        .map(|(t, _)| t)
        .collect()
}

/// Shared index, both second-order vectors, and `1 - cosine`, recomputed from scratch.
pub struct OracleScore {
    pub index: Vec<String>,
    pub anchor: Vec<f64>,
    pub current: Vec<f64>,
    pub score: Option<f64>,
}

pub fn score_oracle(
    anchor: &EmbeddingSnapshot,
    current: &EmbeddingSnapshot,
    token: &str,
    k: usize,
    filter: &TokenFilter,
    min_components: usize,
) -> OracleScore {
    let mut union: BTreeSet<String> = knn_oracle(anchor, token, k, filter).into_iter().collect();
    union.extend(knn_oracle(current, token, k, filter));
    let index: Vec<String> = union
        .into_iter()
        .filter(|t| anchor.contains(t) && current.contains(t))
        .collect();
    let second_order = |s: &EmbeddingSnapshot| -> Vec<f64> {
        let v = s.vector(token).unwrap();
        index.iter().map(|n| raw_cosine(v, s.vector(n).unwrap()).clamp(-1.0, 1.0)).collect()
    };
    let a = second_order(anchor);
    let c = second_order(current);
    let score = if index.len() < min_components {
        None
    } else if a == c {
        Some(0.0)
    } else {
        Some((1.0 - raw_cosine(&a, &c)).clamp(0.0, 2.0))
    };
    OracleScore { index, anchor: a, current: c, score }
}

/// Minimum accumulated |a_i - b_j| over every monotone boundary-to-boundary path.
pub fn dtw_brute(a: &[f64], b: &[f64]) -> f64 {
    fn go(a: &[f64], b: &[f64], i: usize, j: usize) -> f64 {
        let here = (a[i] - b[j]).abs();
        if i + 1 == a.len() && j + 1 == b.len() {
            return here;
        }
        let mut best = f64::INFINITY;
        if i + 1 < a.len() {
            best = best.min(go(a, b, i + 1, j));
        }
        if j + 1 < b.len() {
            best = best.min(go(a, b, i, j + 1));
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            best = best.min(go(a, b, i + 1, j + 1));
        }
        here + best
    }
    go(a, b, 0, 0)
}

/// A series with one observed point per consecutive month.
pub fn series(token: &str, start: Month, values: &[Option<f64>]) -> ChangeSeries {
    ChangeSeries {
        token: token.to_string(),
        anchor_month: start,
        points: values
            .iter()
            .enumerate()
            .map(|(i, &score)| SeriesPoint {
                month: start.offset(i as i64),
                score,
                components: 25,
                reason: score.is_none().then(|| "missing".to_string()),
            })
            .collect(),
    }
}

pub fn dense(token: &str, start: Month, values: &[f64]) -> ChangeSeries {
    let v: Vec<Option<f64>> = values.iter().copied().map(Some).collect();
    series(token, start, &v)
}

/// Random snapshot over tokens `w0..`, with a share of duplicated rows.
pub fn random_snapshot(r: &mut ChaCha8Rng, tokens: &[String], dim: usize, m: Month) -> EmbeddingSnapshot {
    let mut rows: Vec<(String, Vec<f64>)> = Vec::with_capacity(tokens.len());
    for (i, t) in tokens.iter().enumerate() {
        let v: Vec<f64> = if i > 0 && r.random_bool(0.05) {
            rows[r.random_range(0..i)].1.clone()
        } else {
            (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()
        };
        rows.push((t.clone(), v));
    }
    EmbeddingSnapshot::new(m, dim, rows).unwrap()
}

pub fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:04}")).collect()
}
