//! Synthetic datasets with planted drift, used as a ground-truth oracle.
//!
//! Distractor tokens are fixed random unit vectors. Each planted token gets
//! two prototypes, the means of two disjoint random distractor subsets, and
//! its vector at month `t` is the normalised blend `(1 − w(t))·A + w(t)·B`.
//! The weight curve `w` depends on the drift pattern.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64`, and vector
//! components are drawn with `rand_distr::StandardNormal`. Components are
//! rounded to `precision` decimals before use, so the files written by
//! [`SyntheticDataset::write`] parse back to exactly the in-memory dataset.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::month::Month;
use crate::shape::ClusterReport;
use crate::snapshot::{EmbeddingSnapshot, TemporalDataset};

pub const GENERATOR_ID: &str = "semchange-synth/1 chacha8(seed_from_u64) standard-normal unit distractors";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Pattern {
    Stable,
    SuddenPeak,
    Gradual,
    Seasonal,
}

/// Months a sudden peak stays at full magnitude.
pub const PEAK_MONTHS: i64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub token: String,
    pub pattern: Pattern,
    pub onset: Month,
    pub magnitude: f64,
    /// Seasonal cycle length in months.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<usize>,
    /// Seeds prototype selection for this token; derived from the dataset seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// First month the token exists; dataset start when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first: Option<Month>,
    /// Last month the token exists; dataset end when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last: Option<Month>,
}

impl DriftSpec {
    pub fn new(token: impl Into<String>, pattern: Pattern, onset: Month, magnitude: f64) -> Self {
        DriftSpec {
            token: token.into(),
            pattern,
            onset,
            magnitude,
            period: None,
            seed: None,
            first: None,
            last: None,
        }
    }

    pub fn with_period(mut self, period: usize) -> Self {
        self.period = Some(period);
        self
    }

    /// Blend weight toward prototype B at `month`; `end` is the token's last month.
    pub fn weight(&self, month: Month, end: Month) -> f64 {
        let since = self.onset.months_until(month);
        if since < 0 {
            return 0.0;
        }
        match self.pattern {
            Pattern::Stable => 0.0,
            Pattern::SuddenPeak => {
                if since < PEAK_MONTHS {
                    self.magnitude
                } else {
                    0.0
                }
            }
            Pattern::Gradual => {
                let span = self.onset.months_until(end);
                if span <= 0 {
                    self.magnitude
                } else {
                    self.magnitude * since as f64 / span as f64
                }
            }
            Pattern::Seasonal => {
                let period = self.period.unwrap_or(12) as i64;
                if since % period < period / 2 {
                    self.magnitude
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub start: Month,
    pub months: usize,
    /// Total vocabulary: distractors plus planted tokens.
    pub vocab_size: usize,
    pub dim: usize,
    pub seed: u64,
    /// Distractors averaged into each prototype.
    #[serde(default = "default_prototype_size")]
    pub prototype_size: usize,
    /// Decimals kept per component.
    #[serde(default = "default_precision")]
    pub precision: usize,
}

fn default_prototype_size() -> usize {
    25
}

fn default_precision() -> usize {
    6
}

impl SynthConfig {
    pub fn new(start: Month, months: usize, vocab_size: usize, dim: usize, seed: u64) -> Self {
        SynthConfig {
            start,
            months,
            vocab_size,
            dim,
            seed,
            prototype_size: default_prototype_size(),
            precision: default_precision(),
        }
    }

    pub fn end(&self) -> Month {
        self.start.offset(self.months as i64 - 1)
    }
}

/// A generation request as read from a spec file: the config plus planted tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPlan {
    #[serde(flatten)]
    pub config: SynthConfig,
    pub tokens: Vec<DriftSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedLabel {
    #[serde(flatten)]
    pub spec: DriftSpec,
    pub prototype_a: Vec<String>,
    pub prototype_b: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: TemporalDataset,
    pub labels: BTreeMap<String, PlantedLabel>,
    pub config: SynthConfig,
    pub distractors: Vec<String>,
}

fn quantize(x: f64, precision: usize) -> f64 {
    format!("{:.*}", precision, x).parse().expect("formatted float")
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Generates a dataset with the given planted tokens. A pure function of its arguments.
pub fn generate(specs: &[DriftSpec], config: &SynthConfig) -> Result<SyntheticDataset> {
    if specs.is_empty() {
        return Err(Error::Config("no planted tokens specified".into()));
    }
    if config.months == 0 {
        return Err(Error::Config("months must be positive".into()));
    }
    if config.dim < 8 {
        return Err(Error::Config(format!("dim must be at least 8, got {}", config.dim)));
    }
    if config.prototype_size == 0 {
        return Err(Error::Config("prototype_size must be positive".into()));
    }
    let n_distractors = config.vocab_size.saturating_sub(specs.len());
    if n_distractors < 2 * config.prototype_size {
        return Err(Error::Config(format!(
            "vocabulary of {} leaves {n_distractors} distractors, need {} for two disjoint prototypes",
            config.vocab_size,
            2 * config.prototype_size
        )));
    }
    let (start, end) = (config.start, config.end());
    let width = (n_distractors - 1).to_string().len();
    let distractors: Vec<String> = (0..n_distractors).map(|i| format!("w{i:0width$}")).collect();
    let reserved: BTreeSet<&str> = distractors.iter().map(String::as_str).collect();
    let mut seen = BTreeSet::new();
    for s in specs {
        if s.token.is_empty() || s.token.chars().any(char::is_whitespace) {
            return Err(Error::Config(format!("invalid planted token {:?}", s.token)));
        }
        if reserved.contains(s.token.as_str()) || !seen.insert(s.token.as_str()) {
            return Err(Error::Config(format!("planted token {:?} is not unique", s.token)));
        }
        if !(0.0..=1.0).contains(&s.magnitude) {
            return Err(Error::Config(format!("magnitude {} of {:?} outside [0, 1]", s.magnitude, s.token)));
        }
        let first = s.first.unwrap_or(start);
        let last = s.last.unwrap_or(end);
        if first < start || last > end || first > last {
            return Err(Error::Config(format!("lifetime of {:?} outside the dataset range", s.token)));
        }
        if s.onset < start || s.onset > end {
            return Err(Error::Config(format!("onset of {:?} outside the dataset range", s.token)));
        }
        if s.pattern == Pattern::Seasonal && s.period.is_some_and(|p| p < 2) {
            return Err(Error::Config(format!("seasonal period of {:?} must be at least 2", s.token)));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let distractor_vectors: Vec<Vec<f64>> = (0..n_distractors)
        .map(|_| loop {
            let raw: Vec<f64> = (0..config.dim).map(|_| rng.sample(StandardNormal)).collect();
            let v: Vec<f64> = normalized(&raw)
                .into_iter()
                .map(|x| quantize(x, config.precision))
                .collect();
            if v.iter().any(|&x| x != 0.0) {
                break v;
            }
        })
        .collect();

    let mut labels = BTreeMap::new();
    let mut planted_prototypes = Vec::with_capacity(specs.len());
    for spec in specs {
        let token_seed = spec.seed.unwrap_or_else(|| rng.random());
        let mut token_rng = ChaCha8Rng::seed_from_u64(token_seed);
        let picks = sample(&mut token_rng, n_distractors, 2 * config.prototype_size).into_vec();
        let (a_idx, b_idx) = picks.split_at(config.prototype_size);
        let mean_of = |idx: &[usize]| -> Vec<f64> {
            let mut m = vec![0.0; config.dim];
            for &i in idx {
                for (acc, x) in m.iter_mut().zip(&distractor_vectors[i]) {
                    *acc += x;
                }
            }
            m.iter().map(|x| x / idx.len() as f64).collect()
        };
        let names = |idx: &[usize]| -> Vec<String> {
            let mut v: Vec<String> = idx.iter().map(|&i| distractors[i].clone()).collect();
            v.sort();
            v
        };
        planted_prototypes.push((mean_of(a_idx), mean_of(b_idx)));
        labels.insert(
            spec.token.clone(),
            PlantedLabel {
                spec: spec.clone(),
                prototype_a: names(a_idx),
                prototype_b: names(b_idx),
            },
        );
    }

    let mut snapshots = Vec::with_capacity(config.months);
    for t in 0..config.months {
        let month = start.offset(t as i64);
        let mut rows: Vec<(String, Vec<f64>)> = distractors
            .iter()
            .cloned()
            .zip(distractor_vectors.iter().cloned())
            .collect();
        for (spec, (a, b)) in specs.iter().zip(&planted_prototypes) {
            let (first, last) = (spec.first.unwrap_or(start), spec.last.unwrap_or(end));
            if month < first || month > last {
                continue;
            }
            let w = spec.weight(month, last);
            let blend: Vec<f64> = a.iter().zip(b).map(|(x, y)| (1.0 - w) * x + w * y).collect();
            let v = normalized(&blend)
                .into_iter()
                .map(|x| quantize(x, config.precision))
                .collect();
            rows.push((spec.token.clone(), v));
        }
        snapshots.push(EmbeddingSnapshot::new(month, config.dim, rows)?);
    }

    Ok(SyntheticDataset {
        dataset: TemporalDataset::new(snapshots)?,
        labels,
        config: config.clone(),
        distractors,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    generator: &'a str,
    seed: u64,
    parameters: &'a SynthConfig,
    planted: usize,
    distractors: usize,
}

impl SyntheticDataset {
    pub fn planted_tokens(&self) -> Vec<String> {
        self.labels.keys().cloned().collect()
    }

    /// Writes the snapshot files, `labels.json`, `manifest.json` and
    /// `targets.txt` (one planted token per line).
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.dataset.save(dir, Some(self.config.precision))?;
        let write = |name: &str, body: String| {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))
        };
        write("labels.json", serde_json::to_string_pretty(&self.labels)? + "\n")?;
        let manifest = Manifest {
            generator: GENERATOR_ID,
            seed: self.config.seed,
            parameters: &self.config,
            planted: self.labels.len(),
            distractors: self.distractors.len(),
        };
        write("manifest.json", serde_json::to_string_pretty(&manifest)? + "\n")?;
        let mut targets: String = self.labels.keys().map(|t| format!("{t}\n")).collect();
        if targets.is_empty() {
            targets.push('\n');
        }
        write("targets.txt", targets)
    }
}

pub fn read_labels(path: &Path) -> Result<BTreeMap<String, PlantedLabel>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Fraction of item pairs on which two labelings agree about being
/// together or apart (the Rand index).
pub fn pair_agreement<A: PartialEq, B: PartialEq>(truth: &[A], predicted: &[B]) -> f64 {
    assert_eq!(truth.len(), predicted.len());
    let n = truth.len();
    if n < 2 {
        return 1.0;
    }
    let mut agree = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if (truth[i] == truth[j]) == (predicted[i] == predicted[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / (n * (n - 1) / 2) as f64
}

/// Pairwise agreement between planted patterns and cluster assignments.
pub fn evaluate_recovery(
    labels: &BTreeMap<String, PlantedLabel>,
    report: &ClusterReport,
) -> Result<f64> {
    let mut truth = Vec::with_capacity(labels.len());
    let mut predicted = Vec::with_capacity(labels.len());
    for (token, label) in labels {
        let cluster = report
            .cluster_of(token)
            .ok_or_else(|| Error::Insufficient(format!("planted token {token:?} was not clustered")))?;
        truth.push(label.spec.pattern);
        predicted.push(cluster);
    }
    Ok(pair_agreement(&truth, &predicted))
}
