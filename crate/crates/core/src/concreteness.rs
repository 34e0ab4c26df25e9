//! Concreteness of high-change tokens: sense lemmas are looked up in a
//! ratings lexicon and the matched sample is compared to the lexicon mean
//! with a two-sided one-sample t-test.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};

use serde::Serialize;
use statrs::function::beta::checked_beta_reg;

use crate::cohort::{top_fraction, VolatilityTable};
use crate::error::{Error, Result};
use crate::pipeline::mean_std;

/// Token to sense lemmas (lowercased, deduplicated, file order kept).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SenseMap {
    senses: BTreeMap<String, Vec<String>>,
}

impl SenseMap {
    pub fn insert(&mut self, token: impl Into<String>, lemmas: impl IntoIterator<Item = String>) {
        let entry = self.senses.entry(token.into()).or_default();
        for lemma in lemmas {
            let lemma = lemma.trim().to_lowercase();
            if !lemma.is_empty() && !entry.contains(&lemma) {
                entry.push(lemma);
            }
        }
    }

    pub fn lemmas(&self, token: &str) -> &[String] {
        self.senses.get(token).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.senses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senses.is_empty()
    }

    /// Reads `token<TAB>lemma1,lemma2,...` lines. Blank lines and `#` comments are skipped.
    pub fn parse<R: Read>(reader: R) -> Result<Self> {
        let mut map = SenseMap::default();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() || line.starts_with("# ") {
                continue;
            }
            let (token, lemmas) = line.split_once('\t').unwrap_or((line.as_str(), ""));
            map.insert(token, lemmas.split(',').map(str::to_string));
        }
        Ok(map)
    }
}

/// Lemma ratings on the 1–5 concreteness scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcretenessLexicon {
    ratings: BTreeMap<String, f64>,
    pub population_mean: f64,
    pub population_std: f64,
}

impl ConcretenessLexicon {
    pub fn new(ratings: BTreeMap<String, f64>) -> Result<Self> {
        if ratings.is_empty() {
            return Err(Error::Insufficient("concreteness lexicon is empty".into()));
        }
        if let Some((lemma, r)) = ratings.iter().find(|(_, r)| !(1.0..=5.0).contains(*r)) {
            return Err(Error::Config(format!("rating {r} for {lemma:?} outside [1, 5]")));
        }
        let values: Vec<f64> = ratings.values().copied().collect();
        let (population_mean, population_std) = mean_std(&values);
        Ok(ConcretenessLexicon {
            ratings,
            population_mean,
            population_std,
        })
    }

    /// Replaces the population mean, e.g. with the published value of a
    /// lexicon that is only partially shipped.
    pub fn with_population_mean(mut self, mean: f64) -> Self {
        self.population_mean = mean;
        self
    }

    pub fn rating(&self, lemma: &str) -> Option<f64> {
        self.ratings.get(lemma).copied()
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    /// Reads `lemma<TAB>rating` lines. A first line whose rating is not
    /// numeric is treated as a header.
    pub fn parse<R: Read>(reader: R) -> Result<Self> {
        let mut ratings = BTreeMap::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() || line.starts_with("# ") {
                continue;
            }
            let bad = || Error::Parse {
                line: i + 1,
                message: format!("expected lemma<TAB>rating, got {line:?}"),
            };
            let (lemma, rating) = line.split_once('\t').ok_or_else(bad)?;
            match rating.trim().parse::<f64>() {
                Ok(r) => {
                    ratings.insert(lemma.trim().to_lowercase(), r);
                }
                Err(_) if i == 0 => continue,
                Err(_) => return Err(bad()),
            }
        }
        ConcretenessLexicon::new(ratings)
    }
}

/// Mean rating over the token's sense lemmas found in the lexicon.
pub fn token_concreteness(token: &str, senses: &SenseMap, lexicon: &ConcretenessLexicon) -> Option<f64> {
    let found: Vec<f64> = senses
        .lemmas(token)
        .iter()
        .filter_map(|l| lexicon.rating(l))
        .collect();
    (!found.is_empty()).then(|| found.iter().sum::<f64>() / found.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TTestResult {
    pub sample_mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub sample_std: f64,
    pub n: usize,
    pub t_statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    pub population_mean: f64,
}

/// Two-sided p-value of a Student t statistic with `df` degrees of freedom,
/// `I_{df/(df+t²)}(df/2, 1/2)`.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if !t.is_finite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    checked_beta_reg(df / 2.0, 0.5, x)
        .expect("valid beta arguments")
        .clamp(0.0, 1.0)
}

/// One-sample t-test of `sample` against `mu`.
///
/// A zero-variance sample whose mean equals `mu` reports `t = 0, p = 1`;
/// with any other mean the statistic is undefined and an error is returned.
pub fn one_sample_ttest(sample: &[f64], mu: f64) -> Result<TTestResult> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::Insufficient(format!("t-test needs at least 2 values, got {n}")));
    }
    let mean = sample.iter().sum::<f64>() / n as f64;
    let ss: f64 = sample.iter().map(|x| (x - mean).powi(2)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    let (t, p) = if sd == 0.0 {
        if (mean - mu).abs() <= 1e-12 * mu.abs().max(1.0) {
            (0.0, 1.0)
        } else {
            return Err(Error::ZeroVariance { mean, mu });
        }
    } else {
        let t = (mean - mu) / (sd / (n as f64).sqrt());
        (t, student_t_two_sided(t, (n - 1) as f64))
    };
    Ok(TTestResult {
        sample_mean: mean,
        sample_std: sd,
        n,
        t_statistic: t,
        p_value: p,
        population_mean: mu,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedToken {
    pub token: String,
    pub concreteness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcretenessReport {
    pub test: TTestResult,
    /// High-change tokens in descending volatility order.
    pub selected: Vec<String>,
    pub matched: Vec<MatchedToken>,
    pub unmatched: Vec<String>,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    t: f64,
    p: f64,
    n: usize,
    sample_mean: f64,
    sample_std: f64,
    mu: f64,
    matched: &'a [MatchedToken],
    unmatched: &'a [String],
}

impl ConcretenessReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ReportJson {
            t: self.test.t_statistic,
            p: self.test.p_value,
            n: self.test.n,
            sample_mean: self.test.sample_mean,
            sample_std: self.test.sample_std,
            mu: self.test.population_mean,
            matched: &self.matched,
            unmatched: &self.unmatched,
        })?)
    }
}

/// Tests whether the most volatile `fraction` of tokens differ in mean
/// concreteness from the lexicon population.
pub fn concreteness_report(
    table: &VolatilityTable,
    senses: &SenseMap,
    lexicon: &ConcretenessLexicon,
    fraction: f64,
) -> Result<ConcretenessReport> {
    let selected = top_fraction(table, fraction)?;
    let mut matched = Vec::new();
    let mut unmatched = Vec::new();
    for token in &selected {
        match token_concreteness(token, senses, lexicon) {
            Some(concreteness) => matched.push(MatchedToken {
                token: token.clone(),
                concreteness,
            }),
            None => unmatched.push(token.clone()),
        }
    }
    if matched.len() < 2 {
        return Err(Error::TooFewMatched { unmatched });
    }
    let sample: Vec<f64> = matched.iter().map(|m| m.concreteness).collect();
    let test = one_sample_ttest(&sample, lexicon.population_mean)?;
    Ok(ConcretenessReport {
        test,
        selected,
        matched,
        unmatched,
    })
}
