//! Volatility of change series and percentile cohorts over it.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::sig9;
use crate::month::Month;
use crate::neighbors::{csv_error, ChangeSeries};
use crate::pipeline::mean_std;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub month: Month,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Groups values by month and reports mean, population std and count per month.
pub fn monthly_stats(values: impl IntoIterator<Item = (Month, f64)>) -> Vec<CurvePoint> {
    let mut by_month: BTreeMap<Month, Vec<f64>> = BTreeMap::new();
    for (m, v) in values {
        by_month.entry(m).or_default().push(v);
    }
    by_month
        .into_iter()
        .map(|(month, vs)| {
            let (mean, std) = mean_std(&vs);
            CurvePoint {
                month,
                mean,
                std,
                count: vs.len(),
            }
        })
        .collect()
}

/// Population standard deviation of the observed (non-missing) scores.
pub fn volatility(series: &ChangeSeries) -> Result<f64> {
    let scores = series.scores();
    if scores.len() < 2 {
        return Err(Error::Insufficient(format!(
            "volatility of {:?} needs 2 observed scores, has {}",
            series.token,
            scores.len()
        )));
    }
    Ok(mean_std(&scores).1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilityEntry {
    pub token: String,
    pub volatility: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VolatilityTable {
    /// Sorted by token.
    pub entries: Vec<VolatilityEntry>,
    /// Tokens with fewer than two observed scores, and their point counts.
    pub excluded: Vec<(String, usize)>,
}

impl VolatilityTable {
    pub fn from_series(series: &[ChangeSeries]) -> Self {
        let mut table = VolatilityTable::default();
        for s in series {
            let n_points = s.observed().count();
            match volatility(s) {
                Ok(volatility) => table.entries.push(VolatilityEntry {
                    token: s.token.clone(),
                    volatility,
                    n_points,
                }),
                Err(_) => table.excluded.push((s.token.clone(), n_points)),
            }
        }
        table.entries.sort_by(|a, b| a.token.cmp(&b.token));
        table.excluded.sort();
        table
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries ascending by volatility, ties by token.
    fn ascending(&self) -> Vec<&VolatilityEntry> {
        let mut v: Vec<&VolatilityEntry> = self.entries.iter().collect();
        v.sort_by(|a, b| a.volatility.total_cmp(&b.volatility).then_with(|| a.token.cmp(&b.token)));
        v
    }
}

/// A percentile band `[lower, upper)`, closed at 100 for the last band.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub lower: f64,
    pub upper: f64,
}

impl Band {
    pub fn label(&self) -> String {
        let close = if self.upper >= 100.0 { ']' } else { ')' };
        format!("[{},{}{close}", self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortAssignment {
    pub bands: Vec<Band>,
    /// Band index per token, in volatility table order.
    pub members: Vec<(String, usize)>,
}

impl CohortAssignment {
    pub fn band_of(&self, token: &str) -> Option<usize> {
        self.members.iter().find(|(t, _)| t == token).map(|&(_, b)| b)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.bands.len()];
        for &(_, b) in &self.members {
            sizes[b] += 1;
        }
        sizes
    }
}

/// Splits tokens into percentile bands of volatility.
///
/// A token's percentile is `100 · rank / (n − 1)` over the ascending
/// volatility order; tokens with equal volatility share the lowest rank of
/// their group. Bands are `[cut_i, cut_{i+1})` with the last closed at 100.
/// When the first cut is above zero, tokens under it form an extra leading
/// band so that every token belongs to exactly one cohort.
pub fn percentile_cohorts(table: &VolatilityTable, cuts: &[f64]) -> Result<CohortAssignment> {
    if table.is_empty() {
        return Err(Error::Insufficient("volatility table is empty".into()));
    }
    if cuts.is_empty()
        || cuts.iter().any(|c| !(0.0..100.0).contains(c))
        || cuts.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::Config(format!(
            "cuts must be strictly increasing within [0, 100), got {cuts:?}"
        )));
    }
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    if cuts[0] > 0.0 {
        edges.push(0.0);
    }
    edges.extend_from_slice(cuts);
    edges.push(100.0);
    let bands: Vec<Band> = edges
        .windows(2)
        .map(|w| Band {
            lower: w[0],
            upper: w[1],
        })
        .collect();

    let ordered = table.ascending();
    let n = ordered.len();
    let mut members = Vec::with_capacity(n);
    let mut group_rank = 0;
    for (rank, e) in ordered.iter().enumerate() {
        if rank > 0 && e.volatility != ordered[rank - 1].volatility {
            group_rank = rank;
        }
        let pct = if n > 1 {
            100.0 * group_rank as f64 / (n - 1) as f64
        } else {
            0.0
        };
        let band = bands
            .iter()
            .rposition(|b| pct >= b.lower)
            .expect("first band starts at 0");
        members.push((e.token.clone(), band));
    }
    members.sort();
    Ok(CohortAssignment { bands, members })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortCurves {
    pub label: String,
    pub size: usize,
    pub points: Vec<CurvePoint>,
}

/// Per-month mean, std and count over every observed score in the group.
pub fn aggregate_curve(label: impl Into<String>, group: &[&ChangeSeries]) -> CohortCurves {
    CohortCurves {
        label: label.into(),
        size: group.len(),
        points: monthly_stats(group.iter().flat_map(|s| s.observed())),
    }
}

/// One curve per band, in band order.
pub fn cohort_curves(series: &[ChangeSeries], assignment: &CohortAssignment) -> Vec<CohortCurves> {
    let by_token: BTreeMap<&str, &ChangeSeries> =
        series.iter().map(|s| (s.token.as_str(), s)).collect();
    assignment
        .bands
        .iter()
        .enumerate()
        .map(|(b, band)| {
            let group: Vec<&ChangeSeries> = assignment
                .members
                .iter()
                .filter(|(_, m)| *m == b)
                .filter_map(|(t, _)| by_token.get(t.as_str()).copied())
                .collect();
            aggregate_curve(band.label(), &group)
        })
        .collect()
}

/// The `ceil(fraction · n)` most volatile tokens, ties by token.
pub fn top_fraction(table: &VolatilityTable, fraction: f64) -> Result<Vec<String>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let n = table.len();
    // The slack keeps products like 0.1 · 530 from rounding up past 53.
    let take = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut v: Vec<&VolatilityEntry> = table.entries.iter().collect();
    v.sort_by(|a, b| b.volatility.total_cmp(&a.volatility).then_with(|| a.token.cmp(&b.token)));
    Ok(v.into_iter().take(take.min(n)).map(|e| e.token.clone()).collect())
}

/// Writes `token,volatility,n_points,cohort`; cohort is empty when not assigned.
pub fn write_volatility_csv<W: Write>(
    writer: W,
    table: &VolatilityTable,
    assignment: Option<&CohortAssignment>,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["token", "volatility", "n_points", "cohort"]).map_err(csv_error)?;
    for e in &table.entries {
        let cohort = assignment
            .and_then(|a| a.band_of(&e.token).map(|b| a.bands[b].label()))
            .unwrap_or_default();
        out.write_record([e.token.clone(), sig9(e.volatility), e.n_points.to_string(), cohort])
            .map_err(csv_error)?;
    }
    out.flush().map_err(|e| Error::io("<volatility csv>", e))?;
    Ok(())
}

pub fn read_volatility_csv<R: Read>(reader: R) -> Result<VolatilityTable> {
    let mut input = csv::Reader::from_reader(reader);
    let mut table = VolatilityTable::default();
    for row in input.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| row.get(i).unwrap_or("");
        let bad = |what: &str| Error::Parse {
            line,
            message: format!("bad {what} in volatility row"),
        };
        table.entries.push(VolatilityEntry {
            token: field(0).to_string(),
            volatility: field(1).parse().map_err(|_| bad("volatility"))?,
            n_points: field(2).parse().map_err(|_| bad("n_points"))?,
        });
    }
    table.entries.sort_by(|a, b| a.token.cmp(&b.token));
    Ok(table)
}

/// Writes `cohort,month,mean,std,count`.
pub fn write_curves_csv<W: Write>(writer: W, curves: &[CohortCurves]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["cohort", "month", "mean", "std", "count"]).map_err(csv_error)?;
    for c in curves {
        for p in &c.points {
            out.write_record([
                c.label.clone(),
                p.month.to_string(),
                sig9(p.mean),
                sig9(p.std),
                p.count.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    out.flush().map_err(|e| Error::io("<curves csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighbors::SeriesPoint;

    fn series(token: &str, scores: &[Option<f64>]) -> ChangeSeries {
        let base: Month = "2012-01".parse().unwrap();
        ChangeSeries {
            token: token.into(),
            anchor_month: base,
            points: scores
                .iter()
                .enumerate()
                .map(|(i, &score)| SeriesPoint {
                    month: base.offset(i as i64),
                    score,
                    components: 25,
                    reason: None,
                })
                .collect(),
        }
    }

    fn table(vols: &[(&str, f64)]) -> VolatilityTable {
        VolatilityTable {
            entries: vols
                .iter()
                .map(|&(t, v)| VolatilityEntry {
                    token: t.into(),
                    volatility: v,
                    n_points: 5,
                })
                .collect(),
            excluded: vec![],
        }
    }

    #[test]
    fn volatility_examples() {
        assert_eq!(volatility(&series("a", &[Some(0.0); 3])).unwrap(), 0.0);
        assert_eq!(volatility(&series("a", &[Some(0.0), Some(1.0)])).unwrap(), 0.5);
        assert_eq!(volatility(&series("a", &[Some(0.0), None, Some(1.0)])).unwrap(), 0.5);
        assert!(volatility(&series("a", &[Some(0.0), None])).is_err());
    }

    #[test]
    fn table_excludes_short_series() {
        let t = VolatilityTable::from_series(&[
            series("b", &[Some(0.0), Some(1.0)]),
            series("a", &[Some(0.0)]),
        ]);
        assert_eq!(t.entries.len(), 1);
        assert_eq!(t.excluded, [("a".to_string(), 1)]);
    }

    #[test]
    fn hundred_distinct_tokens_fill_bands() {
        let vols: Vec<(String, f64)> = (0..100).map(|i| (format!("t{i:03}"), i as f64 / 7.0)).collect();
        let t = table(&vols.iter().map(|(a, b)| (a.as_str(), *b)).collect::<Vec<_>>());
        let a = percentile_cohorts(&t, &[50.0, 75.0, 90.0, 95.0, 99.0]).unwrap();
        assert_eq!(a.bands.len(), 6);
        assert_eq!(a.sizes(), [50, 25, 15, 5, 4, 1]);
        assert_eq!(a.bands[5].label(), "[99,100]");
        assert_eq!(a.bands[1].label(), "[50,75)");
    }

    #[test]
    fn ties_land_in_lowest_band() {
        let t = table(&[("a", 0.3), ("b", 0.3), ("c", 0.3), ("d", 0.3)]);
        let a = percentile_cohorts(&t, &[50.0, 75.0]).unwrap();
        assert_eq!(a.sizes(), [4, 0, 0]);
        let single = percentile_cohorts(&t, &[0.0]).unwrap();
        assert_eq!(single.sizes(), [4]);
        assert_eq!(single.bands[0].label(), "[0,100]");
    }

    #[test]
    fn cohort_errors() {
        assert!(percentile_cohorts(&VolatilityTable::default(), &[50.0]).is_err());
        let t = table(&[("a", 1.0)]);
        assert!(percentile_cohorts(&t, &[]).is_err());
        assert!(percentile_cohorts(&t, &[75.0, 50.0]).is_err());
        assert!(percentile_cohorts(&t, &[100.0]).is_err());
    }

    #[test]
    fn top_fraction_counts() {
        let names: Vec<String> = (0..530).map(|i| format!("e{i:03}")).collect();
        let t = table(&names.iter().enumerate().map(|(i, n)| (n.as_str(), i as f64)).collect::<Vec<_>>());
        assert_eq!(top_fraction(&t, 0.10).unwrap().len(), 53);
        assert_eq!(top_fraction(&t, 1.0).unwrap().len(), 530);

        let ten = table(&[("a", 1.0), ("b", 9.0), ("c", 3.0), ("d", 4.0), ("e", 5.0), ("f", 6.0), ("g", 7.0), ("h", 8.0), ("i", 2.0), ("j", 0.0)]);
        assert_eq!(top_fraction(&ten, 0.10).unwrap(), ["b"]);
        assert!(top_fraction(&ten, 0.0).is_err());
        assert!(top_fraction(&ten, 1.5).is_err());
    }

    #[test]
    fn aggregate_counts_present_members() {
        let a = series("a", &[Some(0.0), Some(0.2), Some(0.4)]);
        let b = series("b", &[Some(0.0), None, Some(0.8)]);
        let c = aggregate_curve("all", &[&a, &b]);
        assert_eq!(c.points.iter().map(|p| p.count).collect::<Vec<_>>(), [2, 1, 2]);
        assert!((c.points[2].mean - 0.6).abs() < 1e-12);
        assert!((c.points[2].std - 0.2).abs() < 1e-12);

        let solo = aggregate_curve("a", &[&a]);
        assert!(solo.points.iter().all(|p| p.std == 0.0));
        assert_eq!(solo.points.iter().map(|p| p.mean).collect::<Vec<_>>(), [0.0, 0.2, 0.4]);
    }

    #[test]
    fn volatility_csv_round_trip() {
        let t = table(&[("a", 0.25), ("b,c", 0.5)]);
        let mut buf = Vec::new();
        write_volatility_csv(&mut buf, &t, None).unwrap();
        assert_eq!(read_volatility_csv(buf.as_slice()).unwrap(), t);
    }
}
