//! Embedding snapshots and the temporal dataset assembled from them.
//!
//! A snapshot file is the plain-text vector format: a header line `V D`
//! followed by `V` rows of `token x1 ... xD`, whitespace separated. A dataset
//! is a directory of such files named `YYYY-MM.vec`.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::month::Month;

/// One month's vocabulary-to-vector table.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSnapshot {
    month: Month,
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    norms: Vec<f64>,
}

impl EmbeddingSnapshot {
    /// Builds a snapshot from `(token, vector)` rows, enforcing the table invariants.
    pub fn new(month: Month, dim: usize, rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("snapshot dimension must be positive".into()));
        }
        let mut tokens = Vec::with_capacity(rows.len());
        let mut index = HashMap::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        let mut norms = Vec::with_capacity(rows.len());
        for (row, (token, vector)) in rows.into_iter().enumerate() {
            let line = row + 2;
            if vector.len() != dim {
                return Err(Error::Parse {
                    line,
                    message: format!("token {token:?} has {} components, expected {dim}", vector.len()),
                });
            }
            let norm = norm(&vector);
            if norm == 0.0 {
                return Err(Error::Parse {
                    line,
                    message: format!("token {token:?} has an all-zero vector"),
                });
            }
            if index.insert(token.clone(), tokens.len()).is_some() {
                return Err(Error::Parse {
                    line,
                    message: format!("duplicate token {token:?}"),
                });
            }
            tokens.push(token);
            data.extend_from_slice(&vector);
            norms.push(norm);
        }
        Ok(EmbeddingSnapshot {
            month,
            dim,
            tokens,
            index,
            data,
            norms,
        })
    }

    /// Parses the `V D` header + rows text format.
    pub fn parse<R: Read>(reader: R, month: Month) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines().enumerate();
        let read_err = |line: usize, e: std::io::Error| Error::Parse {
            line,
            message: e.to_string(),
        };

        let (count, dim) = loop {
            let Some((i, line)) = lines.next() else {
                return Err(Error::Parse {
                    line: 1,
                    message: "missing header".into(),
                });
            };
            let line = line.map_err(|e| read_err(i + 1, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse_usize = |s: &str| {
                s.parse::<usize>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("header field {s:?} is not a non-negative integer"),
                })
            };
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("header must be \"V D\", got {line:?}"),
                });
            }
            break (parse_usize(fields[0])?, parse_usize(fields[1])?);
        };

        let mut rows = Vec::with_capacity(count);
        for (i, line) in lines {
            let line = line.map_err(|e| read_err(i + 1, e))?;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else {
                continue;
            };
            let values = fields
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Parse {
                            line: i + 1,
                            message: format!("non-numeric component {f:?}"),
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != dim {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!(
                        "row has {} fields, expected {} (token + {dim} components)",
                        values.len() + 1,
                        dim + 1
                    ),
                });
            }
            rows.push((token.to_string(), values));
        }
        if rows.len() != count {
            return Err(Error::Parse {
                line: 1,
                message: format!("header declares {count} rows but body has {}", rows.len()),
            });
        }
        EmbeddingSnapshot::new(month, dim, rows)
    }

    pub fn from_path(path: &Path, month: Month) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        EmbeddingSnapshot::parse(file, month).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })
    }

    /// Writes the snapshot in its text format. `precision` fixes the number
    /// of decimals; `None` uses the shortest representation that round-trips.
    pub fn write<W: Write>(&self, mut writer: W, precision: Option<usize>) -> std::io::Result<()> {
        writeln!(writer, "{} {}", self.tokens.len(), self.dim)?;
        let mut line = String::new();
        for (i, token) in self.tokens.iter().enumerate() {
            line.clear();
            line.push_str(token);
            for &x in self.row(i) {
                line.push(' ');
                match precision {
                    Some(p) => line.push_str(&format!("{:.*}", p, x)),
                    None => line.push_str(&format!("{x}")),
                }
            }
            line.push('\n');
            writer.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn month(&self) -> Month {
        self.month
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens in file order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn position(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.position(token).map(|i| self.row(i))
    }

    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Cosine between two rows, computed identically to [`cosine`].
    pub(crate) fn row_cosine(&self, i: usize, j: usize) -> f64 {
        cosine_parts(dot(self.row(i), self.row(j)), self.norms[i], self.norms[j])
    }

    /// A copy with every vector multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let rows = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), self.row(i).iter().map(|x| x * factor).collect()))
            .collect();
        EmbeddingSnapshot::new(self.month, self.dim, rows)
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

fn cosine_parts(dot: f64, nu: f64, nv: f64) -> f64 {
    (dot / (nu * nv)).clamp(-1.0, 1.0)
}

/// Cosine similarity `u·v / (|u| |v|)`, clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch(u.len(), v.len()));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(cosine_parts(dot(u, v), nu, nv))
}

/// Snapshots sorted by month, sharing one dimension. Calendar gaps are allowed.
#[derive(Debug, Clone)]
pub struct TemporalDataset {
    snapshots: Vec<EmbeddingSnapshot>,
    dim: usize,
}

impl TemporalDataset {
    /// Sorts `snapshots` by month and validates dimensions and uniqueness.
    pub fn new(mut snapshots: Vec<EmbeddingSnapshot>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::Insufficient("dataset needs at least one snapshot".into()));
        }
        snapshots.sort_by_key(|s| s.month);
        for pair in snapshots.windows(2) {
            if pair[0].month == pair[1].month {
                return Err(Error::DuplicateMonth(pair[0].month));
            }
        }
        let dim = snapshots[0].dim;
        if let Some(bad) = snapshots.iter().find(|s| s.dim != dim) {
            return Err(Error::DimensionMismatch {
                month: bad.month,
                expected: dim,
                found: bad.dim,
            });
        }
        Ok(TemporalDataset { snapshots, dim })
    }

    /// Loads every `YYYY-MM.vec` file in `dir`; other files are ignored.
    pub fn load(dir: &Path) -> Result<Self> {
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            let Some(stem) = name.strip_suffix(".vec") else {
                continue;
            };
            let month: Month = stem.parse()?;
            files.push((month, path));
        }
        if files.is_empty() {
            return Err(Error::EmptyDataset(dir.to_path_buf()));
        }
        files.sort();
        let snapshots = files
            .iter()
            .map(|(month, path)| EmbeddingSnapshot::from_path(path, *month))
            .collect::<Result<Vec<_>>>()?;
        TemporalDataset::new(snapshots)
    }

    /// Writes one `YYYY-MM.vec` file per snapshot into `dir`.
    pub fn save(&self, dir: &Path, precision: Option<usize>) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for snapshot in &self.snapshots {
            let path = dir.join(format!("{}.vec", snapshot.month));
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut writer = std::io::BufWriter::new(file);
            snapshot
                .write(&mut writer, precision)
                .and_then(|_| writer.flush())
                .map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshots(&self) -> &[EmbeddingSnapshot] {
        &self.snapshots
    }

    pub fn months(&self) -> Vec<Month> {
        self.snapshots.iter().map(|s| s.month).collect()
    }

    pub fn snapshot(&self, month: Month) -> Option<&EmbeddingSnapshot> {
        self.snapshots
            .binary_search_by_key(&month, |s| s.month)
            .ok()
            .map(|i| &self.snapshots[i])
    }

    /// Calendar months between the first and last snapshot with no file.
    pub fn gaps(&self) -> Vec<Month> {
        let first = self.snapshots[0].month;
        let last = self.snapshots[self.snapshots.len() - 1].month;
        (0..=first.months_until(last))
            .map(|i| first.offset(i))
            .filter(|m| self.snapshot(*m).is_none())
            .collect()
    }

    /// Every token present in at least one snapshot, sorted.
    pub fn vocabulary(&self) -> BTreeSet<String> {
        self.snapshots
            .iter()
            .flat_map(|s| s.tokens.iter().cloned())
            .collect()
    }
}

/// Decides which tokens may appear in neighbour lists.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenFilter {
    /// Drop tokens starting with `#`.
    pub exclude_hashtags: bool,
    /// Drop tokens of the target class (emoji, plus any explicitly listed targets).
    pub exclude_targets: bool,
    /// Tokens treated as targets in addition to emoji.
    pub extra_targets: BTreeSet<String>,
    /// Literal tokens always dropped.
    pub custom_exclusions: BTreeSet<String>,
}

impl TokenFilter {
    /// Excludes hashtags and emoji, the neighbour policy used for emoji studies.
    pub fn standard() -> Self {
        TokenFilter {
            exclude_hashtags: true,
            exclude_targets: true,
            ..TokenFilter::default()
        }
    }

    pub fn with_targets<I, S>(mut self, targets: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.extra_targets.extend(targets.into_iter().map(Into::into));
        self
    }

    pub fn is_target(&self, token: &str) -> bool {
        is_emoji(token) || self.extra_targets.contains(token)
    }

    /// `true` when `token` may be used as a neighbour.
    pub fn accepts(&self, token: &str) -> bool {
        if self.exclude_hashtags && token.starts_with('#') {
            return false;
        }
        if self.exclude_targets && self.is_target(token) {
            return false;
        }
        !self.custom_exclusions.contains(token)
    }
}

/// Whether the token contains a pictographic emoji codepoint.
pub fn is_emoji(token: &str) -> bool {
    token.chars().any(|c| {
        matches!(c as u32,
            0x1F000..=0x1FAFF   // mahjong .. symbols & pictographs ext-A, flags
            | 0x2600..=0x27BF   // misc symbols, dingbats
            | 0x2300..=0x23FF   // misc technical (watch, hourglass, ...)
            | 0x2B05..=0x2B55   // arrows, stars, circles
            | 0x3030 | 0x303D | 0x3297 | 0x3299)
    })
}
