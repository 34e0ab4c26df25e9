//! Series preparation for shape comparison: bounded linear interpolation,
//! Savitzky-Golay smoothing and z-normalisation.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::sig9;
use crate::month::Month;
use crate::neighbors::{csv_error, ChangeSeries};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Stages {
    pub interpolated: bool,
    pub smoothed: bool,
    pub znormed: bool,
}

/// A contiguous monthly trajectory between a token's first and last observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeProfile {
    pub token: String,
    pub start: Month,
    pub values: Vec<f64>,
    /// `true` where the value came from an observed score rather than interpolation.
    pub observed: Vec<bool>,
    pub stages: Stages,
    /// Set by [`znorm`] when the input had no variance.
    pub degenerate: bool,
}

impl ShapeProfile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn end(&self) -> Month {
        self.start.offset(self.values.len() as i64 - 1)
    }

    pub fn months(&self) -> impl Iterator<Item = Month> + '_ {
        (0..self.values.len() as i64).map(|i| self.start.offset(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SmootherConfig {
    pub window: usize,
    pub degree: usize,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        SmootherConfig { window: 5, degree: 3 }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window.is_multiple_of(2) {
            return Err(Error::Config(format!("smoothing window must be odd, got {}", self.window)));
        }
        if self.degree >= self.window {
            return Err(Error::Config(format!(
                "polynomial degree {} must be below window {}",
                self.degree, self.window
            )));
        }
        Ok(())
    }
}

/// Fills internal gaps by linear interpolation on the month axis. The result
/// spans exactly the first to the last observed month.
pub fn interpolate(series: &ChangeSeries) -> Result<ShapeProfile> {
    let observed: Vec<(i64, f64)> = series
        .observed()
        .map(|(m, s)| (m.index(), s))
        .collect();
    let (&(first, _), &(last, _)) = observed
        .first()
        .zip(observed.last())
        .ok_or_else(|| Error::Insufficient(format!("series {:?} has no observed scores", series.token)))?;

    let len = (last - first + 1) as usize;
    let mut values = Vec::with_capacity(len);
    let mut flags = Vec::with_capacity(len);
    for pair in observed.windows(2) {
        let ((m0, y0), (m1, y1)) = (pair[0], pair[1]);
        let span = (m1 - m0) as f64;
        values.push(y0);
        flags.push(true);
        for step in 1..(m1 - m0) {
            let w = step as f64 / span;
            values.push(y0 + (y1 - y0) * w);
            flags.push(false);
        }
    }
    values.push(observed[observed.len() - 1].1);
    flags.push(true);
    debug_assert_eq!(values.len(), len);

    Ok(ShapeProfile {
        token: series.token.clone(),
        start: Month::from_index(first),
        values,
        observed: flags,
        stages: Stages {
            interpolated: true,
            ..Stages::default()
        },
        degenerate: false,
    })
}

/// Least-squares polynomial smoother over a sliding window.
///
/// Interior points take the centre value of the fit over their window. The
/// first and last `window / 2` points are evaluated on the fit over the first
/// or last full window, so polynomials up to `degree` are reproduced exactly
/// everywhere and the output keeps the input length.
#[derive(Debug, Clone)]
pub struct SavitzkyGolay {
    window: usize,
    /// `hat[r][i]`: weight of window sample `i` in the fitted value at window position `r`.
    hat: Vec<Vec<f64>>,
}

impl SavitzkyGolay {
    pub fn new(config: SmootherConfig) -> Result<Self> {
        config.validate()?;
        let (w, cols) = (config.window, config.degree + 1);
        let half = (w / 2) as f64;
        let design: Vec<Vec<f64>> = (0..w)
            .map(|i| {
                let x = i as f64 - half;
                (0..cols).map(|p| x.powi(p as i32)).collect()
            })
            .collect();
        // Normal equations (JᵀJ) X = Jᵀ, solved for all w right-hand sides.
        let mut normal = vec![vec![0.0; cols + w]; cols];
        for r in 0..cols {
            for c in 0..cols {
                normal[r][c] = (0..w).map(|i| design[i][r] * design[i][c]).sum();
            }
            for i in 0..w {
                normal[r][cols + i] = design[i][r];
            }
        }
        gauss_jordan(&mut normal, cols)?;
        let hat = (0..w)
            .map(|r| {
                (0..w)
                    .map(|i| (0..cols).map(|p| design[r][p] * normal[p][cols + i]).sum())
                    .collect()
            })
            .collect();
        Ok(SavitzkyGolay { window: w, hat })
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let (n, w, half) = (values.len(), self.window, self.window / 2);
        if n < w {
            return values.to_vec();
        }
        (0..n)
            .map(|pos| {
                let start = pos.saturating_sub(half).min(n - w);
                let weights = &self.hat[pos - start];
                weights
                    .iter()
                    .zip(&values[start..start + w])
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// In-place Gauss-Jordan elimination with partial pivoting on an augmented
/// `n × m` matrix; afterwards columns `n..` hold the solution.
fn gauss_jordan(m: &mut [Vec<f64>], n: usize) -> Result<()> {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .expect("non-empty");
        if m[pivot][col].abs() < 1e-12 {
            return Err(Error::Config("singular smoothing system".into()));
        }
        m.swap(col, pivot);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let factor = m[row][col];
                if factor != 0.0 {
                    let pivot_row = m[col].clone();
                    for (v, pv) in m[row].iter_mut().zip(pivot_row) {
                        *v -= factor * pv;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Smooths a contiguous profile. Profiles shorter than the window pass through.
pub fn savgol_smooth(profile: &ShapeProfile, config: SmootherConfig) -> Result<ShapeProfile> {
    let smoother = SavitzkyGolay::new(config)?;
    Ok(ShapeProfile {
        values: smoother.apply(&profile.values),
        stages: Stages {
            smoothed: true,
            ..profile.stages
        },
        ..profile.clone()
    })
}

/// Relative spread below which a profile counts as constant.
const DEGENERATE_SPREAD: f64 = 1e-10;

/// Shifts to zero mean and scales to unit (population) standard deviation.
/// Constant profiles become all zeros with `degenerate` set.
pub fn znorm(profile: &ShapeProfile) -> ShapeProfile {
    let (mean, std) = mean_std(&profile.values);
    let scale = profile.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let degenerate = profile.values.is_empty() || std <= DEGENERATE_SPREAD * scale || std == 0.0;
    let values = if degenerate {
        vec![0.0; profile.values.len()]
    } else {
        profile.values.iter().map(|v| (v - mean) / std).collect()
    };
    ShapeProfile {
        values,
        stages: Stages {
            znormed: true,
            ..profile.stages
        },
        degenerate,
        ..profile.clone()
    }
}

/// Mean and population standard deviation; `(0, 0)` for an empty slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Interpolate, smooth, then z-normalise.
pub fn run_pipeline(series: &ChangeSeries, config: SmootherConfig) -> Result<ShapeProfile> {
    let profile = interpolate(series)?;
    let profile = savgol_smooth(&profile, config)?;
    Ok(znorm(&profile))
}

#[derive(Serialize)]
struct ProfileRow<'a> {
    token: &'a str,
    month: Month,
    value: String,
    interpolated_flag: u8,
}

/// Writes `token,month,value,interpolated_flag` rows.
pub fn write_profiles_csv<W: Write>(writer: W, profiles: &[ShapeProfile]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for p in profiles {
        for ((month, &value), &observed) in p.months().zip(&p.values).zip(&p.observed) {
            out.serialize(ProfileRow {
                token: &p.token,
                month,
                value: sig9(value),
                interpolated_flag: u8::from(!observed),
            })
            .map_err(csv_error)?;
        }
    }
    out.flush().map_err(|e| Error::io("<profile csv>", e))?;
    Ok(())
}
