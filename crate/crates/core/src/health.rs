//! Health index construction.
//!
//! Target curves come either from LSTM-ED reconstruction error or from an
//! assumed degradation shape. A linear model maps derived sensors to HI, and
//! [`hi_curve`] turns its per-cycle output into the smoothed, normalized
//! curve used for matching.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lstm::LstmEdModel;
use crate::matrix::Matrix;
use crate::numerics::{ols_fit, ols_predict, OlsModel};

/// Per-cycle health index values.
#[derive(Debug, Clone, PartialEq)]
pub struct HiCurve {
    pub values: Vec<f64>,
}

impl HiCurve {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Delimiter-separated `cycle,hi` lines with 1-based cycles.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cycle,hi\n");
        for (t, h) in self.values.iter().enumerate() {
            s.push_str(&format!("{},{}\n", t + 1, h));
        }
        s
    }
}

/// How target HI values are produced for the linear model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetHiSpec {
    /// Normalized reconstruction error.
    ReconError,
    /// Normalized squared reconstruction error.
    ReconErrorSquared,
    /// Exponential degradation assumption.
    Exponential { beta: f64 },
    /// Linear degradation assumption.
    Linear,
    /// Only the first and last fractions of each instance are labeled, 1 and 0.
    Endpoints { healthy_frac: f64, faulty_frac: f64 },
}

impl TargetHiSpec {
    pub fn uses_reconstruction(&self) -> bool {
        matches!(self, Self::ReconError | Self::ReconErrorSquared)
    }
}

impl fmt::Display for TargetHiSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ReconError => f.write_str("recon_error"),
            Self::ReconErrorSquared => f.write_str("recon_error_squared"),
            Self::Exponential { .. } => f.write_str("exponential"),
            Self::Linear => f.write_str("linear"),
            Self::Endpoints { .. } => f.write_str("endpoints"),
        }
    }
}

/// Parses the variant name; shape parameters are filled with defaults and
/// set separately by the caller.
impl FromStr for TargetHiSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "recon_error" | "ed1" => Self::ReconError,
            "recon_error_squared" | "ed2" => Self::ReconErrorSquared,
            "exponential" | "exp" => Self::Exponential { beta: 0.05 },
            "linear" | "lin" => Self::Linear,
            "endpoints" => Self::Endpoints {
                healthy_frac: 0.05,
                faulty_frac: 0.05,
            },
            other => return Err(Error::invalid(format!("unknown HI variant '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconErrorSeries {
    pub errors: Vec<f64>,
    pub max: f64,
    pub min: f64,
}

impl ReconErrorSeries {
    pub fn new(errors: Vec<f64>) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::EmptyInput("reconstruction errors"));
        }
        let max = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = errors.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self { errors, max, min })
    }
}

/// Stride-1 windows of length `l`. Starts are 0-based cycle indices.
pub fn sliding_windows(series: &Matrix, l: usize) -> Result<Vec<(usize, Matrix)>> {
    if l == 0 || series.rows() < l {
        return Err(Error::invalid(format!(
            "series of {} cycles is shorter than window length {l}",
            series.rows()
        )));
    }
    Ok((0..=series.rows() - l)
        .map(|s| (s, series.slice_rows(s, l)))
        .collect())
}

/// Averages, for every cycle, the autoregressive reconstructions of that
/// cycle from every window covering it.
pub fn pointwise_reconstruction(model: &LstmEdModel, series: &Matrix) -> Result<Matrix> {
    let l = model.window_len;
    let windows = sliding_windows(series, l)?;
    let mut sum = Matrix::zeros(series.rows(), series.cols());
    let mut count = vec![0usize; series.rows()];
    for (start, w) in &windows {
        let rec = model.reconstruct(w)?;
        for k in 0..l {
            for (acc, &v) in sum.row_mut(start + k).iter_mut().zip(rec.row(k)) {
                *acc += v;
            }
            count[start + k] += 1;
        }
    }
    for (t, &c) in count.iter().enumerate() {
        sum.row_mut(t).iter_mut().for_each(|v| *v /= c as f64);
    }
    Ok(sum)
}

/// Per-cycle Euclidean norm of `actual - reconstructed`.
pub fn reconstruction_error(actual: &Matrix, reconstructed: &Matrix) -> Result<ReconErrorSeries> {
    if actual.rows() != reconstructed.rows() || actual.cols() != reconstructed.cols() {
        return Err(Error::Dimension {
            context: "reconstruction_error shape",
            expected: actual.rows() * actual.cols(),
            found: reconstructed.rows() * reconstructed.cols(),
        });
    }
    let errors = actual
        .iter_rows()
        .zip(reconstructed.iter_rows())
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
        .collect();
    ReconErrorSeries::new(errors)
}

/// `h_t = (e_M - e_t) / (e_M - e_m)`, optionally on the squared errors.
/// A constant error series maps to all ones.
pub fn target_hi_from_error(errors: &ReconErrorSeries, squared: bool) -> HiCurve {
    let owned;
    let series = if squared {
        owned = ReconErrorSeries::new(errors.errors.iter().map(|e| e * e).collect())
            .expect("non-empty by construction");
        &owned
    } else {
        errors
    };
    let range = series.max - series.min;
    if range <= 0.0 {
        return HiCurve::new(vec![1.0; series.errors.len()]);
    }
    HiCurve::new(
        series
            .errors
            .iter()
            .map(|e| (series.max - e) / range)
            .collect(),
    )
}

// Boundary comparisons tolerate the rounding in products such as 0.95 * 100.
const BOUNDARY_EPS: f64 = 1e-9;

/// Exponential target curve. Cycles before `βL` are 1, cycles after
/// `(1-β)L` are 0, the rest follow `1 - exp(ln β · (L-t) / ((1-β)L))`.
pub fn exponential_target_hi(len: usize, beta: f64) -> Result<HiCurve> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid(format!("beta must lie in (0, 1), got {beta}")));
    }
    if len == 0 {
        return Err(Error::EmptyInput("exponential target length"));
    }
    let l = len as f64;
    let lo = beta * l;
    let hi = (1.0 - beta) * l;
    let values = (1..=len)
        .map(|t| {
            let t = t as f64;
            if t < lo - BOUNDARY_EPS {
                1.0
            } else if t > hi + BOUNDARY_EPS {
                0.0
            } else {
                1.0 - (beta.ln() * (l - t) / ((1.0 - beta) * l)).exp()
            }
        })
        .collect();
    Ok(HiCurve::new(values))
}

/// Linear ramp from 1 at the first cycle to 0 at the last.
pub fn linear_target_hi(len: usize) -> Result<HiCurve> {
    if len < 2 {
        return Err(Error::invalid("linear target needs at least 2 cycles"));
    }
    let d = (len - 1) as f64;
    Ok(HiCurve::new(
        (0..len).map(|t| (len - 1 - t) as f64 / d).collect(),
    ))
}

/// Endpoint labels: the first `ceil(healthy_frac·L)` cycles get 1, the last
/// `ceil(faulty_frac·L)` get 0, the rest are unlabeled.
pub fn endpoint_target_hi(len: usize, healthy_frac: f64, faulty_frac: f64) -> Result<Vec<Option<f64>>> {
    for f in [healthy_frac, faulty_frac] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::invalid(format!("endpoint fraction must lie in (0, 1), got {f}")));
        }
    }
    let healthy = frac_count(healthy_frac, len);
    let faulty = frac_count(faulty_frac, len);
    if healthy + faulty > len {
        return Err(Error::invalid(format!(
            "endpoint fractions cover more than {len} cycles"
        )));
    }
    Ok((0..len)
        .map(|t| {
            if t < healthy {
                Some(1.0)
            } else if t >= len - faulty {
                Some(0.0)
            } else {
                None
            }
        })
        .collect())
}

/// `ceil(frac·len)` clamped to `1..=len`.
pub fn frac_count(frac: f64, len: usize) -> usize {
    let n = (frac * len as f64 - BOUNDARY_EPS).ceil().max(1.0) as usize;
    n.min(len)
}

/// Pools every cycle of every instance and fits the linear HI model.
pub fn fit_hi_model(derived: &[Matrix], targets: &[HiCurve]) -> Result<OlsModel> {
    let labels: Vec<Vec<Option<f64>>> = targets
        .iter()
        .map(|c| c.values.iter().copied().map(Some).collect())
        .collect();
    fit_hi_model_partial(derived, &labels)
}

/// As [`fit_hi_model`], skipping cycles whose label is `None`.
pub fn fit_hi_model_partial(derived: &[Matrix], labels: &[Vec<Option<f64>>]) -> Result<OlsModel> {
    if derived.len() != labels.len() {
        return Err(Error::Dimension {
            context: "fit_hi_model instance count",
            expected: derived.len(),
            found: labels.len(),
        });
    }
    let p = derived.first().map_or(0, Matrix::cols);
    let mut rows = Vec::new();
    let mut h = Vec::new();
    for (z, lab) in derived.iter().zip(labels) {
        if z.rows() != lab.len() {
            return Err(Error::Dimension {
                context: "fit_hi_model target length",
                expected: z.rows(),
                found: lab.len(),
            });
        }
        for (row, y) in z.iter_rows().zip(lab) {
            if let Some(y) = y {
                rows.push(row.to_vec());
                h.push(*y);
            }
        }
    }
    let inputs = if rows.is_empty() {
        Matrix::zeros(0, p)
    } else {
        Matrix::from_rows(&rows)?
    };
    ols_fit(&inputs, &h)
}

/// Centered moving average; windows are truncated at the ends.
pub fn moving_average(values: &[f64], width: usize) -> Vec<f64> {
    if width <= 1 {
        return values.to_vec();
    }
    let before = (width - 1) / 2;
    let after = width / 2;
    let n = values.len();
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(before);
            let hi = (t + after).min(n - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Final HI curve: linear model output, moving-average smoothing, division
/// by the mean of the first `ceil(init_frac·L)` values, then clipping to
/// `[0, 1]`. The division is skipped when that mean is not positive.
pub fn hi_curve(model: &OlsModel, derived: &Matrix, smooth_window: usize, init_frac: f64) -> Result<HiCurve> {
    if derived.is_empty() {
        return Err(Error::EmptyInput("derived sensor series"));
    }
    if !(init_frac > 0.0 && init_frac <= 1.0) {
        return Err(Error::invalid(format!("init_frac must lie in (0, 1], got {init_frac}")));
    }
    let raw = derived
        .iter_rows()
        .map(|z| ols_predict(model, z))
        .collect::<Result<Vec<_>>>()?;
    let mut smooth = moving_average(&raw, smooth_window);
    let k = frac_count(init_frac, smooth.len());
    let init = smooth[..k].iter().sum::<f64>() / k as f64;
    if init > 0.0 {
        smooth.iter_mut().for_each(|h| *h /= init);
    }
    smooth.iter_mut().for_each(|h| *h = h.clamp(0.0, 1.0));
    Ok(HiCurve::new(smooth))
}
