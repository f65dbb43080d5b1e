//! RUL estimation by time-lagged HI curve matching.
//!
//! A test curve of length `L*` is slid along every train curve of length `L`
//! at lags `t = 1..=τ` with `t + L* <= L`. Each placement yields a candidate
//! estimate `L - L* - t` weighted by `exp(-d²/λ)`, where `d²` is the mean
//! squared difference of the overlapping values. Candidates whose similarity
//! falls below `α · s_max` are discarded before the weighted average.

use crate::error::{Error, Result};
use crate::health::HiCurve;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    pub lambda: f64,
    pub tau: usize,
    pub alpha: f64,
    /// May be `f64::INFINITY` for no cap.
    pub r_max: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0005,
            tau: 40,
            alpha: 0.87,
            r_max: 125.0,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.tau < 1 {
            return Err(Error::invalid("tau must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.r_max >= 1.0) {
            return Err(Error::invalid(format!("r_max must be at least 1, got {}", self.r_max)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RulCandidate {
    /// Index into the train set passed to [`candidate_estimates`].
    pub train_index: usize,
    pub lag: usize,
    pub distance_sq: f64,
    pub similarity: f64,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RulEstimate {
    pub value: f64,
    pub candidates: Vec<RulCandidate>,
    /// Population standard deviation of candidate estimates; `None` on fallback.
    pub std_dev: Option<f64>,
    /// `max - min` of candidate estimates; `None` on fallback.
    pub spread: Option<f64>,
    pub capped: bool,
    /// No admissible candidate existed.
    pub fallback: bool,
}

/// Mean squared difference between the test curve and the train curve
/// shifted by `lag`.
pub fn curve_distance(test: &HiCurve, train: &HiCurve, lag: usize) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyInput("test HI curve"));
    }
    if lag < 1 || lag + test.len() > train.len() {
        return Err(Error::invalid(format!(
            "lag {lag} infeasible for test length {} and train length {}",
            test.len(),
            train.len()
        )));
    }
    let n = test.len();
    let s: f64 = test
        .values
        .iter()
        .zip(&train.values[lag..lag + n])
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(s / n as f64)
}

#[inline]
pub fn similarity(d_squared: f64, lambda: f64) -> f64 {
    (-d_squared / lambda).exp()
}

/// All admissible `(train, lag)` candidates that pass the `α · s_max` filter,
/// ordered by train index then lag.
///
/// When every similarity underflows to a subnormal or zero, the filter is
/// applied to similarities relative to the best one, `exp(-(d² - d²_min)/λ)`,
/// which is the same rule without the underflow.
pub fn candidate_estimates(test: &HiCurve, trains: &[&HiCurve], config: &MatchConfig) -> Result<Vec<RulCandidate>> {
    config.validate()?;
    if test.is_empty() {
        return Err(Error::EmptyInput("test HI curve"));
    }
    let n = test.len();
    let mut all = Vec::new();
    for (u, train) in trains.iter().enumerate() {
        let max_lag = config.tau.min(train.len().saturating_sub(n));
        for lag in 1..=max_lag {
            let d2 = curve_distance(test, train, lag)?;
            all.push(RulCandidate {
                train_index: u,
                lag,
                distance_sq: d2,
                similarity: similarity(d2, config.lambda),
                estimate: (train.len() - n - lag) as f64,
            });
        }
    }
    let s_max = all.iter().map(|c| c.similarity).fold(0.0, f64::max);
    if s_max >= f64::MIN_POSITIVE {
        let threshold = config.alpha * s_max;
        all.retain(|c| c.similarity >= threshold);
    } else {
        let d_min = all.iter().map(|c| c.distance_sq).fold(f64::INFINITY, f64::min);
        all.retain(|c| similarity(c.distance_sq - d_min, config.lambda) >= config.alpha);
    }
    Ok(all)
}

/// Similarity-weighted mean of candidate estimates, capped at `r_max`.
///
/// Without candidates the estimate falls back to
/// `min(r_max, max(L_max - L*, 0))`.
pub fn estimate_rul(candidates: &[RulCandidate], config: &MatchConfig, test_len: usize, max_train_len: usize) -> RulEstimate {
    if candidates.is_empty() {
        let raw = max_train_len.saturating_sub(test_len) as f64;
        return RulEstimate {
            value: raw.min(config.r_max),
            candidates: Vec::new(),
            std_dev: None,
            spread: None,
            capped: raw > config.r_max,
            fallback: true,
        };
    }
    let s_max = candidates.iter().map(|c| c.similarity).fold(0.0, f64::max);
    let (num, den) = if s_max >= f64::MIN_POSITIVE {
        candidates
            .iter()
            .fold((0.0, 0.0), |(n, d), c| (n + c.similarity * c.estimate, d + c.similarity))
    } else {
        let d_min = candidates.iter().map(|c| c.distance_sq).fold(f64::INFINITY, f64::min);
        candidates.iter().fold((0.0, 0.0), |(n, d), c| {
            let w = similarity(c.distance_sq - d_min, config.lambda);
            (n + w * c.estimate, d + w)
        })
    };
    let raw = num / den;
    let k = candidates.len() as f64;
    let mean = candidates.iter().map(|c| c.estimate).sum::<f64>() / k;
    let var = candidates.iter().map(|c| (c.estimate - mean).powi(2)).sum::<f64>() / k;
    let lo = candidates.iter().map(|c| c.estimate).fold(f64::INFINITY, f64::min);
    let hi = candidates.iter().map(|c| c.estimate).fold(f64::NEG_INFINITY, f64::max);
    RulEstimate {
        value: raw.min(config.r_max),
        candidates: candidates.to_vec(),
        std_dev: Some(var.sqrt()),
        spread: Some(hi - lo),
        capped: raw > config.r_max,
        fallback: false,
    }
}

/// Candidate generation followed by weighting.
pub fn match_rul(test: &HiCurve, trains: &[&HiCurve], config: &MatchConfig) -> Result<RulEstimate> {
    let candidates = candidate_estimates(test, trains, config)?;
    let max_len = trains.iter().map(|c| c.len()).max().unwrap_or(0);
    Ok(estimate_rul(&candidates, config, test.len(), max_len))
}
