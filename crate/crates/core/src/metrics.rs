//! RUL evaluation metrics.
//!
//! `Δ = predicted - actual`. Negative errors are early predictions, positive
//! ones are late. The timeliness score penalizes late predictions more when
//! `τ₁ > τ₂`.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub predicted: f64,
    pub actual: f64,
    pub observed_len: usize,
}

impl EvalRecord {
    #[inline]
    pub fn delta(&self) -> f64 {
        self.predicted - self.actual
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub n: usize,
    pub s: f64,
    pub a: f64,
    pub mae: f64,
    pub mse: f64,
    pub mape1: f64,
    pub mape2: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub tau1: f64,
    pub tau2: f64,
}

pub const DEFAULT_TAU1: f64 = 13.0;
pub const DEFAULT_TAU2: f64 = 10.0;

fn check_taus(tau1: f64, tau2: f64) -> Result<()> {
    if !(tau1 > 0.0 && tau2 > 0.0) {
        return Err(Error::invalid(format!("tau1 and tau2 must be positive, got {tau1}, {tau2}")));
    }
    Ok(())
}

/// `S = Σ exp(γ|Δ|) - 1`, `γ = 1/τ₁` for `Δ < 0`, else `1/τ₂`.
pub fn timeliness(records: &[EvalRecord], tau1: f64, tau2: f64) -> Result<f64> {
    check_taus(tau1, tau2)?;
    Ok(records
        .iter()
        .map(|r| {
            let d = r.delta();
            let gamma = if d < 0.0 { 1.0 / tau1 } else { 1.0 / tau2 };
            (gamma * d.abs()).exp_m1()
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    OnTime,
    Early,
    Late,
}

fn classify(d: f64, tau1: f64, tau2: f64) -> Outcome {
    if d < -tau1 {
        Outcome::Early
    } else if d > tau2 {
        Outcome::Late
    } else {
        Outcome::OnTime
    }
}

fn counts(records: &[EvalRecord], tau1: f64, tau2: f64) -> (usize, usize, usize) {
    records.iter().fold((0, 0, 0), |(a, fp, fn_), r| match classify(r.delta(), tau1, tau2) {
        Outcome::OnTime => (a + 1, fp, fn_),
        Outcome::Early => (a, fp + 1, fn_),
        Outcome::Late => (a, fp, fn_ + 1),
    })
}

/// Percentages `(A, FPR, FNR)` chosen so that `(A + FPR) + FNR == 100.0`
/// holds exactly in floating point. The last nonzero rate absorbs rounding.
fn partition_percentages(on_time: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let n = (on_time + fp + fn_) as f64;
    let pct = |c: usize| 100.0 * c as f64 / n;
    let a = pct(on_time);
    if fn_ > 0 {
        let fpr = pct(fp);
        (a, fpr, 100.0 - (a + fpr))
    } else if fp > 0 {
        (a, 100.0 - a, 0.0)
    } else {
        (100.0, 0.0, 0.0)
    }
}

/// Percentage of records with `Δ ∈ [-τ₁, τ₂]`.
pub fn accuracy(records: &[EvalRecord], tau1: f64, tau2: f64) -> Result<f64> {
    check_taus(tau1, tau2)?;
    if records.is_empty() {
        return Err(Error::EmptyInput("evaluation records"));
    }
    let (a, fp, fn_) = counts(records, tau1, tau2);
    Ok(partition_percentages(a, fp, fn_).0)
}

/// False-positive (`Δ < -τ₁`) and false-negative (`Δ > τ₂`) percentages.
pub fn fp_fn_rates(records: &[EvalRecord], tau1: f64, tau2: f64) -> Result<(f64, f64)> {
    check_taus(tau1, tau2)?;
    if records.is_empty() {
        return Err(Error::EmptyInput("evaluation records"));
    }
    let (a, fp, fn_) = counts(records, tau1, tau2);
    let (_, fpr, fnr) = partition_percentages(a, fp, fn_);
    Ok((fpr, fnr))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub mae: f64,
    pub mse: f64,
    pub mape1: f64,
    pub mape2: f64,
}

/// MAE, MSE and the two percentage errors (relative to `R` and to `R + L`).
pub fn error_stats(records: &[EvalRecord]) -> Result<ErrorStats> {
    if records.is_empty() {
        return Err(Error::EmptyInput("evaluation records"));
    }
    let n = records.len() as f64;
    let (mut mae, mut mse, mut m1, mut m2) = (0.0, 0.0, 0.0, 0.0);
    for (index, r) in records.iter().enumerate() {
        let d = r.delta().abs();
        if !(r.actual > 0.0) {
            return Err(Error::Metric {
                index,
                message: format!("MAPE1 needs a positive actual RUL, got {}", r.actual),
            });
        }
        let total = r.actual + r.observed_len as f64;
        if !(total > 0.0) {
            return Err(Error::Metric {
                index,
                message: "MAPE2 denominator is zero".into(),
            });
        }
        mae += d;
        mse += d * d;
        m1 += d / r.actual;
        m2 += d / total;
    }
    Ok(ErrorStats {
        mae: mae / n,
        mse: mse / n,
        mape1: 100.0 * m1 / n,
        mape2: 100.0 * m2 / n,
    })
}

pub fn evaluate(records: &[EvalRecord], tau1: f64, tau2: f64) -> Result<MetricsReport> {
    let s = timeliness(records, tau1, tau2)?;
    let stats = error_stats(records)?;
    let (ca, cfp, cfn) = counts(records, tau1, tau2);
    let (a, fpr, fnr) = partition_percentages(ca, cfp, cfn);
    Ok(MetricsReport {
        n: records.len(),
        s,
        a,
        mae: stats.mae,
        mse: stats.mse,
        mape1: stats.mape1,
        mape2: stats.mape2,
        fpr,
        fnr,
        tau1,
        tau2,
    })
}

impl MetricsReport {
    fn rows(&self) -> [(&'static str, f64); 8] {
        [
            ("S", self.s),
            ("A", self.a),
            ("MAE", self.mae),
            ("MSE", self.mse),
            ("MAPE1", self.mape1),
            ("MAPE2", self.mape2),
            ("FPR", self.fpr),
            ("FNR", self.fnr),
        ]
    }

    /// Aligned two-column table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<8}{:>14}", "metric", "value");
        let _ = writeln!(s, "{}", "-".repeat(22));
        for (k, v) in self.rows() {
            let unit = if matches!(k, "A" | "MAPE1" | "MAPE2" | "FPR" | "FNR") { "%" } else { " " };
            let _ = writeln!(s, "{k:<8}{v:>13.3}{unit}");
        }
        let _ = writeln!(s, "(N = {}, tau1 = {}, tau2 = {})", self.n, self.tau1, self.tau2);
        s
    }

    /// One `key=value` per line.
    pub fn to_key_values(&self) -> String {
        let mut s = format!("n={}\ntau1={}\ntau2={}\n", self.n, self.tau1, self.tau2);
        for (k, v) in self.rows() {
            let _ = writeln!(s, "{}={}", k.to_ascii_lowercase(), v);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(delta: f64) -> EvalRecord {
        EvalRecord {
            predicted: 50.0 + delta,
            actual: 50.0,
            observed_len: 100,
        }
    }

    #[test]
    fn timeliness_cases() {
        assert_eq!(timeliness(&[rec(0.0), rec(0.0)], 13.0, 10.0).unwrap(), 0.0);
        let e1 = std::f64::consts::E - 1.0;
        assert!((timeliness(&[rec(10.0)], 13.0, 10.0).unwrap() - e1).abs() < 1e-12);
        assert!((timeliness(&[rec(-13.0)], 13.0, 10.0).unwrap() - e1).abs() < 1e-12);
        assert!(timeliness(&[rec(1.0)], 0.0, 10.0).is_err());
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[rec(-13.0)], 13.0, 10.0).unwrap(), 100.0);
        assert_eq!(accuracy(&[rec(11.0)], 13.0, 10.0).unwrap(), 0.0);
        let a = accuracy(&[rec(0.0), rec(-20.0), rec(5.0)], 13.0, 10.0).unwrap();
        assert!((a - 66.67).abs() < 0.01);
    }

    #[test]
    fn error_stat_cases() {
        let s = error_stats(&[rec(3.0), rec(-4.0)]).unwrap();
        assert_eq!(s.mae, 3.5);
        assert_eq!(s.mse, 12.5);
        let s = error_stats(&[rec(0.0)]).unwrap();
        assert_eq!((s.mae, s.mse, s.mape1, s.mape2), (0.0, 0.0, 0.0, 0.0));
        let r = EvalRecord {
            predicted: 60.0,
            actual: 50.0,
            observed_len: 150,
        };
        let s = error_stats(&[r]).unwrap();
        assert!((s.mape1 - 20.0).abs() < 1e-12);
        assert!((s.mape2 - 5.0).abs() < 1e-12);
        let zero = EvalRecord {
            predicted: 1.0,
            actual: 0.0,
            observed_len: 10,
        };
        assert!(matches!(error_stats(&[rec(1.0), zero]), Err(Error::Metric { index: 1, .. })));
    }

    #[test]
    fn fp_fn_cases() {
        let (fp, _) = fp_fn_rates(&[rec(-14.0)], 13.0, 10.0).unwrap();
        assert_eq!(fp, 100.0);
        assert_eq!(fp_fn_rates(&[rec(-13.0)], 13.0, 10.0).unwrap(), (0.0, 0.0));
        let (fp, fnr) = fp_fn_rates(&[rec(-20.0), rec(0.0), rec(15.0)], 13.0, 10.0).unwrap();
        assert!((fp - 33.33).abs() < 0.01);
        assert!((fnr - 33.33).abs() < 0.01);
    }

    #[test]
    fn report_renders() {
        let r = evaluate(&[rec(1.0), rec(-2.0)], 13.0, 10.0).unwrap();
        assert!(r.to_table().contains("MAPE1"));
        assert!(r.to_key_values().contains("a=100\n"));
    }

    proptest! {
        #[test]
        fn timeliness_zero_only_at_zero(deltas in proptest::collection::vec(-50.0f64..50.0, 1..20)) {
            let recs: Vec<_> = deltas.iter().map(|&d| rec(d)).collect();
            let s = timeliness(&recs, 13.0, 10.0).unwrap();
            prop_assert!(s >= 0.0);
            prop_assert_eq!(s == 0.0, deltas.iter().all(|&d| d == 0.0));
            let st = error_stats(&recs).unwrap();
            if deltas.iter().all(|d| d.abs() >= 1.0) {
                prop_assert!(st.mse >= st.mae);
            }
        }

        #[test]
        fn timeliness_increasing_in_error(d in 0.0f64..40.0, bump in 0.01f64..5.0, late in proptest::bool::ANY) {
            let sign = if late { 1.0 } else { -1.0 };
            let a = timeliness(&[rec(sign * d)], 13.0, 10.0).unwrap();
            let b = timeliness(&[rec(sign * (d + bump))], 13.0, 10.0).unwrap();
            prop_assert!(b > a);
        }
    }
}
