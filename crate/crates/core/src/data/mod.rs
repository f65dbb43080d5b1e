//! Run-to-failure datasets: parsing, synthetic generation, truncation and
//! pipeline persistence.

mod generic;
mod persist;
mod synthetic;
mod turbofan;

pub use generic::{parse_generic, parse_rul_labels, write_generic, write_rul_labels};
pub use persist::{load_pipeline, pipeline_from_bytes, pipeline_to_bytes, save_pipeline, FORMAT_VERSION, MAGIC};
pub use synthetic::{generate_synthetic, DegradationShape, SyntheticSpec};
pub use turbofan::{parse_turbofan, parse_turbofan_rul, parse_turbofan_series, TURBOFAN_COLUMNS};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// One instance's multivariate series, cycles × sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub series: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunToFailureDataset {
    pub instances: Vec<Instance>,
    /// True remaining life per instance, for truncated test sets.
    pub rul_labels: Option<Vec<f64>>,
    pub sensor_names: Vec<String>,
}

impl RunToFailureDataset {
    pub fn new(instances: Vec<Instance>, sensor_names: Vec<String>) -> Result<Self> {
        let ds = Self {
            instances,
            rul_labels: None,
            sensor_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_labels(mut self, labels: Vec<f64>) -> Result<Self> {
        self.rul_labels = Some(labels);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<&str> = self.instances.iter().map(|i| i.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("duplicate instance id '{}'", w[0])));
        }
        if let Some(labels) = &self.rul_labels {
            if labels.len() != self.instances.len() {
                return Err(Error::Dimension {
                    context: "RUL labels",
                    expected: self.instances.len(),
                    found: labels.len(),
                });
            }
        }
        let m = self.sensor_names.len();
        for inst in &self.instances {
            if inst.series.cols() != m {
                return Err(Error::Dimension {
                    context: "instance sensor count",
                    expected: m,
                    found: inst.series.cols(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn total_cycles(&self) -> usize {
        self.instances.iter().map(|i| i.series.rows()).sum()
    }

    pub fn sensor_count(&self) -> usize {
        self.sensor_names.len()
    }
}

/// Truncates every instance at a fraction of its life drawn uniformly from
/// `[lo_frac, hi_frac]`, recording the removed cycle count as the RUL label.
pub fn truncate_uniform(ds: &RunToFailureDataset, lo_frac: f64, hi_frac: f64, seed: u64) -> Result<RunToFailureDataset> {
    if !(0.0 < lo_frac && lo_frac <= hi_frac && hi_frac <= 1.0) {
        return Err(Error::invalid(format!(
            "truncation range [{lo_frac}, {hi_frac}] must lie in (0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::with_capacity(ds.len());
    let mut labels = Vec::with_capacity(ds.len());
    for inst in &ds.instances {
        let frac = if hi_frac > lo_frac {
            rng.random_range(lo_frac..=hi_frac)
        } else {
            lo_frac
        };
        let (cut, rul) = truncate_at(&inst.series, frac);
        instances.push(Instance {
            id: inst.id.clone(),
            series: cut,
        });
        labels.push(rul);
    }
    RunToFailureDataset::new(instances, ds.sensor_names.clone())?.with_labels(labels)
}

/// Keeps `round(frac·L)` cycles and returns the removed count. At least one
/// cycle is kept and, when `L ≥ 2`, at least one is removed.
pub fn truncate_at(series: &Matrix, frac: f64) -> (Matrix, f64) {
    let total = series.rows();
    let keep = ((frac * total as f64).round() as usize).clamp(1, total.saturating_sub(1).max(1));
    (series.slice_rows(0, keep), (total - keep) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(id: &str, rows: usize) -> Instance {
        Instance {
            id: id.into(),
            series: Matrix::zeros(rows, 2),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let names = vec!["a".into(), "b".into()];
        assert!(RunToFailureDataset::new(vec![inst("1", 3), inst("1", 4)], names).is_err());
    }

    #[test]
    fn label_count_checked() {
        let names = vec!["a".into(), "b".into()];
        let ds = RunToFailureDataset::new(vec![inst("1", 3)], names).unwrap();
        assert!(ds.with_labels(vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn truncation_labels_add_up() {
        let names = vec!["a".into(), "b".into()];
        let ds = RunToFailureDataset::new(vec![inst("1", 100), inst("2", 57)], names).unwrap();
        let t = truncate_uniform(&ds, 0.4, 0.9, 3).unwrap();
        for ((orig, cut), rul) in ds.instances.iter().zip(&t.instances).zip(t.rul_labels.unwrap()) {
            assert_eq!(cut.series.rows() as f64 + rul, orig.series.rows() as f64);
            let frac = cut.series.rows() as f64 / orig.series.rows() as f64;
            assert!((0.39..=0.91).contains(&frac));
        }
    }
}
