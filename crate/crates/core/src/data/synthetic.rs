//! Seeded run-to-failure generator.
//!
//! Sensor `j` of an instance of length `L` at 0-based cycle `t`:
//!
//! ```text
//! x_j(t) = b_j + a_j·sin(2πt/P + φ) + A·d_j·D((t - t₀)/(L - t₀)) + σ·ε
//! ```
//!
//! `b_j`, `a_j` and the signed weight `d_j` are shared by all instances; the
//! period `P` and phase `φ` vary per instance. `t₀ = ⌊onset·L⌋` and `D` is
//! zero before onset.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Instance, RunToFailureDataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegradationShape {
    Linear,
    Exponential,
    /// Slow linear wear up to mid-degradation, then a steeper segment.
    Piecewise,
}

impl DegradationShape {
    /// Damage at normalized post-onset time `x ∈ [0, 1]`, with `D(0) = 0` and
    /// `D(1) = 1`.
    pub fn damage(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self {
            Self::Linear => x,
            Self::Exponential => (4.0 * x).exp_m1() / 4f64.exp_m1(),
            Self::Piecewise => {
                if x < 0.5 {
                    0.6 * x
                } else {
                    0.3 + 1.4 * (x - 0.5)
                }
            }
        }
    }
}

impl fmt::Display for DegradationShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Linear => "linear",
            Self::Exponential => "exponential",
            Self::Piecewise => "piecewise",
        })
    }
}

impl FromStr for DegradationShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(Self::Linear),
            "exponential" | "exp" => Ok(Self::Exponential),
            "piecewise" => Ok(Self::Piecewise),
            other => Err(Error::invalid(format!("unknown degradation shape '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_instances: usize,
    pub n_sensors: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub noise_std: f64,
    pub fault_onset_frac: f64,
    pub degradation_shape: DegradationShape,
    /// Sensor shift at end of life, in units of the per-sensor weight.
    pub fault_amplitude: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_instances: 20,
            n_sensors: 6,
            min_len: 80,
            max_len: 120,
            noise_std: 0.05,
            fault_onset_frac: 0.3,
            degradation_shape: DegradationShape::Exponential,
            fault_amplitude: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_instances == 0 {
            return Err(Error::invalid("n_instances must be at least 1"));
        }
        if self.n_sensors == 0 {
            return Err(Error::invalid("n_sensors must be at least 1"));
        }
        if self.min_len < 2 || self.min_len > self.max_len {
            return Err(Error::invalid(format!(
                "need 2 <= min_len <= max_len, got {} and {}",
                self.min_len, self.max_len
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::invalid("noise_std must be finite and non-negative"));
        }
        if !(self.fault_onset_frac > 0.0 && self.fault_onset_frac < 1.0) {
            return Err(Error::invalid("fault_onset_frac must lie in (0, 1)"));
        }
        if !self.fault_amplitude.is_finite() {
            return Err(Error::invalid("fault_amplitude must be finite"));
        }
        Ok(())
    }

    /// First degraded cycle (0-based) for an instance of length `len`.
    pub fn onset(&self, len: usize) -> usize {
        ((self.fault_onset_frac * len as f64).floor() as usize).min(len - 1)
    }
}

struct SensorProfile {
    offset: f64,
    load: f64,
    weight: f64,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<RunToFailureDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sensors: Vec<SensorProfile> = (0..spec.n_sensors)
        .map(|_| {
            let offset = rng.random_range(-1.0..1.0);
            let load = rng.random_range(0.05..0.2);
            let magnitude = rng.random_range(0.5..1.0);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            SensorProfile {
                offset,
                load,
                weight: sign * magnitude,
            }
        })
        .collect();

    let mut instances = Vec::with_capacity(spec.n_instances);
    for k in 0..spec.n_instances {
        let len = rng.random_range(spec.min_len..=spec.max_len);
        let period = rng.random_range(15.0..30.0);
        let phase = rng.random_range(0.0..TAU);
        let onset = spec.onset(len);
        let span = (len - onset).max(1) as f64;
        let mut data = Vec::with_capacity(len * spec.n_sensors);
        for t in 0..len {
            let damage = if t >= onset {
                spec.degradation_shape.damage((t - onset) as f64 / span)
            } else {
                0.0
            };
            let cyc = (TAU * t as f64 / period + phase).sin();
            for s in &sensors {
                let eps: f64 = rng.sample(StandardNormal);
                data.push(s.offset + s.load * cyc + spec.fault_amplitude * s.weight * damage + spec.noise_std * eps);
            }
        }
        instances.push(Instance {
            id: (k + 1).to_string(),
            series: Matrix::from_vec(len, spec.n_sensors, data)?,
        });
    }
    let names = (1..=spec.n_sensors).map(|j| format!("sensor_{j}")).collect();
    RunToFailureDataset::new(instances, names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            n_instances: 4,
            n_sensors: 3,
            min_len: 40,
            max_len: 60,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_synthetic(&spec()).unwrap();
        assert_eq!(a, generate_synthetic(&spec()).unwrap());
        let b = generate_synthetic(&SyntheticSpec { seed: 1, ..spec() }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn lengths_and_shape() {
        let ds = generate_synthetic(&spec()).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.sensor_count(), 3);
        assert!(ds.instances.iter().all(|i| (40..=60).contains(&i.series.rows())));
    }

    #[test]
    fn noiseless_deltas_follow_shape() {
        for shape in [DegradationShape::Linear, DegradationShape::Exponential, DegradationShape::Piecewise] {
            let base = SyntheticSpec {
                noise_std: 0.0,
                degradation_shape: shape,
                ..spec()
            };
            let faulty = generate_synthetic(&base).unwrap();
            let healthy = generate_synthetic(&SyntheticSpec { fault_amplitude: 0.0, ..base.clone() }).unwrap();
            for (f, h) in faulty.instances.iter().zip(&healthy.instances) {
                let len = f.series.rows();
                let onset = base.onset(len);
                let span = (len - onset) as f64;
                // recover the weight from the last cycle, then check every cycle
                let w: Vec<f64> = (0..3).map(|j| f.series.get(len - 1, j) - h.series.get(len - 1, j)).collect();
                let d_end = shape.damage((len - 1 - onset) as f64 / span);
                for t in 0..len {
                    let expect = if t < onset { 0.0 } else { shape.damage((t - onset) as f64 / span) / d_end };
                    for j in 0..3 {
                        let delta = f.series.get(t, j) - h.series.get(t, j);
                        assert!((delta - w[j] * expect).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn shape_endpoints() {
        for shape in [DegradationShape::Linear, DegradationShape::Exponential, DegradationShape::Piecewise] {
            assert_eq!(shape.damage(0.0), 0.0);
            assert!((shape.damage(1.0) - 1.0).abs() < 1e-15);
            assert_eq!(shape.to_string().parse::<DegradationShape>().unwrap(), shape);
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_synthetic(&SyntheticSpec { n_instances: 0, ..spec() }).is_err());
        assert!(generate_synthetic(&SyntheticSpec { min_len: 70, ..spec() }).is_err());
        assert!(generate_synthetic(&SyntheticSpec { noise_std: -1.0, ..spec() }).is_err());
        assert!(generate_synthetic(&SyntheticSpec { fault_onset_frac: 1.0, ..spec() }).is_err());
    }
}
