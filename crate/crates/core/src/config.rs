//! Run configuration shared by the pipeline and the command-line tool.
//!
//! Persisted as flat `key=value` text. Defaults are tuned for turbofan
//! run-to-failure data: `p=3, c=30, l=20, τ=40, α=0.87, R_max=125, λ=0.0005` with the
//! squared-error target HI.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::health::TargetHiSpec;
use crate::lstm::TrainConfig;
use crate::matching::MatchConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HiVariant {
    ReconError,
    ReconErrorSquared,
    Exponential,
    Linear,
    Endpoints,
}

impl HiVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ReconError => "recon_error",
            Self::ReconErrorSquared => "recon_error_squared",
            Self::Exponential => "exponential",
            Self::Linear => "linear",
            Self::Endpoints => "endpoints",
        }
    }
}

impl FromStr for HiVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match TargetHiSpec::from_str(s)? {
            TargetHiSpec::ReconError => Self::ReconError,
            TargetHiSpec::ReconErrorSquared => Self::ReconErrorSquared,
            TargetHiSpec::Exponential { .. } => Self::Exponential,
            TargetHiSpec::Linear => Self::Linear,
            TargetHiSpec::Endpoints { .. } => Self::Endpoints,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub p: usize,
    pub c: usize,
    pub l: usize,
    pub tau: usize,
    pub alpha: f64,
    pub r_max: f64,
    pub lambda: f64,
    pub beta: f64,
    pub hi_variant: HiVariant,
    pub smooth_window: usize,
    pub init_frac: f64,
    pub validation_frac: f64,
    /// Healthy prefix used for LSTM-ED training windows. `None` takes only the
    /// first window of each instance.
    pub healthy_frac: Option<f64>,
    pub faulty_frac: f64,
    pub seed: u64,
    pub tau1: f64,
    pub tau2: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub grad_clip: f64,
    pub patience: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            p: 3,
            c: 30,
            l: 20,
            tau: 40,
            alpha: 0.87,
            r_max: 125.0,
            lambda: 0.0005,
            beta: 0.05,
            hi_variant: HiVariant::ReconErrorSquared,
            smooth_window: 5,
            init_frac: 0.05,
            validation_frac: 0.2,
            healthy_frac: None,
            faulty_frac: 0.05,
            seed: 0,
            tau1: 13.0,
            tau2: 10.0,
            learning_rate: 1e-3,
            max_epochs: 500,
            batch_size: 32,
            grad_clip: 10.0,
            patience: 10,
        }
    }
}

pub const KEYS: &[&str] = &[
    "p",
    "c",
    "l",
    "tau",
    "alpha",
    "r_max",
    "lambda",
    "beta",
    "hi_variant",
    "smooth_window",
    "init_frac",
    "validation_frac",
    "healthy_frac",
    "faulty_frac",
    "seed",
    "tau1",
    "tau2",
    "learning_rate",
    "max_epochs",
    "batch_size",
    "grad_clip",
    "patience",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("{key}: cannot parse '{value}'")))
}

fn parse_real(key: &str, value: &str) -> Result<f64> {
    match value.to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "none" if key == "r_max" => Ok(f64::INFINITY),
        _ => parse(key, value),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "p" => self.p = parse(key, v)?,
            "c" => self.c = parse(key, v)?,
            "l" => self.l = parse(key, v)?,
            "tau" => self.tau = parse(key, v)?,
            "alpha" => self.alpha = parse_real(key, v)?,
            "r_max" => self.r_max = parse_real(key, v)?,
            "lambda" => self.lambda = parse_real(key, v)?,
            "beta" => self.beta = parse_real(key, v)?,
            "hi_variant" => self.hi_variant = v.parse()?,
            "smooth_window" => self.smooth_window = parse(key, v)?,
            "init_frac" => self.init_frac = parse_real(key, v)?,
            "validation_frac" => self.validation_frac = parse_real(key, v)?,
            "healthy_frac" => {
                self.healthy_frac = match v.to_ascii_lowercase().as_str() {
                    "" | "none" => None,
                    _ => Some(parse_real(key, v)?),
                }
            }
            "faulty_frac" => self.faulty_frac = parse_real(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "tau1" => self.tau1 = parse_real(key, v)?,
            "tau2" => self.tau2 = parse_real(key, v)?,
            "learning_rate" => self.learning_rate = parse_real(key, v)?,
            "max_epochs" => self.max_epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "grad_clip" => self.grad_clip = parse_real(key, v)?,
            "patience" => self.patience = parse(key, v)?,
            other => return Err(Error::invalid(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "p" => self.p.to_string(),
            "c" => self.c.to_string(),
            "l" => self.l.to_string(),
            "tau" => self.tau.to_string(),
            "alpha" => self.alpha.to_string(),
            "r_max" => self.r_max.to_string(),
            "lambda" => self.lambda.to_string(),
            "beta" => self.beta.to_string(),
            "hi_variant" => self.hi_variant.as_str().to_string(),
            "smooth_window" => self.smooth_window.to_string(),
            "init_frac" => self.init_frac.to_string(),
            "validation_frac" => self.validation_frac.to_string(),
            "healthy_frac" => self
                .healthy_frac
                .map_or_else(|| "none".to_string(), |v| v.to_string()),
            "faulty_frac" => self.faulty_frac.to_string(),
            "seed" => self.seed.to_string(),
            "tau1" => self.tau1.to_string(),
            "tau2" => self.tau2.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "max_epochs" => self.max_epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "grad_clip" => self.grad_clip.to_string(),
            "patience" => self.patience.to_string(),
            _ => return None,
        })
    }

    /// Applies `key=value` lines on top of `self`. Blank lines and `#`
    /// comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key=value, got '{line}'"),
            })?;
            self.set(k, v).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            let _ = writeln!(s, "{k}={}", self.get(k).expect("known key"));
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.c == 0 || self.l == 0 {
            return Err(Error::invalid("p, c and l must be positive"));
        }
        if self.smooth_window == 0 {
            return Err(Error::invalid("smooth_window must be positive"));
        }
        if !(self.init_frac > 0.0 && self.init_frac <= 1.0) {
            return Err(Error::invalid("init_frac must lie in (0, 1]"));
        }
        if !(self.validation_frac >= 0.0 && self.validation_frac < 1.0) {
            return Err(Error::invalid("validation_frac must lie in [0, 1)"));
        }
        if let Some(h) = self.healthy_frac {
            if !(h > 0.0 && h <= 1.0) {
                return Err(Error::invalid("healthy_frac must lie in (0, 1]"));
            }
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid("beta must lie in (0, 1)"));
        }
        if !(self.tau1 > 0.0 && self.tau2 > 0.0) {
            return Err(Error::invalid("tau1 and tau2 must be positive"));
        }
        self.match_config().validate()
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig {
            lambda: self.lambda,
            tau: self.tau,
            alpha: self.alpha,
            r_max: self.r_max,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            grad_clip_norm: self.grad_clip,
            patience: self.patience,
            seed: self.seed,
        }
    }

    pub fn target_spec(&self) -> TargetHiSpec {
        match self.hi_variant {
            HiVariant::ReconError => TargetHiSpec::ReconError,
            HiVariant::ReconErrorSquared => TargetHiSpec::ReconErrorSquared,
            HiVariant::Exponential => TargetHiSpec::Exponential { beta: self.beta },
            HiVariant::Linear => TargetHiSpec::Linear,
            HiVariant::Endpoints => TargetHiSpec::Endpoints {
                healthy_frac: self.healthy_frac.unwrap_or(0.05),
                faulty_frac: self.faulty_frac,
            },
        }
    }
}
