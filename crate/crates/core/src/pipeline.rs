//! End-to-end training and estimation.
//!
//! Training: seeded instance split, z-normalization and PCA fitted on the
//! training split, LSTM-ED on healthy windows (reconstruction variants only),
//! target HI, linear HI model, and the smoothed HI curve of every training
//! instance. Estimation maps a test series through the same chain and matches
//! its curve against the stored ones.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::data::{truncate_at, Instance, RunToFailureDataset};
use crate::error::{Error, Result, StageExt};
use crate::health::{
    endpoint_target_hi, exponential_target_hi, fit_hi_model, fit_hi_model_partial, frac_count, hi_curve,
    linear_target_hi, pointwise_reconstruction, reconstruction_error, target_hi_from_error, HiCurve,
    TargetHiSpec,
};
use crate::lstm::{train, EpochRecord, LstmEdModel};
use crate::matching::{match_rul, MatchConfig, RulEstimate};
use crate::matrix::Matrix;
use crate::metrics::{evaluate, EvalRecord, MetricsReport};
use crate::numerics::{apply_norm, fit_norm_stats, pca_fit, pca_transform, NormStats, OlsModel, PcaModel};

/// Everything needed to turn a sensor series into a RUL estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub config: RunConfig,
    pub norm: NormStats,
    pub pca: PcaModel,
    pub lstm: Option<LstmEdModel>,
    pub hi_model: OlsModel,
    pub train_curves: Vec<(String, HiCurve)>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub pipeline: Pipeline,
    /// Held-out instances, in dataset order.
    pub validation: Vec<Instance>,
    /// Per-epoch losses; empty when no LSTM-ED was trained.
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

/// Seeded split into `(train, validation)`. Both keep dataset order.
pub fn split_instances(instances: &[Instance], validation_frac: f64, seed: u64) -> Result<(Vec<Instance>, Vec<Instance>)> {
    if !(0.0..1.0).contains(&validation_frac) {
        return Err(Error::invalid("validation_frac must lie in [0, 1)"));
    }
    let n = instances.len();
    let mut n_val = (validation_frac * n as f64).round() as usize;
    if validation_frac > 0.0 && n >= 2 {
        n_val = n_val.clamp(1, n - 1);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_val = vec![false; n];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let (val, tr): (Vec<_>, Vec<_>) = instances.iter().cloned().zip(is_val).partition(|(_, v)| *v);
    Ok((tr.into_iter().map(|(i, _)| i).collect(), val.into_iter().map(|(i, _)| i).collect()))
}

/// Windows assumed healthy. With `healthy_frac = None` only the first window
/// of each instance is used; otherwise every window inside the first
/// `⌈healthy_frac·L⌉` cycles (at least one window). Instances shorter than
/// `l` contribute nothing.
pub fn healthy_windows(derived: &[Matrix], l: usize, healthy_frac: Option<f64>) -> Vec<Matrix> {
    let mut out = Vec::new();
    for d in derived {
        let len = d.rows();
        if len < l {
            continue;
        }
        let prefix = match healthy_frac {
            None => l,
            Some(h) => frac_count(h, len).max(l),
        };
        for start in 0..=prefix - l {
            out.push(d.slice_rows(start, l));
        }
    }
    out
}

fn derive(norm: &NormStats, pca: &PcaModel, series: &Matrix) -> Result<Matrix> {
    pca_transform(&apply_norm(series, norm)?, pca)
}

fn build_targets(
    spec: TargetHiSpec,
    derived: &[Matrix],
    lstm: Option<&LstmEdModel>,
) -> Result<Vec<Vec<Option<f64>>>> {
    let full = |c: HiCurve| c.values.into_iter().map(Some).collect::<Vec<_>>();
    match spec {
        TargetHiSpec::ReconError | TargetHiSpec::ReconErrorSquared => {
            let model = lstm.expect("reconstruction variants train a model");
            let squared = spec == TargetHiSpec::ReconErrorSquared;
            derived
                .par_iter()
                .map(|d| {
                    let recon = pointwise_reconstruction(model, d)?;
                    let err = reconstruction_error(d, &recon)?;
                    Ok(full(target_hi_from_error(&err, squared)))
                })
                .collect()
        }
        TargetHiSpec::Exponential { beta } => derived
            .iter()
            .map(|d| exponential_target_hi(d.rows(), beta).map(full))
            .collect(),
        TargetHiSpec::Linear => derived.iter().map(|d| linear_target_hi(d.rows()).map(full)).collect(),
        TargetHiSpec::Endpoints {
            healthy_frac,
            faulty_frac,
        } => derived
            .iter()
            .map(|d| endpoint_target_hi(d.rows(), healthy_frac, faulty_frac))
            .collect(),
    }
}

pub fn train_pipeline(dataset: &RunToFailureDataset, config: &RunConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::NoTrainingData);
    }
    let spec = config.target_spec();
    let needs_lstm = spec.uses_reconstruction();
    if needs_lstm && config.validation_frac <= 0.0 {
        return Err(Error::invalid("validation split required for early stopping"));
    }
    let (train_set, validation) = split_instances(&dataset.instances, config.validation_frac, config.seed).stage("split")?;
    if train_set.is_empty() {
        return Err(Error::NoTrainingData).stage("split");
    }
    let raw: Vec<Matrix> = train_set.iter().map(|i| i.series.clone()).collect();
    let norm = fit_norm_stats(&raw).stage("normalize")?;
    let normalized = raw.iter().map(|s| apply_norm(s, &norm)).collect::<Result<Vec<_>>>().stage("normalize")?;
    let pca = pca_fit(&Matrix::vstack(&normalized)?, config.p).stage("pca")?;
    let derived = normalized.iter().map(|s| pca_transform(s, &pca)).collect::<Result<Vec<_>>>().stage("pca")?;

    let mut history = Vec::new();
    let mut best_epoch = None;
    let lstm = if needs_lstm {
        if let Some(short) = train_set.iter().find(|i| i.series.rows() < config.l) {
            return Err(Error::invalid(format!(
                "instance '{}' has {} cycles, fewer than the window length {}",
                short.id,
                short.series.rows(),
                config.l
            )))
            .stage("lstm");
        }
        let windows = healthy_windows(&derived, config.l, config.healthy_frac);
        let val_derived = validation
            .iter()
            .map(|i| derive(&norm, &pca, &i.series))
            .collect::<Result<Vec<_>>>()
            .stage("lstm")?;
        let val_windows = healthy_windows(&val_derived, config.l, config.healthy_frac);
        if val_windows.is_empty() {
            return Err(Error::invalid("validation split required for early stopping")).stage("lstm");
        }
        let trained = train(&windows, &config.train_config(), &val_windows, config.c).stage("lstm")?;
        history = trained.history;
        best_epoch = Some(trained.best_epoch);
        Some(trained.model)
    } else {
        None
    };

    let targets = build_targets(spec, &derived, lstm.as_ref()).stage("target_hi")?;
    let hi_model = if matches!(spec, TargetHiSpec::Endpoints { .. }) {
        fit_hi_model_partial(&derived, &targets)
    } else {
        let curves: Vec<HiCurve> = targets
            .into_iter()
            .map(|t| HiCurve::new(t.into_iter().map(|v| v.expect("fully labeled")).collect()))
            .collect();
        fit_hi_model(&derived, &curves)
    }
    .stage("hi_model")?;

    let train_curves = train_set
        .iter()
        .zip(&derived)
        .map(|(inst, d)| Ok((inst.id.clone(), hi_curve(&hi_model, d, config.smooth_window, config.init_frac)?)))
        .collect::<Result<Vec<_>>>()
        .stage("hi_curves")?;

    Ok(TrainOutcome {
        pipeline: Pipeline {
            config: config.clone(),
            norm,
            pca,
            lstm,
            hi_model,
            train_curves,
        },
        validation,
        history,
        best_epoch,
    })
}

impl Pipeline {
    pub fn sensor_count(&self) -> usize {
        self.norm.sensor_count()
    }

    pub fn check_sensors(&self, ds: &RunToFailureDataset) -> Result<()> {
        if ds.sensor_count() != self.sensor_count() {
            return Err(Error::Dimension {
                context: "dataset sensors vs pipeline",
                expected: self.sensor_count(),
                found: ds.sensor_count(),
            });
        }
        Ok(())
    }

    pub fn hi_curve_for(&self, series: &Matrix) -> Result<HiCurve> {
        if series.rows() == 0 {
            return Err(Error::EmptyInput("test series"));
        }
        let d = derive(&self.norm, &self.pca, series)?;
        hi_curve(&self.hi_model, &d, self.config.smooth_window, self.config.init_frac)
    }

    pub fn estimate(&self, series: &Matrix) -> Result<RulEstimate> {
        self.estimate_with(series, &self.config.match_config())
    }

    pub fn estimate_with(&self, series: &Matrix, config: &MatchConfig) -> Result<RulEstimate> {
        let curve = self.hi_curve_for(series)?;
        let trains: Vec<&HiCurve> = self.train_curves.iter().map(|(_, c)| c).collect();
        match_rul(&curve, &trains, config)
    }
}

/// One row of the per-instance estimates file.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub id: String,
    pub estimate: RulEstimate,
    pub actual: Option<f64>,
    pub observed_len: usize,
}

pub fn estimates_csv(rows: &[EstimateRow]) -> String {
    let mut s = String::from("test_id,rul_estimate,actual_rul,std_dev,spread,n_candidates,capped,fallback\n");
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for r in rows {
        let e = &r.estimate;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.id,
            e.value,
            opt(r.actual),
            opt(e.std_dev),
            opt(e.spread),
            e.candidates.len(),
            e.capped,
            e.fallback
        );
    }
    s
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub rows: Vec<EstimateRow>,
}

/// Estimates every instance of a labeled dataset and scores the estimates.
pub fn evaluate_dataset(pipeline: &Pipeline, ds: &RunToFailureDataset, config: &MatchConfig, tau1: f64, tau2: f64) -> Result<Evaluation> {
    let labels = ds.rul_labels.as_ref().ok_or_else(|| Error::invalid("test dataset has no RUL labels"))?;
    pipeline.check_sensors(ds)?;
    config.validate()?;
    let rows = ds
        .instances
        .par_iter()
        .zip(labels.par_iter())
        .map(|(inst, &actual)| {
            Ok(EstimateRow {
                id: inst.id.clone(),
                estimate: pipeline.estimate_with(&inst.series, config)?,
                actual: Some(actual),
                observed_len: inst.series.rows(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<EvalRecord> = rows
        .iter()
        .map(|r| EvalRecord {
            predicted: r.estimate.value,
            actual: r.actual.expect("labeled"),
            observed_len: r.observed_len,
        })
        .collect();
    Ok(Evaluation {
        report: evaluate(&records, tau1, tau2)?,
        rows,
    })
}

pub const VALIDATION_CASES: usize = 5;
pub const VALIDATION_MIN_FRAC: f64 = 0.2;
pub const VALIDATION_MAX_FRAC: f64 = 0.96;

/// `cases` truncated copies of every instance, cut at seeded fractions in
/// `[lo, hi]` of its life. Ids are `<id>@<k>`.
pub fn truncation_cases(instances: &[Instance], cases: usize, lo: f64, hi: f64, seed: u64) -> Result<RunToFailureDataset> {
    if !(0.0 < lo && lo <= hi && hi <= 1.0) {
        return Err(Error::invalid(format!("truncation range [{lo}, {hi}] must lie in (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut labels = Vec::new();
    for inst in instances {
        for k in 0..cases {
            let frac = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let (cut, rul) = truncate_at(&inst.series, frac);
            out.push(Instance {
                id: format!("{}@{}", inst.id, k + 1),
                series: cut,
            });
            labels.push(rul);
        }
    }
    let m = instances.first().map_or(0, |i| i.series.cols());
    let names = (1..=m).map(|j| format!("sensor_{j}")).collect();
    RunToFailureDataset::new(out, names)?.with_labels(labels)
}

/// Keys that only affect matching and scoring, so trials differing only in
/// these share one trained pipeline.
pub const MATCH_ONLY_KEYS: &[&str] = &["tau", "alpha", "lambda", "r_max", "tau1", "tau2"];

/// Grid of `key = v1, v2, ...` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub axes: Vec<(String, Vec<String>)>,
}

impl Grid {
    pub fn parse(text: &str) -> Result<Self> {
        let mut axes: Vec<(String, Vec<String>)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse { line: i + 1, message };
            let (k, vs) = line.split_once('=').ok_or_else(|| bad(format!("expected key = values, got '{line}'")))?;
            let key = k.trim().to_string();
            if !crate::config::KEYS.contains(&key.as_str()) {
                return Err(bad(format!("unknown config key '{key}'")));
            }
            if axes.iter().any(|(a, _)| *a == key) {
                return Err(bad(format!("key '{key}' listed twice")));
            }
            let values: Vec<String> = vs.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
            if values.is_empty() {
                return Err(bad(format!("no values for '{key}'")));
            }
            let mut probe = RunConfig::default();
            for v in &values {
                probe.set(&key, v).map_err(|e| bad(e.to_string()))?;
            }
            axes.push((key, values));
        }
        Ok(Self { axes })
    }

    /// Every combination, first axis varying slowest.
    pub fn configs(&self, base: &RunConfig) -> Result<Vec<RunConfig>> {
        let mut out = vec![base.clone()];
        for (key, values) in &self.axes {
            let mut next = Vec::with_capacity(out.len() * values.len());
            for cfg in &out {
                for v in values {
                    let mut c = cfg.clone();
                    c.set(key, v)?;
                    next.push(c);
                }
            }
            out = next;
        }
        Ok(out)
    }
}

fn training_signature(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    let base = RunConfig::default();
    for k in MATCH_ONLY_KEYS {
        c.set(k, &base.get(k).expect("known key")).expect("default value parses");
    }
    c.to_text()
}

#[derive(Debug, Clone)]
pub struct Trial {
    pub config: RunConfig,
    pub report: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub trials: Vec<Trial>,
    pub best: usize,
    pub pipeline: Pipeline,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let keys = crate::config::KEYS;
        let _ = writeln!(s, "trial,{},s,a,mae,mape1,fpr,fnr,best", keys.join(","));
        for (i, t) in self.trials.iter().enumerate() {
            let vals: Vec<String> = keys.iter().map(|k| t.config.get(k).expect("known key")).collect();
            let r = &t.report;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                i + 1,
                vals.join(","),
                r.s,
                r.a,
                r.mae,
                r.mape1,
                r.fpr,
                r.fnr,
                i == self.best
            );
        }
        s
    }
}

/// Trains each distinct pipeline once, scores every grid point on truncated
/// validation instances and keeps the one with the smallest timeliness score.
/// Ties go to the earliest grid point.
pub fn sweep(dataset: &RunToFailureDataset, base: &RunConfig, grid: &Grid) -> Result<SweepResult> {
    let configs = grid.configs(base)?;
    for c in &configs {
        c.validate()?;
    }
    let mut signatures: Vec<String> = Vec::new();
    let mut slot = Vec::with_capacity(configs.len());
    for c in &configs {
        let sig = training_signature(c);
        let idx = signatures.iter().position(|s| *s == sig).unwrap_or_else(|| {
            signatures.push(sig);
            signatures.len() - 1
        });
        slot.push(idx);
    }
    let representatives: Vec<&RunConfig> = (0..signatures.len())
        .map(|s| &configs[slot.iter().position(|&x| x == s).expect("every slot used")])
        .collect();
    let trained = representatives
        .par_iter()
        .map(|c| {
            let outcome = train_pipeline(dataset, c)?;
            if outcome.validation.is_empty() {
                return Err(Error::invalid("validation split required for the sweep"));
            }
            let cases = truncation_cases(
                &outcome.validation,
                VALIDATION_CASES,
                VALIDATION_MIN_FRAC,
                VALIDATION_MAX_FRAC,
                c.seed,
            )?;
            Ok((outcome.pipeline, cases))
        })
        .collect::<Result<Vec<_>>>()?;

    let reports = configs
        .par_iter()
        .zip(slot.par_iter())
        .map(|(c, &s)| {
            let (pipeline, cases) = &trained[s];
            evaluate_dataset(pipeline, cases, &c.match_config(), c.tau1, c.tau2).map(|e| e.report)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, r) in reports.iter().enumerate() {
        if r.s < reports[best].s {
            best = i;
        }
    }
    let mut pipeline = trained[slot[best]].0.clone();
    pipeline.config = configs[best].clone();
    let trials = configs
        .into_iter()
        .zip(reports)
        .map(|(config, report)| Trial { config, report })
        .collect();
    Ok(SweepResult { trials, best, pipeline })
}
