use hirul::config::{HiVariant, RunConfig};
use hirul::data::{generate_synthetic, truncate_at, DegradationShape, RunToFailureDataset, SyntheticSpec};
use hirul::matrix::Matrix;
use hirul::metrics::{evaluate, EvalRecord};
use hirul::pipeline::{evaluate_dataset, train_pipeline};

fn noiseless() -> RunToFailureDataset {
    generate_synthetic(&SyntheticSpec {
        n_instances: 25,
        n_sensors: 5,
        min_len: 90,
        max_len: 110,
        noise_std: 0.0,
        fault_onset_frac: 0.2,
        degradation_shape: DegradationShape::Exponential,
        fault_amplitude: 1.0,
        seed: 8,
    })
    .unwrap()
}

fn config(variant: HiVariant) -> RunConfig {
    RunConfig {
        p: 2,
        c: 8,
        l: 10,
        healthy_frac: Some(0.15),
        max_epochs: 60,
        hi_variant: variant,
        ..RunConfig::default()
    }
}

#[test]
fn prefix_of_training_instance_recovers_its_remaining_life() {
    let ds = noiseless();
    for variant in [HiVariant::Exponential, HiVariant::ReconErrorSquared] {
        let out = train_pipeline(&ds, &config(variant)).unwrap();
        let (id, _) = &out.pipeline.train_curves[3];
        let inst = ds.instances.iter().find(|i| &i.id == id).unwrap();
        // once the curve has left the healthy plateau
        for frac in [0.7, 0.85] {
            let (prefix, remaining) = truncate_at(&inst.series, frac);
            let est = out.pipeline.estimate(&prefix).unwrap();
            assert!(
                (est.value - remaining).abs() <= 5.0,
                "{variant:?} at {frac}: {} vs {remaining} (best epoch {:?})",
                est.value,
                out.best_epoch
            );
        }
    }
}

#[test]
fn short_healthy_series_is_uncertain() {
    let ds = noiseless();
    let out = train_pipeline(&ds, &config(HiVariant::Exponential)).unwrap();
    let mean_len = ds.total_cycles() as f64 / ds.len() as f64;
    let est = out.pipeline.estimate(&ds.instances[0].series.slice_rows(0, 5)).unwrap();
    assert!(est.value > 0.6 * mean_len, "{}", est.value);
    let long = out.pipeline.estimate(&ds.instances[0].series.slice_rows(0, 80)).unwrap();
    assert!(est.spread.unwrap() > long.spread.unwrap_or(0.0));
    assert!(est.std_dev.unwrap() > 1.0);
    assert!(out.pipeline.estimate(&Matrix::zeros(0, 5)).is_err());
}

#[test]
fn perfect_predictions_score_zero() {
    let recs: Vec<EvalRecord> = (1..30)
        .map(|k| EvalRecord {
            predicted: k as f64,
            actual: k as f64,
            observed_len: 50,
        })
        .collect();
    let r = evaluate(&recs, 13.0, 10.0).unwrap();
    assert_eq!((r.s, r.a, r.fpr, r.fnr, r.mae), (0.0, 100.0, 0.0, 0.0, 0.0));
}

#[test]
fn sensor_mismatch_rejected() {
    let ds = noiseless();
    let out = train_pipeline(&ds, &config(HiVariant::Linear)).unwrap();
    let other = generate_synthetic(&SyntheticSpec {
        n_sensors: 4,
        n_instances: 2,
        ..SyntheticSpec::default()
    })
    .unwrap()
    .with_labels(vec![1.0, 2.0])
    .unwrap();
    let err = evaluate_dataset(&out.pipeline, &other, &out.pipeline.config.match_config(), 13.0, 10.0).unwrap_err();
    assert!(err.to_string().contains("sensors"));
}
