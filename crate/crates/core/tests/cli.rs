use std::path::Path;
use std::process::{Command, Output};

use hirul::data::{load_pipeline, parse_generic};

fn hirul(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hirul")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = hirul(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const FAST: &[&str] = &["--set", "p=2", "--set", "c=4", "--set", "l=6", "--set", "tau=8", "--set", "max_epochs=5"];

fn synth(dir: &Path, name: &str, extra: &[&str]) -> std::path::PathBuf {
    let path = dir.join(name);
    let mut args = vec!["synth", "--out", p(&path), "--n-instances", "10", "--min-len", "40", "--max-len", "55"];
    args.extend_from_slice(extra);
    ok(&args);
    path
}

#[test]
fn synth_round_trips_and_depends_on_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a.csv", &[]);
    let ds = parse_generic(&std::fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!(ds.len(), 10);
    let b = synth(dir.path(), "b.csv", &[]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let c = synth(dir.path(), "c.csv", &["--seed", "5"]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
    let out = hirul(&["synth", "--out", p(&dir.path().join("z.csv")), "--n-instances", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_instances"));
}

#[test]
fn synth_holdout_splits_one_family() {
    let dir = tempfile::tempdir().unwrap();
    let full = synth(dir.path(), "full.csv", &[]);
    let rul = dir.path().join("rul.csv");
    let test = dir.path().join("test.csv");
    let train = synth(
        dir.path(),
        "train.csv",
        &["--holdout", "3", "--test-out", p(&test), "--truncate", "0.5:0.8", "--rul-out", p(&rul)],
    );
    let read = |path: &Path| parse_generic(&std::fs::read_to_string(path).unwrap()).unwrap();
    let (full, train, test_ds) = (read(&full), read(&train), read(&test));
    assert_eq!((train.len(), test_ds.len()), (7, 3));
    assert_eq!(train.instances, full.instances[..7]);
    let labels = hirul::data::parse_rul_labels(&std::fs::read_to_string(&rul).unwrap(), &test_ds).unwrap();
    for ((t, f), r) in test_ds.instances.iter().zip(&full.instances[7..]).zip(&labels) {
        assert_eq!(t.id, f.id);
        let kept = t.series.rows();
        assert_eq!(kept as f64 + r, f.series.rows() as f64);
        assert_eq!(t.series.row(kept - 1), f.series.row(kept - 1));
    }
    let out = hirul(&["synth", "--out", p(&dir.path().join("z.csv")), "--holdout", "20", "--test-out", p(&test)]);
    assert!(!out.status.success());
}

#[test]
fn train_evaluate_predict() {
    let dir = tempfile::tempdir().unwrap();
    let train = synth(dir.path(), "train.csv", &[]);
    let rul = dir.path().join("rul.csv");
    let test = synth(dir.path(), "test.csv", &["--seed", "3", "--truncate", "0.4:0.9", "--rul-out", p(&rul)]);
    let pipe = dir.path().join("p.bin");
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "c = 3\nseed = 2\n").unwrap();
    let log = dir.path().join("log.csv");
    let mut args = vec!["train", "--data", p(&train), "--out", p(&pipe), "--config", p(&cfg), "--log", p(&log)];
    args.extend_from_slice(FAST);
    ok(&args);
    let loaded = load_pipeline(&pipe).unwrap();
    // flags override the file, the file overrides defaults
    assert_eq!((loaded.config.c, loaded.config.seed, loaded.config.p), (4, 2, 2));
    let log_text = std::fs::read_to_string(&log).unwrap();
    assert!(log_text.starts_with("epoch,train_loss,validation_loss\n0,"));

    let est = dir.path().join("est.csv");
    let stdout = ok(&["evaluate", "--pipeline", p(&pipe), "--data", p(&test), "--rul", p(&rul), "--estimates", p(&est)]);
    assert!(stdout.contains("MAPE1") && stdout.contains("\ns="));
    let rows = std::fs::read_to_string(&est).unwrap();
    assert_eq!(rows.lines().count(), 11);

    let stdout = ok(&["predict", "--pipeline", p(&pipe), "--series", p(&test), "--instance", "4"]);
    assert!(stdout.contains("rul_estimate=") && stdout.contains("n_candidates="));

    let out = hirul(&["evaluate", "--pipeline", p(&pipe), "--data", p(&test), "--rul", p(&dir.path().join("none.csv"))]);
    assert!(!out.status.success());
    assert!(out.stdout.is_empty());

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "instance_id,cycle,sensor_1,sensor_2,sensor_3,sensor_4,sensor_5,sensor_6\n").unwrap();
    let out = hirul(&["predict", "--pipeline", p(&pipe), "--series", p(&empty)]);
    assert!(!out.status.success());

    let narrow = dir.path().join("narrow.csv");
    std::fs::write(&narrow, "instance_id,cycle,s1\na,1,0.5\na,2,0.4\n").unwrap();
    let out = hirul(&["predict", "--pipeline", p(&pipe), "--series", p(&narrow)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sensors"));
}

#[test]
fn same_seed_gives_identical_pipeline_files() {
    let dir = tempfile::tempdir().unwrap();
    let train = synth(dir.path(), "train.csv", &[]);
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let mut args = vec!["train", "--data", p(&train), "--out", p(&out), "--seed", seed];
        args.extend_from_slice(FAST);
        ok(&args);
        std::fs::read(out).unwrap()
    };
    let a = run("a.bin", "1");
    assert_eq!(a, run("b.bin", "1"));
    assert_ne!(a, run("c.bin", "2"));
}

#[test]
fn zero_validation_fraction_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let train = synth(dir.path(), "train.csv", &[]);
    let out = hirul(&["train", "--data", p(&train), "--out", p(&dir.path().join("x.bin")), "--set", "validation_frac=0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("validation split required for early stopping"));
}

#[test]
fn sweep_writes_best_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let train = synth(dir.path(), "train.csv", &[]);
    let grid = dir.path().join("grid.txt");
    std::fs::write(&grid, "tau = 4, 8\nalpha = 0.5, 0.87\n").unwrap();
    let out = dir.path().join("best.bin");
    let results = dir.path().join("trials.csv");
    let mut args = vec!["sweep", "--data", p(&train), "--grid", p(&grid), "--out", p(&out), "--results", p(&results)];
    args.extend_from_slice(&FAST[..6]);
    args.extend_from_slice(&["--set", "max_epochs=3"]);
    let stdout = ok(&args);
    assert!(stdout.starts_with("best of 4 grid points"));
    let trials = std::fs::read_to_string(&results).unwrap();
    assert_eq!(trials.lines().count(), 5);
    assert_eq!(trials.lines().filter(|l| l.ends_with(",true")).count(), 1);
    let best = load_pipeline(&out).unwrap();
    assert!([4, 8].contains(&best.config.tau));
}
