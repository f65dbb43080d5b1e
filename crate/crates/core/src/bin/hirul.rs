use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hirul::config::RunConfig;
use hirul::data::{
    generate_synthetic, load_pipeline, parse_generic, parse_rul_labels, parse_turbofan_rul, parse_turbofan_series,
    save_pipeline, truncate_uniform, write_generic, write_rul_labels, DegradationShape, RunToFailureDataset,
    SyntheticSpec, TURBOFAN_COLUMNS,
};
use hirul::error::{Error, Result};
use hirul::pipeline::{estimates_csv, evaluate_dataset, sweep, train_pipeline, EstimateRow, Grid, Pipeline};

#[derive(Parser)]
#[command(name = "hirul", version, about = "Health-index based remaining useful life estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Auto,
    Turbofan,
    Csv,
}

#[derive(Args)]
struct ConfigArgs {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set c=8`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a pipeline on run-to-failure data
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        format: Format,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Per-epoch loss log (also printed to stderr)
        #[arg(long)]
        log: Option<PathBuf>,
        /// Train HI curves as instance_id,cycle,hi
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Score a pipeline on a truncated test set with known RUL
    Evaluate {
        #[arg(long)]
        pipeline: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        rul: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        format: Format,
        /// Per-instance estimates file
        #[arg(long)]
        estimates: Option<PathBuf>,
        /// Test HI curves as instance_id,cycle,hi
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Estimate RUL for one instance
    Predict {
        #[arg(long)]
        pipeline: PathBuf,
        #[arg(long)]
        series: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        format: Format,
        /// Instance to use when the file holds several
        #[arg(long)]
        instance: Option<String>,
    },
    /// Generate a synthetic run-to-failure dataset
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        n_instances: usize,
        #[arg(long, default_value_t = 6)]
        n_sensors: usize,
        #[arg(long, default_value_t = 80)]
        min_len: usize,
        #[arg(long, default_value_t = 120)]
        max_len: usize,
        #[arg(long, default_value_t = 0.05)]
        noise_std: f64,
        #[arg(long, default_value_t = 0.3)]
        onset: f64,
        #[arg(long, default_value = "exponential")]
        shape: DegradationShape,
        #[arg(long, default_value_t = 1.0)]
        amplitude: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Truncate each instance at a uniform fraction of life, LO:HI
        #[arg(long, value_name = "LO:HI")]
        truncate: Option<String>,
        /// RUL labels for the truncated set
        #[arg(long)]
        rul_out: Option<PathBuf>,
        /// Move the last N instances to --test-out, truncated per --truncate
        #[arg(long, requires = "test_out")]
        holdout: Option<usize>,
        #[arg(long, requires = "holdout")]
        test_out: Option<PathBuf>,
    },
    /// Grid search scored by timeliness on truncated validation instances
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        format: Format,
        /// Lines of `key = v1, v2, ...`
        #[arg(long)]
        grid: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Pipeline of the best grid point
        #[arg(long)]
        out: PathBuf,
        /// One row per grid point
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn detect(text: &str) -> Format {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let fields: Vec<&str> = first.split_whitespace().collect();
    if fields.len() == TURBOFAN_COLUMNS && fields.iter().all(|f| f.parse::<f64>().is_ok()) {
        Format::Turbofan
    } else {
        Format::Csv
    }
}

fn load_dataset(path: &Path, format: Format) -> Result<(RunToFailureDataset, Format)> {
    let text = read(path)?;
    let fmt = if format == Format::Auto { detect(&text) } else { format };
    let ds = match fmt {
        Format::Turbofan => parse_turbofan_series(&text),
        _ => parse_generic(&text),
    }
    .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok((ds, fmt))
}

fn build_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_text(&read(p)?)?,
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("--set expects KEY=VALUE, got '{o}'")))?;
        cfg.set(k, v)?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn curves_csv<'a>(curves: impl IntoIterator<Item = (&'a str, &'a [f64])>) -> String {
    let mut s = String::from("instance_id,cycle,hi\n");
    for (id, values) in curves {
        for (t, h) in values.iter().enumerate() {
            s.push_str(&format!("{id},{},{h}\n", t + 1));
        }
    }
    s
}

fn cmd_train(data: &Path, format: Format, out: &Path, cfg: &ConfigArgs, log: Option<&Path>, curves: Option<&Path>) -> Result<()> {
    let config = build_config(cfg)?;
    let (ds, _) = load_dataset(data, format)?;
    let outcome = train_pipeline(&ds, &config)?;
    let mut text = String::from("epoch,train_loss,validation_loss\n");
    for r in &outcome.history {
        text.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.validation_loss));
    }
    eprint!("{text}");
    if let Some(best) = outcome.best_epoch {
        eprintln!("best epoch: {best}");
    }
    if let Some(p) = log {
        write(p, &text)?;
    }
    if let Some(p) = curves {
        let p_curves = &outcome.pipeline.train_curves;
        write(p, &curves_csv(p_curves.iter().map(|(id, c)| (id.as_str(), c.values.as_slice()))))?;
    }
    save_pipeline(out, &outcome.pipeline)?;
    println!(
        "trained on {} instances ({} held out), p={} c={} l={}, wrote {}",
        outcome.pipeline.train_curves.len(),
        outcome.validation.len(),
        config.p,
        config.c,
        config.l,
        out.display()
    );
    Ok(())
}

fn cmd_evaluate(pipeline: &Path, data: &Path, rul: &Path, format: Format, estimates: Option<&Path>, curves: Option<&Path>) -> Result<()> {
    let p = load_pipeline(pipeline)?;
    let (ds, fmt) = load_dataset(data, format)?;
    let rul_text = read(rul)?;
    let labels = match fmt {
        Format::Turbofan => parse_turbofan_rul(&rul_text)?,
        _ => parse_rul_labels(&rul_text, &ds)?,
    };
    let ds = ds.with_labels(labels)?;
    let eval = evaluate_dataset(&p, &ds, &p.config.match_config(), p.config.tau1, p.config.tau2)?;
    if let Some(path) = estimates {
        write(path, &estimates_csv(&eval.rows))?;
    }
    if let Some(path) = curves {
        let test_curves = ds
            .instances
            .iter()
            .map(|i| Ok((i.id.as_str(), p.hi_curve_for(&i.series)?.values)))
            .collect::<Result<Vec<_>>>()?;
        write(path, &curves_csv(test_curves.iter().map(|(id, v)| (*id, v.as_slice()))))?;
    }
    print!("{}", eval.report.to_table());
    print!("{}", eval.report.to_key_values());
    Ok(())
}

fn cmd_predict(pipeline: &Path, series: &Path, format: Format, instance: Option<&str>) -> Result<()> {
    let p: Pipeline = load_pipeline(pipeline)?;
    let (ds, _) = load_dataset(series, format)?;
    p.check_sensors(&ds)?;
    let inst = match instance {
        Some(id) => ds
            .instances
            .iter()
            .find(|i| i.id == id)
            .ok_or_else(|| Error::InvalidParameter(format!("no instance '{id}' in {}", series.display())))?,
        None if ds.len() == 1 => &ds.instances[0],
        None if ds.is_empty() => return Err(Error::EmptyInput("test series")),
        None => return Err(Error::InvalidParameter("file holds several instances; pass --instance".into())),
    };
    let estimate = p.estimate(&inst.series)?;
    let row = EstimateRow {
        id: inst.id.clone(),
        observed_len: inst.series.rows(),
        actual: None,
        estimate,
    };
    let e = &row.estimate;
    let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| x.to_string());
    println!("instance={}", row.id);
    println!("observed_cycles={}", row.observed_len);
    println!("rul_estimate={}", e.value);
    println!("std_dev={}", opt(e.std_dev));
    println!("spread={}", opt(e.spread));
    println!("n_candidates={}", e.candidates.len());
    println!("capped={}", e.capped);
    println!("fallback={}", e.fallback);
    Ok(())
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::InvalidParameter(format!("--truncate expects LO:HI, got '{s}'"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    Ok((lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            data,
            format,
            out,
            cfg,
            log,
            curves,
        } => cmd_train(&data, format, &out, &cfg, log.as_deref(), curves.as_deref()),
        Command::Evaluate {
            pipeline,
            data,
            rul,
            format,
            estimates,
            curves,
        } => cmd_evaluate(&pipeline, &data, &rul, format, estimates.as_deref(), curves.as_deref()),
        Command::Predict {
            pipeline,
            series,
            format,
            instance,
        } => cmd_predict(&pipeline, &series, format, instance.as_deref()),
        Command::Synth {
            out,
            n_instances,
            n_sensors,
            min_len,
            max_len,
            noise_std,
            onset,
            shape,
            amplitude,
            seed,
            truncate,
            rul_out,
            holdout,
            test_out,
        } => {
            let spec = SyntheticSpec {
                n_instances,
                n_sensors,
                min_len,
                max_len,
                noise_std,
                fault_onset_frac: onset,
                degradation_shape: shape,
                fault_amplitude: amplitude,
                seed,
            };
            let mut ds = generate_synthetic(&spec)?;
            let mut test = match (holdout, test_out) {
                (Some(n), Some(path)) => {
                    if n == 0 || n >= ds.len() {
                        return Err(Error::InvalidParameter(format!(
                            "--holdout must be in 1..{}, got {n}",
                            ds.len()
                        )));
                    }
                    let tail = ds.instances.split_off(ds.len() - n);
                    Some((RunToFailureDataset::new(tail, ds.sensor_names.clone())?, path))
                }
                _ => None,
            };
            if let Some(r) = truncate {
                let (lo, hi) = parse_range(&r)?;
                let rul_path = rul_out
                    .ok_or_else(|| Error::InvalidParameter("--truncate needs --rul-out".into()))?;
                let target = match test.as_mut() {
                    Some((t, _)) => t,
                    None => &mut ds,
                };
                *target = truncate_uniform(target, lo, hi, seed.wrapping_add(1))?;
                write(&rul_path, &write_rul_labels(target))?;
            }
            write(&out, &write_generic(&ds))?;
            println!("wrote {} instances, {} cycles to {}", ds.len(), ds.total_cycles(), out.display());
            if let Some((t, path)) = test {
                write(&path, &write_generic(&t))?;
                println!("wrote {} instances, {} cycles to {}", t.len(), t.total_cycles(), path.display());
            }
            Ok(())
        }
        Command::Sweep {
            data,
            format,
            grid,
            cfg,
            out,
            results,
        } => {
            let base = build_config(&cfg)?;
            let grid = Grid::parse(&read(&grid)?)?;
            let (ds, _) = load_dataset(&data, format)?;
            let result = sweep(&ds, &base, &grid)?;
            if let Some(p) = results {
                write(&p, &result.to_csv())?;
            }
            save_pipeline(&out, &result.pipeline)?;
            let best = &result.trials[result.best];
            println!("best of {} grid points: #{}", result.trials.len(), result.best + 1);
            for (key, _) in &grid.axes {
                println!("{key}={}", best.config.get(key).unwrap_or_default());
            }
            print!("{}", best.report.to_table());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                if !msg.contains(&s.to_string()) {
                    msg.push_str(&format!(": {s}"));
                }
                src = s.source();
            }
            let _ = writeln!(std::io::stderr(), "{msg}");
            ExitCode::FAILURE
        }
    }
}
