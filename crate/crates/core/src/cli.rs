//! Command-line front end: training, flow integration, the three
//! experiment protocols and the built-in validation suite.
//!
//! Settings resolve in three layers: command-line flags override config-file
//! values, which override built-in defaults. The fully resolved
//! configuration is echoed into `metadata.txt` next to every report, so any
//! output can be regenerated exactly.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::dynamics::{
    integrate_gauge_flow, train, TrainConfig, MARGINAL_OSCILLATION, STABILITY_WINDOW_FRACTION,
};
use crate::error::{Error, Result};
use crate::experiments::{
    invariance_experiment, lambda_sweep, lr_stress, run_seeds, seeded_run_inputs, DatasetConfig,
    Metadata, Reports,
};
use crate::rng::{derive_seed, RNG_ALGORITHM};
use crate::validate;

/// Stream id for the invariance experiment's transform/input draws.
const SALT_INVARIANCE: u64 = 3;

#[derive(Parser)]
#[command(
    name = "gaugefix",
    version,
    about = "Rescaling-symmetry diagnostics and soft gauge fixing for one-hidden-layer ReLU networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single gradient-descent run; writes trace.csv
    Train(RunArgs),
    /// Integrate the (gauge-only by default) gradient flow; writes flow.csv
    Flow(RunArgs),
    /// Sweep the gauge-fixing strength over paired seeds; writes sweep.csv
    SweepLambda(RunArgs),
    /// Learning-rate stress test, baseline vs gauge-fixed; writes stress.csv
    LrStress(RunArgs),
    /// Invariance of a trained network under random gauge transforms; writes invariance.csv
    Invariance(RunArgs),
    /// Run the built-in invariant suite and print pass/fail lines
    Validate(RunArgs),
}

#[derive(Args, Default)]
struct RunArgs {
    /// Master seed; per-run streams are derived from it
    #[arg(long)]
    seed: Option<u64>,
    /// Learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Gauge-fixing strength (the gauge-fixed arm of lr-stress)
    #[arg(long)]
    lambda: Option<f64>,
    /// Numerical-stability constant in the log-norm coordinates
    #[arg(long)]
    eps: Option<f64>,
    /// Gradient-descent steps per run
    #[arg(long)]
    steps: Option<usize>,
    /// Hidden-layer width
    #[arg(long)]
    width: Option<usize>,
    /// Training-noise standard deviation
    #[arg(long)]
    noise_std: Option<f64>,
    /// Number of training samples
    #[arg(long)]
    n_train: Option<usize>,
    /// Number of validation grid points
    #[arg(long)]
    n_val: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent runs
    #[arg(long)]
    jobs: Option<usize>,
    /// Number of random gauge transforms in the invariance study
    #[arg(long)]
    transforms: Option<usize>,
    /// Comma-separated lambda values for sweep-lambda
    #[arg(long)]
    lambdas: Option<String>,
    /// Comma-separated learning rates for lr-stress
    #[arg(long)]
    lrs: Option<String>,
    /// key=value config file (flags override file values)
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Fully resolved settings after defaults, config file and flags.
#[derive(Debug, Clone)]
struct Settings {
    seed: u64,
    lr: f64,
    lambda: f64,
    eps: f64,
    steps: usize,
    width: usize,
    noise_std: f64,
    n_train: usize,
    n_val: usize,
    out: PathBuf,
    jobs: usize,
    transforms: usize,
    lambdas: Vec<f64>,
    lrs: Vec<f64>,
    n_seeds: usize,
    t_end: f64,
    dt: f64,
    include_task: bool,
    divergence_threshold: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            seed: 42,
            lr: 5e-3,
            lambda: 0.2,
            eps: 1e-8,
            steps: 5000,
            width: 20,
            noise_std: 0.3,
            n_train: 256,
            n_val: 512,
            out: PathBuf::from("out"),
            jobs: 1,
            transforms: 200,
            lambdas: vec![0.0, 0.05, 0.1, 0.2, 0.5],
            lrs: vec![5e-3, 1e-2, 2e-2],
            n_seeds: 8,
            t_end: 10.0,
            dt: 1e-3,
            include_task: false,
            divergence_threshold: 1e4,
        }
    }
}

fn parse_key<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|_| Error::Config(format!("cannot parse {key}={raw}"))),
    }
}

fn parse_list(raw: &str, what: &str) -> Result<Vec<f64>> {
    let values: std::result::Result<Vec<f64>, _> = raw
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect();
    let values = values.map_err(|_| Error::Config(format!("cannot parse {what} list: {raw}")))?;
    if values.is_empty() {
        return Err(Error::Config(format!("{what} list is empty")));
    }
    Ok(values)
}

/// Parses a flat key=value file; `#` starts a comment.
fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("{}:{}: expected key=value", path.display(), lineno + 1))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    const KNOWN: &[&str] = &[
        "seed", "lr", "lambda", "eps", "steps", "width", "noise_std", "n_train", "n_val", "out",
        "jobs", "transforms", "lambdas", "lrs", "n_seeds", "t_end", "dt", "include_task",
        "divergence_threshold",
    ];
    for key in map.keys() {
        if !KNOWN.contains(&key.as_str()) {
            return Err(Error::Config(format!("unknown config key: {key}")));
        }
    }
    Ok(map)
}

fn resolve(args: &RunArgs) -> Result<Settings> {
    let file = match &args.config {
        Some(path) => read_config_file(path)?,
        None => BTreeMap::new(),
    };
    let defaults = Settings::default();
    let lambdas = match (&args.lambdas, file.get("lambdas")) {
        (Some(raw), _) => parse_list(raw, "lambdas")?,
        (None, Some(raw)) => parse_list(raw, "lambdas")?,
        (None, None) => defaults.lambdas.clone(),
    };
    let lrs = match (&args.lrs, file.get("lrs")) {
        (Some(raw), _) => parse_list(raw, "lrs")?,
        (None, Some(raw)) => parse_list(raw, "lrs")?,
        (None, None) => defaults.lrs.clone(),
    };
    let settings = Settings {
        seed: args.seed.or(parse_key(&file, "seed")?).unwrap_or(defaults.seed),
        lr: args.lr.or(parse_key(&file, "lr")?).unwrap_or(defaults.lr),
        lambda: args.lambda.or(parse_key(&file, "lambda")?).unwrap_or(defaults.lambda),
        eps: args.eps.or(parse_key(&file, "eps")?).unwrap_or(defaults.eps),
        steps: args.steps.or(parse_key(&file, "steps")?).unwrap_or(defaults.steps),
        width: args.width.or(parse_key(&file, "width")?).unwrap_or(defaults.width),
        noise_std: args
            .noise_std
            .or(parse_key(&file, "noise_std")?)
            .unwrap_or(defaults.noise_std),
        n_train: args
            .n_train
            .or(parse_key(&file, "n_train")?)
            .unwrap_or(defaults.n_train),
        n_val: args.n_val.or(parse_key(&file, "n_val")?).unwrap_or(defaults.n_val),
        out: args
            .out
            .clone()
            .or(file.get("out").map(PathBuf::from))
            .unwrap_or(defaults.out.clone()),
        jobs: args.jobs.or(parse_key(&file, "jobs")?).unwrap_or(defaults.jobs),
        transforms: args
            .transforms
            .or(parse_key(&file, "transforms")?)
            .unwrap_or(defaults.transforms),
        lambdas,
        lrs,
        n_seeds: parse_key(&file, "n_seeds")?.unwrap_or(defaults.n_seeds),
        t_end: parse_key(&file, "t_end")?.unwrap_or(defaults.t_end),
        dt: parse_key(&file, "dt")?.unwrap_or(defaults.dt),
        include_task: parse_key(&file, "include_task")?.unwrap_or(defaults.include_task),
        divergence_threshold: parse_key(&file, "divergence_threshold")?
            .unwrap_or(defaults.divergence_threshold),
    };
    if settings.eps <= 0.0 || settings.eps.is_nan() {
        return Err(Error::Config("eps must be positive".to_string()));
    }
    if settings.lr < 0.0 || settings.lambda < 0.0 {
        return Err(Error::Config("lr and lambda must be nonnegative".to_string()));
    }
    if settings.width == 0 {
        return Err(Error::Config("width must be >= 1".to_string()));
    }
    if settings.dt.is_nan() || settings.dt <= 0.0 || settings.t_end < settings.dt {
        return Err(Error::Config("need t_end >= dt > 0".to_string()));
    }
    if settings.divergence_threshold.is_nan() || settings.divergence_threshold <= 0.0 {
        return Err(Error::Config("divergence_threshold must be positive".to_string()));
    }
    Ok(settings)
}

impl Settings {
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            lambda: self.lambda,
            eps: self.eps,
            steps: self.steps,
            seed: self.seed,
            divergence_threshold: self.divergence_threshold,
        }
    }

    fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            n_train: self.n_train,
            n_val: self.n_val,
            noise_std: self.noise_std,
            seed: self.seed,
            ..DatasetConfig::default()
        }
    }

    fn metadata(&self, subcommand: &str) -> Metadata {
        let mut meta = Metadata::new();
        meta.push("tool", "gaugefix");
        meta.push("tool_version", env!("CARGO_PKG_VERSION"));
        meta.push("subcommand", subcommand);
        meta.push("rng_algorithm", RNG_ALGORITHM);
        meta.push("init_scheme", "weights N(0, 1/fan_in), zero biases");
        meta.push("relu_subgradient_at_zero", 0);
        meta.push("seed", self.seed);
        meta.push("lr", self.lr);
        meta.push("lambda", self.lambda);
        meta.push("eps", self.eps);
        meta.push("steps", self.steps);
        meta.push("width", self.width);
        meta.push("noise_std", self.noise_std);
        meta.push("n_train", self.n_train);
        meta.push("n_val", self.n_val);
        meta.push("jobs", self.jobs);
        meta.push("transforms", self.transforms);
        meta.push(
            "lambdas",
            self.lambdas.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
        );
        meta.push(
            "lrs",
            self.lrs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
        );
        meta.push("n_seeds", self.n_seeds);
        meta.push("t_end", self.t_end);
        meta.push("dt", self.dt);
        meta.push("include_task", self.include_task);
        meta.push("divergence_threshold", self.divergence_threshold);
        meta.push("marginal_oscillation_amplitude", MARGINAL_OSCILLATION);
        meta.push("stability_window_fraction", STABILITY_WINDOW_FRACTION);
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        meta.push("timestamp_unix", timestamp);
        meta
    }
}

fn cmd_train(settings: &Settings) -> Result<String> {
    let (train_data, val_data, p0) =
        seeded_run_inputs(settings.seed, settings.width, &settings.dataset_config())?;
    let trace = train(&p0, &train_data, &val_data, &settings.train_config())?;
    let meta = settings.metadata("train");
    crate::experiments::emit_reports(
        &Reports {
            trace: Some(&trace),
            metadata: Some(&meta),
            ..Reports::default()
        },
        &settings.out,
    )?;
    let last = trace.last_finite();
    Ok(format!(
        "train: steps={} lambda={} train_mse={:.6} val_mse={:.6} label={} -> {}",
        settings.steps,
        settings.lambda,
        last.train_mse,
        last.val_mse,
        trace.label.name(),
        settings.out.display()
    ))
}

fn cmd_flow(settings: &Settings) -> Result<String> {
    let (train_data, _, p0) =
        seeded_run_inputs(settings.seed, settings.width, &settings.dataset_config())?;
    let data = settings.include_task.then_some(&train_data);
    let trace = integrate_gauge_flow(
        &p0,
        settings.lambda,
        settings.eps,
        settings.t_end,
        settings.dt,
        settings.include_task,
        data,
    )?;
    let meta = settings.metadata("flow");
    crate::experiments::emit_reports(
        &Reports {
            flow: Some(&trace),
            metadata: Some(&meta),
            ..Reports::default()
        },
        &settings.out,
    )?;
    let last = trace.coords.last().expect("flow trace has records");
    Ok(format!(
        "flow: t_end={} dt={} lambda={} mean|v| {:.6} -> {:.6} G {:.3e} -> {:.3e} out={}",
        settings.t_end,
        settings.dt,
        settings.lambda,
        trace.coords[0].mean_abs_v(),
        last.mean_abs_v(),
        trace.g[0],
        trace.g.last().unwrap(),
        settings.out.display()
    ))
}

fn cmd_sweep_lambda(settings: &Settings) -> Result<String> {
    let seeds = run_seeds(settings.seed, settings.n_seeds);
    let result = lambda_sweep(
        &settings.lambdas,
        &seeds,
        settings.width,
        &settings.train_config(),
        &settings.dataset_config(),
        settings.jobs,
    )?;
    let meta = settings.metadata("sweep-lambda");
    crate::experiments::emit_reports(
        &Reports {
            sweep: Some(&result),
            metadata: Some(&meta),
            ..Reports::default()
        },
        &settings.out,
    )?;
    Ok(format!(
        "sweep-lambda: {} lambdas x {} seeds -> {}",
        settings.lambdas.len(),
        seeds.len(),
        settings.out.display()
    ))
}

fn cmd_lr_stress(settings: &Settings) -> Result<String> {
    let seeds = run_seeds(settings.seed, settings.n_seeds);
    let result = lr_stress(
        &settings.lrs,
        settings.lambda,
        &seeds,
        settings.width,
        &settings.train_config(),
        &settings.dataset_config(),
        settings.jobs,
    )?;
    let meta = settings.metadata("lr-stress");
    crate::experiments::emit_reports(
        &Reports {
            stress: Some(&result),
            metadata: Some(&meta),
            ..Reports::default()
        },
        &settings.out,
    )?;
    Ok(format!(
        "lr-stress: {} lrs x 2 methods x {} seeds -> {}",
        settings.lrs.len(),
        seeds.len(),
        settings.out.display()
    ))
}

fn cmd_invariance(settings: &Settings) -> Result<String> {
    let (train_data, val_data, p0) =
        seeded_run_inputs(settings.seed, settings.width, &settings.dataset_config())?;
    let trace = train(&p0, &train_data, &val_data, &settings.train_config())?;
    let result = invariance_experiment(
        &trace.final_params,
        settings.transforms,
        settings.n_val,
        derive_seed(settings.seed, SALT_INVARIANCE),
    );
    let meta = settings.metadata("invariance");
    crate::experiments::emit_reports(
        &Reports {
            invariance: Some(&result),
            metadata: Some(&meta),
            ..Reports::default()
        },
        &settings.out,
    )?;
    Ok(format!(
        "invariance: {} transforms on a width-{} net: min={:.3e} median={:.3e} max={:.3e} -> {}",
        settings.transforms,
        settings.width,
        result.min,
        result.median,
        result.max,
        settings.out.display()
    ))
}

/// Entry point shared by `main` and the CLI tests. Returns the process
/// exit code: 0 on success, 1 on runtime failure, 2 on usage errors.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return code;
        }
    };

    let (args, runner): (&RunArgs, fn(&Settings) -> Result<String>) = match &cli.command {
        Command::Train(a) => (a, cmd_train),
        Command::Flow(a) => (a, cmd_flow),
        Command::SweepLambda(a) => (a, cmd_sweep_lambda),
        Command::LrStress(a) => (a, cmd_lr_stress),
        Command::Invariance(a) => (a, cmd_invariance),
        Command::Validate(a) => {
            return match resolve(a) {
                Ok(_) => {
                    if validate::run_all() {
                        println!("validate: all checks passed");
                        0
                    } else {
                        eprintln!("validate: at least one check failed");
                        1
                    }
                }
                Err(err) => {
                    eprintln!("error: {err}");
                    1
                }
            };
        }
    };

    match resolve(args).and_then(|settings| runner(&settings)) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(err) => {
            eprintln!("error: {err}");
            1
        }
    }
}
