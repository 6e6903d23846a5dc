//! Experiment protocols: dataset generation, the lambda sweep, the
//! learning-rate stress test and the invariance study, plus CSV emission.
//!
//! All protocols use a paired design: for a given run seed, the initial
//! parameters and the dataset are identical across every configuration
//! being compared, so differences between rows are attributable to the
//! configuration rather than to the draw. Every random quantity flows
//! through an explicitly derived seed, which makes whole sweeps
//! byte-reproducible from one master seed.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::dynamics::{scale_drift, train, FlowTrace, StabilityLabel, TrainConfig, TrainTrace};
use crate::error::{Error, Result};
use crate::gauge::{invariance_error, GaugeScales};
use crate::network::{init_params, Dataset, Params, Split};
use crate::rng::{derive_seed, seeded_rng};

/// Stream ids for deriving per-purpose seeds from a run seed.
const SALT_DATA: u64 = 1;
const SALT_INIT: u64 = 2;
/// Stream id base for deriving run seeds from a master seed.
const SALT_RUN_SEED: u64 = 0x5EED;

/// Configuration of the synthetic regression task.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub n_train: usize,
    pub train_lo: f64,
    pub train_hi: f64,
    pub n_val: usize,
    pub val_lo: f64,
    pub val_hi: f64,
    /// Standard deviation of the Gaussian noise added to training targets
    /// only; validation targets are always noiseless.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_train: 256,
            train_lo: -2.0,
            train_hi: 2.0,
            n_val: 512,
            val_lo: -3.0,
            val_hi: 3.0,
            noise_std: 0.3,
            seed: 42,
        }
    }
}

/// Noiseless regression target `y(x) = sin(2.5x) + 0.2 cos(6x) + 0.1x`.
pub fn target(x: f64) -> f64 {
    (2.5 * x).sin() + 0.2 * (6.0 * x).cos() + 0.1 * x
}

/// Builds the train/validation pair: training inputs drawn uniformly with
/// noisy targets, validation on a uniform grid over a wider interval with
/// noiseless targets.
pub fn make_dataset(cfg: &DatasetConfig) -> Result<(Dataset, Dataset)> {
    if cfg.train_lo >= cfg.train_hi || cfg.val_lo >= cfg.val_hi {
        return Err(Error::Config("dataset interval is empty".to_string()));
    }
    if cfg.n_train == 0 || cfg.n_val == 0 {
        return Err(Error::Config("dataset sizes must be >= 1".to_string()));
    }
    if cfg.noise_std < 0.0 {
        return Err(Error::Config("noise_std must be nonnegative".to_string()));
    }
    let mut rng = seeded_rng(cfg.seed);
    // Fixed draw order: all inputs first, then one noise sample per target.
    let xs: Vec<Vec<f64>> = (0..cfg.n_train)
        .map(|_| vec![rng.uniform(cfg.train_lo, cfg.train_hi)])
        .collect();
    let ys: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| vec![target(x[0]) + cfg.noise_std * rng.next_gaussian()])
        .collect();
    let train = Dataset::new(xs, ys, Split::Train)?;

    let val_xs: Vec<Vec<f64>> = (0..cfg.n_val)
        .map(|j| {
            let x = if cfg.n_val == 1 {
                cfg.val_lo
            } else {
                cfg.val_lo + (cfg.val_hi - cfg.val_lo) * j as f64 / (cfg.n_val - 1) as f64
            };
            vec![x]
        })
        .collect();
    let val_ys: Vec<Vec<f64>> = val_xs.iter().map(|x| vec![target(x[0])]).collect();
    let val = Dataset::new(val_xs, val_ys, Split::Validation)?;
    Ok((train, val))
}

/// Expands a master seed into `n` independent run seeds.
pub fn run_seeds(master: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|k| derive_seed(master, SALT_RUN_SEED + k)).collect()
}

/// The shared per-seed inputs of a paired design: dataset pair and initial
/// parameters depend only on `(seed, width, dcfg)`, never on the method
/// under comparison.
pub fn seeded_run_inputs(
    seed: u64,
    width: usize,
    dcfg: &DatasetConfig,
) -> Result<(Dataset, Dataset, Params)> {
    let data_cfg = DatasetConfig {
        seed: derive_seed(seed, SALT_DATA),
        ..dcfg.clone()
    };
    let (train_data, val_data) = make_dataset(&data_cfg)?;
    let mut init_rng = seeded_rng(derive_seed(seed, SALT_INIT));
    let p0 = init_params(train_data.input_dim(), width, train_data.output_dim(), &mut init_rng);
    Ok((train_data, val_data, p0))
}

/// One training run within a sweep, reported from its last finite iterate.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub train_mse: f64,
    pub val_mse: f64,
    pub drift_v: f64,
    pub label: StabilityLabel,
}

fn run_once(
    seed: u64,
    width: usize,
    cfg: &TrainConfig,
    dcfg: &DatasetConfig,
) -> Result<RunOutcome> {
    let (train_data, val_data, p0) = seeded_run_inputs(seed, width, dcfg)?;
    let trace = train(&p0, &train_data, &val_data, cfg)?;
    let last = trace.last_finite();
    let (drift_v, _) = scale_drift(&trace);
    Ok(RunOutcome {
        seed,
        train_mse: last.train_mse,
        val_mse: last.val_mse,
        drift_v,
        label: trace.label,
    })
}

/// Unbiased mean/std over a sample (std uses the n-1 estimator).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    assert!(n >= 1);
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Aggregated row of the lambda sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub lambda: f64,
    pub train_mse_mean: f64,
    pub train_mse_std: f64,
    pub val_mse_mean: f64,
    pub val_mse_std: f64,
    pub drift_v_mean: f64,
    pub n_stable: usize,
    pub n_marginal: usize,
    pub n_unstable: usize,
}

/// Lambda sweep result: aggregated rows plus the raw per-seed outcomes the
/// aggregates were computed from.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub runs: Vec<(f64, RunOutcome)>,
}

/// Trains every `(lambda, seed)` pair with shared per-seed inputs and
/// aggregates per lambda. Unstable runs are recorded like any other, with
/// losses taken from the last finite iterate.
pub fn lambda_sweep(
    lambdas: &[f64],
    seeds: &[u64],
    width: usize,
    base: &TrainConfig,
    dcfg: &DatasetConfig,
    jobs: usize,
) -> Result<SweepResult> {
    if seeds.len() < 2 {
        return Err(Error::Config(
            "lambda_sweep needs at least 2 seeds for a standard deviation".to_string(),
        ));
    }
    let combos: Vec<(f64, u64)> = lambdas
        .iter()
        .flat_map(|&l| seeds.iter().map(move |&s| (l, s)))
        .collect();
    let outcomes = run_indexed(combos.len(), jobs, |idx| {
        let (lambda, seed) = combos[idx];
        let cfg = TrainConfig {
            lambda,
            seed,
            ..base.clone()
        };
        run_once(seed, width, &cfg, dcfg)
    });

    let mut runs = Vec::with_capacity(combos.len());
    for ((lambda, _), outcome) in combos.iter().zip(outcomes) {
        runs.push((*lambda, outcome?));
    }

    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let group: Vec<&RunOutcome> = runs
            .iter()
            .filter(|(l, _)| *l == lambda)
            .map(|(_, o)| o)
            .collect();
        let train_vals: Vec<f64> = group.iter().map(|o| o.train_mse).collect();
        let val_vals: Vec<f64> = group.iter().map(|o| o.val_mse).collect();
        let drift_vals: Vec<f64> = group.iter().map(|o| o.drift_v).collect();
        let (train_mean, train_std) = mean_std(&train_vals);
        let (val_mean, val_std) = mean_std(&val_vals);
        let (drift_mean, _) = mean_std(&drift_vals);
        rows.push(SweepRow {
            lambda,
            train_mse_mean: train_mean,
            train_mse_std: train_std,
            val_mse_mean: val_mean,
            val_mse_std: val_std,
            drift_v_mean: drift_mean,
            n_stable: group.iter().filter(|o| o.label.severity() == 0).count(),
            n_marginal: group.iter().filter(|o| o.label.severity() == 1).count(),
            n_unstable: group.iter().filter(|o| o.label.severity() == 2).count(),
        });
    }
    Ok(SweepResult { rows, runs })
}

/// Method identifier in the stress test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Baseline,
    GaugeFixed,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::GaugeFixed => "gauge_fixed",
        }
    }
}

/// Aggregated row of the learning-rate stress test.
#[derive(Debug, Clone)]
pub struct StressRow {
    pub method: Method,
    pub lr: f64,
    pub val_mse_mean: f64,
    pub labels: Vec<StabilityLabel>,
    /// Worst per-seed label, making the table conservative.
    pub aggregate: StabilityLabel,
}

#[derive(Debug, Clone)]
pub struct StressResult {
    pub rows: Vec<StressRow>,
    pub runs: Vec<(Method, f64, RunOutcome)>,
}

/// Learning-rate stress test comparing the baseline (`lambda = 0`) against
/// gauge-fixed training (`lambda = lambda_fixed`) over paired seeds.
pub fn lr_stress(
    lrs: &[f64],
    lambda_fixed: f64,
    seeds: &[u64],
    width: usize,
    base: &TrainConfig,
    dcfg: &DatasetConfig,
    jobs: usize,
) -> Result<StressResult> {
    if seeds.is_empty() {
        return Err(Error::Config("lr_stress needs at least 1 seed".to_string()));
    }
    let methods = [Method::Baseline, Method::GaugeFixed];
    let combos: Vec<(Method, f64, u64)> = methods
        .iter()
        .flat_map(|&m| {
            lrs.iter()
                .flat_map(move |&lr| seeds.iter().map(move |&s| (m, lr, s)))
        })
        .collect();
    let outcomes = run_indexed(combos.len(), jobs, |idx| {
        let (method, lr, seed) = combos[idx];
        let lambda = match method {
            Method::Baseline => 0.0,
            Method::GaugeFixed => lambda_fixed,
        };
        let cfg = TrainConfig {
            lr,
            lambda,
            seed,
            ..base.clone()
        };
        run_once(seed, width, &cfg, dcfg)
    });

    let mut runs = Vec::with_capacity(combos.len());
    for ((method, lr, _), outcome) in combos.iter().zip(outcomes) {
        runs.push((*method, *lr, outcome?));
    }

    let mut rows = Vec::new();
    for &method in &methods {
        for &lr in lrs {
            let group: Vec<&RunOutcome> = runs
                .iter()
                .filter(|(m, l, _)| *m == method && *l == lr)
                .map(|(_, _, o)| o)
                .collect();
            let vals: Vec<f64> = group.iter().map(|o| o.val_mse).collect();
            let (val_mean, _) = mean_std(&vals);
            let labels: Vec<StabilityLabel> = group.iter().map(|o| o.label).collect();
            let aggregate = *labels
                .iter()
                .max_by_key(|l| l.severity())
                .expect("non-empty seed group");
            rows.push(StressRow {
                method,
                lr,
                val_mse_mean: val_mean,
                labels,
                aggregate,
            });
        }
    }
    Ok(StressResult { rows, runs })
}

/// Invariance study result: one error per random transform plus summary.
#[derive(Debug, Clone)]
pub struct InvarianceResult {
    pub deltas: Vec<f64>,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

/// Applies `n_transforms` random log-uniform gauge transforms to `p` and
/// measures the output deviation on `n_inputs` random inputs.
pub fn invariance_experiment(
    p: &Params,
    n_transforms: usize,
    n_inputs: usize,
    seed: u64,
) -> InvarianceResult {
    assert!(n_transforms >= 1, "need at least one transform");
    assert!(n_inputs >= 1, "need at least one input");
    let mut rng = seeded_rng(seed);
    let d = p.input_dim();
    let inputs: Vec<Vec<f64>> = (0..n_inputs)
        .map(|_| (0..d).map(|_| rng.uniform(-3.0, 3.0)).collect())
        .collect();
    let deltas: Vec<f64> = (0..n_transforms)
        .map(|_| {
            let s = GaugeScales::random_log_uniform(p.hidden_dim(), &mut rng);
            invariance_error(p, &s, &inputs)
        })
        .collect();

    let mut sorted = deltas.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite deltas"));
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    InvarianceResult {
        min: sorted[0],
        median,
        max: sorted[n - 1],
        deltas,
    }
}

/// Runs `n` independent items on up to `jobs` threads, collecting results
/// in item order so the output is identical for any job count.
pub fn run_indexed<R, F>(n: usize, jobs: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync,
{
    let jobs = jobs.max(1).min(n.max(1));
    if jobs <= 1 {
        return (0..n).map(f).collect();
    }
    let mut slots: Vec<Option<R>> = (0..n).map(|_| None).collect();
    {
        let slots_ref = std::sync::Mutex::new(&mut slots);
        let next = std::sync::atomic::AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if idx >= n {
                        break;
                    }
                    let value = f(idx);
                    slots_ref.lock().expect("result mutex")[idx] = Some(value);
                });
            }
        });
    }
    slots.into_iter().map(|s| s.expect("worker filled slot")).collect()
}

/// Ordered key=value metadata echoed next to every emitted report.
#[derive(Debug, Clone, Default)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new() -> Self {
        Metadata::default()
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }
}

/// Everything a subcommand may want written to disk.
#[derive(Default)]
pub struct Reports<'a> {
    pub sweep: Option<&'a SweepResult>,
    pub stress: Option<&'a StressResult>,
    pub invariance: Option<&'a InvarianceResult>,
    pub trace: Option<&'a TrainTrace>,
    pub flow: Option<&'a FlowTrace>,
    pub metadata: Option<&'a Metadata>,
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn finish(mut file: fs::File, path: &Path, body: String) -> Result<()> {
    file.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes the requested CSV reports (and metadata) into `out_dir`,
/// returning the paths written. Reruns with identical inputs produce
/// byte-identical CSVs; only the metadata timestamp varies.
pub fn emit_reports(reports: &Reports, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    if let Some(sweep) = reports.sweep {
        let path = out_dir.join("sweep.csv");
        let mut body = String::from(
            "lambda,train_mse_mean,train_mse_std,val_mse_mean,val_mse_std,drift_v_mean,n_stable,n_marginal,n_unstable\n",
        );
        for r in &sweep.rows {
            body.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.lambda,
                r.train_mse_mean,
                r.train_mse_std,
                r.val_mse_mean,
                r.val_mse_std,
                r.drift_v_mean,
                r.n_stable,
                r.n_marginal,
                r.n_unstable
            ));
        }
        finish(create(&path)?, &path, body)?;
        written.push(path);
    }

    if let Some(stress) = reports.stress {
        let path = out_dir.join("stress.csv");
        let mut body = String::from("method,lr,val_mse_mean,label\n");
        for r in &stress.rows {
            body.push_str(&format!(
                "{},{},{},{}\n",
                r.method.as_str(),
                r.lr,
                r.val_mse_mean,
                r.aggregate.name()
            ));
        }
        finish(create(&path)?, &path, body)?;
        written.push(path);
    }

    if let Some(inv) = reports.invariance {
        let path = out_dir.join("invariance.csv");
        let mut body = String::from("transform_index,delta_inv\n");
        for (k, d) in inv.deltas.iter().enumerate() {
            body.push_str(&format!("{},{}\n", k, d));
        }
        finish(create(&path)?, &path, body)?;
        written.push(path);

        let summary_path = out_dir.join("invariance_summary.txt");
        let summary = format!(
            "n_transforms={}\nmin={}\nmedian={}\nmax={}\n",
            inv.deltas.len(),
            inv.min,
            inv.median,
            inv.max
        );
        finish(create(&summary_path)?, &summary_path, summary)?;
        written.push(summary_path);
    }

    if let Some(trace) = reports.trace {
        let path = out_dir.join("trace.csv");
        let mut body =
            String::from("step,train_mse,val_mse,G,mean_abs_v,max_abs_v,mean_u,param_max_abs\n");
        for r in &trace.records {
            body.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.step,
                r.train_mse,
                r.val_mse,
                r.g,
                r.mean_abs_v,
                r.max_abs_v,
                r.mean_u,
                r.param_max_abs
            ));
        }
        finish(create(&path)?, &path, body)?;
        written.push(path);
    }

    if let Some(flow) = reports.flow {
        let path = out_dir.join("flow.csv");
        let mut body = String::from("time,G,mean_abs_v,max_abs_v,mean_u\n");
        for k in 0..flow.times.len() {
            let c = &flow.coords[k];
            body.push_str(&format!(
                "{},{},{},{},{}\n",
                flow.times[k],
                flow.g[k],
                c.mean_abs_v(),
                c.max_abs_v(),
                c.mean_u()
            ));
        }
        finish(create(&path)?, &path, body)?;
        written.push(path);
    }

    if let Some(meta) = reports.metadata {
        let path = out_dir.join("metadata.txt");
        let mut body = String::new();
        for (k, v) in meta.entries() {
            body.push_str(&format!("{}={}\n", k, v));
        }
        finish(create(&path)?, &path, body)?;
        written.push(path);
    }

    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_hand_values() {
        // x = 0: only the cosine term contributes.
        assert!((target(0.0) - 0.2).abs() < 1e-15);
        // x = pi/5: sin(pi/2) + 0.2 cos(6 pi/5) + 0.1 pi/5, evaluated
        // independently.
        let x = std::f64::consts::PI / 5.0;
        let expected = 1.0 + 0.2 * (6.0 * x).cos() + 0.1 * x;
        assert!((target(x) - expected).abs() < 1e-15);
    }

    #[test]
    fn dataset_zero_noise_hits_target_exactly() {
        let cfg = DatasetConfig {
            noise_std: 0.0,
            n_train: 32,
            ..DatasetConfig::default()
        };
        let (train, _) = make_dataset(&cfg).unwrap();
        for (x, y) in train.xs.iter().zip(&train.ys) {
            assert_eq!(y[0], target(x[0]));
        }
    }

    #[test]
    fn dataset_same_seed_is_identical() {
        let cfg = DatasetConfig::default();
        let (a_train, a_val) = make_dataset(&cfg).unwrap();
        let (b_train, b_val) = make_dataset(&cfg).unwrap();
        assert_eq!(a_train.xs, b_train.xs);
        assert_eq!(a_train.ys, b_train.ys);
        assert_eq!(a_val.xs, b_val.xs);
        assert_eq!(a_val.ys, b_val.ys);
    }

    #[test]
    fn validation_targets_are_noise_free() {
        // Changing the seed reshuffles training noise but never touches
        // the validation targets.
        let a = make_dataset(&DatasetConfig {
            seed: 1,
            ..DatasetConfig::default()
        })
        .unwrap();
        let b = make_dataset(&DatasetConfig {
            seed: 2,
            ..DatasetConfig::default()
        })
        .unwrap();
        assert_eq!(a.1.xs, b.1.xs);
        assert_eq!(a.1.ys, b.1.ys);
        assert_ne!(a.0.ys, b.0.ys);
        for (x, y) in a.1.xs.iter().zip(&a.1.ys) {
            assert_eq!(y[0], target(x[0]));
        }
    }

    #[test]
    fn dataset_bounds_are_respected() {
        let cfg = DatasetConfig::default();
        let (train, val) = make_dataset(&cfg).unwrap();
        assert!(train.xs.iter().all(|x| x[0] >= -2.0 && x[0] < 2.0));
        assert_eq!(val.xs[0][0], -3.0);
        assert_eq!(val.xs.last().unwrap()[0], 3.0);
    }

    fn quick_cfg(steps: usize) -> (TrainConfig, DatasetConfig) {
        (
            TrainConfig {
                steps,
                lr: 5e-3,
                ..TrainConfig::default()
            },
            DatasetConfig {
                n_train: 32,
                n_val: 16,
                ..DatasetConfig::default()
            },
        )
    }

    #[test]
    fn sweep_has_one_row_per_lambda() {
        let (base, dcfg) = quick_cfg(20);
        let seeds = run_seeds(7, 2);
        let lambdas = [0.0, 0.05, 0.1, 0.2, 0.5];
        let result = lambda_sweep(&lambdas, &seeds, 8, &base, &dcfg, 1).unwrap();
        assert_eq!(result.rows.len(), 5);
        assert_eq!(result.runs.len(), 10);
        for (row, &lambda) in result.rows.iter().zip(&lambdas) {
            assert_eq!(row.lambda, lambda);
            assert_eq!(row.n_stable + row.n_marginal + row.n_unstable, 2);
        }
    }

    #[test]
    fn sweep_lambda_zero_matches_independent_plain_runs() {
        let (base, dcfg) = quick_cfg(20);
        let seeds = run_seeds(7, 2);
        let result = lambda_sweep(&[0.0, 0.1], &seeds, 8, &base, &dcfg, 1).unwrap();
        for &seed in &seeds {
            let cfg = TrainConfig {
                lambda: 0.0,
                seed,
                ..base.clone()
            };
            let oracle = run_once(seed, 8, &cfg, &dcfg).unwrap();
            let recorded = result
                .runs
                .iter()
                .find(|(l, o)| *l == 0.0 && o.seed == seed)
                .map(|(_, o)| o)
                .unwrap();
            assert_eq!(recorded.train_mse, oracle.train_mse);
            assert_eq!(recorded.val_mse, oracle.val_mse);
        }
    }

    #[test]
    fn sweep_requires_two_seeds() {
        let (base, dcfg) = quick_cfg(5);
        assert!(lambda_sweep(&[0.0], &[1], 8, &base, &dcfg, 1).is_err());
    }

    #[test]
    fn stress_builds_rows_for_every_method_lr_pair() {
        let (base, dcfg) = quick_cfg(20);
        let seeds = run_seeds(11, 2);
        let lrs = [5e-3, 1e-2, 2e-2];
        let result = lr_stress(&lrs, 0.2, &seeds, 8, &base, &dcfg, 1).unwrap();
        assert_eq!(result.rows.len(), 6);
        assert_eq!(result.rows[0].method, Method::Baseline);
        assert_eq!(result.rows[3].method, Method::GaugeFixed);
    }

    #[test]
    fn stress_quasi_static_regime_is_stable() {
        let (mut base, dcfg) = quick_cfg(10);
        base.lr = 1e-6;
        let seeds = run_seeds(13, 2);
        let result = lr_stress(&[1e-6], 0.2, &seeds, 8, &base, &dcfg, 1).unwrap();
        for row in &result.rows {
            assert!(row.aggregate.is_stable(), "{:?}", row);
        }
    }

    #[test]
    fn paired_design_shares_inputs_across_protocols() {
        // The lambda = 0 run of the sweep and of the stress test must see
        // identical datasets and inits for the same seed.
        let (base, dcfg) = quick_cfg(15);
        let seeds = run_seeds(17, 2);
        let sweep = lambda_sweep(&[0.0, 0.2], &seeds, 8, &base, &dcfg, 1).unwrap();
        let stress = lr_stress(&[base.lr], 0.2, &seeds, 8, &base, &dcfg, 1).unwrap();
        for &seed in &seeds {
            let a = sweep
                .runs
                .iter()
                .find(|(l, o)| *l == 0.0 && o.seed == seed)
                .map(|(_, o)| o)
                .unwrap();
            let b = stress
                .runs
                .iter()
                .find(|(m, _, o)| *m == Method::Baseline && o.seed == seed)
                .map(|(_, _, o)| o)
                .unwrap();
            assert_eq!(a.train_mse, b.train_mse);
            assert_eq!(a.val_mse, b.val_mse);
        }
    }

    #[test]
    fn unstable_runs_are_recorded_not_dropped() {
        // An absurd learning rate blows every run up; the rows must still
        // carry finite statistics (last finite iterate) and count the
        // unstable runs.
        let (mut base, dcfg) = quick_cfg(50);
        base.lr = 10.0;
        let seeds = run_seeds(31, 2);
        let result = lambda_sweep(&[0.0], &seeds, 8, &base, &dcfg, 1).unwrap();
        let row = &result.rows[0];
        assert_eq!(row.n_unstable, 2);
        assert!(row.train_mse_mean.is_finite());
        assert!(row.val_mse_mean.is_finite());
        assert_eq!(result.runs.len(), 2);
    }

    #[test]
    fn parallel_jobs_do_not_change_results() {
        let (base, dcfg) = quick_cfg(15);
        let seeds = run_seeds(19, 3);
        let serial = lambda_sweep(&[0.0, 0.1], &seeds, 8, &base, &dcfg, 1).unwrap();
        let parallel = lambda_sweep(&[0.0, 0.1], &seeds, 8, &base, &dcfg, 4).unwrap();
        for (a, b) in serial.runs.iter().zip(&parallel.runs) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.1.train_mse, b.1.train_mse);
            assert_eq!(a.1.val_mse, b.1.val_mse);
        }
    }

    #[test]
    fn invariance_experiment_is_structural() {
        use crate::network::init_params;
        use crate::rng::seeded_rng;
        // Holds for any parameters, trained or not.
        let p = init_params(1, 20, 1, &mut seeded_rng(100));
        let result = invariance_experiment(&p, 50, 64, 0);
        assert_eq!(result.deltas.len(), 50);
        assert!(result.max <= 1e-12, "max delta {}", result.max);
        assert!(result.min >= 0.0);
        assert!(result.min <= result.median && result.median <= result.max);
    }

    #[test]
    fn emitted_summary_stats_match_raw_runs() {
        let (base, dcfg) = quick_cfg(15);
        let seeds = run_seeds(23, 3);
        let result = lambda_sweep(&[0.0, 0.3], &seeds, 8, &base, &dcfg, 1).unwrap();
        for row in &result.rows {
            let vals: Vec<f64> = result
                .runs
                .iter()
                .filter(|(l, _)| *l == row.lambda)
                .map(|(_, o)| o.val_mse)
                .collect();
            let (mean, std) = mean_std(&vals);
            assert!((mean - row.val_mse_mean).abs() <= 1e-12);
            assert!((std - row.val_mse_std).abs() <= 1e-12);
        }
    }

    #[test]
    fn reports_are_byte_identical_across_reruns() {
        let (base, dcfg) = quick_cfg(10);
        let seeds = run_seeds(29, 2);
        let sweep = lambda_sweep(&[0.0, 0.1], &seeds, 8, &base, &dcfg, 1).unwrap();

        let dir_a = std::env::temp_dir().join("gaugefix_test_reports_a");
        let dir_b = std::env::temp_dir().join("gaugefix_test_reports_b");
        let reports = Reports {
            sweep: Some(&sweep),
            ..Reports::default()
        };
        emit_reports(&reports, &dir_a).unwrap();
        emit_reports(&reports, &dir_b).unwrap();
        let a = fs::read(dir_a.join("sweep.csv")).unwrap();
        let b = fs::read(dir_b.join("sweep.csv")).unwrap();
        assert_eq!(a, b);
        let header = String::from_utf8(a).unwrap();
        assert!(header.starts_with(
            "lambda,train_mse_mean,train_mse_std,val_mse_mean,val_mse_std,drift_v_mean,n_stable,n_marginal,n_unstable\n"
        ));
        let _ = fs::remove_dir_all(&dir_a);
        let _ = fs::remove_dir_all(&dir_b);
    }
}
