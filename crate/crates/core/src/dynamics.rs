//! Training dynamics on the penalized objective and the continuous-time
//! gradient flow in gauge coordinates.
//!
//! Discrete training is plain full-batch gradient descent on
//! `L_task + lambda * G`. The continuous flow integrates
//! `theta_dot = -grad L_task - lambda grad G` with classical RK4; in
//! gauge-only mode (no task term) the imbalance coordinate obeys
//! `v_dot_i = -kappa_i v_i` and relaxes exponentially along each orbit.

use crate::error::{Error, Result};
use crate::gauge::{gauge_coords, gauge_value_and_grads, GaugeCoords};
use crate::network::{mse_loss, task_gradients, Dataset, Grads, Params};

/// Parameters exceeding this magnitude truncate a flow integration.
const FLOW_DIVERGENCE_LIMIT: f64 = 1e6;

/// Relative oscillation amplitude above which a trailing window is Marginal.
pub const MARGINAL_OSCILLATION: f64 = 0.10;

/// Fraction of the trace used as the trailing stability window.
pub const STABILITY_WINDOW_FRACTION: f64 = 0.10;

/// Configuration of one gradient-descent run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub lambda: f64,
    pub eps: f64,
    pub steps: usize,
    pub seed: u64,
    /// A run is labeled Unstable once its train loss exceeds this multiple
    /// of the initial train loss (or goes non-finite).
    pub divergence_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-3,
            lambda: 0.0,
            eps: 1e-8,
            steps: 5000,
            seed: 42,
            divergence_threshold: 1e4,
        }
    }
}

/// Qualitative stability of a finished run, with the triggering statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StabilityLabel {
    Stable,
    /// Trailing-window train loss was non-monotone with this relative
    /// oscillation amplitude.
    Marginal { oscillation: f64 },
    /// Divergence criterion fired; the statistic is the loss blow-up ratio
    /// (infinite when the loss went non-finite).
    Unstable { blowup: f64 },
}

impl StabilityLabel {
    pub fn name(&self) -> &'static str {
        match self {
            StabilityLabel::Stable => "Stable",
            StabilityLabel::Marginal { .. } => "Marginal",
            StabilityLabel::Unstable { .. } => "Unstable",
        }
    }

    /// Severity rank for worst-of aggregation: Stable < Marginal < Unstable.
    pub fn severity(&self) -> u8 {
        match self {
            StabilityLabel::Stable => 0,
            StabilityLabel::Marginal { .. } => 1,
            StabilityLabel::Unstable { .. } => 2,
        }
    }

    pub fn is_stable(&self) -> bool {
        matches!(self, StabilityLabel::Stable)
    }
}

/// Per-step diagnostics of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub g: f64,
    pub mean_abs_v: f64,
    pub max_abs_v: f64,
    pub mean_u: f64,
    pub param_max_abs: f64,
}

/// Full record of a training run: one record per step (including step 0),
/// unless divergence truncated the run at `truncated_at`.
#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    pub final_params: Params,
    pub label: StabilityLabel,
    pub truncated_at: Option<usize>,
    pub divergence_threshold: f64,
}

impl TrainTrace {
    /// Last record whose losses are finite (step 0 always qualifies).
    pub fn last_finite(&self) -> &TraceRecord {
        self.records
            .iter()
            .rev()
            .find(|r| r.train_mse.is_finite() && r.val_mse.is_finite())
            .expect("step 0 record is always finite")
    }
}

/// Continuous-flow record: gauge coordinates and `G` on a uniform time grid,
/// plus the integrated endpoint.
#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub times: Vec<f64>,
    pub coords: Vec<GaugeCoords>,
    pub g: Vec<f64>,
    pub final_params: Params,
    pub truncated_at: Option<usize>,
}

/// Total loss `L_task + lambda * G`.
pub fn total_loss(p: &Params, data: &Dataset, lambda: f64, eps: f64) -> Result<f64> {
    let task = mse_loss(p, data)?;
    if lambda == 0.0 {
        Ok(task)
    } else {
        Ok(task + lambda * gauge_value_and_grads(p, eps).0)
    }
}

fn total_gradients(p: &Params, data: &Dataset, lambda: f64, eps: f64) -> Result<Grads> {
    let mut g = task_gradients(p, data)?;
    // lambda = 0 must follow the penalty-free code path bit for bit.
    if lambda != 0.0 {
        g.axpy(lambda, &gauge_value_and_grads(p, eps).1.grads);
    }
    Ok(g)
}

/// One gradient-descent step `theta' = theta - lr (grad L_task + lambda grad G)`.
///
/// Non-finite gradients surface as [`Error::Diverged`] rather than silently
/// propagating NaNs into the parameters.
pub fn gd_step(p: &Params, data: &Dataset, cfg: &TrainConfig) -> Result<Params> {
    let g = total_gradients(p, data, cfg.lambda, cfg.eps)?;
    if !g.is_finite() {
        return Err(Error::Diverged);
    }
    let mut next = p.clone();
    next.axpy(-cfg.lr, &g);
    Ok(next)
}

fn record_metrics(
    step: usize,
    p: &Params,
    train_data: &Dataset,
    val_data: &Dataset,
    eps: f64,
) -> Result<TraceRecord> {
    let coords = gauge_coords(p, eps);
    Ok(TraceRecord {
        step,
        train_mse: mse_loss(p, train_data)?,
        val_mse: mse_loss(p, val_data)?,
        g: gauge_value_and_grads(p, eps).0,
        mean_abs_v: coords.mean_abs_v(),
        max_abs_v: coords.max_abs_v(),
        mean_u: coords.mean_u(),
        param_max_abs: p.max_abs(),
    })
}

/// Full-batch gradient-descent training; deterministic given `(p0, data, cfg)`.
///
/// Divergence (non-finite gradients or metrics, or train loss exceeding
/// `divergence_threshold` times its initial value) truncates the trace and
/// labels the run Unstable.
pub fn train(
    p0: &Params,
    train_data: &Dataset,
    val_data: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainTrace> {
    let mut records = Vec::with_capacity(cfg.steps + 1);
    records.push(record_metrics(0, p0, train_data, val_data, cfg.eps)?);
    let initial_train = records[0].train_mse;
    let blowup_limit = cfg.divergence_threshold * initial_train.max(f64::MIN_POSITIVE);

    let mut p = p0.clone();
    let mut truncated_at = None;
    for step in 1..=cfg.steps {
        match gd_step(&p, train_data, cfg) {
            Ok(next) => p = next,
            Err(Error::Diverged) => {
                truncated_at = Some(step);
                break;
            }
            Err(e) => return Err(e),
        }
        let rec = record_metrics(step, &p, train_data, val_data, cfg.eps)?;
        let diverged = !rec.train_mse.is_finite() || rec.train_mse > blowup_limit;
        records.push(rec);
        if diverged {
            truncated_at = Some(step);
            break;
        }
    }

    let mut trace = TrainTrace {
        records,
        final_params: p,
        label: StabilityLabel::Stable,
        truncated_at,
        divergence_threshold: cfg.divergence_threshold,
    };
    let window = ((cfg.steps as f64 * STABILITY_WINDOW_FRACTION) as usize).max(2);
    trace.label = classify_stability(&trace, window);
    Ok(trace)
}

/// Stability classification over the trailing `window` records.
///
/// Unstable: any non-finite metric, a truncated run, or train loss
/// exceeding `divergence_threshold` times its initial value at any step.
/// Marginal: trailing train loss non-monotone with relative oscillation
/// amplitude above 10%. Stable otherwise.
pub fn classify_stability(trace: &TrainTrace, window: usize) -> StabilityLabel {
    let records = &trace.records;
    assert!(!records.is_empty(), "classify_stability: empty trace");
    let initial = records[0].train_mse;
    let blowup_limit = trace.divergence_threshold * initial.max(f64::MIN_POSITIVE);

    let non_finite = records.iter().any(|r| {
        !(r.train_mse.is_finite()
            && r.val_mse.is_finite()
            && r.g.is_finite()
            && r.mean_abs_v.is_finite()
            && r.max_abs_v.is_finite()
            && r.mean_u.is_finite()
            && r.param_max_abs.is_finite())
    });
    if non_finite {
        return StabilityLabel::Unstable { blowup: f64::INFINITY };
    }
    let peak = records.iter().map(|r| r.train_mse).fold(0.0f64, f64::max);
    if trace.truncated_at.is_some() || peak > blowup_limit {
        return StabilityLabel::Unstable {
            blowup: peak / initial.max(f64::MIN_POSITIVE),
        };
    }

    let w = window.max(2).min(records.len());
    let tail = &records[records.len() - w..];
    let non_monotone = tail.windows(2).any(|p| p[1].train_mse > p[0].train_mse);
    if non_monotone {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for r in tail {
            lo = lo.min(r.train_mse);
            hi = hi.max(r.train_mse);
            sum += r.train_mse;
        }
        let mean = sum / w as f64;
        let oscillation = (hi - lo) / mean.abs().max(f64::MIN_POSITIVE);
        if oscillation > MARGINAL_OSCILLATION {
            return StabilityLabel::Marginal { oscillation };
        }
    }
    StabilityLabel::Stable
}

/// Drift statistics over the trace: `drift_v` is the largest growth of
/// mean |v| above its initial value (relaxation toward balance is not
/// drift), `drift_u` the largest excursion |mean u - mean u(0)|.
pub fn scale_drift(trace: &TrainTrace) -> (f64, f64) {
    let records = &trace.records;
    assert!(!records.is_empty(), "scale_drift: empty trace");
    let v0 = records[0].mean_abs_v;
    let u0 = records[0].mean_u;
    let mut drift_v: f64 = 0.0;
    let mut drift_u: f64 = 0.0;
    for r in records {
        drift_v = drift_v.max(r.mean_abs_v - v0);
        drift_u = drift_u.max((r.mean_u - u0).abs());
    }
    (drift_v, drift_u)
}

/// Classical fixed-step RK4 integration of the gradient flow
/// `theta_dot = -[include_task] grad L_task - lambda grad G`,
/// sampling gauge coordinates and `G` at every step.
///
/// `t_end` is realized as `round(t_end / dt)` steps of exactly `dt`.
pub fn integrate_gauge_flow(
    p0: &Params,
    lambda: f64,
    eps: f64,
    t_end: f64,
    dt: f64,
    include_task: bool,
    data: Option<&Dataset>,
) -> Result<FlowTrace> {
    assert!(dt > 0.0, "dt must be positive");
    assert!(t_end >= dt, "t_end must be at least dt");
    if include_task && data.is_none() {
        return Err(Error::Config(
            "task-forced flow requires a dataset".to_string(),
        ));
    }

    let field = |p: &Params| -> Result<Grads> {
        let mut vel = Grads::zeros_like(p);
        if include_task {
            vel.axpy(-1.0, &task_gradients(p, data.unwrap())?);
        }
        if lambda != 0.0 {
            vel.axpy(-lambda, &gauge_value_and_grads(p, eps).1.grads);
        }
        Ok(vel)
    };

    let n_steps = ((t_end / dt).round() as usize).max(1);
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut coords = Vec::with_capacity(n_steps + 1);
    let mut g_values = Vec::with_capacity(n_steps + 1);
    let mut truncated_at = None;

    let mut p = p0.clone();
    times.push(0.0);
    coords.push(gauge_coords(&p, eps));
    g_values.push(gauge_value_and_grads(&p, eps).0);

    for step in 1..=n_steps {
        let k1 = field(&p)?;
        let mut p2 = p.clone();
        p2.axpy(dt / 2.0, &k1);
        let k2 = field(&p2)?;
        let mut p3 = p.clone();
        p3.axpy(dt / 2.0, &k2);
        let k3 = field(&p3)?;
        let mut p4 = p.clone();
        p4.axpy(dt, &k3);
        let k4 = field(&p4)?;

        p.axpy(dt / 6.0, &k1);
        p.axpy(dt / 3.0, &k2);
        p.axpy(dt / 3.0, &k3);
        p.axpy(dt / 6.0, &k4);

        if !p.is_finite() || p.max_abs() > FLOW_DIVERGENCE_LIMIT {
            truncated_at = Some(step);
            break;
        }
        times.push(step as f64 * dt);
        coords.push(gauge_coords(&p, eps));
        g_values.push(gauge_value_and_grads(&p, eps).0);
    }

    Ok(FlowTrace {
        times,
        coords,
        g: g_values,
        final_params: p,
        truncated_at,
    })
}
