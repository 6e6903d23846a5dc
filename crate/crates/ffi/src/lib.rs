//! C ABI for the gaugefix library.
//!
//! Networks are exposed as opaque handles created with [`gf_network_new`]
//! and released with [`gf_network_free`]. Every fallible call returns a
//! [`GfStatus`]; outputs go through caller-provided buffers whose lengths
//! are validated before anything is written. No call panics across the
//! boundary: internal panics are caught and reported as `GF_STATUS_PANIC`.

use std::panic::{catch_unwind, AssertUnwindSafe};

use gaugefix::dynamics::{train, StabilityLabel, TrainConfig};
use gaugefix::experiments::seeded_run_inputs;
use gaugefix::gauge::{
    apply_gauge_transform, balanced_rescaling, gauge_coords, gauge_functional, invariance_error,
    GaugeScales,
};
use gaugefix::network::{forward, init_params, Params};
use gaugefix::rng::seeded_rng;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A buffer length did not match the network's dimensions.
    DimensionMismatch = 2,
    /// A numeric argument was out of range (e.g. non-positive scale).
    InvalidValue = 3,
    /// Training diverged before completing.
    Diverged = 4,
    /// An internal panic was caught at the boundary.
    Panic = 5,
}

/// Opaque handle to a one-hidden-layer ReLU network.
pub struct GfNetwork {
    inner: Params,
}

/// Options for a one-shot training run on the built-in regression task.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GfTrainOptions {
    pub seed: u64,
    pub width: usize,
    pub steps: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub lr: f64,
    pub lambda: f64,
    pub eps: f64,
    pub noise_std: f64,
}

/// Summary of a finished training run.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GfTrainSummary {
    pub train_mse: f64,
    pub val_mse: f64,
    pub gauge_value: f64,
    pub mean_abs_v: f64,
    /// 0 = stable, 1 = marginal, 2 = unstable.
    pub stability: i32,
    pub steps_run: usize,
}

fn guard(f: impl FnOnce() -> GfStatus) -> GfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => GfStatus::Panic,
    }
}

/// Creates a freshly initialized network (weights `N(0, 1/fan_in)`, zero
/// biases, deterministic in `seed`). Returns null if a dimension is zero.
#[no_mangle]
pub extern "C" fn gf_network_new(d: usize, h: usize, m: usize, seed: u64) -> *mut GfNetwork {
    if d == 0 || h == 0 || m == 0 {
        return std::ptr::null_mut();
    }
    let mut rng = seeded_rng(seed);
    let inner = init_params(d, h, m, &mut rng);
    Box::into_raw(Box::new(GfNetwork { inner }))
}

/// Releases a handle created by [`gf_network_new`]. Null is a no-op.
///
/// # Safety
/// `net` must be a pointer previously returned by this library and not
/// already freed.
#[no_mangle]
pub unsafe extern "C" fn gf_network_free(net: *mut GfNetwork) {
    if !net.is_null() {
        drop(unsafe { Box::from_raw(net) });
    }
}

/// Input dimension of a handle; 0 for null.
///
/// # Safety
/// `net` must be null or a live pointer from [`gf_network_new`].
#[no_mangle]
pub unsafe extern "C" fn gf_network_input_dim(net: *const GfNetwork) -> usize {
    unsafe { net.as_ref() }.map_or(0, |n| n.inner.input_dim())
}

/// Hidden width of a handle; 0 for null.
///
/// # Safety
/// `net` must be null or a live pointer from [`gf_network_new`].
#[no_mangle]
pub unsafe extern "C" fn gf_network_hidden_dim(net: *const GfNetwork) -> usize {
    unsafe { net.as_ref() }.map_or(0, |n| n.inner.hidden_dim())
}

/// Output dimension of a handle; 0 for null.
///
/// # Safety
/// `net` must be null or a live pointer from [`gf_network_new`].
#[no_mangle]
pub unsafe extern "C" fn gf_network_output_dim(net: *const GfNetwork) -> usize {
    unsafe { net.as_ref() }.map_or(0, |n| n.inner.output_dim())
}

/// Forward pass: writes `f(x)` into `y_out`.
///
/// # Safety
/// `x` must point to `x_len` doubles and `y_out` to `y_len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn gf_network_forward(
    net: *const GfNetwork,
    x: *const f64,
    x_len: usize,
    y_out: *mut f64,
    y_len: usize,
) -> GfStatus {
    let Some(net) = (unsafe { net.as_ref() }) else {
        return GfStatus::NullArgument;
    };
    if x.is_null() || y_out.is_null() {
        return GfStatus::NullArgument;
    }
    if x_len != net.inner.input_dim() || y_len != net.inner.output_dim() {
        return GfStatus::DimensionMismatch;
    }
    let xs = unsafe { std::slice::from_raw_parts(x, x_len) };
    let out = unsafe { std::slice::from_raw_parts_mut(y_out, y_len) };
    guard(|| {
        let y = forward(&net.inner, xs);
        out.copy_from_slice(&y);
        GfStatus::Ok
    })
}

/// Value of the gauge functional `G` at the handle's parameters.
///
/// # Safety
/// `out` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gf_gauge_functional(
    net: *const GfNetwork,
    eps: f64,
    out: *mut f64,
) -> GfStatus {
    let Some(net) = (unsafe { net.as_ref() }) else {
        return GfStatus::NullArgument;
    };
    if out.is_null() {
        return GfStatus::NullArgument;
    }
    if eps.is_nan() || eps <= 0.0 {
        return GfStatus::InvalidValue;
    }
    guard(|| {
        unsafe { *out = gauge_functional(&net.inner, eps) };
        GfStatus::Ok
    })
}

/// Writes the per-neuron invariant coordinate `u` and imbalance coordinate
/// `v` into the provided buffers of length `len = hidden_dim`.
///
/// # Safety
/// `u_out` and `v_out` must each point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gf_gauge_coords(
    net: *const GfNetwork,
    eps: f64,
    u_out: *mut f64,
    v_out: *mut f64,
    len: usize,
) -> GfStatus {
    let Some(net) = (unsafe { net.as_ref() }) else {
        return GfStatus::NullArgument;
    };
    if u_out.is_null() || v_out.is_null() {
        return GfStatus::NullArgument;
    }
    if len != net.inner.hidden_dim() {
        return GfStatus::DimensionMismatch;
    }
    if eps.is_nan() || eps <= 0.0 {
        return GfStatus::InvalidValue;
    }
    guard(|| {
        let coords = gauge_coords(&net.inner, eps);
        unsafe {
            std::slice::from_raw_parts_mut(u_out, len).copy_from_slice(&coords.u);
            std::slice::from_raw_parts_mut(v_out, len).copy_from_slice(&coords.v);
        }
        GfStatus::Ok
    })
}

/// Applies the neuron-wise rescaling in place; `scales` must hold
/// `hidden_dim` strictly positive entries. The network function is
/// preserved exactly up to floating-point round-off.
///
/// # Safety
/// `scales` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gf_apply_gauge(
    net: *mut GfNetwork,
    scales: *const f64,
    len: usize,
) -> GfStatus {
    let Some(net) = (unsafe { net.as_mut() }) else {
        return GfStatus::NullArgument;
    };
    if scales.is_null() {
        return GfStatus::NullArgument;
    }
    if len != net.inner.hidden_dim() {
        return GfStatus::DimensionMismatch;
    }
    let s = unsafe { std::slice::from_raw_parts(scales, len) };
    let Ok(scales) = GaugeScales::new(s.to_vec()) else {
        return GfStatus::InvalidValue;
    };
    guard(|| {
        net.inner = apply_gauge_transform(&net.inner, &scales);
        GfStatus::Ok
    })
}

/// Writes the balancing rescaling `s*_i = sqrt((n2_i+eps)/(n1_i+eps))`
/// into `scales_out` without modifying the network.
///
/// # Safety
/// `scales_out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gf_balanced_scales(
    net: *const GfNetwork,
    eps: f64,
    scales_out: *mut f64,
    len: usize,
) -> GfStatus {
    let Some(net) = (unsafe { net.as_ref() }) else {
        return GfStatus::NullArgument;
    };
    if scales_out.is_null() {
        return GfStatus::NullArgument;
    }
    if len != net.inner.hidden_dim() {
        return GfStatus::DimensionMismatch;
    }
    if eps.is_nan() || eps <= 0.0 {
        return GfStatus::InvalidValue;
    }
    guard(|| {
        let bs = balanced_rescaling(&net.inner, eps);
        unsafe {
            std::slice::from_raw_parts_mut(scales_out, len)
                .copy_from_slice(bs.scales.as_slice());
        }
        GfStatus::Ok
    })
}

/// Mean absolute output deviation between the network and its gauge
/// transform over `n_inputs` row-major inputs of dimension `input_dim`.
///
/// # Safety
/// `scales` must point to `scales_len` doubles and `inputs` to
/// `n_inputs * input_dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_invariance_error(
    net: *const GfNetwork,
    scales: *const f64,
    scales_len: usize,
    inputs: *const f64,
    n_inputs: usize,
    out: *mut f64,
) -> GfStatus {
    let Some(net) = (unsafe { net.as_ref() }) else {
        return GfStatus::NullArgument;
    };
    if scales.is_null() || inputs.is_null() || out.is_null() {
        return GfStatus::NullArgument;
    }
    if scales_len != net.inner.hidden_dim() || n_inputs == 0 {
        return GfStatus::DimensionMismatch;
    }
    let s = unsafe { std::slice::from_raw_parts(scales, scales_len) };
    let Ok(scales) = GaugeScales::new(s.to_vec()) else {
        return GfStatus::InvalidValue;
    };
    let d = net.inner.input_dim();
    let flat = unsafe { std::slice::from_raw_parts(inputs, n_inputs * d) };
    guard(|| {
        let xs: Vec<Vec<f64>> = flat.chunks(d).map(|c| c.to_vec()).collect();
        unsafe { *out = invariance_error(&net.inner, &scales, &xs) };
        GfStatus::Ok
    })
}

/// Trains a fresh width-`width` network on the built-in synthetic
/// regression task and fills `summary`. Losses are reported from the last
/// finite iterate even when the run is truncated as unstable.
///
/// # Safety
/// `summary` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gf_train_regression(
    options: GfTrainOptions,
    summary: *mut GfTrainSummary,
) -> GfStatus {
    if summary.is_null() {
        return GfStatus::NullArgument;
    }
    if options.width == 0
        || options.n_train == 0
        || options.n_val == 0
        || options.eps.is_nan()
        || options.eps <= 0.0
        || options.lr < 0.0
        || options.lambda < 0.0
        || options.noise_std < 0.0
    {
        return GfStatus::InvalidValue;
    }
    guard(|| {
        let dcfg = gaugefix::experiments::DatasetConfig {
            n_train: options.n_train,
            n_val: options.n_val,
            noise_std: options.noise_std,
            seed: options.seed,
            ..gaugefix::experiments::DatasetConfig::default()
        };
        let Ok((train_data, val_data, p0)) =
            seeded_run_inputs(options.seed, options.width, &dcfg)
        else {
            return GfStatus::InvalidValue;
        };
        let cfg = TrainConfig {
            lr: options.lr,
            lambda: options.lambda,
            eps: options.eps,
            steps: options.steps,
            seed: options.seed,
            ..TrainConfig::default()
        };
        let Ok(trace) = train(&p0, &train_data, &val_data, &cfg) else {
            return GfStatus::Diverged;
        };
        let last = trace.last_finite();
        let out = GfTrainSummary {
            train_mse: last.train_mse,
            val_mse: last.val_mse,
            gauge_value: last.g,
            mean_abs_v: last.mean_abs_v,
            stability: match trace.label {
                StabilityLabel::Stable => 0,
                StabilityLabel::Marginal { .. } => 1,
                StabilityLabel::Unstable { .. } => 2,
            },
            steps_run: trace.records.len() - 1,
        };
        unsafe { *summary = out };
        GfStatus::Ok
    })
}
