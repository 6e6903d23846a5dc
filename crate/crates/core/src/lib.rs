//! Rescaling symmetry and soft gauge fixing for one-hidden-layer ReLU
//! networks.
//!
//! ReLU's positive homogeneity makes the map
//! `W1 -> D W1, b1 -> D b1, W2 -> W2 D^-1` (positive diagonal `D`) an exact
//! symmetry of the network function: parameter space is foliated into gauge
//! orbits of functionally identical configurations. This crate implements
//!
//! - the orbit machinery: transforms, per-neuron norm coordinates, the
//!   invariant `u` and imbalance `v` directions, invariance diagnostics
//!   ([`gauge`]);
//! - a soft norm-balancing penalty `G` with closed-form radial gradients,
//!   balanced representatives, damping rates and relaxation laws
//!   ([`gauge`], [`dynamics`]);
//! - full-batch gradient descent on `L_task + lambda * G`, an RK4
//!   integrator for the continuous flow, stability classification and
//!   scale-drift metrics ([`dynamics`]);
//! - reproducible experiment protocols (lambda sweep, learning-rate stress
//!   test, invariance study) with CSV emission ([`experiments`]);
//! - a CLI wrapping all of the above ([`cli`]).
//!
//! Everything is `f64`, deterministic under a master seed, and free of
//! numerical dependencies.

// Per-neuron block algebra reads clearest with indexed loops.
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod gauge;
pub mod linalg;
pub mod network;
pub mod oracles;
pub mod rng;
pub mod validate;

pub use dynamics::{
    classify_stability, gd_step, integrate_gauge_flow, scale_drift, total_loss, train, FlowTrace,
    StabilityLabel, TraceRecord, TrainConfig, TrainTrace,
};
pub use error::{Error, Result};
pub use experiments::{
    invariance_experiment, lambda_sweep, lr_stress, make_dataset, DatasetConfig, InvarianceResult,
    Metadata, Method, Reports, StressResult, SweepResult,
};
pub use gauge::{
    apply_gauge_transform, balanced_rescaling, damping_rates, gauge_coords, gauge_functional,
    gauge_gradients, gauge_only_u_dot, invariance_error, neuron_norms, predicted_v_dot,
    radial_forces, DampingRates, GaugeCoords, GaugeScales, RadialForces,
};
pub use linalg::{l2_norm, matvec, Matrix};
pub use network::{
    forward, init_params, mse_loss, task_gradients, Dataset, Grads, Params, Split,
};
pub use rng::{derive_seed, gaussian, seeded_rng, RngStream};
