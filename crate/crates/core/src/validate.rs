//! Built-in invariant suite backing the `validate` subcommand.
//!
//! Each check re-derives an expected value through an independent route
//! (hand computation, finite differences, quadrature) and compares it to
//! the library at a stated tolerance, so the core contracts can be
//! demonstrated on any build without a test harness installed.

use crate::dynamics::{gd_step, integrate_gauge_flow, TrainConfig};
use crate::experiments::{make_dataset, DatasetConfig};
use crate::gauge::{
    apply_gauge_transform, balanced_rescaling, damping_from_norms, damping_rates, gauge_coords,
    gauge_functional, gauge_gradients, invariance_error, params_with_norms, GaugeScales,
};
use crate::linalg::{dot, l2_norm, Matrix};
use crate::network::{forward, init_params, task_gradients, Dataset, Split};
use crate::oracles::{
    close, compare_grads, compare_grads_masked, fd_gauge_gradients, fd_task_gradients,
    kink_safe_mask, trapezoid,
};
use crate::rng::{gaussian, seeded_rng};

type CheckResult = std::result::Result<(), String>;
type Check = (&'static str, fn() -> CheckResult);

fn check_rng_determinism() -> CheckResult {
    let mut a = seeded_rng(42);
    let mut b = seeded_rng(42);
    for _ in 0..10_000 {
        if a.next_u64() != b.next_u64() {
            return Err("equal seeds produced different streams".to_string());
        }
    }
    let va = gaussian(&mut seeded_rng(7), 1000, 0.5);
    let vb = gaussian(&mut seeded_rng(7), 1000, 0.5);
    if va != vb {
        return Err("gaussian sampling is not reproducible".to_string());
    }
    Ok(())
}

fn check_linalg_oracle() -> CheckResult {
    let mut rng = seeded_rng(1);
    let m = {
        let mut m = Matrix::zeros(8, 8);
        for x in m.data_mut() {
            *x = rng.uniform(-5.0, 5.0);
        }
        m
    };
    let v: Vec<f64> = (0..8).map(|_| rng.uniform(-5.0, 5.0)).collect();
    let ours = crate::linalg::matvec(&m, &v);
    for r in 0..8 {
        let mut acc = 0.0;
        for c in 0..8 {
            acc += m.get(r, c) * v[c];
        }
        if ours[r] != acc {
            return Err(format!("matvec row {r} differs from naive oracle"));
        }
    }
    if l2_norm(&[3.0, 4.0]) != 5.0 {
        return Err("l2_norm(3,4) != 5".to_string());
    }
    Ok(())
}

fn check_forward_gauge_invariance() -> CheckResult {
    let mut rng = seeded_rng(2);
    let p = init_params(1, 20, 1, &mut rng);
    let xs: Vec<Vec<f64>> = (0..64).map(|_| vec![rng.uniform(-3.0, 3.0)]).collect();

    let pow2 = GaugeScales::new((0..20i32).map(|i| 2f64.powi((i % 7) - 3)).collect())
        .expect("positive scales");
    if invariance_error(&p, &pow2, &xs) != 0.0 {
        return Err("power-of-two scales are not bit-exact".to_string());
    }
    for _ in 0..20 {
        let s = GaugeScales::random_log_uniform(20, &mut rng);
        let delta = invariance_error(&p, &s, &xs);
        if delta > 1e-12 {
            return Err(format!("invariance error {delta} above 1e-12"));
        }
    }
    Ok(())
}

fn check_coordinate_transform_laws() -> CheckResult {
    let mut rng = seeded_rng(3);
    let p = init_params(2, 8, 1, &mut rng);
    let s = GaugeScales::random_log_uniform(8, &mut rng);
    // eps -> 0 regime, norms far above eps.
    let eps = 1e-15;
    let before = gauge_coords(&p, eps);
    let after = gauge_coords(&apply_gauge_transform(&p, &s), eps);
    for i in 0..8 {
        if (after.u[i] - before.u[i]).abs() > 1e-12 {
            return Err(format!("u[{i}] not invariant"));
        }
        let shift = 2.0 * s.as_slice()[i].ln();
        if (after.v[i] - before.v[i] - shift).abs() > 1e-10 {
            return Err(format!("v[{i}] does not shift by 2 log s"));
        }
    }
    Ok(())
}

fn check_gauge_gradient_radiality() -> CheckResult {
    let mut rng = seeded_rng(4);
    let p = init_params(3, 6, 2, &mut rng);
    let gg = gauge_gradients(&p, 1e-8);
    if gg.grads.db1.iter().any(|&x| x != 0.0) || gg.grads.db2.iter().any(|&x| x != 0.0) {
        return Err("bias blocks of the gauge gradient are not zero".to_string());
    }
    let coords = gauge_coords(&p, 1e-8);
    for i in 0..6 {
        if coords.v[i] == 0.0 {
            continue;
        }
        let gw = gg.grads.dw1.row(i);
        let cos = dot(gw, p.w1.row(i)) / (l2_norm(gw) * l2_norm(p.w1.row(i)));
        if (cos.abs() - 1.0).abs() > 1e-12 {
            return Err(format!("gradient of neuron {i} is not radial (cos {cos})"));
        }
    }
    Ok(())
}

fn check_gradients_against_finite_differences() -> CheckResult {
    let mut rng = seeded_rng(5);
    let p = init_params(2, 4, 1, &mut rng);
    let xs: Vec<Vec<f64>> = (0..8)
        .map(|_| vec![rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)])
        .collect();
    let ys: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.uniform(-1.0, 1.0)]).collect();
    let data = Dataset::new(xs, ys, Split::Train).map_err(|e| e.to_string())?;

    let g = task_gradients(&p, &data).map_err(|e| e.to_string())?;
    let fd = fd_task_gradients(&p, &data, 1e-6);
    let mask = kink_safe_mask(&p, &data, 1e-3);
    if let Some(msg) = compare_grads_masked(&g, &fd, &mask, 1e-6, 1e-9) {
        return Err(format!("task gradient: {msg}"));
    }

    let gg = gauge_gradients(&p, 1e-8);
    let fdg = fd_gauge_gradients(&p, 1e-8, 1e-6);
    if let Some(msg) = compare_grads(&gg.grads, &fdg, 1e-6, 1e-9) {
        return Err(format!("gauge gradient: {msg}"));
    }
    Ok(())
}

fn check_balanced_representative() -> CheckResult {
    let mut rng = seeded_rng(6);
    for _ in 0..10 {
        let h = 6;
        let n1: Vec<f64> = (0..h).map(|_| rng.uniform(0.1, 10.0)).collect();
        let n2: Vec<f64> = (0..h).map(|_| rng.uniform(0.1, 10.0)).collect();
        let p = params_with_norms(1, h, 1, &n1, &n2, &mut rng);
        let bs = balanced_rescaling(&p, 1e-12);
        let q = apply_gauge_transform(&p, &bs.scales);
        let g = gauge_functional(&q, 1e-12);
        if g > 1e-12 {
            return Err(format!("post-balancing G = {g}"));
        }
        let xs: Vec<Vec<f64>> = (0..16).map(|_| vec![rng.uniform(-2.0, 2.0)]).collect();
        for x in &xs {
            let dev = (forward(&p, x)[0] - forward(&q, x)[0]).abs();
            if dev > 1e-12 {
                return Err(format!("balancing changed outputs by {dev}"));
            }
        }
    }
    Ok(())
}

fn check_damping_rates() -> CheckResult {
    let mut rng = seeded_rng(7);
    let p = params_with_norms(2, 1, 1, &[1.0], &[1.0], &mut rng);
    let k = damping_rates(&p, 0.5, 1e-12);
    if (k.kappa[0] - 2.0).abs() > 1e-9 {
        return Err(format!("unit-norm kappa = {}, expected 2", k.kappa[0]));
    }
    let zero = damping_rates(&p, 0.0, 1e-8);
    if zero.kappa[0] != 0.0 {
        return Err("lambda = 0 must give zero damping".to_string());
    }
    Ok(())
}

fn check_gauge_relaxation() -> CheckResult {
    let mut rng = seeded_rng(8);
    let h = 4;
    let p = params_with_norms(1, h, 1, &[2.0, 1.5, 0.8, 1.2], &[0.5, 0.9, 1.6, 0.7], &mut rng);
    let lambda = 1.0;
    let eps = 1e-8;
    let trace = integrate_gauge_flow(&p, lambda, eps, 1.0, 1e-3, false, None)
        .map_err(|e| e.to_string())?;
    let n = trace.times.len();
    for i in 0..h {
        let kappas: Vec<f64> = (0..n)
            .map(|k| damping_from_norms(&trace.coords[k].n1, &trace.coords[k].n2, lambda, eps, h)[i])
            .collect();
        let predicted = trace.coords[0].v[i] * (-trapezoid(&trace.times, &kappas)).exp();
        let measured = trace.coords[n - 1].v[i];
        if !close(measured, predicted, 1e-4, 1e-12) {
            return Err(format!(
                "neuron {i}: measured v = {measured}, quadrature prediction {predicted}"
            ));
        }
    }
    for k in 1..n {
        if trace.g[k] > trace.g[k - 1] + 1e-15 {
            return Err(format!("G increased at flow step {k}"));
        }
    }
    Ok(())
}

fn check_penalty_off_is_plain_gd() -> CheckResult {
    let mut rng = seeded_rng(9);
    let p = init_params(1, 8, 1, &mut rng);
    let (train_data, _) = make_dataset(&DatasetConfig {
        n_train: 32,
        n_val: 8,
        ..DatasetConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        lr: 1e-2,
        lambda: 0.0,
        ..TrainConfig::default()
    };
    let stepped = gd_step(&p, &train_data, &cfg).map_err(|e| e.to_string())?;
    let mut plain = p.clone();
    plain.axpy(-cfg.lr, &task_gradients(&p, &train_data).map_err(|e| e.to_string())?);
    if stepped != plain {
        return Err("lambda = 0 step deviates from the penalty-free update".to_string());
    }
    Ok(())
}

fn check_gauge_descent() -> CheckResult {
    let mut rng = seeded_rng(10);
    let p = params_with_norms(1, 4, 1, &[2.0; 4], &[0.5; 4], &mut rng);
    let eps = 1e-8;
    let before = gauge_functional(&p, eps);
    let mut stepped = p.clone();
    stepped.axpy(-1e-3, &gauge_gradients(&p, eps).grads);
    let after = gauge_functional(&stepped, eps);
    if after >= before {
        return Err(format!("gauge-only step did not decrease G ({before} -> {after})"));
    }
    Ok(())
}

fn check_dataset_determinism() -> CheckResult {
    let cfg = DatasetConfig::default();
    let (a_train, a_val) = make_dataset(&cfg).map_err(|e| e.to_string())?;
    let (b_train, b_val) = make_dataset(&cfg).map_err(|e| e.to_string())?;
    if a_train.xs != b_train.xs || a_train.ys != b_train.ys {
        return Err("training data is not reproducible".to_string());
    }
    if a_val.ys != b_val.ys {
        return Err("validation data is not reproducible".to_string());
    }
    Ok(())
}

/// Runs every check, printing one `PASS`/`FAIL` line per check; returns
/// whether all passed.
pub fn run_all() -> bool {
    let checks: &[Check] = &[
        ("rng_determinism", check_rng_determinism),
        ("linalg_oracle", check_linalg_oracle),
        ("forward_gauge_invariance", check_forward_gauge_invariance),
        ("coordinate_transform_laws", check_coordinate_transform_laws),
        ("gauge_gradient_radiality", check_gauge_gradient_radiality),
        ("gradient_finite_differences", check_gradients_against_finite_differences),
        ("balanced_representative", check_balanced_representative),
        ("damping_rates", check_damping_rates),
        ("gauge_relaxation", check_gauge_relaxation),
        ("penalty_off_is_plain_gd", check_penalty_off_is_plain_gd),
        ("gauge_descent", check_gauge_descent),
        ("dataset_determinism", check_dataset_determinism),
    ];
    let mut all_ok = true;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("PASS {name}"),
            Err(msg) => {
                println!("FAIL {name}: {msg}");
                all_ok = false;
            }
        }
    }
    all_ok
}
