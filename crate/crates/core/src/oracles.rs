//! Independent numerical oracles.
//!
//! These deliberately avoid the analytic code paths they are used to check:
//! gradients are re-derived by central finite differences of the loss
//! values, and relaxation predictions integrate stored damping rates by
//! trapezoidal quadrature. Used by the `validate` subcommand and the test
//! suites.

use crate::gauge::gauge_functional;
use crate::network::{mse_loss, preactivations, Dataset, Grads, Params};

/// Total number of scalar coordinates across the four parameter blocks.
pub fn coord_count(p: &Params) -> usize {
    p.w1.data().len() + p.b1.len() + p.w2.data().len() + p.b2.len()
}

/// Reads coordinate `idx` in the fixed (W1, b1, W2, b2) flattening.
pub fn coord(p: &Params, idx: usize) -> f64 {
    let (n1, n2, n3) = (p.w1.data().len(), p.b1.len(), p.w2.data().len());
    if idx < n1 {
        p.w1.data()[idx]
    } else if idx < n1 + n2 {
        p.b1[idx - n1]
    } else if idx < n1 + n2 + n3 {
        p.w2.data()[idx - n1 - n2]
    } else {
        p.b2[idx - n1 - n2 - n3]
    }
}

fn coord_of_grads(g: &Grads, idx: usize) -> f64 {
    let (n1, n2, n3) = (g.dw1.data().len(), g.db1.len(), g.dw2.data().len());
    if idx < n1 {
        g.dw1.data()[idx]
    } else if idx < n1 + n2 {
        g.db1[idx - n1]
    } else if idx < n1 + n2 + n3 {
        g.dw2.data()[idx - n1 - n2]
    } else {
        g.db2[idx - n1 - n2 - n3]
    }
}

fn set_coord_of_grads(g: &mut Grads, idx: usize, value: f64) {
    let (n1, n2, n3) = (g.dw1.data().len(), g.db1.len(), g.dw2.data().len());
    if idx < n1 {
        g.dw1.data_mut()[idx] = value;
    } else if idx < n1 + n2 {
        g.db1[idx - n1] = value;
    } else if idx < n1 + n2 + n3 {
        g.dw2.data_mut()[idx - n1 - n2] = value;
    } else {
        g.db2[idx - n1 - n2 - n3] = value;
    }
}

/// Clone of `p` with coordinate `idx` shifted by `delta`.
pub fn with_coord_shifted(p: &Params, idx: usize, delta: f64) -> Params {
    let mut q = p.clone();
    let (n1, n2, n3) = (p.w1.data().len(), p.b1.len(), p.w2.data().len());
    if idx < n1 {
        q.w1.data_mut()[idx] += delta;
    } else if idx < n1 + n2 {
        q.b1[idx - n1] += delta;
    } else if idx < n1 + n2 + n3 {
        q.w2.data_mut()[idx - n1 - n2] += delta;
    } else {
        q.b2[idx - n1 - n2 - n3] += delta;
    }
    q
}

/// Central finite differences of the task loss over every coordinate.
pub fn fd_task_gradients(p: &Params, data: &Dataset, h: f64) -> Grads {
    let mut out = Grads::zeros_like(p);
    for idx in 0..coord_count(p) {
        let plus = mse_loss(&with_coord_shifted(p, idx, h), data).expect("finite-difference eval");
        let minus =
            mse_loss(&with_coord_shifted(p, idx, -h), data).expect("finite-difference eval");
        set_coord_of_grads(&mut out, idx, (plus - minus) / (2.0 * h));
    }
    out
}

/// Central finite differences of the gauge functional over every coordinate.
pub fn fd_gauge_gradients(p: &Params, eps: f64, h: f64) -> Grads {
    let mut out = Grads::zeros_like(p);
    for idx in 0..coord_count(p) {
        let plus = gauge_functional(&with_coord_shifted(p, idx, h), eps);
        let minus = gauge_functional(&with_coord_shifted(p, idx, -h), eps);
        set_coord_of_grads(&mut out, idx, (plus - minus) / (2.0 * h));
    }
    out
}

/// Marks coordinates whose loss is differentiable with margin: a W1/b1
/// coordinate is unsafe when some sample's preactivation of the affected
/// unit sits within `margin` of the ReLU kink. W2/b2 coordinates are always
/// safe (the loss is quadratic in them).
pub fn kink_safe_mask(p: &Params, data: &Dataset, margin: f64) -> Vec<bool> {
    let h_dim = p.hidden_dim();
    let d = p.input_dim();
    let mut unit_safe = vec![true; h_dim];
    for x in &data.xs {
        let z = preactivations(p, x);
        for i in 0..h_dim {
            if z[i].abs() < margin {
                unit_safe[i] = false;
            }
        }
    }
    let mut mask = vec![true; coord_count(p)];
    for i in 0..h_dim {
        if !unit_safe[i] {
            for k in 0..d {
                mask[i * d + k] = false;
            }
            mask[h_dim * d + i] = false;
        }
    }
    mask
}

/// Worst masked coordinate disagreement, or `None` when every coordinate
/// satisfies `|a - b| <= max(rel * max(|a|, |b|), abs)`.
///
/// The absolute floor covers finite-difference round-off: loss values of
/// order one evaluated at `h = 1e-6` carry quotient noise around `1e-9`.
pub fn compare_grads_masked(
    analytic: &Grads,
    fd: &Grads,
    mask: &[bool],
    rel: f64,
    abs: f64,
) -> Option<String> {
    let n = mask.len();
    let mut worst: Option<(usize, f64, f64, f64)> = None;
    for idx in 0..n {
        if !mask[idx] {
            continue;
        }
        let a = coord_of_grads(analytic, idx);
        let b = coord_of_grads(fd, idx);
        let err = (a - b).abs();
        let tol = abs.max(rel * a.abs().max(b.abs()));
        if err > tol && worst.map(|(_, _, _, e)| err > e).unwrap_or(true) {
            worst = Some((idx, a, b, err));
        }
    }
    worst.map(|(idx, a, b, err)| {
        format!("coordinate {idx}: analytic {a} vs finite-difference {b} (|diff| = {err})")
    })
}

/// [`compare_grads_masked`] with every coordinate enabled.
pub fn compare_grads(analytic: &Grads, fd: &Grads, rel: f64, abs: f64) -> Option<String> {
    let mask = vec![true; coord_count_of(analytic)];
    compare_grads_masked(analytic, fd, &mask, rel, abs)
}

fn coord_count_of(g: &Grads) -> usize {
    g.dw1.data().len() + g.db1.len() + g.dw2.data().len() + g.db2.len()
}

/// Trapezoidal quadrature of samples `ys` over the grid `xs`.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let mut acc = 0.0;
    for k in 1..xs.len() {
        acc += 0.5 * (ys[k] + ys[k - 1]) * (xs[k] - xs[k - 1]);
    }
    acc
}

/// Relative closeness with an absolute floor.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= abs.max(rel * a.abs().max(b.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let xs = [0.0, 0.5, 1.0, 2.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
        // Integral of 3x + 1 over [0, 2] is 8.
        assert!((trapezoid(&xs, &ys) - 8.0).abs() < 1e-15);
    }

    #[test]
    fn coord_roundtrip_covers_all_blocks() {
        use crate::network::init_params;
        use crate::rng::seeded_rng;
        let p = init_params(2, 3, 2, &mut seeded_rng(1));
        let n = coord_count(&p);
        assert_eq!(n, 3 * 2 + 3 + 2 * 3 + 2);
        for idx in 0..n {
            let shifted = with_coord_shifted(&p, idx, 1.0);
            assert_eq!(coord(&shifted, idx), coord(&p, idx) + 1.0);
            // All other coordinates untouched.
            for other in 0..n {
                if other != idx {
                    assert_eq!(coord(&shifted, other), coord(&p, other));
                }
            }
        }
    }
}
