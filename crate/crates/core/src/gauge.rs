//! Gauge orbit machinery for the neuron-wise rescaling symmetry.
//!
//! For positive per-neuron scales `s` the transformation
//! `W1 -> D W1, b1 -> D b1, W2 -> W2 D^-1, b2 -> b2` (with
//! `D = diag(s)`) leaves the network function exactly invariant, because
//! ReLU is positively homogeneous. Configurations connected by such
//! rescalings form a gauge orbit.
//!
//! Per neuron `i` we track the incoming/outgoing weight norms
//! `n1_i = |W1 row i|`, `n2_i = |W2 col i|` and the log coordinates
//! `alpha = log(n1 + eps)`, `beta = log(n2 + eps)`, `u = alpha + beta`
//! (orbit invariant) and `v = alpha - beta` (the imbalance direction the
//! orbit moves along). The soft gauge-fixing functional
//! `G = (1/H) sum_i v_i^2` penalizes imbalance; its gradient is purely
//! radial in each weight block and vanishes on balanced representatives.

use crate::error::{Error, Result};
use crate::linalg::{dot, l2_norm, Matrix};
use crate::network::{forward, Grads, Params};
use crate::rng::RngStream;

/// Strictly positive per-neuron scales defining a point on the gauge orbit.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeScales {
    s: Vec<f64>,
}

impl GaugeScales {
    /// Validates strict positivity (and finiteness) of every entry.
    pub fn new(s: Vec<f64>) -> Result<Self> {
        for (index, &value) in s.iter().enumerate() {
            // NaN fails both comparisons and is rejected.
            if value.is_nan() || value <= 0.0 || !value.is_finite() {
                return Err(Error::NonPositiveScale { index, value });
            }
        }
        Ok(GaugeScales { s })
    }

    /// The identity element of the rescaling group.
    pub fn ones(h: usize) -> Self {
        GaugeScales { s: vec![1.0; h] }
    }

    /// Log-uniform random scales `s_i = exp(U(-1, 1))`, symmetric on the orbit.
    pub fn random_log_uniform(h: usize, rng: &mut RngStream) -> Self {
        GaugeScales {
            s: (0..h).map(|_| rng.uniform(-1.0, 1.0).exp()).collect(),
        }
    }

    /// Elementwise reciprocal (the group inverse).
    pub fn inverse(&self) -> Self {
        GaugeScales {
            s: self.s.iter().map(|x| 1.0 / x).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.s
    }
}

/// Per-neuron gauge-adapted coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeCoords {
    pub n1: Vec<f64>,
    pub n2: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl GaugeCoords {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn mean_abs_v(&self) -> f64 {
        mean(self.v.iter().map(|x| x.abs()))
    }

    pub fn max_abs_v(&self) -> f64 {
        self.v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn mean_u(&self) -> f64 {
        mean(self.u.iter().copied())
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for x in it {
        sum += x;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Task-induced radial forces: projections of the task gradient onto the
/// log-norm directions of each weight block.
#[derive(Debug, Clone)]
pub struct RadialForces {
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    /// Neurons whose force was zeroed because a block norm vanished.
    pub degenerate: Vec<bool>,
}

/// Per-neuron damping rates `kappa_i` of the imbalance coordinate.
#[derive(Debug, Clone)]
pub struct DampingRates {
    pub kappa: Vec<f64>,
}

/// Gauge-functional gradient together with degenerate-neuron flags.
#[derive(Debug, Clone)]
pub struct GaugeGrads {
    pub grads: Grads,
    /// Neurons whose radial gradient was zeroed because a block norm vanished.
    pub degenerate: Vec<bool>,
}

/// Balanced-representative scales together with degenerate-neuron flags.
#[derive(Debug, Clone)]
pub struct BalancedScales {
    pub scales: GaugeScales,
    /// Neurons left untouched because both block norms vanished.
    pub degenerate: Vec<bool>,
}

/// Applies the neuron-wise rescaling `W1 -> D W1, b1 -> D b1, W2 -> W2 D^-1`.
///
/// The outgoing block divides by `s_i` (rather than multiplying by a
/// precomputed reciprocal), so power-of-two scales transform bit-exactly.
pub fn apply_gauge_transform(p: &Params, s: &GaugeScales) -> Params {
    assert_eq!(
        s.len(),
        p.hidden_dim(),
        "gauge scales length {} does not match hidden width {}",
        s.len(),
        p.hidden_dim()
    );
    let mut w1 = p.w1.clone();
    let mut b1 = p.b1.clone();
    let mut w2 = p.w2.clone();
    for i in 0..p.hidden_dim() {
        let si = s.as_slice()[i];
        for x in w1.row_mut(i) {
            *x *= si;
        }
        b1[i] *= si;
        for j in 0..p.output_dim() {
            w2.set(j, i, w2.get(j, i) / si);
        }
    }
    Params::new(w1, b1, w2, p.b2.clone())
}

/// Euclidean norms of incoming rows and outgoing columns per neuron.
pub fn neuron_norms(p: &Params) -> (Vec<f64>, Vec<f64>) {
    let h = p.hidden_dim();
    let n1 = (0..h).map(|i| l2_norm(p.w1.row(i))).collect();
    let n2 = (0..h)
        .map(|i| {
            let col: Vec<f64> = (0..p.output_dim()).map(|j| p.w2.get(j, i)).collect();
            l2_norm(&col)
        })
        .collect();
    (n1, n2)
}

fn coords_from_norms(n1: Vec<f64>, n2: Vec<f64>, eps: f64) -> GaugeCoords {
    let alpha: Vec<f64> = n1.iter().map(|x| (x + eps).ln()).collect();
    let beta: Vec<f64> = n2.iter().map(|x| (x + eps).ln()).collect();
    let u = alpha.iter().zip(&beta).map(|(a, b)| a + b).collect();
    let v = alpha.iter().zip(&beta).map(|(a, b)| a - b).collect();
    GaugeCoords {
        n1,
        n2,
        alpha,
        beta,
        u,
        v,
    }
}

/// Gauge-adapted coordinates of `p`.
pub fn gauge_coords(p: &Params, eps: f64) -> GaugeCoords {
    assert!(eps > 0.0, "eps must be positive");
    let (n1, n2) = neuron_norms(p);
    coords_from_norms(n1, n2, eps)
}

/// Value and gradient of the gauge functional from a single norms pass,
/// so the two can never disagree within one step.
pub fn gauge_value_and_grads(p: &Params, eps: f64) -> (f64, GaugeGrads) {
    assert!(eps > 0.0, "eps must be positive");
    let h = p.hidden_dim();
    let coords = gauge_coords(p, eps);
    let g_value = coords.v.iter().map(|v| v * v).sum::<f64>() / h as f64;

    let mut grads = Grads::zeros_like(p);
    let mut degenerate = vec![false; h];
    for i in 0..h {
        let (n1, n2, v) = (coords.n1[i], coords.n2[i], coords.v[i]);
        // The radial formula has a removable 0/0 at zero norm: the limit of
        // the magnitude is finite only through the direction, so the block
        // gradient is defined as zero and the neuron flagged.
        if n1 == 0.0 || n2 == 0.0 {
            degenerate[i] = true;
            continue;
        }
        let c1 = (2.0 / h as f64) * v / (n1 * (n1 + eps));
        for (g, w) in grads.dw1.row_mut(i).iter_mut().zip(p.w1.row(i)) {
            *g = c1 * w;
        }
        let c2 = -(2.0 / h as f64) * v / (n2 * (n2 + eps));
        for j in 0..p.output_dim() {
            grads.dw2.set(j, i, c2 * p.w2.get(j, i));
        }
    }
    (
        g_value,
        GaugeGrads {
            grads,
            degenerate,
        },
    )
}

/// The soft gauge-fixing functional `G = (1/H) sum_i [log(n1_i+eps) - log(n2_i+eps)]^2`.
pub fn gauge_functional(p: &Params, eps: f64) -> f64 {
    gauge_value_and_grads(p, eps).0
}

/// Closed-form gradient of [`gauge_functional`]; bias gradients are zero.
pub fn gauge_gradients(p: &Params, eps: f64) -> GaugeGrads {
    gauge_value_and_grads(p, eps).1
}

/// The rescaling `s*_i = sqrt((n2_i+eps)/(n1_i+eps))` that balances each
/// neuron; a neuron with both norms zero keeps `s*_i = 1` and is flagged.
pub fn balanced_rescaling(p: &Params, eps: f64) -> BalancedScales {
    assert!(eps > 0.0, "eps must be positive");
    let (n1, n2) = neuron_norms(p);
    let mut degenerate = vec![false; n1.len()];
    let s = n1
        .iter()
        .zip(&n2)
        .enumerate()
        .map(|(i, (a, b))| {
            if *a == 0.0 && *b == 0.0 {
                degenerate[i] = true;
                1.0
            } else {
                ((b + eps) / (a + eps)).sqrt()
            }
        })
        .collect();
    BalancedScales {
        scales: GaugeScales::new(s).expect("balanced scales are positive by construction"),
        degenerate,
    }
}

/// Mean absolute output deviation between `p` and its gauge transform over
/// the given inputs (mean over inputs and output dimensions).
pub fn invariance_error(p: &Params, s: &GaugeScales, inputs: &[Vec<f64>]) -> f64 {
    assert!(!inputs.is_empty(), "invariance_error: empty input set");
    let transformed = apply_gauge_transform(p, s);
    let mut total = 0.0;
    let mut count = 0usize;
    for x in inputs {
        let a = forward(p, x);
        let b = forward(&transformed, x);
        for (ai, bi) in a.iter().zip(&b) {
            total += (ai - bi).abs();
            count += 1;
        }
    }
    total / count as f64
}

/// Damping rates from norms: `kappa_i = (2 lambda / H) [(n1_i+eps)^-2 + (n2_i+eps)^-2]`.
pub fn damping_from_norms(n1: &[f64], n2: &[f64], lambda: f64, eps: f64, h: usize) -> Vec<f64> {
    n1.iter()
        .zip(n2)
        .map(|(a, b)| {
            (2.0 * lambda / h as f64) * (1.0 / ((a + eps) * (a + eps)) + 1.0 / ((b + eps) * (b + eps)))
        })
        .collect()
}

/// Per-neuron damping rates of the imbalance coordinate under the penalty.
pub fn damping_rates(p: &Params, lambda: f64, eps: f64) -> DampingRates {
    assert!(lambda >= 0.0, "lambda must be nonnegative");
    assert!(eps > 0.0, "eps must be positive");
    let (n1, n2) = neuron_norms(p);
    DampingRates {
        kappa: damping_from_norms(&n1, &n2, lambda, eps, p.hidden_dim()),
    }
}

/// Task-induced radial forces `F1_i = <grad_w alpha_i, grad_w L>`,
/// `F2_i = <grad_a beta_i, grad_a L>`; zero-norm blocks yield zero force
/// and a flag.
pub fn radial_forces(p: &Params, g: &Grads, eps: f64) -> RadialForces {
    assert!(eps > 0.0, "eps must be positive");
    let h = p.hidden_dim();
    let (n1, n2) = neuron_norms(p);
    let mut f1 = vec![0.0; h];
    let mut f2 = vec![0.0; h];
    let mut degenerate = vec![false; h];
    for i in 0..h {
        if n1[i] == 0.0 || n2[i] == 0.0 {
            degenerate[i] = true;
            continue;
        }
        f1[i] = dot(p.w1.row(i), g.dw1.row(i)) / (n1[i] * (n1[i] + eps));
        let mut acc = 0.0;
        for j in 0..p.output_dim() {
            acc += p.w2.get(j, i) * g.dw2.get(j, i);
        }
        f2[i] = acc / (n2[i] * (n2[i] + eps));
    }
    RadialForces {
        f1,
        f2,
        degenerate,
    }
}

/// Predicted instantaneous imbalance velocity
/// `v_dot_i = -(F1_i - F2_i) - kappa_i v_i`.
pub fn predicted_v_dot(coords: &GaugeCoords, forces: &RadialForces, kappa: &DampingRates) -> Vec<f64> {
    assert_eq!(coords.len(), forces.f1.len());
    assert_eq!(coords.len(), kappa.kappa.len());
    (0..coords.len())
        .map(|i| -(forces.f1[i] - forces.f2[i]) - kappa.kappa[i] * coords.v[i])
        .collect()
}

/// Gauge-only drift of the invariant coordinate:
/// `u_dot_i = (2 lambda / H) v_i [-(n1_i+eps)^-2 + (n2_i+eps)^-2]`.
///
/// Vanishes at balanced norms, so the penalty leaves `u` untouched to
/// leading order near the balanced slice.
pub fn gauge_only_u_dot(coords: &GaugeCoords, lambda: f64, eps: f64, h: usize) -> Vec<f64> {
    assert!(lambda >= 0.0, "lambda must be nonnegative");
    (0..coords.len())
        .map(|i| {
            let a = coords.n1[i] + eps;
            let b = coords.n2[i] + eps;
            (2.0 * lambda / h as f64) * coords.v[i] * (-1.0 / (a * a) + 1.0 / (b * b))
        })
        .collect()
}

/// Convenience constructor for tests and the CLI: a width-`h` network with
/// prescribed row/column norms (random directions).
pub fn params_with_norms(
    d: usize,
    h: usize,
    m: usize,
    n1: &[f64],
    n2: &[f64],
    rng: &mut RngStream,
) -> Params {
    assert_eq!(n1.len(), h);
    assert_eq!(n2.len(), h);
    let mut w1 = Matrix::zeros(h, d);
    let mut w2 = Matrix::zeros(m, h);
    for i in 0..h {
        let mut row: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
        let norm = l2_norm(&row);
        for x in &mut row {
            *x *= n1[i] / norm;
        }
        w1.row_mut(i).copy_from_slice(&row);

        let col: Vec<f64> = (0..m).map(|_| rng.next_gaussian()).collect();
        let norm = l2_norm(&col);
        for (j, x) in col.iter().enumerate() {
            w2.set(j, i, x * n2[i] / norm);
        }
    }
    Params::new(w1, vec![0.0; h], w2, vec![0.0; m])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_params;
    use crate::rng::seeded_rng;
    use proptest::prelude::*;

    fn rel_close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
    }

    proptest! {
        /// The forward pass is orbit-invariant for arbitrary positive
        /// scales, and bit-exact for powers of two.
        #[test]
        fn forward_is_orbit_invariant(
            seed in 0u64..1_000,
            log_scales in proptest::collection::vec(-1.0f64..1.0, 6),
            pow2_exps in proptest::collection::vec(-3i32..4, 6),
        ) {
            let mut rng = seeded_rng(seed);
            let p = init_params(2, 6, 1, &mut rng);
            let xs: Vec<Vec<f64>> = (0..8)
                .map(|_| vec![rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)])
                .collect();

            let s = GaugeScales::new(log_scales.iter().map(|x| x.exp()).collect()).unwrap();
            let q = apply_gauge_transform(&p, &s);
            for x in &xs {
                let (a, b) = (forward(&p, x)[0], forward(&q, x)[0]);
                prop_assert!((a - b).abs() <= 1e-12, "orbit moved outputs: {a} vs {b}");
            }

            let s2 = GaugeScales::new(pow2_exps.iter().map(|e| 2f64.powi(*e)).collect()).unwrap();
            let q2 = apply_gauge_transform(&p, &s2);
            for x in &xs {
                prop_assert_eq!(forward(&p, x), forward(&q2, x));
            }
        }

        /// The per-neuron norm product n1 * n2 is an orbit invariant.
        #[test]
        fn norm_product_is_orbit_invariant(
            seed in 0u64..1_000,
            log_scales in proptest::collection::vec(-1.0f64..1.0, 5),
        ) {
            let mut rng = seeded_rng(seed);
            let p = init_params(3, 5, 2, &mut rng);
            let s = GaugeScales::new(log_scales.iter().map(|x| x.exp()).collect()).unwrap();
            let (n1, n2) = neuron_norms(&p);
            let (m1, m2) = neuron_norms(&apply_gauge_transform(&p, &s));
            for i in 0..5 {
                let before = n1[i] * n2[i];
                let after = m1[i] * m2[i];
                prop_assert!(
                    (before - after).abs() <= 1e-12 * before.max(1e-300),
                    "product drifted: {before} vs {after}"
                );
            }
        }
    }

    #[test]
    fn identity_scales_leave_params_bitwise_unchanged() {
        let p = init_params(2, 5, 1, &mut seeded_rng(1));
        let q = apply_gauge_transform(&p, &GaugeScales::ones(5));
        assert_eq!(p, q);
    }

    #[test]
    fn transform_then_inverse_recovers_params() {
        let mut rng = seeded_rng(2);
        let p = init_params(2, 5, 1, &mut rng);
        let s = GaugeScales::random_log_uniform(5, &mut rng);
        let q = apply_gauge_transform(&apply_gauge_transform(&p, &s), &s.inverse());
        for (a, b) in p.w1.data().iter().zip(q.w1.data()) {
            assert!(rel_close(*a, *b, 1e-15), "{a} vs {b}");
        }
        for (a, b) in p.w2.data().iter().zip(q.w2.data()) {
            assert!(rel_close(*a, *b, 1e-15), "{a} vs {b}");
        }
    }

    #[test]
    fn transform_then_inverse_is_exact_for_powers_of_two() {
        let mut rng = seeded_rng(3);
        let p = init_params(3, 4, 2, &mut rng);
        let s = GaugeScales::new(vec![2.0, 0.5, 8.0, 0.25]).unwrap();
        let q = apply_gauge_transform(&apply_gauge_transform(&p, &s), &s.inverse());
        assert_eq!(p, q);
    }

    #[test]
    fn single_generator_touches_one_neuron() {
        let p = init_params(2, 3, 1, &mut seeded_rng(4));
        let s = GaugeScales::new(vec![1.0, 2.0, 1.0]).unwrap();
        let q = apply_gauge_transform(&p, &s);
        for k in 0..2 {
            assert_eq!(q.w1.get(0, k), p.w1.get(0, k));
            assert_eq!(q.w1.get(1, k), 2.0 * p.w1.get(1, k));
            assert_eq!(q.w1.get(2, k), p.w1.get(2, k));
        }
        assert_eq!(q.b1[1], 2.0 * p.b1[1]);
        assert_eq!(q.w2.get(0, 1), p.w2.get(0, 1) / 2.0);
        assert_eq!(q.w2.get(0, 0), p.w2.get(0, 0));
        assert_eq!(q.w2.get(0, 2), p.w2.get(0, 2));
        assert_eq!(q.b2, p.b2);
    }

    #[test]
    fn non_positive_scale_is_rejected() {
        assert!(GaugeScales::new(vec![1.0, 0.0]).is_err());
        assert!(GaugeScales::new(vec![1.0, -2.0]).is_err());
        assert!(GaugeScales::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn norms_of_zero_matrix_are_zero() {
        let p = Params::new(Matrix::zeros(3, 2), vec![0.0; 3], Matrix::zeros(1, 3), vec![0.0]);
        let (n1, n2) = neuron_norms(&p);
        assert!(n1.iter().all(|&x| x == 0.0));
        assert!(n2.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn norms_follow_the_transform_law() {
        let mut rng = seeded_rng(5);
        let p = init_params(3, 6, 2, &mut rng);
        let s = GaugeScales::random_log_uniform(6, &mut rng);
        let (n1, n2) = neuron_norms(&p);
        let (m1, m2) = neuron_norms(&apply_gauge_transform(&p, &s));
        for i in 0..6 {
            let si = s.as_slice()[i];
            assert!(rel_close(m1[i], si * n1[i], 1e-13));
            assert!(rel_close(m2[i], n2[i] / si, 1e-13));
            // The product n1 * n2 is orbit-invariant.
            assert!(rel_close(m1[i] * m2[i], n1[i] * n2[i], 1e-12));
        }
    }

    #[test]
    fn norms_hand_computed_single_neuron() {
        let p = Params::new(
            Matrix::from_vec(1, 2, vec![3.0, 4.0]),
            vec![0.0],
            Matrix::from_vec(1, 1, vec![5.0]),
            vec![0.0],
        );
        let (n1, n2) = neuron_norms(&p);
        assert_eq!(n1, vec![5.0]);
        assert_eq!(n2, vec![5.0]);
    }

    #[test]
    fn functional_vanishes_when_balanced() {
        let mut rng = seeded_rng(6);
        let p = params_with_norms(2, 4, 1, &[1.5, 0.3, 2.0, 0.9], &[1.5, 0.3, 2.0, 0.9], &mut rng);
        assert!(gauge_functional(&p, 1e-12) < 1e-24);
    }

    #[test]
    fn functional_log_ratio_e_gives_one() {
        // H=1 with n1 = e * n2 and norms of order 1: G = (log e)^2 = 1.
        let mut rng = seeded_rng(7);
        let e = std::f64::consts::E;
        let p = params_with_norms(2, 1, 1, &[e * 0.8], &[0.8], &mut rng);
        let g = gauge_functional(&p, 1e-12);
        assert!((g - 1.0).abs() < 1e-9, "G = {g}");
    }

    #[test]
    fn functional_shift_under_global_doubling() {
        // Doubling W1 and halving W2 shifts every v_i by 2 log 2; the
        // expected new G follows from the shift law applied to measured v.
        let mut rng = seeded_rng(8);
        let p = init_params(2, 5, 1, &mut rng);
        let eps = 1e-12;
        let coords = gauge_coords(&p, eps);
        let shift = 2.0 * std::f64::consts::LN_2;
        let expected: f64 =
            coords.v.iter().map(|v| (v + shift) * (v + shift)).sum::<f64>() / 5.0;
        let s = GaugeScales::new(vec![2.0; 5]).unwrap();
        let g_after = gauge_functional(&apply_gauge_transform(&p, &s), eps);
        assert!(rel_close(g_after, expected, 1e-10), "{g_after} vs {expected}");
    }

    #[test]
    fn gradient_vanishes_when_balanced() {
        let mut rng = seeded_rng(9);
        let p = params_with_norms(3, 4, 2, &[1.0, 2.0, 0.5, 1.3], &[1.0, 2.0, 0.5, 1.3], &mut rng);
        let gg = gauge_gradients(&p, 1e-8);
        // v is not exactly zero in floating point, but far below 1e-12.
        for x in gg.grads.dw1.data() {
            assert!(x.abs() < 1e-12);
        }
        for x in gg.grads.dw2.data() {
            assert!(x.abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seeded_rng(10);
        let p = init_params(2, 4, 1, &mut rng);
        let eps = 1e-8;
        let gg = gauge_gradients(&p, eps);
        let fd = crate::oracles::fd_gauge_gradients(&p, eps, 1e-6);
        let report = crate::oracles::compare_grads(&gg.grads, &fd, 1e-6, 1e-9);
        assert!(report.is_none(), "{}", report.unwrap());
    }

    #[test]
    fn gradient_is_radial_with_zero_bias_blocks() {
        let mut rng = seeded_rng(11);
        let p = init_params(3, 5, 2, &mut rng);
        let gg = gauge_gradients(&p, 1e-8);
        assert!(gg.grads.db1.iter().all(|&x| x == 0.0));
        assert!(gg.grads.db2.iter().all(|&x| x == 0.0));
        let coords = gauge_coords(&p, 1e-8);
        for i in 0..5 {
            if coords.v[i] == 0.0 {
                continue;
            }
            let gw = gg.grads.dw1.row(i);
            let cos = dot(gw, p.w1.row(i)) / (l2_norm(gw) * l2_norm(p.w1.row(i)));
            assert!((cos.abs() - 1.0).abs() <= 1e-12, "cos = {cos}");
        }
    }

    #[test]
    fn gradient_zero_norm_neuron_is_flagged_zero() {
        let mut w1 = Matrix::zeros(2, 2);
        w1.row_mut(1).copy_from_slice(&[1.0, 1.0]);
        let w2 = Matrix::from_vec(1, 2, vec![1.0, 2.0]);
        let p = Params::new(w1, vec![0.0; 2], w2, vec![0.0]);
        let gg = gauge_gradients(&p, 1e-8);
        assert!(gg.degenerate[0]);
        assert!(!gg.degenerate[1]);
        assert_eq!(gg.grads.dw1.row(0), &[0.0, 0.0]);
        assert_eq!(gg.grads.dw2.get(0, 0), 0.0);
    }

    #[test]
    fn coords_balanced_network_has_zero_v() {
        let mut rng = seeded_rng(12);
        let p = params_with_norms(2, 3, 1, &[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], &mut rng);
        let coords = gauge_coords(&p, 1e-12);
        for (v, u) in coords.v.iter().zip(&coords.u) {
            assert!(v.abs() < 1e-12);
            assert!(u.abs() < 1e-9);
        }
    }

    #[test]
    fn coords_transform_laws() {
        let mut rng = seeded_rng(13);
        let p = init_params(2, 6, 1, &mut rng);
        let s = GaugeScales::random_log_uniform(6, &mut rng);
        // eps -> 0 regime: the O(eps / n) correction to u under the
        // transform must sit far below the 1e-12 tolerance.
        let eps = 1e-15;
        let before = gauge_coords(&p, eps);
        let after = gauge_coords(&apply_gauge_transform(&p, &s), eps);
        for i in 0..6 {
            assert!((after.u[i] - before.u[i]).abs() <= 1e-12, "u drifted");
            let expected = before.v[i] + 2.0 * s.as_slice()[i].ln();
            assert!((after.v[i] - expected).abs() <= 1e-12, "v shift law");
        }
    }

    #[test]
    fn balanced_rescaling_is_a_fixed_point_when_balanced() {
        let mut rng = seeded_rng(14);
        let p = params_with_norms(2, 3, 1, &[0.7, 1.1, 2.0], &[0.7, 1.1, 2.0], &mut rng);
        let bs = balanced_rescaling(&p, 1e-12);
        for &s in bs.scales.as_slice() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn balanced_rescaling_hand_case() {
        // n1 = 4, n2 = 1: s* = 1/2 and both norms become 2.
        let mut rng = seeded_rng(15);
        let p = params_with_norms(2, 1, 1, &[4.0], &[1.0], &mut rng);
        let bs = balanced_rescaling(&p, 1e-12);
        assert!((bs.scales.as_slice()[0] - 0.5).abs() < 1e-12);
        let (n1, n2) = neuron_norms(&apply_gauge_transform(&p, &bs.scales));
        assert!((n1[0] - 2.0).abs() < 1e-12);
        assert!((n2[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn balanced_rescaling_reaches_tiny_g_and_is_idempotent() {
        let mut rng = seeded_rng(16);
        for _ in 0..20 {
            let h = 6;
            let n1: Vec<f64> = (0..h).map(|_| rng.uniform(0.1, 10.0)).collect();
            let n2: Vec<f64> = (0..h).map(|_| rng.uniform(0.1, 10.0)).collect();
            let p = params_with_norms(2, h, 1, &n1, &n2, &mut rng);
            let eps = 1e-12;
            let bs = balanced_rescaling(&p, eps);
            let q = apply_gauge_transform(&p, &bs.scales);
            let g1 = gauge_functional(&q, eps);
            assert!(g1 <= 1e-12, "G after balancing = {g1}");
            let bs2 = balanced_rescaling(&q, eps);
            let g2 = gauge_functional(&apply_gauge_transform(&q, &bs2.scales), eps);
            assert!((g1 - g2).abs() < 1e-12);
        }
    }

    #[test]
    fn balanced_rescaling_flags_doubly_dead_neuron() {
        let mut w1 = Matrix::zeros(2, 2);
        w1.row_mut(1).copy_from_slice(&[1.0, 0.0]);
        let mut w2 = Matrix::zeros(1, 2);
        w2.set(0, 1, 3.0);
        let p = Params::new(w1, vec![0.0; 2], w2, vec![0.0]);
        let bs = balanced_rescaling(&p, 1e-8);
        assert!(bs.degenerate[0]);
        assert_eq!(bs.scales.as_slice()[0], 1.0);
        assert!(!bs.degenerate[1]);
    }

    #[test]
    fn invariance_error_identity_is_exactly_zero() {
        let mut rng = seeded_rng(17);
        let p = init_params(1, 4, 1, &mut rng);
        let xs: Vec<Vec<f64>> = (0..16).map(|_| vec![rng.uniform(-3.0, 3.0)]).collect();
        assert_eq!(invariance_error(&p, &GaugeScales::ones(4), &xs), 0.0);
    }

    #[test]
    fn invariance_error_power_of_two_scales_exactly_zero() {
        let mut rng = seeded_rng(18);
        let p = init_params(1, 4, 1, &mut rng);
        let xs: Vec<Vec<f64>> = (0..16).map(|_| vec![rng.uniform(-3.0, 3.0)]).collect();
        let s = GaugeScales::new(vec![2.0, 0.5, 4.0, 0.125]).unwrap();
        assert_eq!(invariance_error(&p, &s, &xs), 0.0);
    }

    #[test]
    fn invariance_error_random_scales_at_roundoff() {
        let mut rng = seeded_rng(19);
        let p = init_params(1, 20, 1, &mut rng);
        let xs: Vec<Vec<f64>> = (0..64).map(|_| vec![rng.uniform(-3.0, 3.0)]).collect();
        for _ in 0..200 {
            let s = GaugeScales::random_log_uniform(20, &mut rng);
            let delta = invariance_error(&p, &s, &xs);
            assert!(delta <= 1e-12, "delta = {delta}");
        }
    }

    #[test]
    fn damping_zero_lambda_is_zero() {
        let p = init_params(2, 4, 1, &mut seeded_rng(20));
        let k = damping_rates(&p, 0.0, 1e-8);
        assert!(k.kappa.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn damping_hand_case_unit_norms() {
        // H=1, n1=n2=1, lambda=0.5: kappa = 2*0.5*(1+1)/1 = 2.
        let mut rng = seeded_rng(21);
        let p = params_with_norms(2, 1, 1, &[1.0], &[1.0], &mut rng);
        let k = damping_rates(&p, 0.5, 1e-12);
        assert!((k.kappa[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn damping_balanced_regime_estimate() {
        // Near n1 = n2 = n: kappa ~ (4 lambda / H) / (n+eps)^2.
        let mut rng = seeded_rng(22);
        let h = 4;
        let n = 1.7;
        let p = params_with_norms(2, h, 1, &[n; 4], &[n; 4], &mut rng);
        let lambda = 0.3;
        let k = damping_rates(&p, lambda, 1e-8);
        let estimate = 4.0 * lambda / h as f64 / (n * n);
        for &kappa in &k.kappa {
            assert!(rel_close(kappa, estimate, 1e-6));
        }
    }

    #[test]
    fn radial_forces_zero_gradient_gives_zero() {
        let p = init_params(2, 3, 1, &mut seeded_rng(23));
        let g = Grads::zeros_like(&p);
        let f = radial_forces(&p, &g, 1e-8);
        assert!(f.f1.iter().all(|&x| x == 0.0));
        assert!(f.f2.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn radial_force_orthogonal_gradient_vanishes() {
        // Gradient orthogonal to w_i in block i has no radial component.
        let w1 = Matrix::from_vec(1, 2, vec![1.0, 0.0]);
        let w2 = Matrix::from_vec(1, 1, vec![1.0]);
        let p = Params::new(w1, vec![0.0], w2, vec![0.0]);
        let mut g = Grads::zeros_like(&p);
        g.dw1.row_mut(0).copy_from_slice(&[0.0, 5.0]);
        let f = radial_forces(&p, &g, 1e-8);
        assert_eq!(f.f1[0], 0.0);
    }

    #[test]
    fn radial_force_predicts_alpha_velocity_to_first_order() {
        // A pure task-gradient step of size h changes alpha_i by
        // -F1_i * h + O(h^2): halving h must shrink the residual ~4x.
        use crate::network::{task_gradients, Dataset, Split};
        let mut rng = seeded_rng(24);
        let p = init_params(2, 4, 1, &mut rng);
        let xs: Vec<Vec<f64>> = (0..8)
            .map(|_| vec![rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)])
            .collect();
        let ys: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.uniform(-1.0, 1.0)]).collect();
        let data = Dataset::new(xs, ys, Split::Train).unwrap();
        let g = task_gradients(&p, &data).unwrap();
        let eps = 1e-8;
        let forces = radial_forces(&p, &g, eps);

        let alpha_after = |h: f64| -> Vec<f64> {
            let mut stepped = p.clone();
            stepped.axpy(-h, &g);
            gauge_coords(&stepped, eps).alpha
        };
        let alpha0 = gauge_coords(&p, eps).alpha;
        for i in 0..4 {
            let res = |h: f64| (alpha_after(h)[i] - alpha0[i]) - (-forces.f1[i] * h);
            let r1 = res(1e-3).abs();
            let r2 = res(5e-4).abs();
            // First-order match with O(h^2) residual.
            assert!(r1 <= 1e-4, "residual {r1} too large for first-order match");
            if r1 > 1e-12 {
                let ratio = r1 / r2.max(1e-300);
                assert!(ratio > 2.5, "residual ratio {ratio} not O(h^2)");
            }
        }
    }

    #[test]
    fn predicted_v_dot_equilibrium_and_substitution() {
        let coords = coords_from_norms(vec![1.0], vec![1.0], 1e-8);
        let forces = RadialForces {
            f1: vec![0.0],
            f2: vec![0.0],
            degenerate: vec![false],
        };
        let kappa = DampingRates { kappa: vec![2.0] };
        // v = 0, forces = 0: equilibrium.
        assert_eq!(predicted_v_dot(&coords, &forces, &kappa), vec![0.0]);
        // v = 1, kappa = 2, forces = 0: v_dot = -2.
        let mut c2 = coords.clone();
        c2.v = vec![1.0];
        assert_eq!(predicted_v_dot(&c2, &forces, &kappa), vec![-2.0]);
    }

    #[test]
    fn gauge_only_u_dot_vanishes_when_balanced_or_unforced() {
        let balanced = coords_from_norms(vec![1.3, 0.4], vec![1.3, 0.4], 1e-8);
        for x in gauge_only_u_dot(&balanced, 0.7, 1e-8, 2) {
            assert_eq!(x, 0.0);
        }
        let mut skew = coords_from_norms(vec![2.0, 0.5], vec![1.0, 1.5], 1e-8);
        skew.v = vec![0.0, 0.0];
        for x in gauge_only_u_dot(&skew, 0.7, 1e-8, 2) {
            assert_eq!(x, 0.0);
        }
    }
}
