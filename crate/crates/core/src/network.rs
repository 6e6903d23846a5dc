//! One-hidden-layer ReLU network: parameters, forward pass, task loss and
//! exact analytic gradients.
//!
//! The model is `f(x) = W2 * relu(W1 x + b1) + b2` with `W1: H x d`,
//! `b1: H`, `W2: m x H`, `b2: m`. Gradients are closed-form backprop over
//! the full batch; the ReLU subgradient at exactly 0 is taken as 0.

use crate::error::{Error, Result};
use crate::linalg::{matvec, Matrix};
use crate::rng::RngStream;

/// Full parameter set of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl Params {
    /// Validates shape consistency: `W1.rows = b1.len = W2.cols`, `W2.rows = b2.len`.
    pub fn new(w1: Matrix, b1: Vec<f64>, w2: Matrix, b2: Vec<f64>) -> Self {
        assert_eq!(w1.rows(), b1.len(), "W1 rows must match b1 length");
        assert_eq!(w2.cols(), w1.rows(), "W2 cols must match hidden width");
        assert_eq!(w2.rows(), b2.len(), "W2 rows must match b2 length");
        Params { w1, b1, w2, b2 }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.rows()
    }

    /// Largest absolute entry over all four blocks.
    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for &x in self
            .w1
            .data()
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.data().iter())
            .chain(self.b2.iter())
        {
            m = m.max(x.abs());
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.w1.data().iter().all(|x| x.is_finite())
            && self.b1.iter().all(|x| x.is_finite())
            && self.w2.data().iter().all(|x| x.is_finite())
            && self.b2.iter().all(|x| x.is_finite())
    }

    /// In-place `self += c * g`, all four blocks.
    pub fn axpy(&mut self, c: f64, g: &Grads) {
        for (p, q) in self.w1.data_mut().iter_mut().zip(g.dw1.data()) {
            *p += c * q;
        }
        for (p, q) in self.b1.iter_mut().zip(&g.db1) {
            *p += c * q;
        }
        for (p, q) in self.w2.data_mut().iter_mut().zip(g.dw2.data()) {
            *p += c * q;
        }
        for (p, q) in self.b2.iter_mut().zip(&g.db2) {
            *p += c * q;
        }
    }
}

/// Gradient (or velocity) blocks, shape-matched to [`Params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub dw1: Matrix,
    pub db1: Vec<f64>,
    pub dw2: Matrix,
    pub db2: Vec<f64>,
}

impl Grads {
    pub fn zeros_like(p: &Params) -> Self {
        Grads {
            dw1: Matrix::zeros(p.w1.rows(), p.w1.cols()),
            db1: vec![0.0; p.b1.len()],
            dw2: Matrix::zeros(p.w2.rows(), p.w2.cols()),
            db2: vec![0.0; p.b2.len()],
        }
    }

    /// In-place `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &Grads) {
        for (p, q) in self.dw1.data_mut().iter_mut().zip(other.dw1.data()) {
            *p += c * q;
        }
        for (p, q) in self.db1.iter_mut().zip(&other.db1) {
            *p += c * q;
        }
        for (p, q) in self.dw2.data_mut().iter_mut().zip(other.dw2.data()) {
            *p += c * q;
        }
        for (p, q) in self.db2.iter_mut().zip(&other.db2) {
            *p += c * q;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for x in self.dw1.data_mut() {
            *x *= c;
        }
        for x in &mut self.db1 {
            *x *= c;
        }
        for x in self.dw2.data_mut() {
            *x *= c;
        }
        for x in &mut self.db2 {
            *x *= c;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.dw1.data().iter().all(|x| x.is_finite())
            && self.db1.iter().all(|x| x.is_finite())
            && self.dw2.data().iter().all(|x| x.is_finite())
            && self.db2.iter().all(|x| x.is_finite())
    }
}

/// Which split a dataset belongs to; recorded for provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

/// A supervised regression dataset with uniform input/target dimensions.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
    pub split: Split,
}

impl Dataset {
    pub fn new(xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>>, split: Split) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::EmptyDataset);
        }
        let d = xs[0].len();
        let m = ys[0].len();
        if xs.iter().any(|x| x.len() != d) || ys.iter().any(|y| y.len() != m) {
            return Err(Error::InconsistentDataset);
        }
        Ok(Dataset { xs, ys, split })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.xs[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.ys[0].len()
    }
}

/// Random initialization: weights `N(0, 1/fan_in)` per layer, zero biases.
///
/// Draw order is fixed (W1 row-major, then W2 row-major) so a given seed
/// always produces the same parameters.
pub fn init_params(d: usize, h: usize, m: usize, rng: &mut RngStream) -> Params {
    assert!(d >= 1 && h >= 1 && m >= 1, "init_params: dims must be >= 1");
    let std1 = (1.0 / d as f64).sqrt();
    let mut w1 = Matrix::zeros(h, d);
    for x in w1.data_mut() {
        *x = std1 * rng.next_gaussian();
    }
    let std2 = (1.0 / h as f64).sqrt();
    let mut w2 = Matrix::zeros(m, h);
    for x in w2.data_mut() {
        *x = std2 * rng.next_gaussian();
    }
    Params::new(w1, vec![0.0; h], w2, vec![0.0; m])
}

/// Hidden preactivations `z = W1 x + b1`.
pub fn preactivations(p: &Params, x: &[f64]) -> Vec<f64> {
    let mut z = matvec(&p.w1, x);
    for (zi, bi) in z.iter_mut().zip(&p.b1) {
        *zi += bi;
    }
    z
}

/// Forward pass `y = W2 relu(W1 x + b1) + b2`. Panics on dimension mismatch.
pub fn forward(p: &Params, x: &[f64]) -> Vec<f64> {
    let mut h = preactivations(p, x);
    for zi in &mut h {
        if *zi < 0.0 {
            *zi = 0.0;
        }
    }
    let mut y = matvec(&p.w2, &h);
    for (yi, bi) in y.iter_mut().zip(&p.b2) {
        *yi += bi;
    }
    y
}

/// Mean-squared error: mean over samples of the squared error summed over
/// output dimensions.
pub fn mse_loss(p: &Params, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for (x, y) in data.xs.iter().zip(&data.ys) {
        let pred = forward(p, x);
        for (pj, yj) in pred.iter().zip(y) {
            let e = pj - yj;
            total += e * e;
        }
    }
    Ok(total / data.len() as f64)
}

/// Exact full-batch gradient of [`mse_loss`] with respect to every block.
///
/// The ReLU derivative at exactly zero preactivation is taken as 0, so a
/// unit that is inactive on every sample contributes nothing to `dW1`/`db1`.
pub fn task_gradients(p: &Params, data: &Dataset) -> Result<Grads> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let h_dim = p.hidden_dim();
    let m_dim = p.output_dim();
    let mut g = Grads::zeros_like(p);
    let scale = 2.0 / data.len() as f64;

    for (x, y) in data.xs.iter().zip(&data.ys) {
        let z = preactivations(p, x);
        let mut h = z.clone();
        for v in &mut h {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let mut err = matvec(&p.w2, &h);
        for ((e, bj), yj) in err.iter_mut().zip(&p.b2).zip(y) {
            *e = *e + bj - yj;
        }

        // Output layer: dW2[j,i] += scale * e_j * h_i, db2 += scale * e.
        for j in 0..m_dim {
            let ce = scale * err[j];
            g.db2[j] += ce;
            let row = g.dw2.row_mut(j);
            for i in 0..h_dim {
                row[i] += ce * h[i];
            }
        }

        // Backprop through ReLU: dz_i = [z_i > 0] * sum_j W2[j,i] * scale * e_j.
        for i in 0..h_dim {
            if z[i] > 0.0 {
                let mut dh = 0.0;
                for j in 0..m_dim {
                    dh += p.w2.get(j, i) * (scale * err[j]);
                }
                g.db1[i] += dh;
                let row = g.dw1.row_mut(i);
                for (k, xk) in x.iter().enumerate() {
                    row[k] += dh * xk;
                }
            }
        }
    }
    Ok(g)
}
