//! Minimal dense numeric core: matrices, affine maps, activations, binary
//! cross-entropy, Adam, and the gradient kernels used by the hand-derived
//! backward pass. Everything is `f64` and deterministic.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Probability clamp for cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Xavier-uniform init, U(-s, s) with s = sqrt(6 / (rows + cols)).
    pub fn xavier(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let s = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-s..s)).collect();
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// y = W·x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = 0.0;
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            y[r] = acc;
        }
        y
    }

    /// y = Wᵀ·x
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = self.row(r);
            let xr = x[r];
            for (yc, w) in y.iter_mut().zip(row) {
                *yc += w * xr;
            }
        }
        y
    }
}

/// Affine map y = W·x + b.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

impl AffineParams {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        AffineParams {
            weight: Mat::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    /// Xavier weights and a small uniform bias. A nonzero bias keeps empty
    /// neighbor selections (whose pre-activation is exactly the bias) off the
    /// ReLU kink.
    pub fn xavier(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        AffineParams {
            weight: Mat::xavier(out_dim, in_dim, rng),
            bias: (0..out_dim).map(|_| rng.random_range(-0.1..0.1)).collect(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::Shape(format!(
                "affine expects input of length {}, got {}",
                self.in_dim(),
                x.len()
            )));
        }
        let mut y = self.weight.matvec(x);
        for (yv, b) in y.iter_mut().zip(&self.bias) {
            *yv += b;
        }
        Ok(y)
    }

    /// Scalar output convenience for out_dim = 1 maps.
    pub fn forward_scalar(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?[0])
    }

    /// Accumulates dW += dy ⊗ x and db += dy, returns dx = Wᵀ·dy.
    pub fn backward(&self, x: &[f64], dy: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(dy.len(), self.out_dim());
        debug_assert_eq!(dw.len(), self.weight.data.len());
        let cols = self.weight.cols;
        for (r, dyr) in dy.iter().enumerate() {
            let drow = &mut dw[r * cols..(r + 1) * cols];
            for (dwc, xv) in drow.iter_mut().zip(x) {
                *dwc += dyr * xv;
            }
            db[r] += dyr;
        }
        self.weight.matvec_t(dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

impl Activation {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let f = match self {
            Activation::Tanh => f64::tanh,
            Activation::Relu => relu,
            Activation::Sigmoid => sigmoid,
        };
        x.iter().copied().map(f).collect()
    }
}

/// In-place dy ⊙= relu'(pre).
pub fn relu_backward(pre: &[f64], dy: &mut [f64]) {
    for (d, p) in dy.iter_mut().zip(pre) {
        if *p <= 0.0 {
            *d = 0.0;
        }
    }
}

/// Binary cross-entropy of a probability against a {0,1} label.
/// The probability is clamped to [BCE_EPS, 1 - BCE_EPS] first.
pub fn bce_loss(prob: f64, label: u8) -> f64 {
    let p = prob.clamp(BCE_EPS, 1.0 - BCE_EPS);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// d/dz of bce_loss(sigmoid(z), y): the classic `p - y` form.
pub fn bce_grad_logit(prob: f64, label: u8) -> f64 {
    prob - f64::from(label)
}

/// Softmax of a small vector.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Given w = softmax(x) and dL/dw, returns dL/dx.
pub fn softmax_backward(w: &[f64], dw: &[f64]) -> Vec<f64> {
    let dot: f64 = w.iter().zip(dw).map(|(a, b)| a * b).sum();
    w.iter().zip(dw).map(|(wi, di)| wi * (di - dot)).collect()
}

/// One gradient buffer per parameter group, in the model's group order.
#[derive(Debug, Clone)]
pub struct GradientSet {
    groups: Vec<(String, Vec<f64>)>,
}

impl GradientSet {
    /// Zero-initialized gradients matching `(name, len)` shapes.
    pub fn zeros(shapes: &[(String, usize)]) -> Self {
        GradientSet {
            groups: shapes
                .iter()
                .map(|(name, len)| (name.clone(), vec![0.0; *len]))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> &[f64] {
        &self
            .groups
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("no gradient group named {name}"))
            .1
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Vec<f64> {
        &mut self
            .groups
            .iter_mut()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("no gradient group named {name}"))
            .1
    }

    /// Two distinct groups borrowed mutably at once (e.g. a weight and its
    /// bias while accumulating an affine backward step).
    pub fn get2_mut(&mut self, a: &str, b: &str) -> (&mut Vec<f64>, &mut Vec<f64>) {
        assert_ne!(a, b, "get2_mut needs two distinct groups");
        let mut first = None;
        let mut second = None;
        for (n, g) in self.groups.iter_mut() {
            if n == a {
                first = Some(g);
            } else if n == b {
                second = Some(g);
            }
        }
        (
            first.unwrap_or_else(|| panic!("no gradient group named {a}")),
            second.unwrap_or_else(|| panic!("no gradient group named {b}")),
        )
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.groups.iter().map(|(n, g)| (n.as_str(), g.as_slice()))
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, g) in &self.groups {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "non-finite gradient in group {name}"
                )));
            }
        }
        Ok(())
    }
}

/// Biases are excluded from L2 regularization.
pub fn is_regularized(group_name: &str) -> bool {
    !group_name.ends_with(".bias")
}

/// λ₂ · Σ w² over regularized groups.
pub fn l2_penalty(groups: &[(String, &[f64])], lambda2: f64) -> f64 {
    let mut sum = 0.0;
    for (name, g) in groups {
        if is_regularized(name) {
            sum += g.iter().map(|w| w * w).sum::<f64>();
        }
    }
    lambda2 * sum
}

/// Adds the L2 gradient contribution 2·λ₂·w to each regularized group.
pub fn l2_grad(grads: &mut GradientSet, groups: &[(String, &[f64])], lambda2: f64) {
    if lambda2 == 0.0 {
        return;
    }
    for (name, g) in groups {
        if !is_regularized(name) {
            continue;
        }
        let dg = grads.get_mut(name);
        for (d, w) in dg.iter_mut().zip(*g) {
            *d += 2.0 * lambda2 * w;
        }
    }
}

/// Adam optimizer state over a fixed set of parameter groups.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    moments: Vec<(String, Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(shapes: &[(String, usize)]) -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            moments: shapes
                .iter()
                .map(|(name, len)| (name.clone(), vec![0.0; *len], vec![0.0; *len]))
                .collect(),
        }
    }

    /// Standard Adam update with bias correction. Group order must match
    /// construction order. Aborts on non-finite gradients.
    pub fn step(
        &mut self,
        params: &mut [(String, &mut [f64])],
        grads: &GradientSet,
        learning_rate: f64,
    ) -> Result<()> {
        grads.check_finite()?;
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for ((name, p), (mname, m, v)) in params.iter_mut().zip(self.moments.iter_mut()) {
            assert_eq!(name, mname, "parameter/state group order mismatch");
            let g = grads.get(name);
            if g.len() != p.len() {
                return Err(Error::Shape(format!(
                    "gradient group {name} has length {}, parameters have {}",
                    g.len(),
                    p.len()
                )));
            }
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_identity() {
        let p = AffineParams {
            weight: Mat {
                rows: 2,
                cols: 2,
                data: vec![1.0, 0.0, 0.0, 1.0],
            },
            bias: vec![0.0, 0.0],
        };
        assert_eq!(p.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn affine_zero_weight_returns_bias() {
        let p = AffineParams {
            weight: Mat::zeros(1, 3),
            bias: vec![3.0],
        };
        assert_eq!(p.forward(&[9.0, -4.0, 0.5]).unwrap(), vec![3.0]);
    }

    #[test]
    fn affine_arithmetic() {
        let p = AffineParams {
            weight: Mat {
                rows: 1,
                cols: 2,
                data: vec![1.0, 1.0],
            },
            bias: vec![0.5],
        };
        assert_eq!(p.forward(&[2.0, 3.0]).unwrap(), vec![5.5]);
    }

    #[test]
    fn affine_shape_mismatch() {
        let p = AffineParams::zeros(1, 2);
        assert!(matches!(p.forward(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn activations() {
        assert_eq!(Activation::Tanh.apply(&[0.0]), vec![0.0]);
        assert_eq!(Activation::Relu.apply(&[-2.5]), vec![0.0]);
        assert_eq!(Activation::Sigmoid.apply(&[0.0]), vec![0.5]);
        // saturation stays finite at the representable endpoints
        assert!(Activation::Tanh.apply(&[1e9])[0] <= 1.0);
        assert!(Activation::Sigmoid.apply(&[-1e9])[0] >= 0.0);
        assert!(Activation::Tanh.apply(&[1e9])[0].is_finite());
        assert!(Activation::Sigmoid.apply(&[1e9])[0].is_finite());
    }

    #[test]
    fn bce_values() {
        assert!((bce_loss(0.5, 0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(0.5, 1) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_loss(1.0 - BCE_EPS, 1) < 1e-6);
        assert!((bce_loss(0.9, 0) - (-0.1f64.ln())).abs() < 1e-12);
        // clamping keeps the loss finite at the extremes
        assert!(bce_loss(0.0, 1).is_finite());
        assert!(bce_loss(1.0, 0).is_finite());
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let shapes = vec![("w".to_string(), 3)];
        let mut state = AdamState::new(&shapes);
        let grads = GradientSet::zeros(&shapes);
        let mut w = vec![1.0, -2.0, 0.5];
        let orig = w.clone();
        state
            .step(&mut [("w".to_string(), &mut w)], &grads, 0.01)
            .unwrap();
        assert_eq!(w, orig);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_first_step_magnitude_is_lr_signed() {
        // At t=1 the bias-corrected update is lr·g/(|g| + eps') ≈ lr·sign(g).
        let shapes = vec![("w".to_string(), 2)];
        let mut state = AdamState::new(&shapes);
        let mut grads = GradientSet::zeros(&shapes);
        grads.get_mut("w").copy_from_slice(&[0.3, -4.0]);
        let mut w = vec![0.0, 0.0];
        state
            .step(&mut [("w".to_string(), &mut w)], &grads, 0.01)
            .unwrap();
        assert!((w[0] - (-0.01)).abs() < 1e-6);
        assert!((w[1] - 0.01).abs() < 1e-6);
    }

    #[test]
    fn adam_constant_gradient_monotone() {
        let shapes = vec![("w".to_string(), 1)];
        let mut state = AdamState::new(&shapes);
        let mut grads = GradientSet::zeros(&shapes);
        grads.get_mut("w").copy_from_slice(&[1.0]);
        let mut w = vec![5.0];
        let mut prev = w[0];
        for _ in 0..50 {
            state
                .step(&mut [("w".to_string(), &mut w)], &grads, 0.01)
                .unwrap();
            assert!(w[0] < prev);
            prev = w[0];
        }
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let shapes = vec![("w".to_string(), 1)];
        let mut state = AdamState::new(&shapes);
        let mut grads = GradientSet::zeros(&shapes);
        grads.get_mut("w").copy_from_slice(&[f64::NAN]);
        let mut w = vec![0.0];
        let err = state
            .step(&mut [("w".to_string(), &mut w)], &grads, 0.01)
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn l2_values() {
        let w = vec![2.0];
        let groups = vec![("x.weight".to_string(), w.as_slice())];
        assert_eq!(l2_penalty(&groups, 0.0), 0.0);
        assert!((l2_penalty(&groups, 0.001) - 0.004).abs() < 1e-15);
        // biases excluded
        let b = vec![10.0];
        let groups = vec![("x.bias".to_string(), b.as_slice())];
        assert_eq!(l2_penalty(&groups, 0.001), 0.0);
    }

    #[test]
    fn l2_gradient_matches_finite_differences() {
        let lambda2 = 0.003;
        let w = vec![0.7, -1.2, 0.05];
        let shapes = vec![("x.weight".to_string(), 3)];
        let mut grads = GradientSet::zeros(&shapes);
        let groups = vec![("x.weight".to_string(), w.as_slice())];
        l2_grad(&mut grads, &groups, lambda2);
        let h = 1e-5;
        for i in 0..w.len() {
            let mut wp = w.clone();
            wp[i] += h;
            let mut wm = w.clone();
            wm[i] -= h;
            let fd = (l2_penalty(&[("x.weight".to_string(), wp.as_slice())], lambda2)
                - l2_penalty(&[("x.weight".to_string(), wm.as_slice())], lambda2))
                / (2.0 * h);
            let an = grads.get("x.weight")[i];
            assert!((fd - an).abs() / fd.abs().max(1e-8) < 1e-6, "{fd} vs {an}");
        }
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let x = vec![0.2, -0.5, 1.3];
        let dw = vec![0.7, 0.1, -0.4];
        let w = softmax(&x);
        let dx = softmax_backward(&w, &dw);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let f = |v: &[f64]| -> f64 {
                softmax(v).iter().zip(&dw).map(|(a, b)| a * b).sum::<f64>()
            };
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-6, "{fd} vs {}", dx[i]);
        }
    }
}
