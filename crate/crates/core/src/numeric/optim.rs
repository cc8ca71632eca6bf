use super::matrix::DenseMatrix;
use crate::error::{FggcdError, Result};

/// A trainable matrix and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub value: DenseMatrix,
    pub grad: DenseMatrix,
}

impl Parameter {
    pub fn new(value: DenseMatrix) -> Self {
        let grad = DenseMatrix::zeros(value.rows(), value.cols());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad = DenseMatrix::zeros(self.value.rows(), self.value.cols());
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
        }
    }
}

/// Adam with per-parameter moment buffers. Weight decay is folded into the
/// gradient (`g += wd * value`) before the moment update.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: i32,
    first: Vec<DenseMatrix>,
    second: Vec<DenseMatrix>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// One update over `params`. The slice must list the same parameters in
    /// the same order on every call.
    pub fn step(&mut self, params: &mut [&mut Parameter]) -> Result<()> {
        if self.first.is_empty() {
            self.first = params
                .iter()
                .map(|p| DenseMatrix::zeros(p.value.rows(), p.value.cols()))
                .collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() {
            return Err(FggcdError::InvalidArgument(format!(
                "adam state tracks {} parameters, got {}",
                self.first.len(),
                params.len()
            )));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step);
        let bias2 = 1.0 - beta2.powi(self.step);

        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            if p.grad.shape() != p.value.shape() || m.shape() != p.value.shape() {
                return Err(FggcdError::Shape {
                    op: "adam_step",
                    lhs: p.value.shape(),
                    rhs: p.grad.shape(),
                });
            }
            let grads = p.grad.as_slice().to_vec();
            let values = p.value.as_mut_slice();
            let (ms, vs) = (m.as_mut_slice(), v.as_mut_slice());
            for i in 0..values.len() {
                let g = grads[i] + weight_decay * values[i];
                ms[i] = beta1 * ms[i] + (1.0 - beta1) * g;
                vs[i] = beta2 * vs[i] + (1.0 - beta2) * g * g;
                let m_hat = ms[i] / bias1;
                let v_hat = vs[i] / bias2;
                values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Single-call form: one Adam step with fresh moment buffers.
pub fn adam_step(params: &mut [&mut Parameter], config: AdamConfig) -> Result<()> {
    Adam::new(config).step(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_zero_decay_is_noop() {
        let mut p = Parameter::new(DenseMatrix::from_rows(&[[1.5, -2.0]]).unwrap());
        let before = p.value.clone();
        let mut adam = Adam::new(AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        });
        for _ in 0..5 {
            adam.step(&mut [&mut p]).unwrap();
        }
        assert_eq!(p.value, before);
    }

    #[test]
    fn constant_gradient_descends() {
        let mut p = Parameter::new(DenseMatrix::scalar(0.0));
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..100 {
            p.grad = DenseMatrix::scalar(2.0);
            adam.step(&mut [&mut p]).unwrap();
        }
        assert!(p.value.get(0, 0) < 0.0);
    }

    #[test]
    fn matches_scalar_reference() {
        // reference recursion written out by hand for a scalar
        let (lr, b1, b2, eps, wd) = (0.01, 0.9, 0.999, 1e-8, 0.1);
        let grads = [0.5, -1.25, 2.0];
        let (mut x, mut m, mut v) = (0.8_f64, 0.0_f64, 0.0_f64);
        for (t, g0) in grads.iter().enumerate() {
            let g = g0 + wd * x;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32 + 1));
            let vh = v / (1.0 - b2.powi(t as i32 + 1));
            x -= lr * mh / (vh.sqrt() + eps);
        }

        let mut p = Parameter::new(DenseMatrix::scalar(0.8));
        let mut adam = Adam::new(AdamConfig {
            lr,
            beta1: b1,
            beta2: b2,
            eps,
            weight_decay: wd,
        });
        for g in grads {
            p.grad = DenseMatrix::scalar(g);
            adam.step(&mut [&mut p]).unwrap();
        }
        assert!((p.value.get(0, 0) - x).abs() < 1e-12);
    }
}
