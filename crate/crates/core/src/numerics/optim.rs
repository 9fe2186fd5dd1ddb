use serde::{Deserialize, Serialize};

use super::{NumericsError, Tensor};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// SGD or bias-corrected Adam over a fixed, ordered list of parameters.
#[derive(Clone, Debug)]
pub struct OptimizerState<T> {
    pub kind: OptimizerKind,
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    step: u64,
    first_moment: Vec<Tensor<T>>,
    second_moment: Vec<Tensor<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(kind: OptimizerKind, learning_rate: T) -> Self {
        Self {
            kind,
            learning_rate,
            beta1: T::of(ADAM_BETA1),
            beta2: T::of(ADAM_BETA2),
            epsilon: T::of(ADAM_EPSILON),
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn sgd(learning_rate: T) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: T) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.first_moment, &self.second_moment)
    }

    /// Applies one update. `params[i]` and `grads[i]` must agree in shape, and
    /// the parameter list must keep the same layout across calls.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<(), NumericsError> {
        if params.len() != grads.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "optimizer_step",
                left: vec![params.len()],
                right: vec![grads.len()],
            });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(NumericsError::ShapeMismatch {
                    op: "optimizer_step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        if self.kind == OptimizerKind::Adam {
            if self.first_moment.is_empty() {
                self.first_moment = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
                self.second_moment = self.first_moment.clone();
            } else if self.first_moment.len() != grads.len()
                || self.first_moment.iter().zip(grads).any(|(m, g)| m.shape() != g.shape())
            {
                return Err(NumericsError::ShapeMismatch {
                    op: "optimizer_step",
                    left: vec![self.first_moment.len()],
                    right: vec![grads.len()],
                });
            }
        }
        self.step += 1;

        match self.kind {
            OptimizerKind::Sgd => {
                let lr = self.learning_rate;
                for (p, g) in params.iter_mut().zip(grads) {
                    for (w, &d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let (b1, b2) = (self.beta1, self.beta2);
                let correction1 = T::one() - b1.powi(t);
                let correction2 = T::one() - b2.powi(t);
                let lr = self.learning_rate;
                let eps = self.epsilon;
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    let it = p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut())
                        .zip(v.data_mut());
                    for (((w, &d), m), v) in it {
                        *m = b1 * *m + (T::one() - b1) * d;
                        *v = b2 * *v + (T::one() - b2) * d * d;
                        let m_hat = *m / correction1;
                        let v_hat = *v / correction2;
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut [Tensor<T>], max_norm: T) -> T {
    let norm = grads.iter().map(Tensor::squared_norm).sum::<T>().sqrt();
    if norm > max_norm && norm > T::zero() {
        let factor = max_norm / norm;
        for g in grads.iter_mut() {
            g.scale_in_place(factor);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_single_step() {
        let mut p = Tensor::scalar(1.0f64);
        let mut opt = OptimizerState::sgd(0.1);
        opt.step(&mut [&mut p], &[Tensor::scalar(2.0)]).unwrap();
        assert!((p.data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Tensor::row_vector(vec![0.5f64, -0.25]);
        let zero = Tensor::zeros(&[1, 2]);
        let mut sgd = OptimizerState::sgd(0.1);
        sgd.step(&mut [&mut p], &[zero.clone()]).unwrap();
        assert_eq!(p.data(), &[0.5, -0.25]);

        let mut adam = OptimizerState::adam(0.1);
        adam.step(&mut [&mut p], &[zero]).unwrap();
        assert_eq!(p.data(), &[0.5, -0.25]);
        assert_eq!(adam.steps(), 1);
        assert_eq!(adam.moments().0.len(), 1);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let lr = 1e-3;
        let mut p = Tensor::row_vector(vec![0.0f64; 4]);
        let mut opt = OptimizerState::adam(lr);
        opt.step(&mut [&mut p], &[Tensor::filled(&[1, 4], 1.0)]).unwrap();
        let expected = -lr * 1.0 / (1.0 + ADAM_EPSILON);
        for &w in p.data() {
            assert!((w - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut p = Tensor::<f64>::zeros(&[2, 2]);
        let mut opt = OptimizerState::sgd(0.1);
        assert!(matches!(
            opt.step(&mut [&mut p], &[Tensor::zeros(&[1, 4])]),
            Err(NumericsError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn clipping_caps_joint_norm() {
        let mut grads = vec![Tensor::row_vector(vec![3.0f64]), Tensor::row_vector(vec![4.0])];
        let before = clip_global_norm(&mut grads, 1.0);
        assert_eq!(before, 5.0);
        let after: f64 = grads.iter().map(Tensor::squared_norm).sum::<f64>().sqrt();
        assert!((after - 1.0).abs() < 1e-15);

        let mut small = vec![Tensor::row_vector(vec![0.1f64])];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0].data(), &[0.1]);
    }
}
