//! Learnable parameters and the Adam optimizer.

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// A named learnable tensor and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    /// Adds `g` into the gradient accumulator.
    pub fn accumulate(&mut self, g: &Tensor<T>) -> Result<()> {
        self.grad.add_assign(g)
    }
}

/// First/second moment estimates for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(shape: &[usize]) -> Self {
        AdamState {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            step_count: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
        }
    }
}

/// One bias-corrected Adam update of `param` from its current gradient.
/// The gradient is left in place; zeroing it is the caller's job.
pub fn adam_step<T: Scalar>(param: &mut Parameter<T>, state: &mut AdamState<T>, lr: f64) -> Result<()> {
    if state.m.shape() != param.value.shape() || state.v.shape() != param.value.shape() {
        return Err(Error::shape(format!(
            "adam state for `{}` has shape {:?}, parameter is {:?}",
            param.name,
            state.m.shape(),
            param.value.shape()
        )));
    }
    if !param.grad.all_finite() {
        return Err(Error::NonFiniteGradient {
            name: param.name.clone(),
        });
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (T::of(state.beta1), T::of(state.beta2));
    let one = T::one();
    let correction1 = T::of(1.0 - state.beta1.powi(t));
    let correction2 = T::of(1.0 - state.beta2.powi(t));
    let (lr, eps) = (T::of(lr), T::of(state.epsilon));

    let values = param.value.data_mut();
    let grads = param.grad.data();
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for i in 0..values.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / correction1;
        let v_hat = v[i] / correction2;
        values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(value: f64, grad: f64) -> Parameter<f64> {
        let mut p = Parameter::new("w", Tensor::full(&[1], value));
        p.grad = Tensor::full(&[1], grad);
        p
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = scalar_param(1.5, 0.0);
        let mut s = AdamState::new(&[1]);
        for _ in 0..3 {
            adam_step(&mut p, &mut s, 0.01).unwrap();
        }
        assert_eq!(p.value.data(), [1.5]);
        assert_eq!(s.step_count, 3);
    }

    #[test]
    fn first_step_closed_form() {
        let (g, lr) = (0.37, 0.001);
        let mut p = scalar_param(0.0, g);
        let mut s = AdamState::new(&[1]);
        adam_step(&mut p, &mut s, lr).unwrap();
        let expected = -lr * g / (g.abs() + ADAM_EPSILON);
        assert!((p.value.data()[0] - expected).abs() < 1e-15);
        assert_eq!(p.grad.data(), [g]);
    }

    #[test]
    fn two_steps_match_scalar_recurrence() {
        let lr = 0.001;
        let grads = [0.5, -0.25];
        // scalar reference recurrences
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 0.2f64);
        for (t, &g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= lr * mh / (vh.sqrt() + 1e-8);
        }
        let mut p = scalar_param(0.2, 0.0);
        let mut s = AdamState::new(&[1]);
        for &g in &grads {
            p.grad = Tensor::full(&[1], g);
            adam_step(&mut p, &mut s, lr).unwrap();
        }
        assert!((p.value.data()[0] - x).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = scalar_param(0.0, f64::NAN);
        p.name = "enc1.conv1.weight".into();
        let mut s = AdamState::new(&[1]);
        let err = adam_step(&mut p, &mut s, 0.1).unwrap_err();
        assert!(err.to_string().contains("enc1.conv1.weight"));
        assert_eq!(s.step_count, 0);
    }
}
