use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_inplace<T: Scalar>(x: &mut Tensor<T>) {
    for v in x.data_mut() {
        if *v <= T::zero() {
            *v = T::zero();
        }
    }
}

/// Gradient of ReLU given its output: passes `grad` where `output > 0`.
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    output.expect_same_shape(grad, "relu_backward")?;
    let data = output
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(grad.shape(), data)
}

pub fn tanh_act<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.tanh())
}

/// Gradient of tanh given its output `y`: `grad * (1 - y^2)`.
pub fn tanh_backward<T: Scalar>(output: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    output.expect_same_shape(grad, "tanh_backward")?;
    let data = output
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&y, &g)| g * (T::one() - y * y))
        .collect();
    Tensor::new(grad.shape(), data)
}

/// Softmax across axis 1 of a `[B,C,H,W]` tensor, stabilized by subtracting
/// the per-pixel maximum.
pub fn softmax_over_classes<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dims4()?;
    let hw = h * w;
    let src = x.data();
    let mut out = vec![T::zero(); x.len()];
    for item in 0..b {
        let base = item * c * hw;
        for p in 0..hw {
            let mut max = src[base + p];
            for k in 1..c {
                max = max.max(src[base + k * hw + p]);
            }
            let mut total = T::zero();
            for k in 0..c {
                let e = (src[base + k * hw + p] - max).exp();
                out[base + k * hw + p] = e;
                total += e;
            }
            for k in 0..c {
                out[base + k * hw + p] /= total;
            }
        }
    }
    Tensor::new(x.shape(), out)
}

/// Elementwise sum of two equally shaped tensors (the decoder's skip merge).
/// Its backward routes the incoming gradient unchanged to both operands.
pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "add: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Tensor::new(a.shape(), data)
}
