//! Per-channel batch normalization over `[B,C,H,W]` activations.

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Values retained by a train-mode forward for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub x_hat: Tensor<T>,
    pub inv_std: Vec<T>,
}

/// Per-channel biased mean and variance over `B x H x W`, two-pass.
pub fn channel_stats<T: Scalar>(x: &Tensor<T>) -> Result<(Vec<T>, Vec<T>)> {
    let (b, c, h, w) = x.dims4()?;
    let hw = h * w;
    let count = T::of((b * hw) as f64);
    let data = x.data();
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ch in 0..c {
        let mut acc = T::zero();
        for item in 0..b {
            let plane = &data[(item * c + ch) * hw..(item * c + ch + 1) * hw];
            acc += plane.iter().copied().sum::<T>();
        }
        let m = acc / count;
        let mut sq = T::zero();
        for item in 0..b {
            let plane = &data[(item * c + ch) * hw..(item * c + ch + 1) * hw];
            for &v in plane {
                let d = v - m;
                sq += d * d;
            }
        }
        mean[ch] = m;
        var[ch] = sq / count;
    }
    Ok((mean, var))
}

fn check_params<T: Scalar>(x: &Tensor<T>, params: [&Tensor<T>; 4]) -> Result<usize> {
    let (_, c, _, _) = x.dims4()?;
    for p in params {
        if p.shape() != [c] {
            return Err(Error::shape(format!(
                "batchnorm2d: parameter shape {:?} does not match {c} channels",
                p.shape()
            )));
        }
    }
    Ok(c)
}

fn normalize<T: Scalar>(
    x: &Tensor<T>,
    mean: &[T],
    inv_std: &[T],
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (b, c, h, w) = x.dims4()?;
    let hw = h * w;
    let mut x_hat = vec![T::zero(); x.len()];
    let mut y = vec![T::zero(); x.len()];
    for item in 0..b {
        for ch in 0..c {
            let range = (item * c + ch) * hw..(item * c + ch + 1) * hw;
            let (g, bt, m, s) = (gamma.data()[ch], beta.data()[ch], mean[ch], inv_std[ch]);
            for ((xh, out), &v) in x_hat[range.clone()]
                .iter_mut()
                .zip(&mut y[range.clone()])
                .zip(&x.data()[range])
            {
                *xh = (v - m) * s;
                *out = g * *xh + bt;
            }
        }
    }
    Ok((Tensor::new(x.shape(), x_hat)?, Tensor::new(x.shape(), y)?))
}

/// Batch normalization. In [`Mode::Train`] batch statistics normalize the
/// input and the running statistics are blended towards them with
/// [`BN_MOMENTUM`]; in [`Mode::Eval`] the running statistics are used and
/// left untouched. The cache is returned only in train mode.
pub fn batchnorm2d<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &mut Tensor<T>,
    running_var: &mut Tensor<T>,
    mode: Mode,
) -> Result<(Tensor<T>, Option<BatchNormCache<T>>)> {
    check_params(x, [gamma, beta, running_mean, running_var])?;
    let eps = T::of(BN_EPS);
    match mode {
        Mode::Train => {
            let (mean, var) = channel_stats(x)?;
            let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
            let (x_hat, y) = normalize(x, &mean, &inv_std, gamma, beta)?;
            let mom = T::of(BN_MOMENTUM);
            for (r, &m) in running_mean.data_mut().iter_mut().zip(&mean) {
                *r = (T::one() - mom) * *r + mom * m;
            }
            for (r, &v) in running_var.data_mut().iter_mut().zip(&var) {
                *r = (T::one() - mom) * *r + mom * v;
            }
            Ok((y, Some(BatchNormCache { x_hat, inv_std })))
        }
        Mode::Eval => Ok((batchnorm2d_eval(x, gamma, beta, running_mean, running_var)?, None)),
    }
}

/// Eval-mode batch normalization against fixed running statistics.
pub fn batchnorm2d_eval<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_params(x, [gamma, beta, running_mean, running_var])?;
    let eps = T::of(BN_EPS);
    let inv_std: Vec<T> = running_var
        .data()
        .iter()
        .map(|&v| T::one() / (v + eps).sqrt())
        .collect();
    Ok(normalize(x, running_mean.data(), &inv_std, gamma, beta)?.1)
}

/// Returns `(dx, dgamma, dbeta)` for a train-mode forward.
pub fn batchnorm2d_backward<T: Scalar>(
    cache: &BatchNormCache<T>,
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    cache.x_hat.expect_same_shape(grad_out, "batchnorm2d_backward")?;
    let (b, c, h, w) = grad_out.dims4()?;
    let hw = h * w;
    let n = T::of((b * hw) as f64);
    let xh = cache.x_hat.data();
    let dy = grad_out.data();
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for item in 0..b {
        for ch in 0..c {
            let range = (item * c + ch) * hw..(item * c + ch + 1) * hw;
            for (&g, &x) in dy[range.clone()].iter().zip(&xh[range]) {
                dbeta[ch] += g;
                dgamma[ch] += g * x;
            }
        }
    }
    let mut dx = vec![T::zero(); grad_out.len()];
    for item in 0..b {
        for ch in 0..c {
            let range = (item * c + ch) * hw..(item * c + ch + 1) * hw;
            let scale = gamma.data()[ch] * cache.inv_std[ch] / n;
            let (sum_dy, sum_dy_xh) = (dbeta[ch], dgamma[ch]);
            for ((d, &g), &x) in dx[range.clone()]
                .iter_mut()
                .zip(&dy[range.clone()])
                .zip(&xh[range])
            {
                *d = scale * (n * g - sum_dy - x * sum_dy_xh);
            }
        }
    }
    Ok((
        Tensor::new(grad_out.shape(), dx)?,
        Tensor::new(&[c], dgamma)?,
        Tensor::new(&[c], dbeta)?,
    ))
}
