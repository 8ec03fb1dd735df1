//! Composite training objective: class-weighted categorical cross entropy plus
//! class-weighted per-pixel Jaccard loss, both on softmax probabilities.
//!
//! With `p` the softmax of the logits and `y` the one-hot target, per image of
//! `N` pixels:
//!
//! ```text
//! L_CE = -(1/N) sum_i sum_c w_c y_ic ln(max(p_ic, EPS_LOG))
//! L_J  =  (1/N) sum_i sum_c w_c (1 - (y p + EPS_J) / (y + p - y p + EPS_J))
//! ```
//!
//! The Jaccard term is evaluated per pixel exactly as written, not as an
//! image-aggregated soft IoU. Batch losses are the mean over images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{LabelMap, NUM_CLASSES};
use crate::nn::{softmax_over_classes, Tensor};
use crate::scalar::Scalar;

pub const EPS_LOG: f64 = 1e-7;
pub const EPS_JACCARD: f64 = 1e-7;

/// Per-class loss weights, indexed background, pipeline, road, cutline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(pub [f64; NUM_CLASSES]);

impl Default for ClassWeights {
    fn default() -> Self {
        ClassWeights([0.1, 0.3, 0.3, 0.3])
    }
}

impl ClassWeights {
    pub fn new(w: [f64; NUM_CLASSES]) -> Result<Self> {
        if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid(format!("class weights must be positive, got {w:?}")));
        }
        Ok(ClassWeights(w))
    }

    pub fn scaled(&self, k: f64) -> Self {
        ClassWeights(self.0.map(|v| v * k))
    }
}

/// One-hot `[B, 4, H, W]` encoding of a label map.
pub fn one_hot<T: Scalar>(labels: &LabelMap) -> Result<Tensor<T>> {
    labels.validate()?;
    let hw = labels.height * labels.width;
    let mut y = Tensor::zeros(&[labels.batch, NUM_CLASSES, labels.height, labels.width]);
    let d = y.data_mut();
    for b in 0..labels.batch {
        for (p, &c) in labels.item(b).iter().enumerate() {
            d[(b * NUM_CLASSES + c as usize) * hw + p] = T::one();
        }
    }
    Ok(y)
}

fn check_inputs<T: Scalar>(y: &Tensor<T>, y_hat: &Tensor<T>) -> Result<(usize, usize)> {
    let (b, c, h, w) = y.dims4()?;
    if c != NUM_CLASSES {
        return Err(Error::shape(format!("expected {NUM_CLASSES} class channels, got {c}")));
    }
    y.expect_same_shape(y_hat, "loss")?;
    let hw = h * w;
    let data = y.data();
    for item in 0..b {
        for p in 0..hw {
            let mut ones = 0;
            for k in 0..c {
                let v = data[(item * c + k) * hw + p];
                if v == T::one() {
                    ones += 1;
                } else if v != T::zero() {
                    ones = usize::MAX;
                    break;
                }
            }
            if ones != 1 {
                return Err(Error::NotOneHot {
                    index: item * hw + p,
                });
            }
        }
    }
    Ok((b, hw))
}

fn jaccard_ratio(y: f64, p: f64) -> f64 {
    let inter = y * p;
    let union = y + p - inter;
    (inter + EPS_JACCARD) / (union + EPS_JACCARD)
}

/// d ratio / d p for the smoothed per-pixel ratio.
fn jaccard_ratio_grad(y: f64, p: f64) -> f64 {
    let inter = y * p;
    let union = y + p - inter;
    let den = union + EPS_JACCARD;
    (y * den - (inter + EPS_JACCARD) * (1.0 - y)) / (den * den)
}

/// Weighted categorical cross entropy of probabilities `y_hat` against one-hot `y`.
pub fn weighted_cross_entropy<T: Scalar>(
    y: &Tensor<T>,
    y_hat: &Tensor<T>,
    w: &ClassWeights,
) -> Result<T> {
    let (b, hw) = check_inputs(y, y_hat)?;
    let (yd, pd) = (y.data(), y_hat.data());
    let mut total = 0.0;
    for item in 0..b {
        let mut acc = 0.0;
        for k in 0..NUM_CLASSES {
            let base = (item * NUM_CLASSES + k) * hw;
            for p in 0..hw {
                let yv = yd[base + p].as_f64();
                if yv != 0.0 {
                    acc += w.0[k] * yv * pd[base + p].as_f64().max(EPS_LOG).ln();
                }
            }
        }
        total += -acc / hw as f64;
    }
    Ok(T::of(total / b as f64))
}

/// Weighted per-pixel Jaccard loss of probabilities `y_hat` against one-hot `y`.
pub fn weighted_jaccard<T: Scalar>(y: &Tensor<T>, y_hat: &Tensor<T>, w: &ClassWeights) -> Result<T> {
    let (b, hw) = check_inputs(y, y_hat)?;
    let (yd, pd) = (y.data(), y_hat.data());
    let mut total = 0.0;
    for item in 0..b {
        let mut acc = 0.0;
        for k in 0..NUM_CLASSES {
            let base = (item * NUM_CLASSES + k) * hw;
            for p in 0..hw {
                let ratio = jaccard_ratio(yd[base + p].as_f64(), pd[base + p].as_f64());
                acc += w.0[k] * (1.0 - ratio);
            }
        }
        total += acc / hw as f64;
    }
    Ok(T::of(total / b as f64))
}

#[derive(Clone, Debug)]
pub struct LossOutput<T> {
    pub total: T,
    pub cross_entropy: T,
    pub jaccard: T,
    /// Gradient of `total` w.r.t. the logits fed to the internal softmax.
    pub grad_logits: Tensor<T>,
}

/// `L = L_CE + L_J` on `softmax(logits)` with the analytic logit gradient.
pub fn composite_loss<T: Scalar>(
    y: &Tensor<T>,
    logits: &Tensor<T>,
    w: &ClassWeights,
) -> Result<LossOutput<T>> {
    let probs = softmax_over_classes(logits)?;
    let cross_entropy = weighted_cross_entropy(y, &probs, w)?;
    let jaccard = weighted_jaccard(y, &probs, w)?;

    let (b, _, h, wd) = y.dims4()?;
    let hw = h * wd;
    let scale = 1.0 / (hw * b) as f64;
    let (yd, pd) = (y.data(), probs.data());
    let mut grad = vec![T::zero(); y.len()];
    let mut g = [0.0f64; NUM_CLASSES];
    let mut p = [0.0f64; NUM_CLASSES];
    for item in 0..b {
        for px in 0..hw {
            for k in 0..NUM_CLASSES {
                let idx = (item * NUM_CLASSES + k) * hw + px;
                let (yv, pv) = (yd[idx].as_f64(), pd[idx].as_f64());
                p[k] = pv;
                let d_ce = if yv != 0.0 && pv >= EPS_LOG {
                    -w.0[k] * yv / pv
                } else {
                    0.0
                };
                let d_j = -w.0[k] * jaccard_ratio_grad(yv, pv);
                g[k] = (d_ce + d_j) * scale;
            }
            // softmax Jacobian-vector product
            let dot: f64 = (0..NUM_CLASSES).map(|k| g[k] * p[k]).sum();
            for k in 0..NUM_CLASSES {
                grad[(item * NUM_CLASSES + k) * hw + px] = T::of(p[k] * (g[k] - dot));
            }
        }
    }
    Ok(LossOutput {
        total: cross_entropy + jaccard,
        cross_entropy,
        jaccard,
        grad_logits: Tensor::new(y.shape(), grad)?,
    })
}
