//! 2x2 max pooling and 2x bilinear up-sampling.

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

/// Max-pool output plus, per output element, the flat input index of the
/// selected maximum.
#[derive(Clone, Debug)]
pub struct PoolOutput<T> {
    pub output: Tensor<T>,
    pub argmax: Vec<u32>,
}

/// 2x2 window, stride 2. The first maximum in row-major window order wins.
pub fn maxpool2<T: Scalar>(x: &Tensor<T>) -> Result<PoolOutput<T>> {
    let (b, c, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!(
            "maxpool2 needs even spatial dimensions, got {h}x{w}"
        )));
    }
    if x.len() > u32::MAX as usize {
        return Err(Error::shape("maxpool2 input too large for u32 indices"));
    }
    let (oh, ow) = (h / 2, w / 2);
    let data = x.data();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    let mut argmax = Vec::with_capacity(b * c * oh * ow);
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let i0 = base + 2 * oy * w + 2 * ox;
                let mut best = i0;
                for idx in [i0 + 1, i0 + w, i0 + w + 1] {
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                argmax.push(best as u32);
            }
        }
    }
    Ok(PoolOutput {
        output: Tensor::new(&[b, c, oh, ow], out)?,
        argmax,
    })
}

/// Routes each output gradient to its recorded argmax location.
pub fn maxpool2_backward<T: Scalar>(
    argmax: &[u32],
    input_shape: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if argmax.len() != grad_out.len() {
        return Err(Error::shape("maxpool2_backward: argmax/grad length mismatch"));
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        d[idx as usize] += g;
    }
    Ok(dx)
}

/// Interpolation taps of one output coordinate: two source indices and weights.
#[derive(Clone, Copy, Debug)]
struct Tap {
    lo: usize,
    hi: usize,
    w_lo: f64,
    w_hi: f64,
}

/// Half-pixel-center sampling: output `i` reads input coordinate
/// `(i + 0.5) / 2 - 0.5`, clamped to the valid range.
fn taps(n_in: usize) -> Vec<Tap> {
    (0..2 * n_in)
        .map(|i| {
            let src = ((i as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (n_in - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(n_in - 1);
            let frac = src - lo as f64;
            Tap {
                lo,
                hi,
                w_lo: 1.0 - frac,
                w_hi: frac,
            }
        })
        .collect()
}

pub fn upsample_bilinear2x<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dims4()?;
    let (ty, tx) = (taps(h), taps(w));
    let (oh, ow) = (2 * h, 2 * w);
    let data = x.data();
    let mut out = vec![T::zero(); b * c * oh * ow];
    for plane in 0..b * c {
        let src = &data[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
        for (oy, ry) in ty.iter().enumerate() {
            let (wy0, wy1) = (T::of(ry.w_lo), T::of(ry.w_hi));
            let row0 = &src[ry.lo * w..(ry.lo + 1) * w];
            let row1 = &src[ry.hi * w..(ry.hi + 1) * w];
            for (ox, rx) in tx.iter().enumerate() {
                let (wx0, wx1) = (T::of(rx.w_lo), T::of(rx.w_hi));
                let top = wx0 * row0[rx.lo] + wx1 * row0[rx.hi];
                let bottom = wx0 * row1[rx.lo] + wx1 * row1[rx.hi];
                dst[oy * ow + ox] = wy0 * top + wy1 * bottom;
            }
        }
    }
    Tensor::new(&[b, c, oh, ow], out)
}

/// Exact transpose of [`upsample_bilinear2x`].
pub fn upsample_bilinear2x_backward<T: Scalar>(
    input_shape: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let mut dx = Tensor::zeros(input_shape);
    let (b, c, h, w) = dx.dims4()?;
    let (oh, ow) = (2 * h, 2 * w);
    if grad_out.shape() != [b, c, oh, ow] {
        return Err(Error::shape(format!(
            "upsample backward: grad shape {:?}, expected {:?}",
            grad_out.shape(),
            [b, c, oh, ow]
        )));
    }
    let (ty, tx) = (taps(h), taps(w));
    let g = grad_out.data();
    let d = dx.data_mut();
    for plane in 0..b * c {
        let src = &g[plane * oh * ow..(plane + 1) * oh * ow];
        let dst = &mut d[plane * h * w..(plane + 1) * h * w];
        for (oy, ry) in ty.iter().enumerate() {
            let (wy0, wy1) = (T::of(ry.w_lo), T::of(ry.w_hi));
            for (ox, rx) in tx.iter().enumerate() {
                let v = src[oy * ow + ox];
                let (wx0, wx1) = (T::of(rx.w_lo), T::of(rx.w_hi));
                let top = wy0 * v;
                let bottom = wy1 * v;
                dst[ry.lo * w + rx.lo] += wx0 * top;
                dst[ry.lo * w + rx.hi] += wx1 * top;
                dst[ry.hi * w + rx.lo] += wx0 * bottom;
                dst[ry.hi * w + rx.hi] += wx1 * bottom;
            }
        }
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn maxpool_picks_window_maxima() {
        let x = Tensor::<f32>::from_fn(&[1, 1, 4, 4], |i| (i + 1) as f32);
        let p = maxpool2(&x).unwrap();
        assert_eq!(p.output.data(), [6.0, 8.0, 14.0, 16.0]);
        assert_eq!(p.argmax, [5, 7, 13, 15]);
    }

    #[test]
    fn maxpool_rejects_odd_dims() {
        assert!(maxpool2(&Tensor::<f32>::zeros(&[1, 1, 3, 4])).is_err());
        assert!(maxpool2(&Tensor::<f32>::zeros(&[1, 1, 4, 1])).is_err());
    }

    #[test]
    fn maxpool_backward_conserves_gradient_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::<f64>::uniform(&[2, 3, 6, 4], -1.0, 1.0, &mut rng);
        let p = maxpool2(&x).unwrap();
        let g = Tensor::<f64>::uniform(p.output.shape(), -1.0, 1.0, &mut rng);
        let dx = maxpool2_backward(&p.argmax, x.shape(), &g).unwrap();
        assert!((dx.sum() - g.sum()).abs() < 1e-12);
        let nonzero = dx.data().iter().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, g.len());
    }

    #[test]
    fn upsample_constant_and_single_pixel() {
        let x = Tensor::<f32>::full(&[1, 2, 3, 5], 2.5);
        assert!(upsample_bilinear2x(&x).unwrap().data().iter().all(|&v| v == 2.5));
        let one = Tensor::<f32>::full(&[1, 1, 1, 1], -4.0);
        assert_eq!(upsample_bilinear2x(&one).unwrap().data(), [-4.0; 4]);
    }

    #[test]
    fn upsample_2x2_matches_formula_oracle() {
        let x = Tensor::<f64>::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = upsample_bilinear2x(&x).unwrap();
        // independent evaluation of the half-pixel formula
        let sample = |i: usize| -> (usize, usize, f64) {
            let s: f64 = ((i as f64 + 0.5) / 2.0 - 0.5).max(0.0).min(1.0);
            let lo = s.floor() as usize;
            (lo, (lo + 1).min(1), s - lo as f64)
        };
        let src = [[1.0, 2.0], [3.0, 4.0]];
        for oy in 0..4 {
            for ox in 0..4 {
                let (y0, y1, fy) = sample(oy);
                let (x0, x1, fx) = sample(ox);
                let v = (1.0 - fy) * ((1.0 - fx) * src[y0][x0] + fx * src[y0][x1])
                    + fy * ((1.0 - fx) * src[y1][x0] + fx * src[y1][x1]);
                assert!((y.data()[oy * 4 + ox] - v).abs() < 1e-12);
            }
        }
        // first row: 1, 1.25, 1.75, 2
        assert_eq!(&y.data()[..4], [1.0, 1.25, 1.75, 2.0]);
    }

    #[test]
    fn upsample_adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Tensor::<f64>::uniform(&[2, 2, 3, 4], -1.0, 1.0, &mut rng);
        let y = Tensor::<f64>::uniform(&[2, 2, 6, 8], -1.0, 1.0, &mut rng);
        let lhs = upsample_bilinear2x(&x).unwrap().dot(&y).unwrap();
        let rhs = x.dot(&upsample_bilinear2x_backward(x.shape(), &y).unwrap()).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
