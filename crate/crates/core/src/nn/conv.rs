//! 3x3, stride 1, zero "same"-padded convolution via im2col + GEMM.

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::{gemm, Scalar};

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// Gradients of a convolution with respect to its three inputs.
#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

fn check_shapes<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(usize, usize, usize, usize, usize)> {
    let (b, cin, h, w) = x.dims4()?;
    let (cout, wcin, kh, kw) = weight.dims4()?;
    if (kh, kw) != (KERNEL, KERNEL) {
        return Err(Error::shape(format!(
            "conv2d expects a 3x3 kernel, got {kh}x{kw}"
        )));
    }
    if wcin != cin {
        return Err(Error::shape(format!(
            "conv2d: input has {cin} channels but weight expects {wcin}"
        )));
    }
    if bias.shape() != [cout] {
        return Err(Error::shape(format!(
            "conv2d: bias shape {:?} does not match {cout} output channels",
            bias.shape()
        )));
    }
    Ok((b, cin, h, w, cout))
}

/// Unfolds `x` into a `[cin*9, b*h*w]` patch matrix; column index is
/// `item*h*w + y*w + x`.
fn im2col<T: Scalar>(x: &[T], b: usize, cin: usize, h: usize, w: usize, col: &mut [T]) {
    let hw = h * w;
    let ncols = b * hw;
    debug_assert_eq!(col.len(), cin * TAPS * ncols);
    for ci in 0..cin {
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = (ci * TAPS + ky * KERNEL + kx) * ncols;
                for item in 0..b {
                    let plane = &x[(item * cin + ci) * hw..(item * cin + ci + 1) * hw];
                    let dst = &mut col[row + item * hw..row + (item + 1) * hw];
                    for y in 0..h {
                        let out_row = &mut dst[y * w..(y + 1) * w];
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            out_row.fill(T::zero());
                            continue;
                        }
                        let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                        match kx {
                            0 => {
                                out_row[0] = T::zero();
                                out_row[1..].copy_from_slice(&src[..w - 1]);
                            }
                            1 => out_row.copy_from_slice(src),
                            _ => {
                                out_row[..w - 1].copy_from_slice(&src[1..]);
                                out_row[w - 1] = T::zero();
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds patch columns back onto the image.
fn col2im<T: Scalar>(col: &[T], b: usize, cin: usize, h: usize, w: usize, dx: &mut [T]) {
    let hw = h * w;
    let ncols = b * hw;
    for ci in 0..cin {
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = (ci * TAPS + ky * KERNEL + kx) * ncols;
                for item in 0..b {
                    let src = &col[row + item * hw..row + (item + 1) * hw];
                    let plane = &mut dx[(item * cin + ci) * hw..(item * cin + ci + 1) * hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let in_row = &src[y * w..(y + 1) * w];
                        let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                        match kx {
                            0 => {
                                for (d, &s) in dst[..w - 1].iter_mut().zip(&in_row[1..]) {
                                    *d += s;
                                }
                            }
                            1 => {
                                for (d, &s) in dst.iter_mut().zip(in_row) {
                                    *d += s;
                                }
                            }
                            _ => {
                                for (d, &s) in dst[1..].iter_mut().zip(&in_row[..w - 1]) {
                                    *d += s;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `x: [B,Cin,H,W]` with `weight: [Cout,Cin,3,3]` plus
/// `bias: [Cout]`, one pixel of zero padding on each side.
pub fn conv2d<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, cin, h, w, cout) = check_shapes(x, weight, bias)?;
    let hw = h * w;
    let ncols = b * hw;
    let k = cin * TAPS;

    let mut col = vec![T::zero(); k * ncols];
    im2col(x.data(), b, cin, h, w, &mut col);

    // out_cat[cout, b*hw], bias broadcast in as the initial value
    let mut out_cat = vec![T::zero(); cout * ncols];
    for (co, row) in out_cat.chunks_exact_mut(ncols).enumerate() {
        row.fill(bias.data()[co]);
    }
    gemm(false, false, cout, k, ncols, weight.data(), &col, T::one(), &mut out_cat);

    let mut out = vec![T::zero(); b * cout * hw];
    for co in 0..cout {
        for item in 0..b {
            out[(item * cout + co) * hw..(item * cout + co + 1) * hw]
                .copy_from_slice(&out_cat[co * ncols + item * hw..co * ncols + (item + 1) * hw]);
        }
    }
    Tensor::new(&[b, cout, h, w], out)
}

/// Backward pass of [`conv2d`] given the upstream gradient `grad_out: [B,Cout,H,W]`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let (b, cin, h, w) = x.dims4()?;
    let (cout, _, _, _) = weight.dims4()?;
    check_shapes(x, weight, &Tensor::zeros(&[cout]))?;
    if grad_out.shape() != [b, cout, h, w] {
        return Err(Error::shape(format!(
            "conv2d_backward: grad_out shape {:?}, expected {:?}",
            grad_out.shape(),
            [b, cout, h, w]
        )));
    }
    let hw = h * w;
    let ncols = b * hw;
    let k = cin * TAPS;

    let mut dy_cat = vec![T::zero(); cout * ncols];
    let g = grad_out.data();
    for co in 0..cout {
        for item in 0..b {
            dy_cat[co * ncols + item * hw..co * ncols + (item + 1) * hw]
                .copy_from_slice(&g[(item * cout + co) * hw..(item * cout + co + 1) * hw]);
        }
    }

    let bias_grad: Vec<T> = dy_cat
        .chunks_exact(ncols)
        .map(|row| row.iter().copied().sum())
        .collect();

    let mut col = vec![T::zero(); k * ncols];
    im2col(x.data(), b, cin, h, w, &mut col);
    let mut dw = vec![T::zero(); cout * k];
    gemm(false, true, cout, ncols, k, &dy_cat, &col, T::zero(), &mut dw);

    // reuse the patch buffer for the input-side gradient
    gemm(true, false, k, cout, ncols, weight.data(), &dy_cat, T::zero(), &mut col);
    let mut dx = vec![T::zero(); x.len()];
    col2im(&col, b, cin, h, w, &mut dx);

    Ok(ConvGrads {
        input: Tensor::new(x.shape(), dx)?,
        weight: Tensor::new(weight.shape(), dw)?,
        bias: Tensor::new(&[cout], bias_grad)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct six-loop cross-correlation, independent of im2col.
    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, bias: &Tensor<f64>) -> Vec<f64> {
        let (b, cin, h, wd) = x.dims4().unwrap();
        let cout = w.shape()[0];
        let mut out = vec![0.0; b * cout * h * wd];
        for n in 0..b {
            for co in 0..cout {
                for y in 0..h {
                    for xx in 0..wd {
                        let mut acc = bias.data()[co];
                        for ci in 0..cin {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let sy = y as isize + ky as isize - 1;
                                    let sx = xx as isize + kx as isize - 1;
                                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                                        continue;
                                    }
                                    acc += x.data()[((n * cin + ci) * h + sy as usize) * wd
                                        + sx as usize]
                                        * w.data()[((co * cin + ci) * 3 + ky) * 3 + kx];
                                }
                            }
                        }
                        out[((n * cout + co) * h + y) * wd + xx] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f32>::uniform(&[2, 3, 5, 4], -1.0, 1.0, &mut rng);
        let mut w = Tensor::<f32>::zeros(&[3, 3, 3, 3]);
        for c in 0..3 {
            w.data_mut()[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0;
        }
        let y = conv2d(&x, &w, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_input_yields_bias_planes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = Tensor::<f32>::uniform(&[2, 3, 3, 3], -1.0, 1.0, &mut rng);
        let bias = Tensor::new(&[2], vec![0.5, -2.0]).unwrap();
        let y = conv2d(&Tensor::zeros(&[1, 3, 4, 4]), &w, &bias).unwrap();
        assert!(y.data()[..16].iter().all(|&v| v == 0.5));
        assert!(y.data()[16..].iter().all(|&v| v == -2.0));
    }

    #[test]
    fn matches_direct_convolution_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f64>::uniform(&[1, 2, 4, 4], -1.0, 1.0, &mut rng);
        let w = Tensor::<f64>::uniform(&[3, 2, 3, 3], -1.0, 1.0, &mut rng);
        let bias = Tensor::<f64>::uniform(&[3], -1.0, 1.0, &mut rng);
        let expected = naive_conv(&x, &w, &bias);
        let got = conv2d(&x.cast::<f32>(), &w.cast::<f32>(), &bias.cast::<f32>()).unwrap();
        for (g, e) in got.data().iter().zip(&expected) {
            assert!((*g as f64 - e).abs() < 1e-6, "{g} vs {e}");
        }
    }

    #[test]
    fn preserves_spatial_size_including_single_pixel() {
        for (h, w) in [(1, 1), (1, 5), (3, 2), (7, 7)] {
            let x = Tensor::<f32>::ones(&[1, 1, h, w]);
            let y = conv2d(&x, &Tensor::ones(&[2, 1, 3, 3]), &Tensor::zeros(&[2])).unwrap();
            assert_eq!(y.shape(), [1, 2, h, w]);
        }
    }

    #[test]
    fn rejects_channel_mismatch() {
        let x = Tensor::<f32>::zeros(&[1, 2, 4, 4]);
        let w = Tensor::<f32>::zeros(&[3, 5, 3, 3]);
        assert!(matches!(
            conv2d(&x, &w, &Tensor::zeros(&[3])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        // <conv(x), g> is linear in x and w: check the three gradients
        // against the directional derivatives of the naive oracle.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::<f64>::uniform(&[2, 2, 3, 5], -1.0, 1.0, &mut rng);
        let w = Tensor::<f64>::uniform(&[3, 2, 3, 3], -1.0, 1.0, &mut rng);
        let bias = Tensor::<f64>::uniform(&[3], -1.0, 1.0, &mut rng);
        let g = Tensor::<f64>::uniform(&[2, 3, 3, 5], -1.0, 1.0, &mut rng);
        let grads = conv2d_backward(&x, &w, &g).unwrap();

        let dx = Tensor::<f64>::uniform(x.shape(), -1.0, 1.0, &mut rng);
        let dw = Tensor::<f64>::uniform(w.shape(), -1.0, 1.0, &mut rng);
        let db = Tensor::<f64>::uniform(bias.shape(), -1.0, 1.0, &mut rng);
        let zero_b = Tensor::zeros(&[3]);
        let inner = |v: Vec<f64>| v.iter().zip(g.data()).map(|(a, b)| a * b).sum::<f64>();

        let lhs_x = inner(naive_conv(&dx, &w, &zero_b));
        assert!((lhs_x - grads.input.dot(&dx).unwrap()).abs() < 1e-10);
        let lhs_w = inner(naive_conv(&x, &dw, &zero_b));
        assert!((lhs_w - grads.weight.dot(&dw).unwrap()).abs() < 1e-10);
        let lhs_b = inner(naive_conv(&Tensor::zeros(x.shape()), &Tensor::zeros(w.shape()), &db));
        assert!((lhs_b - grads.bias.dot(&db).unwrap()).abs() < 1e-10);
    }
}
