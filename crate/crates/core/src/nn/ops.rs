//! Forward and backward kernels for the operators used by the U-Net.
//!
//! These are pure functions over [`Tensor`]s; the tape in [`super::tape`]
//! records which of them to call during the backward pass. Convolutions are
//! lowered to GEMM through an im2col buffer, one sample at a time. Work is
//! split across samples only, and every cross-sample reduction (weight and
//! bias gradients) is summed in sample order, so results do not depend on the
//! number of worker threads.

use crate::error::{Error, Result};
use crate::nn::tensor::{Real, Tensor};

/// Runs `f` for every sample index, in parallel when the `parallel` feature is
/// enabled, and returns the results in index order.
pub(crate) fn per_sample<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

fn add_into<T: Real>(acc: &mut [T], src: &[T]) {
    for (a, &s) in acc.iter_mut().zip(src) {
        *a += s;
    }
}

/// Gradients of a convolution-like layer.
#[derive(Debug, Clone)]
pub struct ConvGrads<T: Real> {
    pub input: Option<Tensor<T>>,
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

// ---------------------------------------------------------------------------
// conv2d, 3x3 or 1x1, zero "same" padding

fn check_conv2d<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<([usize; 4], usize, usize)> {
    let [b, c_in, h, w] = input.dims4("conv2d")?;
    let [c_out, k_in, kh, kw] = kernel.dims4("conv2d")?;
    if !(kh == kw && (kh == 3 || kh == 1)) {
        return Err(Error::Shape {
            op: "conv2d",
            lhs: format!("kernel {:?}", kernel.shape()),
            rhs: "3x3 or 1x1 spatial kernel".to_owned(),
        });
    }
    if k_in != c_in {
        return Err(Error::Shape {
            op: "conv2d",
            lhs: format!("input {:?}", input.shape()),
            rhs: format!("kernel {:?}", kernel.shape()),
        });
    }
    if bias.shape() != [c_out] {
        return Err(Error::Shape {
            op: "conv2d",
            lhs: format!("bias {:?}", bias.shape()),
            rhs: format!("kernel {:?}", kernel.shape()),
        });
    }
    Ok(([b, c_in, h, w], c_out, kh))
}

/// Unfolds one `(C, H, W)` sample into a `(C*9, H*W)` patch matrix with zero
/// padding of one pixel.
fn im2col3<T: Real>(x: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                let x_lo = 1usize.saturating_sub(kx);
                let x_hi = (w + 1 - kx).min(w);
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::ZERO);
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    dst[..x_lo].fill(T::ZERO);
                    dst[x_hi..].fill(T::ZERO);
                    for xx in x_lo..x_hi {
                        dst[xx] = src[xx + kx - 1];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col3`]: scatters a patch matrix back onto a `(C, H, W)`
/// sample.
fn col2im3<T: Real>(cols: &[T], c: usize, h: usize, w: usize, x: &mut [T]) {
    let hw = h * w;
    x.fill(T::ZERO);
    for ci in 0..c {
        let plane = &mut x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                let x_lo = 1usize.saturating_sub(kx);
                let x_hi = (w + 1 - kx).min(w);
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..][..w];
                    for xx in x_lo..x_hi {
                        dst[xx + kx - 1] += src[xx];
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation with a 3x3 (padding 1) or 1x1 kernel plus bias.
///
/// `input: [B, C_in, H, W]`, `kernel: [C_out, C_in, k, k]`, `bias: [C_out]`.
pub fn conv2d<T: Real>(input: &Tensor<T>, kernel: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let ([b, c_in, h, w], c_out, k) = check_conv2d(input, kernel, bias)?;
    let hw = h * w;
    let kk = c_in * k * k;
    let x = input.data();
    let wt = kernel.data();
    let bs = bias.data();
    let outs = per_sample(b, |n| {
        let xs = &x[n * c_in * hw..(n + 1) * c_in * hw];
        let mut out = vec![T::ZERO; c_out * hw];
        for (o, row) in out.chunks_mut(hw).enumerate() {
            row.fill(bs[o]);
        }
        if k == 3 {
            let mut cols = vec![T::ZERO; kk * hw];
            im2col3(xs, c_in, h, w, &mut cols);
            T::gemm(c_out, kk, hw, T::ONE, wt, kk as isize, 1, &cols, hw as isize, 1, T::ONE, &mut out, hw as isize, 1);
        } else {
            T::gemm(c_out, kk, hw, T::ONE, wt, kk as isize, 1, xs, hw as isize, 1, T::ONE, &mut out, hw as isize, 1);
        }
        out
    });
    Ok(Tensor::from_parts(vec![b, c_out, h, w], outs.concat()))
}

/// Gradients of [`conv2d`] given the upstream gradient `grad_out`.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let ([b, c_in, h, w], c_out, k) = check_conv2d(input, kernel, bias)?;
    if grad_out.shape() != [b, c_out, h, w] {
        return Err(Error::shape("conv2d backward", grad_out.shape(), &[b, c_out, h, w]));
    }
    let hw = h * w;
    let kk = c_in * k * k;
    let x = input.data();
    let wt = kernel.data();
    let dy = grad_out.data();
    let parts = per_sample(b, |n| {
        let xs = &x[n * c_in * hw..(n + 1) * c_in * hw];
        let dys = &dy[n * c_out * hw..(n + 1) * c_out * hw];
        let mut dw = vec![T::ZERO; c_out * kk];
        let mut dx = None;
        if k == 3 {
            let mut cols = vec![T::ZERO; kk * hw];
            im2col3(xs, c_in, h, w, &mut cols);
            // dW = dY * cols^T
            T::gemm(c_out, hw, kk, T::ONE, dys, hw as isize, 1, &cols, 1, hw as isize, T::ZERO, &mut dw, kk as isize, 1);
            if need_input_grad {
                // dcols = W^T * dY
                T::gemm(kk, c_out, hw, T::ONE, wt, 1, kk as isize, dys, hw as isize, 1, T::ZERO, &mut cols, hw as isize, 1);
                let mut dxs = vec![T::ZERO; c_in * hw];
                col2im3(&cols, c_in, h, w, &mut dxs);
                dx = Some(dxs);
            }
        } else {
            T::gemm(c_out, hw, kk, T::ONE, dys, hw as isize, 1, xs, 1, hw as isize, T::ZERO, &mut dw, kk as isize, 1);
            if need_input_grad {
                let mut dxs = vec![T::ZERO; c_in * hw];
                T::gemm(kk, c_out, hw, T::ONE, wt, 1, kk as isize, dys, hw as isize, 1, T::ZERO, &mut dxs, hw as isize, 1);
                dx = Some(dxs);
            }
        }
        let db: Vec<T> = dys.chunks(hw).map(|r| r.iter().copied().sum()).collect();
        (dx, dw, db)
    });
    let mut dw = vec![T::ZERO; c_out * kk];
    let mut db = vec![T::ZERO; c_out];
    let mut dx = need_input_grad.then(|| Vec::with_capacity(b * c_in * hw));
    for (dxs, dws, dbs) in parts {
        add_into(&mut dw, &dws);
        add_into(&mut db, &dbs);
        if let (Some(acc), Some(dxs)) = (dx.as_mut(), dxs) {
            acc.extend_from_slice(&dxs);
        }
    }
    Ok(ConvGrads {
        input: dx.map(|d| Tensor::from_parts(vec![b, c_in, h, w], d)),
        kernel: Tensor::from_parts(kernel.shape().to_vec(), dw),
        bias: Tensor::from_parts(vec![c_out], db),
    })
}

// ---------------------------------------------------------------------------
// transposed convolution, 2x2 kernel, stride 1 or 2 per axis

fn check_conv_t<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: (usize, usize),
) -> Result<([usize; 4], usize)> {
    if !matches!(stride.0, 1 | 2) || !matches!(stride.1, 1 | 2) {
        return Err(Error::Stride {
            op: "conv_transpose2d",
            stride,
        });
    }
    let [b, c_in, h, w] = input.dims4("conv_transpose2d")?;
    let [k_in, c_out, kh, kw] = kernel.dims4("conv_transpose2d")?;
    if (kh, kw) != (2, 2) {
        return Err(Error::Shape {
            op: "conv_transpose2d",
            lhs: format!("kernel {:?}", kernel.shape()),
            rhs: "[C_in, C_out, 2, 2]".to_owned(),
        });
    }
    if k_in != c_in {
        return Err(Error::Shape {
            op: "conv_transpose2d",
            lhs: format!("input {:?}", input.shape()),
            rhs: format!("kernel {:?}", kernel.shape()),
        });
    }
    if bias.shape() != [c_out] {
        return Err(Error::Shape {
            op: "conv_transpose2d",
            lhs: format!("bias {:?}", bias.shape()),
            rhs: format!("kernel {:?}", kernel.shape()),
        });
    }
    Ok(([b, c_in, h, w], c_out))
}

/// Transposed convolution with a `[C_in, C_out, 2, 2]` kernel.
///
/// The output is `[B, C_out, s_h*H, s_w*W]`. With stride 1 along an axis the
/// tap that would land one past the end is dropped, so the operator stays the
/// exact adjoint of the matching strided 2x2 convolution over the output grid.
pub fn conv_transpose2d<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: (usize, usize),
) -> Result<Tensor<T>> {
    let ([b, c_in, h, w], c_out) = check_conv_t(input, kernel, bias, stride)?;
    let (sh, sw) = stride;
    let (oh, ow) = (sh * h, sw * w);
    let hw = h * w;
    let m = c_out * 4;
    let x = input.data();
    let wt = kernel.data();
    let bs = bias.data();
    let outs = per_sample(b, |n| {
        let xs = &x[n * c_in * hw..(n + 1) * c_in * hw];
        let mut cols = vec![T::ZERO; m * hw];
        // cols = W^T x, W viewed as [C_in, C_out*4]
        T::gemm(m, c_in, hw, T::ONE, wt, 1, m as isize, xs, hw as isize, 1, T::ZERO, &mut cols, hw as isize, 1);
        let mut out = vec![T::ZERO; c_out * oh * ow];
        for o in 0..c_out {
            let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
            plane.fill(bs[o]);
            for ky in 0..2 {
                for kx in 0..2 {
                    let row = &cols[(o * 4 + ky * 2 + kx) * hw..][..hw];
                    for y in 0..h {
                        let oy = y * sh + ky;
                        if oy >= oh {
                            continue;
                        }
                        for xx in 0..w {
                            let ox = xx * sw + kx;
                            if ox < ow {
                                plane[oy * ow + ox] += row[y * w + xx];
                            }
                        }
                    }
                }
            }
        }
        out
    });
    Ok(Tensor::from_parts(vec![b, c_out, oh, ow], outs.concat()))
}

/// Gradients of [`conv_transpose2d`].
pub fn conv_transpose2d_backward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: (usize, usize),
    grad_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let ([b, c_in, h, w], c_out) = check_conv_t(input, kernel, bias, stride)?;
    let (sh, sw) = stride;
    let (oh, ow) = (sh * h, sw * w);
    if grad_out.shape() != [b, c_out, oh, ow] {
        return Err(Error::shape("conv_transpose2d backward", grad_out.shape(), &[b, c_out, oh, ow]));
    }
    let hw = h * w;
    let m = c_out * 4;
    let x = input.data();
    let wt = kernel.data();
    let dy = grad_out.data();
    let parts = per_sample(b, |n| {
        let xs = &x[n * c_in * hw..(n + 1) * c_in * hw];
        let dys = &dy[n * c_out * oh * ow..(n + 1) * c_out * oh * ow];
        let mut dcols = vec![T::ZERO; m * hw];
        for o in 0..c_out {
            let plane = &dys[o * oh * ow..(o + 1) * oh * ow];
            for ky in 0..2 {
                for kx in 0..2 {
                    let row = &mut dcols[(o * 4 + ky * 2 + kx) * hw..][..hw];
                    for y in 0..h {
                        let oy = y * sh + ky;
                        if oy >= oh {
                            continue;
                        }
                        for xx in 0..w {
                            let ox = xx * sw + kx;
                            if ox < ow {
                                row[y * w + xx] = plane[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
        let mut dw = vec![T::ZERO; c_in * m];
        // dW = x dcols^T
        T::gemm(c_in, hw, m, T::ONE, xs, hw as isize, 1, &dcols, 1, hw as isize, T::ZERO, &mut dw, m as isize, 1);
        let dx = need_input_grad.then(|| {
            let mut dxs = vec![T::ZERO; c_in * hw];
            T::gemm(c_in, m, hw, T::ONE, wt, m as isize, 1, &dcols, hw as isize, 1, T::ZERO, &mut dxs, hw as isize, 1);
            dxs
        });
        let db: Vec<T> = dys.chunks(oh * ow).map(|r| r.iter().copied().sum()).collect();
        (dx, dw, db)
    });
    let mut dw = vec![T::ZERO; c_in * m];
    let mut db = vec![T::ZERO; c_out];
    let mut dx = need_input_grad.then(|| Vec::with_capacity(b * c_in * hw));
    for (dxs, dws, dbs) in parts {
        add_into(&mut dw, &dws);
        add_into(&mut db, &dbs);
        if let (Some(acc), Some(dxs)) = (dx.as_mut(), dxs) {
            acc.extend_from_slice(&dxs);
        }
    }
    Ok(ConvGrads {
        input: dx.map(|d| Tensor::from_parts(vec![b, c_in, h, w], d)),
        kernel: Tensor::from_parts(kernel.shape().to_vec(), dw),
        bias: Tensor::from_parts(vec![c_out], db),
    })
}

// ---------------------------------------------------------------------------
// pooling, activation, concatenation, loss

/// 2x2 average pooling with stride 2.
pub fn avgpool2x2<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, c, h, w] = input.dims4("avgpool2x2")?;
    if h % 2 != 0 {
        return Err(Error::Divisibility {
            op: "avgpool2x2",
            axis: "height",
            extent: h,
            divisor: 2,
        });
    }
    if w % 2 != 0 {
        return Err(Error::Divisibility {
            op: "avgpool2x2",
            axis: "width",
            extent: w,
            divisor: 2,
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::from_f64(0.25);
    let x = input.data();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    for plane in x.chunks(h * w) {
        for y in 0..oh {
            let r0 = &plane[2 * y * w..][..w];
            let r1 = &plane[(2 * y + 1) * w..][..w];
            for xx in 0..ow {
                out.push((r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]) * quarter);
            }
        }
    }
    Ok(Tensor::from_parts(vec![b, c, oh, ow], out))
}

pub fn avgpool2x2_backward<T: Real>(input_shape: &[usize], grad_out: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (input_shape[2], input_shape[3]);
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::from_f64(0.25);
    let mut dx = vec![T::ZERO; input_shape.iter().product()];
    for (plane, gplane) in dx.chunks_mut(h * w).zip(grad_out.data().chunks(oh * ow)) {
        for y in 0..h {
            for xx in 0..w {
                plane[y * w + xx] = gplane[(y / 2) * ow + xx / 2] * quarter;
            }
        }
    }
    Tensor::from_parts(input_shape.to_vec(), dx)
}

/// Nearest-neighbour 2x upsampling along both spatial axes.
pub fn upsample_nearest2x<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, c, h, w] = input.dims4("upsample_nearest2x")?;
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::ZERO; b * c * oh * ow];
    for (plane, src) in out.chunks_mut(oh * ow).zip(input.data().chunks(h * w)) {
        for y in 0..oh {
            for xx in 0..ow {
                plane[y * ow + xx] = src[(y / 2) * w + xx / 2];
            }
        }
    }
    Ok(Tensor::from_parts(vec![b, c, oh, ow], out))
}

pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::ZERO { v } else { T::ZERO })
}

/// Subgradient 0 at the origin.
pub fn relu_backward<T: Real>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::ZERO { g } else { T::ZERO })
        .collect();
    Tensor::from_parts(input.shape().to_vec(), data)
}

/// Stacks `a` then `b` along the channel axis.
pub fn concat_channels<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [na, ca, ha, wa] = a.dims4("concat_channels")?;
    let [nb, cb, hb, wb] = b.dims4("concat_channels")?;
    if (na, ha, wa) != (nb, hb, wb) {
        return Err(Error::shape("concat_channels", a.shape(), b.shape()));
    }
    let (sa, sb) = (ca * ha * wa, cb * hb * wb);
    let mut out = Vec::with_capacity(na * (sa + sb));
    for n in 0..na {
        out.extend_from_slice(&a.data()[n * sa..(n + 1) * sa]);
        out.extend_from_slice(&b.data()[n * sb..(n + 1) * sb]);
    }
    Ok(Tensor::from_parts(vec![na, ca + cb, ha, wa], out))
}

/// Splits a channel-concatenated gradient back into the `a` and `b` parts.
pub fn concat_channels_backward<T: Real>(
    a_shape: &[usize],
    b_shape: &[usize],
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let n = a_shape[0];
    let sa: usize = a_shape[1..].iter().product();
    let sb: usize = b_shape[1..].iter().product();
    let mut ga = Vec::with_capacity(n * sa);
    let mut gb = Vec::with_capacity(n * sb);
    for chunk in grad_out.data().chunks(sa + sb) {
        ga.extend_from_slice(&chunk[..sa]);
        gb.extend_from_slice(&chunk[sa..]);
    }
    (
        Tensor::from_parts(a_shape.to_vec(), ga),
        Tensor::from_parts(b_shape.to_vec(), gb),
    )
}

/// Mean squared error, returned as a one-element tensor.
pub fn mse_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("mse_loss", pred.shape(), target.shape()));
    }
    // accumulate in f64 so the loss does not depend on summation precision
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = (p - t).to_f64();
            d * d
        })
        .sum();
    Ok(Tensor::scalar(T::from_f64(sum / pred.len() as f64)))
}

/// Gradient `2 (pred - target) / N`, scaled by the upstream scalar gradient.
pub fn mse_loss_backward<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, grad_out: T) -> Tensor<T> {
    let scale = grad_out * T::from_f64(2.0 / pred.len() as f64);
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) * scale)
        .collect();
    Tensor::from_parts(pred.shape().to_vec(), data)
}
