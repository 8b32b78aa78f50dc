//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls the library routine it is used to check.
#![allow(dead_code)]

use spect_interp::nn::Tensor;
use spect_interp::rng::Stream;

pub mod suites;

// ---------------------------------------------------------------------------
// random data

pub fn random_tensor(shape: &[usize], rng: &mut Stream) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.range(-1.0, 1.0)).collect()).unwrap()
}

/// Random values bounded away from zero, for ops with a kink at 0.
pub fn random_tensor_away_from_zero(shape: &[usize], rng: &mut Stream) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.range(0.05, 1.0);
            if rng.uniform() < 0.5 {
                -m
            } else {
                m
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

// ---------------------------------------------------------------------------
// finite differences

/// Central differences of `f` at `x` with step `h`.
pub fn numeric_gradient(f: &dyn Fn(&Tensor<f64>) -> f64, x: &Tensor<f64>, h: f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + h;
            let up = f(&probe);
            probe.data_mut()[i] = orig - h;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest elementwise relative error `|a - n| / max(|a|, |n|)`. Pairs where
/// both magnitudes are below `floor` are compared absolutely against `floor`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let scale = a.abs().max(n.abs());
            if scale < floor {
                (a - n).abs() / floor
            } else {
                (a - n).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// direct-loop convolutions

/// Zero-padded "same" cross-correlation with a `k x k` kernel, `k` odd.
pub fn naive_conv2d(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64]) -> Tensor<f64> {
    let [n, ci, h, wd] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let [co, _, k, _] = [w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]];
    let p = (k / 2) as isize;
    let mut out = vec![0.0; n * co * h * wd];
    for s in 0..n {
        for o in 0..co {
            for y in 0..h {
                for xx in 0..wd {
                    let mut acc = b[o];
                    for c in 0..ci {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = y as isize + ky as isize - p;
                                let ix = xx as isize + kx as isize - p;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += w.data()[((o * ci + c) * k + ky) * k + kx]
                                    * x.data()[((s * ci + c) * h + iy as usize) * wd + ix as usize];
                            }
                        }
                    }
                    out[((s * co + o) * h + y) * wd + xx] = acc;
                }
            }
        }
    }
    Tensor::new(&[n, co, h, wd], out).unwrap()
}

/// Strided 2x2 convolution `y -> x` that a `[C_in, C_out, 2, 2]` transposed
/// convolution with stride `(sh, sw)` is the adjoint of:
/// `x[c_in, i, j] = sum w[c_in, c_out, ki, kj] * y[c_out, sh*i + ki, sw*j + kj]`,
/// skipping taps beyond the edge of `y`.
pub fn naive_strided_conv(y: &Tensor<f64>, w: &Tensor<f64>, stride: (usize, usize)) -> Tensor<f64> {
    let [n, co, oh, ow] = [y.shape()[0], y.shape()[1], y.shape()[2], y.shape()[3]];
    let ci = w.shape()[0];
    let (h, wd) = (oh / stride.0, ow / stride.1);
    let mut out = vec![0.0; n * ci * h * wd];
    for s in 0..n {
        for c in 0..ci {
            for i in 0..h {
                for j in 0..wd {
                    let mut acc = 0.0;
                    for o in 0..co {
                        for ki in 0..2 {
                            for kj in 0..2 {
                                let (yy, yx) = (stride.0 * i + ki, stride.1 * j + kj);
                                if yy >= oh || yx >= ow {
                                    continue;
                                }
                                acc += w.data()[((c * co + o) * 2 + ki) * 2 + kj]
                                    * y.data()[((s * co + o) * oh + yy) * ow + yx];
                            }
                        }
                    }
                    out[((s * ci + c) * h + i) * wd + j] = acc;
                }
            }
        }
    }
    Tensor::new(&[n, ci, h, wd], out).unwrap()
}

// ---------------------------------------------------------------------------
// network arithmetic

/// `(C_in, C_out, k)` of every weight layer of the sinogram U-Net, written
/// out block by block.
pub fn unet_layer_table(base: usize, bottleneck: usize) -> Vec<(usize, usize, usize)> {
    let (c1, c2, c3, c4) = (base, 2 * base, 4 * base, 8 * base);
    vec![
        (1, c1, 3),
        (c1, c1, 3),
        (c1, c2, 3),
        (c2, c2, 3),
        (c2, c3, 3),
        (c3, c3, 3),
        (c3, c4, 3),
        (c4, c4, 3),
        (c4, bottleneck, 3),
        (bottleneck, bottleneck, 3),
        (bottleneck, c4, 2),
        (2 * c4, c4, 3),
        (c4, c4, 3),
        (c4, c3, 2),
        (2 * c3, c3, 3),
        (c3, c3, 3),
        (c3, c2, 2),
        (2 * c2, c2, 3),
        (c2, c2, 3),
        (c2, c1, 2),
        (2 * c1, c1, 3),
        (c1, c1, 3),
        (c1, c1, 2),
        (c1, c1, 3),
        (c1, c1, 3),
        (c1, c1, 2),
        (c1, c1, 3),
        (c1, c1, 3),
        (c1, 1, 1),
    ]
}

/// `sum C_out * (C_in * k_h * k_w + 1)` over the layer table.
pub fn unet_parameter_count(base: usize, bottleneck: usize) -> usize {
    unet_layer_table(base, bottleneck)
        .iter()
        .map(|&(ci, co, k)| co * (ci * k * k + 1))
        .sum()
}

// ---------------------------------------------------------------------------
// line integrals

/// Analytic ellipse in pixel units (x right, y up), rotated counter-clockwise.
#[derive(Debug, Clone, Copy)]
pub struct RefEllipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub phi: f64,
    pub value: f64,
}

impl RefEllipse {
    pub fn inside(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (s, c) = self.phi.sin_cos();
        let u = (c * dx + s * dy) / self.a;
        let v = (-s * dx + c * dy) / self.b;
        u * u + v * v <= 1.0
    }

    /// Chord length of the line `x cos t + y sin t = s`, by marching along
    /// the line in steps of `step` pixels.
    pub fn chord_sampled(&self, theta: f64, s: f64, step: f64, half_len: f64) -> f64 {
        let (st, ct) = theta.sin_cos();
        let n = (2.0 * half_len / step).round() as i64;
        let mut count = 0i64;
        for i in 0..n {
            let t = -half_len + (i as f64 + 0.5) * step;
            if self.inside(s * ct - t * st, s * st + t * ct) {
                count += 1;
            }
        }
        count as f64 * step
    }

    /// Exact chord length of the same line.
    pub fn chord_exact(&self, theta: f64, s: f64) -> f64 {
        // distance of the line from the centre, then the support width of
        // the ellipse along the line normal
        let (st, ct) = theta.sin_cos();
        let d = s - (self.cx * ct + self.cy * st);
        let alpha = theta - self.phi;
        let r2 = (self.a * alpha.cos()).powi(2) + (self.b * alpha.sin()).powi(2);
        if d * d >= r2 {
            return 0.0;
        }
        2.0 * self.a * self.b * (r2 - d * d).sqrt() / r2
    }
}

/// Canonical 1974 Shepp-Logan ellipses for an `n x n` grid.
pub fn shepp_logan_reference(n: usize) -> Vec<RefEllipse> {
    let h = n as f64 / 2.0;
    let table: [(f64, f64, f64, f64, f64, f64); 10] = [
        (0.0, 0.0, 0.69, 0.92, 0.0, 2.0),
        (0.0, -0.0184, 0.6624, 0.874, 0.0, -0.98),
        (0.22, 0.0, 0.11, 0.31, -18.0, -0.02),
        (-0.22, 0.0, 0.16, 0.41, 18.0, -0.02),
        (0.0, 0.35, 0.21, 0.25, 0.0, 0.01),
        (0.0, 0.1, 0.046, 0.046, 0.0, 0.01),
        (0.0, -0.1, 0.046, 0.046, 0.0, 0.01),
        (-0.08, -0.605, 0.046, 0.023, 0.0, 0.01),
        (0.0, -0.605, 0.023, 0.023, 0.0, 0.01),
        (0.06, -0.605, 0.023, 0.046, 0.0, 0.01),
    ];
    table
        .iter()
        .map(|&(x, y, a, b, deg, v)| RefEllipse {
            cx: x * h,
            cy: y * h,
            a: a * h,
            b: b * h,
            phi: deg.to_radians(),
            value: v,
        })
        .collect()
}

/// Bin-averaged line integrals of a sum of ellipses: each bin is sampled at
/// `s_step` spacing across its width. Views at `360 * i / n_views` degrees,
/// bins of unit width centred on the rotation axis.
pub fn bin_averaged_sinogram(ellipses: &[RefEllipse], n_views: usize, n_bins: usize, s_step: f64) -> Vec<f64> {
    let per_bin = (1.0 / s_step).round() as usize;
    let mut out = vec![0.0; n_views * n_bins];
    for v in 0..n_views {
        let theta = (360.0 * v as f64 / n_views as f64).to_radians();
        for k in 0..n_bins {
            let lo = k as f64 - n_bins as f64 / 2.0;
            let mut acc = 0.0;
            for j in 0..per_bin {
                let s = lo + (j as f64 + 0.5) * s_step;
                acc += ellipses.iter().map(|e| e.value * e.chord_exact(theta, s)).sum::<f64>();
            }
            out[v * n_bins + k] = acc / per_bin as f64;
        }
    }
    out
}

/// Brute-force line integrals through a square, piecewise-constant image
/// (unit pixels, row 0 at the top): march each bin-centre ray in steps of
/// `step` and sum nearest-pixel values.
pub fn ray_march_sinogram(image: &[f64], n: usize, n_views: usize, step: f64) -> Vec<f64> {
    let half = n as f64 / 2.0;
    let reach = half * 1.5;
    let samples = (2.0 * reach / step).round() as usize;
    let mut out = vec![0.0; n_views * n];
    for v in 0..n_views {
        let theta = (360.0 * v as f64 / n_views as f64).to_radians();
        let (st, ct) = theta.sin_cos();
        for k in 0..n {
            let s = k as f64 + 0.5 - half;
            let mut acc = 0.0;
            for j in 0..samples {
                let t = -reach + (j as f64 + 0.5) * step;
                let x = s * ct - t * st;
                let y = s * st + t * ct;
                let col = (x + half).floor();
                let row = (half - y).floor();
                if col >= 0.0 && row >= 0.0 && col < n as f64 && row < n as f64 {
                    acc += image[row as usize * n + col as usize];
                }
            }
            out[v * n + k] = acc * step;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// files

/// Minimal binary PGM reader: `(width, height, maxval, samples)`.
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, u32, Vec<u16>), String> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("header ended early".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(format!("magic {}", fields[0]));
    }
    let w: usize = fields[1].parse().map_err(|_| "width")?;
    let h: usize = fields[2].parse().map_err(|_| "height")?;
    let maxval: u32 = fields[3].parse().map_err(|_| "maxval")?;
    pos += 1; // single whitespace after maxval
    let bpp = if maxval > 255 { 2 } else { 1 };
    let body = &bytes[pos..];
    if body.len() != w * h * bpp {
        return Err(format!("payload {} bytes, expected {}", body.len(), w * h * bpp));
    }
    let samples = if bpp == 2 {
        body.chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        body.iter().map(|&v| v as u16).collect()
    };
    Ok((w, h, maxval, samples))
}

// ---------------------------------------------------------------------------
// metrics

/// SSIM computed window by window with an explicit 2-D Gaussian.
pub fn naive_ssim(x: &[f64], y: &[f64], w: usize, h: usize) -> f64 {
    let win = 11;
    let sigma: f64 = 1.5;
    let mut g = vec![0.0; win * win];
    for i in 0..win {
        for j in 0..win {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            g[i * win + j] = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut acc = 0.0;
    let mut count = 0;
    for r in 0..=h - win {
        for c in 0..=w - win {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..win {
                for j in 0..win {
                    let k = g[i * win + j];
                    let (a, b) = (x[(r + i) * w + c + j], y[(r + i) * w + c + j]);
                    mx += k * a;
                    my += k * b;
                    sxx += k * a * a;
                    syy += k * b * b;
                    sxy += k * a * b;
                }
            }
            let (vx, vy, cxy) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
            acc += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    acc / count as f64
}
