//! Full-reference quality metrics: MAPE, MSE, SSIM and PSNR.
//!
//! All metrics assume a dynamic range of `L = 1`. [`MetricsReport::compute`]
//! divides both inputs by the reference maximum first, so the reference
//! always peaks at 1.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Grid;

pub const DYNAMIC_RANGE: f64 = 1.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// MAPE ignores reference bins at or below this fraction of the reference
/// maximum.
pub const MAPE_MASK_FRACTION: f64 = 1e-6;

fn check_len(op: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(op, &[a.len()], &[b.len()]));
    }
    Ok(())
}

pub fn mse(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    check_len("mse", reference, estimate)?;
    if reference.is_empty() {
        return Err(Error::shape("mse", &[0], &[0]));
    }
    let s: f64 = reference.iter().zip(estimate).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / reference.len() as f64)
}

/// `10 log10(L^2 / mse)`; infinite when `mse == 0`.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (DYNAMIC_RANGE * DYNAMIC_RANGE / mse).log10()
    }
}

pub fn psnr(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    mse(reference, estimate).map(psnr_from_mse)
}

/// MAPE in percent and the number of reference bins excluded by the mask.
pub fn mape(reference: &[f64], estimate: &[f64]) -> Result<(f64, usize)> {
    check_len("mape", reference, estimate)?;
    let max = reference.iter().copied().fold(0.0, f64::max);
    let tau = MAPE_MASK_FRACTION * max;
    let mut sum = 0.0;
    let mut used = 0usize;
    for (&r, &e) in reference.iter().zip(estimate) {
        if r > tau {
            sum += (e - r).abs() / r;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::ReferenceZero);
    }
    Ok((100.0 * sum / used as f64, reference.len() - used))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable valid-mode filtering of a `width x height` plane.
fn filter_valid(plane: &[f64], width: usize, height: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = width - SSIM_WINDOW + 1;
    let oh = height - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; height * ow];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, a)| a * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over all fully-contained 11x11 Gaussian windows.
pub fn ssim(reference: &[f64], estimate: &[f64], width: usize, height: usize) -> Result<f64> {
    check_len("ssim", reference, estimate)?;
    if reference.len() != width * height {
        return Err(Error::shape("ssim", &[reference.len()], &[height, width]));
    }
    if width < SSIM_WINDOW || height < SSIM_WINDOW {
        return Err(Error::Shape {
            op: "ssim",
            lhs: format!("{height}x{width}"),
            rhs: format!("at least {SSIM_WINDOW}x{SSIM_WINDOW}"),
        });
    }
    let k = gaussian_window();
    let c1 = (SSIM_K1 * DYNAMIC_RANGE).powi(2);
    let c2 = (SSIM_K2 * DYNAMIC_RANGE).powi(2);
    let xx: Vec<f64> = reference.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = estimate.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = reference.iter().zip(estimate).map(|(a, b)| a * b).collect();
    let mu_x = filter_valid(reference, width, height, &k);
    let mu_y = filter_valid(estimate, width, height, &k);
    let e_xx = filter_valid(&xx, width, height, &k);
    let e_yy = filter_valid(&yy, width, height, &k);
    let e_xy = filter_valid(&xy, width, height, &k);
    let n = mu_x.len();
    let mut total = 0.0;
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = e_xx[i] - mx * mx;
        let vy = e_yy[i] - my * my;
        let cxy = e_xy[i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(total / n as f64)
}

/// Metrics for one (reference, estimate) pair, or the mean over many.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Percent.
    pub mape: f64,
    pub mse: f64,
    pub ssim: f64,
    /// dB; serialised as `null` when infinite.
    #[serde(deserialize_with = "psnr_or_null")]
    pub psnr: f64,
    pub masked_bins: usize,
    pub pairs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<String>,
}

fn psnr_or_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl MetricsReport {
    /// Scores `estimate` against `reference` after dividing both by the
    /// reference maximum.
    pub fn compute(reference: &dyn Grid, estimate: &dyn Grid) -> Result<Self> {
        let (w, h) = reference.dims();
        if estimate.dims() != (w, h) {
            let (ew, eh) = estimate.dims();
            return Err(Error::shape("metrics", &[h, w], &[eh, ew]));
        }
        let max = reference.values().iter().copied().fold(0.0f32, f32::max) as f64;
        if !(max > 0.0) {
            return Err(Error::ReferenceZero);
        }
        let r: Vec<f64> = reference.values().iter().map(|&v| v as f64 / max).collect();
        let e: Vec<f64> = estimate.values().iter().map(|&v| v as f64 / max).collect();
        Self::compute_normalized(&r, &e, w, h)
    }

    /// Scores data already on the `L = 1` scale.
    pub fn compute_normalized(reference: &[f64], estimate: &[f64], width: usize, height: usize) -> Result<Self> {
        let m = mse(reference, estimate)?;
        let (mape, masked_bins) = mape(reference, estimate)?;
        Ok(Self {
            mape,
            mse: m,
            ssim: ssim(reference, estimate, width, height)?,
            psnr: psnr_from_mse(m),
            masked_bins,
            pairs: 1,
            label: None,
            noise: None,
        })
    }

    /// Arithmetic mean of each metric; PSNR is averaged per pair.
    pub fn mean(reports: &[MetricsReport]) -> Option<Self> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(Self {
            mape: avg(|r| r.mape),
            mse: avg(|r| r.mse),
            ssim: avg(|r| r.ssim),
            psnr: avg(|r| r.psnr),
            masked_bins: reports.iter().map(|r| r.masked_bins).sum(),
            pairs: reports.iter().map(|r| r.pairs).sum(),
            label: reports[0].label.clone(),
            noise: reports[0].noise.clone(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_noise(mut self, noise: impl Into<String>) -> Self {
        self.noise = Some(noise.into());
        self
    }
}

fn fmt_psnr(p: f64) -> String {
    if p.is_infinite() {
        "inf".to_owned()
    } else {
        format!("{p:.2}")
    }
}

/// Sinogram denoising table: `Noise | MAPE | MSE | SSIM | PSNR`.
pub fn denoise_table(rows: &[(String, MetricsReport)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<10} {:>8} {:>9} {:>7} {:>7}", "Noise", "MAPE", "MSE", "SSIM", "PSNR");
    for (label, r) in rows {
        let _ = writeln!(
            s,
            "{:<10} {:>7.2}% {:>9.4} {:>7.3} {:>7}",
            label,
            r.mape,
            r.mse,
            r.ssim,
            fmt_psnr(r.psnr)
        );
    }
    s
}

/// Reconstruction table: standard method then proposed method, each
/// `MSE | SSIM | PSNR`.
pub fn recon_table(rows: &[(String, MetricsReport, MetricsReport)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<12} {:^26} {:^26}", "", "Standard Method", "Proposed Method");
    let _ = writeln!(
        s,
        "{:<12} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "Noise Level", "MSE", "SSIM", "PSNR", "MSE", "SSIM", "PSNR"
    );
    for (label, std, prop) in rows {
        let _ = writeln!(
            s,
            "{:<12} {:>8.4} {:>8.2} {:>8} {:>8.4} {:>8.2} {:>8}",
            label,
            std.mse,
            std.ssim,
            fmt_psnr(std.psnr),
            prop.mse,
            prop.ssim,
            fmt_psnr(prop.psnr)
        );
    }
    s
}
