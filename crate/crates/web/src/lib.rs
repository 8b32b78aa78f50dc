//! WebAssembly bindings for the browser demo.
//!
//! The page drives three steps on one phantom: generate it, acquire a
//! sinogram (projection plus optional count noise), and reconstruct with
//! OSEM. [`Session`] holds the state in plain Rust so it can be tested
//! natively; [`Demo`] is the thin JavaScript-facing wrapper.

use spect_interp::image::{Image, Sinogram};
use spect_interp::metrics::MetricsReport;
use spect_interp::recon::{osem, ReconConfig};
use spect_interp::sim::noise::{apply_poisson, NoiseLevel};
use spect_interp::sim::phantom::{generate_phantom, shepp_logan, PhantomRecipe};
use spect_interp::sim::projector::project;
use spect_interp::{Error, Result};
use wasm_bindgen::prelude::*;

/// Grid sizes the page offers.
pub const SIZES: [usize; 2] = [64, 128];

/// Min-max scaled grayscale, four bytes per sample, for canvas `ImageData`.
/// Constant input maps to mid-gray.
pub fn grayscale_rgba(data: &[f32]) -> Vec<u8> {
    let (lo, hi) = data
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let mut out = Vec::with_capacity(4 * data.len());
    for &v in data {
        let g = if span > 0.0 {
            (255.0 * (v - lo) / span).round() as u8
        } else {
            128
        };
        out.extend_from_slice(&[g, g, g, 255]);
    }
    out
}

#[derive(Debug, Clone)]
pub struct Session {
    phantom: Image,
    sinogram: Option<Sinogram>,
    recon: Option<Image>,
}

impl Session {
    pub fn new(size: usize) -> Result<Self> {
        if !SIZES.contains(&size) {
            return Err(Error::Config(format!("size must be one of {SIZES:?}, got {size}")));
        }
        Ok(Self {
            phantom: shepp_logan(size),
            sinogram: None,
            recon: None,
        })
    }

    pub fn size(&self) -> usize {
        self.phantom.width()
    }

    fn set_phantom(&mut self, phantom: Image) {
        self.phantom = phantom;
        self.sinogram = None;
        self.recon = None;
    }

    pub fn use_shepp_logan(&mut self) {
        self.set_phantom(shepp_logan(self.size()));
    }

    pub fn use_random(&mut self, seed: u64, index: u64) {
        let recipe = PhantomRecipe {
            size: self.size(),
            ..PhantomRecipe::new(seed)
        };
        self.set_phantom(generate_phantom(&recipe, index));
    }

    pub fn phantom(&self) -> &Image {
        &self.phantom
    }

    /// Projects onto `views` equally spaced angles over 360 degrees and,
    /// unless `noise` is `None`, applies Poisson count noise.
    pub fn acquire(&mut self, views: usize, noise: Option<NoiseLevel>, seed: u64) -> Result<&Sinogram> {
        let clean = project(&self.phantom, views)?;
        let sino = match noise {
            Some(level) => apply_poisson(&clean, level, seed)?,
            None => clean,
        };
        self.recon = None;
        Ok(self.sinogram.insert(sino))
    }

    pub fn sinogram(&self) -> Option<&Sinogram> {
        self.sinogram.as_ref()
    }

    /// Reconstructs the current sinogram and scores it against the phantom.
    pub fn reconstruct(&mut self, subsets: usize, iterations: usize) -> Result<MetricsReport> {
        let sino = self
            .sinogram
            .as_ref()
            .ok_or_else(|| Error::Config("acquire a sinogram first".to_owned()))?;
        let image = osem(sino, &ReconConfig::new(subsets, iterations))?;
        let report = MetricsReport::compute(&self.phantom, &image)?;
        self.recon = Some(image);
        Ok(report)
    }

    pub fn recon(&self) -> Option<&Image> {
        self.recon.as_ref()
    }
}

fn js_err(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Reconstruction scores against the phantom.
#[wasm_bindgen]
#[derive(Debug, Clone, Copy)]
pub struct Scores {
    pub ssim: f64,
    /// Infinite for a perfect match.
    pub psnr: f64,
    pub mse: f64,
}

#[wasm_bindgen]
pub struct Demo {
    inner: Session,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize) -> std::result::Result<Demo, JsError> {
        Session::new(size).map(|inner| Demo { inner }).map_err(js_err)
    }

    pub fn size(&self) -> usize {
        self.inner.size()
    }

    #[wasm_bindgen(js_name = sheppLogan)]
    pub fn shepp_logan(&mut self) {
        self.inner.use_shepp_logan();
    }

    #[wasm_bindgen(js_name = randomPhantom)]
    pub fn random_phantom(&mut self, seed: u32, index: u32) {
        self.inner.use_random(seed as u64, index as u64);
    }

    #[wasm_bindgen(js_name = phantomPixels)]
    pub fn phantom_pixels(&self) -> Vec<u8> {
        grayscale_rgba(self.inner.phantom().data())
    }

    /// `noise` is "none", "low", "medium" or "high".
    pub fn acquire(&mut self, views: usize, noise: &str, seed: u32) -> std::result::Result<(), JsError> {
        let level = match noise {
            "none" => None,
            other => Some(other.parse::<NoiseLevel>().map_err(js_err)?),
        };
        self.inner.acquire(views, level, seed as u64).map(|_| ()).map_err(js_err)
    }

    #[wasm_bindgen(js_name = sinogramViews)]
    pub fn sinogram_views(&self) -> usize {
        self.inner.sinogram().map_or(0, Sinogram::n_angles)
    }

    /// Rows are views, columns detector bins; empty before `acquire`.
    #[wasm_bindgen(js_name = sinogramPixels)]
    pub fn sinogram_pixels(&self) -> Vec<u8> {
        self.inner.sinogram().map_or_else(Vec::new, |s| grayscale_rgba(s.data()))
    }

    pub fn reconstruct(&mut self, subsets: usize, iterations: usize) -> std::result::Result<Scores, JsError> {
        let r = self.inner.reconstruct(subsets, iterations).map_err(js_err)?;
        Ok(Scores {
            ssim: r.ssim,
            psnr: r.psnr,
            mse: r.mse,
        })
    }

    #[wasm_bindgen(js_name = reconPixels)]
    pub fn recon_pixels(&self) -> Vec<u8> {
        self.inner.recon().map_or_else(Vec::new, |r| grayscale_rgba(r.data()))
    }
}
