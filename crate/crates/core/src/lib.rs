//! Sparse-view SPECT angle interpolation.
//!
//! A U-Net maps a noisy 32-view sinogram to a denoised 128-view sinogram.
//! The crate contains everything needed to train and evaluate it on
//! simulated data: phantom generation, a parallel-beam projector with an
//! exact adjoint, Poisson count noise, a small reverse-mode autodiff engine,
//! OSEM reconstruction and image quality metrics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod image;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod recon;
pub mod rng;
pub mod sim;
pub mod train;
pub mod unet;

pub use error::{Error, Result};
pub use image::{Grid, Image, SinoGeometry, Sinogram};
