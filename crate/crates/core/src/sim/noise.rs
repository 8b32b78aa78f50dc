//! Poisson count noise.
//!
//! Samplers:
//! * `lambda < 10`: sequential inversion of the CDF from `k = 0`;
//! * `lambda >= 10`: Hormann's transformed rejection with squeeze (PTRS,
//!   "The transformed rejection method for generating Poisson random
//!   variables", 1993), the same constants as NumPy's legacy generator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Sinogram;
use crate::rng::{self, Stream};

/// Count regime of the simulated acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLevel {
    Low,
    Medium,
    High,
}

impl NoiseLevel {
    pub const ALL: [NoiseLevel; 3] = [NoiseLevel::Low, NoiseLevel::Medium, NoiseLevel::High];

    /// Expected total counts in a sinogram.
    pub fn total_counts(self) -> f64 {
        match self {
            NoiseLevel::Low => 1.0e6,
            NoiseLevel::Medium => 2.5e5,
            NoiseLevel::High => 5.0e4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            NoiseLevel::Low => "low",
            NoiseLevel::Medium => "medium",
            NoiseLevel::High => "high",
        }
    }

    /// Level used for dataset item `index` when levels are mixed.
    pub fn cycled(index: u64) -> Self {
        Self::ALL[(index % 3) as usize]
    }
}

impl fmt::Display for NoiseLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for NoiseLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(NoiseLevel::Low),
            "medium" => Ok(NoiseLevel::Medium),
            "high" => Ok(NoiseLevel::High),
            other => Err(Error::Config(format!(
                "unknown noise level `{other}` (expected low, medium or high)"
            ))),
        }
    }
}

/// `ln(k!)`: direct sum below 10, Stirling series above.
fn ln_factorial(k: u64) -> f64 {
    if k < 10 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let x = k as f64 + 1.0;
    let x2 = x * x;
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2)
        + 1.0 / (1260.0 * x2 * x2 * x)
}

/// One Poisson draw with mean `lambda`.
pub fn sample_poisson(lambda: f64, rng: &mut Stream) -> u64 {
    if !(lambda > 0.0) {
        return 0;
    }
    if lambda < 10.0 {
        let u = rng.uniform();
        let mut k = 0u64;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        // the tail beyond 200 has probability far below 2^-53 for lambda < 10
        while u > cdf && k < 200 {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
        }
        return k;
    }

    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.uniform() - 0.5;
        let v = rng.uniform();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -lambda + k * loglam - ln_factorial(k as u64);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// Scales `sino` so it sums to `total_counts`, draws an independent Poisson
/// count per bin and scales back to the original intensity units.
pub fn apply_poisson_counts(sino: &Sinogram, total_counts: f64, rng: &mut Stream) -> Result<Sinogram> {
    let mass = sino.sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass("apply_poisson"));
    }
    if !(total_counts > 0.0) {
        return Err(Error::Config(format!("total counts must be positive, got {total_counts}")));
    }
    let scale = total_counts / mass;
    let data = sino
        .data()
        .iter()
        .map(|&v| (sample_poisson(v as f64 * scale, rng) as f64 / scale) as f32)
        .collect();
    Sinogram::new(*sino.geometry(), data)
}

/// Poisson-corrupts `sino` at `level`; the draw depends only on `seed`.
pub fn apply_poisson(sino: &Sinogram, level: NoiseLevel, seed: u64) -> Result<Sinogram> {
    let mut rng = Stream::new(seed, rng::noise_stream(0));
    apply_poisson_counts(sino, level.total_counts(), &mut rng)
}
