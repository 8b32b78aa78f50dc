//! Ordered-subset expectation maximisation.
//!
//! Each sub-iteration applies the multiplicative update
//!
//! ```text
//! x_j <- x_j / s_j * sum_{i in S} a_ij * y_i / (A x)_i,    s_j = sum_{i in S} a_ij
//! ```
//!
//! over one subset `S` of views, using [`Projector`] as `A` and its exact
//! transpose as backprojector. Subset `k` holds views `k, k + n, k + 2n, ...`
//! and subsets are visited in order. The estimate starts at 1 inside the
//! circular field of view and 0 outside. Where `(A x)_i <= 1e-12` the ratio
//! is taken as 0; pixels with zero sensitivity are set to 0.

use crate::error::{Error, Result};
use crate::image::{Image, Sinogram};
use crate::sim::phantom::fov_mask;
use crate::sim::projector::Projector;

const RATIO_EPS: f64 = 1e-12;

/// Field-of-view radius as a fraction of the reconstructed image width.
pub const FOV_FRACTION: f64 = 0.48;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconConfig {
    pub n_subsets: usize,
    pub n_iterations: usize,
    /// Stop early once a full iteration changes the estimate by less than
    /// this relative L1 amount.
    pub stop_epsilon: Option<f64>,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            n_subsets: 4,
            n_iterations: 20,
            stop_epsilon: None,
        }
    }
}

impl ReconConfig {
    pub fn new(n_subsets: usize, n_iterations: usize) -> Self {
        Self {
            n_subsets,
            n_iterations,
            stop_epsilon: None,
        }
    }
}

/// Incremental OSEM state over one projector and data set.
#[derive(Debug)]
pub struct Osem<'p> {
    projector: &'p Projector,
    data: Vec<f64>,
    subsets: Vec<Vec<usize>>,
    sensitivity: Vec<Vec<f64>>,
    estimate: Vec<f64>,
}

impl<'p> Osem<'p> {
    pub fn new(projector: &'p Projector, data: &[f64], n_subsets: usize) -> Result<Self> {
        let g = projector.geometry();
        if data.len() != g.n_angles * g.n_bins {
            return Err(Error::shape("osem", &[data.len()], &[g.n_angles * g.n_bins]));
        }
        if let Some(index) = data.iter().position(|v| !(*v >= 0.0)) {
            return Err(Error::NegativeValue {
                index,
                value: data[index],
            });
        }
        if n_subsets == 0 || !g.n_angles.is_multiple_of(n_subsets) {
            return Err(Error::Divisibility {
                op: "osem",
                axis: "angles",
                extent: g.n_angles,
                divisor: n_subsets.max(1),
            });
        }
        let subsets: Vec<Vec<usize>> = (0..n_subsets)
            .map(|k| (k..g.n_angles).step_by(n_subsets).collect())
            .collect();
        let (w, h) = projector.image_dims();
        let ones = vec![1.0; g.n_bins];
        let sensitivity = subsets
            .iter()
            .map(|views| {
                let mut s = vec![0.0; w * h];
                for &v in views {
                    projector.back_view(&ones, v, &mut s);
                }
                s
            })
            .collect();
        let radius = FOV_FRACTION * w.min(h) as f64;
        let estimate = if w == h {
            fov_mask(w, radius).into_iter().map(|inside| if inside { 1.0 } else { 0.0 }).collect()
        } else {
            vec![1.0; w * h]
        };
        Ok(Self {
            projector,
            data: data.to_vec(),
            subsets,
            sensitivity,
            estimate,
        })
    }

    pub fn n_subsets(&self) -> usize {
        self.subsets.len()
    }

    pub fn estimate(&self) -> &[f64] {
        &self.estimate
    }

    /// One update over subset `k`.
    pub fn sub_iteration(&mut self, k: usize) {
        let nb = self.projector.geometry().n_bins;
        let mut correction = vec![0.0; self.estimate.len()];
        let mut row = vec![0.0; nb];
        for &view in &self.subsets[k] {
            row.fill(0.0);
            self.projector.forward_view(&self.estimate, view, &mut row);
            let y = &self.data[view * nb..(view + 1) * nb];
            for (r, &yi) in row.iter_mut().zip(y) {
                *r = if *r > RATIO_EPS { yi / *r } else { 0.0 };
            }
            self.projector.back_view(&row, view, &mut correction);
        }
        for ((x, &c), &s) in self.estimate.iter_mut().zip(&correction).zip(&self.sensitivity[k]) {
            *x = if s > 0.0 { *x * c / s } else { 0.0 };
        }
    }

    /// One pass over all subsets; returns the relative L1 change.
    pub fn iteration(&mut self) -> f64 {
        let before = self.estimate.clone();
        for k in 0..self.subsets.len() {
            self.sub_iteration(k);
        }
        let norm: f64 = before.iter().map(|v| v.abs()).sum();
        let diff: f64 = before.iter().zip(&self.estimate).map(|(a, b)| (a - b).abs()).sum();
        if norm > 0.0 {
            diff / norm
        } else {
            diff
        }
    }

    pub fn into_estimate(self) -> Vec<f64> {
        self.estimate
    }
}

/// Poisson log-likelihood `sum y log(Ax) - Ax`, dropping the `log y!` term.
pub fn poisson_log_likelihood(projector: &Projector, estimate: &[f64], data: &[f64]) -> f64 {
    projector
        .forward(estimate)
        .iter()
        .zip(data)
        .map(|(&p, &y)| {
            if y > 0.0 {
                y * p.ln() - p
            } else {
                -p
            }
        })
        .sum()
}

/// Projector matching a sinogram: square image with one pixel per detector
/// bin and pixel size equal to the bin width.
pub fn projector_for(sino: &Sinogram) -> Result<Projector> {
    let g = *sino.geometry();
    Projector::new(g.n_bins, g.n_bins, g.bin_width, g)
}

/// Reconstructs with an existing projector whose geometry matches `sino`.
pub fn osem_with(projector: &Projector, sino: &Sinogram, cfg: &ReconConfig) -> Result<Image> {
    if projector.geometry() != sino.geometry() {
        return Err(Error::Config(format!(
            "projector geometry {:?} does not match sinogram geometry {:?}",
            projector.geometry(),
            sino.geometry()
        )));
    }
    let y: Vec<f64> = sino.data().iter().map(|&v| v as f64).collect();
    let mut state = Osem::new(projector, &y, cfg.n_subsets)?;
    for _ in 0..cfg.n_iterations {
        let change = state.iteration();
        if cfg.stop_epsilon.is_some_and(|eps| change < eps) {
            break;
        }
    }
    let (w, h) = projector.image_dims();
    let data = state.into_estimate().into_iter().map(|v| v as f32).collect();
    Image::new(w, h, projector.pixel_size(), data)
}

pub fn osem(sino: &Sinogram, cfg: &ReconConfig) -> Result<Image> {
    osem_with(&projector_for(sino)?, sino, cfg)
}

/// MLEM: OSEM with a single subset.
pub fn mlem(sino: &Sinogram, n_iterations: usize) -> Result<Image> {
    osem(sino, &ReconConfig::new(1, n_iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::SinoGeometry;

    #[test]
    fn zero_sinogram_gives_zero_image() {
        let s = Sinogram::zeros(SinoGeometry::full_circle(16, 32));
        let img = osem(&s, &ReconConfig::new(4, 1)).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn subset_divisibility_is_checked() {
        let s = Sinogram::zeros(SinoGeometry::full_circle(30, 32));
        assert!(matches!(
            osem(&s, &ReconConfig::new(4, 1)),
            Err(Error::Divisibility { extent: 30, divisor: 4, .. })
        ));
    }

    #[test]
    fn negative_data_is_rejected() {
        let g = SinoGeometry::full_circle(4, 8);
        let p = Projector::new(8, 8, 1.0, g).unwrap();
        let mut y = vec![1.0; 32];
        y[5] = -0.5;
        assert!(matches!(Osem::new(&p, &y, 2), Err(Error::NegativeValue { index: 5, .. })));
    }

    #[test]
    fn mlem_equals_single_subset_osem() {
        let phantom = crate::sim::phantom::shepp_logan(32);
        let s = crate::sim::project(&phantom, 16).unwrap();
        let a = mlem(&s, 3).unwrap();
        let b = osem(&s, &ReconConfig::new(1, 3)).unwrap();
        assert_eq!(a, b);
    }
}
