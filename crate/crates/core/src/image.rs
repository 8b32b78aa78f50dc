//! Activity images and sinograms.

use crate::error::{Error, Result};
use crate::nn::Tensor;

fn check_values(data: &[f32]) -> Result<()> {
    match data.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
        Some(index) => Err(Error::NegativeValue {
            index,
            value: data[index] as f64,
        }),
        None => Ok(()),
    }
}

/// Row-major grid of samples; implemented by [`Image`] and [`Sinogram`].
pub trait Grid {
    /// `(columns, rows)`.
    fn dims(&self) -> (usize, usize);
    fn values(&self) -> &[f32];
}

/// 2-D nonnegative activity map. Row 0 is the top of the image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixel_size: f64,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixel_size: f64, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::Shape {
                op: "image",
                lhs: format!("{width}x{height}"),
                rhs: format!("{} samples", data.len()),
            });
        }
        if !(pixel_size > 0.0) {
            return Err(Error::Config(format!("pixel size must be positive, got {pixel_size}")));
        }
        check_values(&data)?;
        Ok(Self {
            width,
            height,
            pixel_size,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixel_size: 1.0,
            data: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        assert!(value >= 0.0 && value.is_finite(), "image values must be finite and nonnegative");
        self.data[row * self.width + col] = value;
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(0.0, f32::max)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }
}

impl Grid for Image {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    fn values(&self) -> &[f32] {
        &self.data
    }
}

/// Angular sampling and detector layout of a sinogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinoGeometry {
    pub n_angles: usize,
    pub n_bins: usize,
    pub start_angle_deg: f64,
    pub angular_range_deg: f64,
    pub bin_width: f64,
}

impl SinoGeometry {
    /// Views spread evenly over a full turn starting at 0 degrees, unit bins.
    pub fn full_circle(n_angles: usize, n_bins: usize) -> Self {
        Self {
            n_angles,
            n_bins,
            start_angle_deg: 0.0,
            angular_range_deg: 360.0,
            bin_width: 1.0,
        }
    }

    /// Angle of view `i` in degrees; the range end point is excluded.
    pub fn angle_deg(&self, i: usize) -> f64 {
        self.start_angle_deg + (self.angular_range_deg * i as f64) / self.n_angles as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_angles == 0 || self.n_bins == 0 {
            return Err(Error::Config(format!(
                "sinogram needs at least one angle and one bin, got {}x{}",
                self.n_angles, self.n_bins
            )));
        }
        if !(self.bin_width > 0.0) || !self.angular_range_deg.is_finite() || !self.start_angle_deg.is_finite() {
            return Err(Error::Config(format!("invalid sinogram geometry {self:?}")));
        }
        Ok(())
    }
}

/// Projection data, one row per view.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    geometry: SinoGeometry,
    data: Vec<f32>,
}

impl Sinogram {
    pub fn new(geometry: SinoGeometry, data: Vec<f32>) -> Result<Self> {
        geometry.validate()?;
        if data.len() != geometry.n_angles * geometry.n_bins {
            return Err(Error::Shape {
                op: "sinogram",
                lhs: format!("{}x{}", geometry.n_angles, geometry.n_bins),
                rhs: format!("{} samples", data.len()),
            });
        }
        check_values(&data)?;
        Ok(Self { geometry, data })
    }

    pub fn zeros(geometry: SinoGeometry) -> Self {
        Self {
            data: vec![0.0; geometry.n_angles * geometry.n_bins],
            geometry,
        }
    }

    pub fn geometry(&self) -> &SinoGeometry {
        &self.geometry
    }

    pub fn n_angles(&self) -> usize {
        self.geometry.n_angles
    }

    pub fn n_bins(&self) -> usize {
        self.geometry.n_bins
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, angle: usize) -> &[f32] {
        let n = self.geometry.n_bins;
        &self.data[angle * n..(angle + 1) * n]
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(0.0, f32::max)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    /// Keeps every `step`-th view starting with view 0.
    pub fn every_nth_view(&self, step: usize) -> Result<Sinogram> {
        let g = self.geometry;
        if step == 0 || !g.n_angles.is_multiple_of(step) {
            return Err(Error::Divisibility {
                op: "every_nth_view",
                axis: "angles",
                extent: g.n_angles,
                divisor: step.max(1),
            });
        }
        let data = (0..g.n_angles)
            .step_by(step)
            .flat_map(|a| self.row(a).iter().copied())
            .collect();
        Ok(Sinogram {
            geometry: SinoGeometry {
                n_angles: g.n_angles / step,
                ..g
            },
            data,
        })
    }

    /// `[1, 1, angles, bins]` tensor, optionally scaled.
    pub fn to_tensor(&self, scale: f32) -> Tensor<f32> {
        Tensor::new(
            &[1, 1, self.geometry.n_angles, self.geometry.n_bins],
            self.data.iter().map(|&v| v * scale).collect(),
        )
        .expect("sinogram extents are positive")
    }

    /// Builds a sinogram from a `[1, 1, angles, bins]` tensor, clamping
    /// negatives to zero and multiplying by `scale`.
    pub fn from_tensor(t: &Tensor<f32>, geometry: SinoGeometry, scale: f32) -> Result<Self> {
        if t.shape() != [1, 1, geometry.n_angles, geometry.n_bins] {
            return Err(Error::shape(
                "sinogram from tensor",
                t.shape(),
                &[1, 1, geometry.n_angles, geometry.n_bins],
            ));
        }
        Sinogram::new(geometry, t.data().iter().map(|&v| v.max(0.0) * scale).collect())
    }
}

impl Grid for Sinogram {
    fn dims(&self) -> (usize, usize) {
        (self.geometry.n_bins, self.geometry.n_angles)
    }
    fn values(&self) -> &[f32] {
        &self.data
    }
}
