//! Software phantoms: random ellipse/blob activity maps and Shepp-Logan.

use crate::image::Image;
use crate::rng::{self, Stream};

/// Ellipse in pixel units, `x` to the right and `y` up from the image
/// centre, rotated counter-clockwise by `angle` radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub semi_x: f64,
    pub semi_y: f64,
    pub angle: f64,
    pub intensity: f64,
}

impl Ellipse {
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.semi_x).powi(2) + (v / self.semi_y).powi(2) <= 1.0
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.semi_x * self.semi_y
    }

    /// Mirror image across the vertical axis through the image centre.
    pub fn mirrored(&self) -> Self {
        Self {
            cx: -self.cx,
            angle: -self.angle,
            ..*self
        }
    }
}

/// Isotropic Gaussian blob truncated at three standard deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub cx: f64,
    pub cy: f64,
    pub sigma: f64,
    pub amplitude: f64,
}

/// Centre of pixel `(row, col)` in centred pixel units.
#[inline]
pub(crate) fn pixel_center(n_rows: usize, n_cols: usize, row: usize, col: usize) -> (f64, f64) {
    (
        col as f64 + 0.5 - n_cols as f64 / 2.0,
        n_rows as f64 / 2.0 - row as f64 - 0.5,
    )
}

/// Additive ellipse rendering with `supersample x supersample` point samples
/// per pixel, returned in f64 without normalisation.
pub fn render_ellipses(n: usize, ellipses: &[Ellipse], supersample: usize) -> Vec<f64> {
    let ss = supersample.max(1);
    let inv = 1.0 / (ss * ss) as f64;
    let mut out = vec![0.0; n * n];
    for row in 0..n {
        for col in 0..n {
            let (x0, y0) = pixel_center(n, n, row, col);
            let mut acc = 0.0;
            for sy in 0..ss {
                let y = y0 + 0.5 - (sy as f64 + 0.5) / ss as f64;
                for sx in 0..ss {
                    let x = x0 - 0.5 + (sx as f64 + 0.5) / ss as f64;
                    for e in ellipses {
                        if e.contains(x, y) {
                            acc += e.intensity;
                        }
                    }
                }
            }
            out[row * n + col] = acc * inv;
        }
    }
    out
}

/// Original Shepp-Logan table: centre x, centre y, semi-axis x, semi-axis y,
/// rotation in degrees, additive intensity, all relative to the half-width.
pub const SHEPP_LOGAN: [[f64; 6]; 10] = [
    [0.0, 0.0, 0.69, 0.92, 0.0, 2.0],
    [0.0, -0.0184, 0.6624, 0.874, 0.0, -0.98],
    [0.22, 0.0, 0.11, 0.31, -18.0, -0.02],
    [-0.22, 0.0, 0.16, 0.41, 18.0, -0.02],
    [0.0, 0.35, 0.21, 0.25, 0.0, 0.01],
    [0.0, 0.1, 0.046, 0.046, 0.0, 0.01],
    [0.0, -0.1, 0.046, 0.046, 0.0, 0.01],
    [-0.08, -0.605, 0.046, 0.023, 0.0, 0.01],
    [0.0, -0.605, 0.023, 0.023, 0.0, 0.01],
    [0.06, -0.605, 0.023, 0.046, 0.0, 0.01],
];

/// Shepp-Logan ellipses scaled to an `n x n` grid.
pub fn shepp_logan_ellipses(n: usize) -> Vec<Ellipse> {
    let half = n as f64 / 2.0;
    SHEPP_LOGAN
        .iter()
        .map(|&[x, y, a, b, deg, intensity]| Ellipse {
            cx: x * half,
            cy: y * half,
            semi_x: a * half,
            semi_y: b * half,
            angle: deg.to_radians(),
            intensity,
        })
        .collect()
}

pub const SHEPP_LOGAN_SUPERSAMPLE: usize = 4;

/// Shepp-Logan phantom, clipped at zero and scaled so its maximum is 1.
pub fn shepp_logan(n: usize) -> Image {
    assert!(n >= 16, "Shepp-Logan needs at least 16 pixels, got {n}");
    let raw = render_ellipses(n, &shepp_logan_ellipses(n), SHEPP_LOGAN_SUPERSAMPLE);
    normalized_image(n, raw.into_iter().map(|v| v.max(0.0)).collect())
}

fn normalized_image(n: usize, raw: Vec<f64>) -> Image {
    let max = raw.iter().copied().fold(0.0, f64::max);
    let data = raw
        .iter()
        .map(|&v| if max > 0.0 { (v / max) as f32 } else { 0.0 })
        .collect();
    Image::new(n, n, 1.0, data).expect("phantom values are finite and nonnegative")
}

/// Distribution of random training phantoms.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomRecipe {
    pub seed: u64,
    pub size: usize,
    pub ellipse_count: (u64, u64),
    /// Ellipse and blob centres are drawn uniformly inside this fraction of
    /// the field-of-view radius.
    pub center_fraction: f64,
    pub semi_axis_px: (f64, f64),
    pub rotation_deg: (f64, f64),
    pub intensity: (f64, f64),
    pub blob_count: (u64, u64),
    pub blob_sigma_px: (f64, f64),
    /// Field-of-view radius as a fraction of the image width.
    pub fov_fraction: f64,
    pub supersample: usize,
}

impl PhantomRecipe {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            size: 128,
            ellipse_count: (2, 10),
            center_fraction: 0.8,
            semi_axis_px: (4.0, 40.0),
            rotation_deg: (0.0, 180.0),
            intensity: (0.2, 1.0),
            blob_count: (0, 3),
            blob_sigma_px: (2.0, 8.0),
            fov_fraction: 0.48,
            supersample: 2,
        }
    }

    pub fn fov_radius(&self) -> f64 {
        self.fov_fraction * self.size as f64
    }
}

/// Pixels whose centre lies within `radius` of the image centre.
pub fn fov_mask(n: usize, radius: f64) -> Vec<bool> {
    (0..n * n)
        .map(|i| {
            let (x, y) = pixel_center(n, n, i / n, i % n);
            x * x + y * y <= radius * radius
        })
        .collect()
}

fn point_in_disk(rng: &mut Stream, radius: f64) -> (f64, f64) {
    let r = radius * rng.uniform().sqrt();
    let t = rng.range(0.0, std::f64::consts::TAU);
    (r * t.cos(), r * t.sin())
}

const MAX_DRAWS: usize = 16;

/// Random phantom `index` of the recipe. Depends only on `(recipe, index)`.
///
/// The result is masked to the field of view and scaled to a maximum of
/// exactly 1. Draws that leave no activity inside the field of view are
/// repeated from the same stream, at most 16 times, after which a centred
/// disk is returned.
pub fn generate_phantom(recipe: &PhantomRecipe, index: u64) -> Image {
    let n = recipe.size;
    let mut rng = Stream::new(recipe.seed, rng::phantom_stream(index));
    let fov = recipe.fov_radius();
    let mask = fov_mask(n, fov);
    for _ in 0..MAX_DRAWS {
        let raw = draw_phantom(recipe, &mut rng, &mask);
        if raw.iter().any(|&v| v > 0.0) {
            return normalized_image(n, raw);
        }
    }
    let disk = [Ellipse {
        cx: 0.0,
        cy: 0.0,
        semi_x: fov / 2.0,
        semi_y: fov / 2.0,
        angle: 0.0,
        intensity: 1.0,
    }];
    normalized_image(n, render_ellipses(n, &disk, recipe.supersample))
}

fn draw_phantom(recipe: &PhantomRecipe, rng: &mut Stream, mask: &[bool]) -> Vec<f64> {
    let n = recipe.size;
    let center_radius = recipe.center_fraction * recipe.fov_radius();
    let n_ellipses = rng.int_inclusive(recipe.ellipse_count.0, recipe.ellipse_count.1);
    let ellipses: Vec<Ellipse> = (0..n_ellipses)
        .map(|_| {
            let (cx, cy) = point_in_disk(rng, center_radius);
            Ellipse {
                cx,
                cy,
                semi_x: rng.range(recipe.semi_axis_px.0, recipe.semi_axis_px.1),
                semi_y: rng.range(recipe.semi_axis_px.0, recipe.semi_axis_px.1),
                angle: rng.range(recipe.rotation_deg.0, recipe.rotation_deg.1).to_radians(),
                intensity: rng.range(recipe.intensity.0, recipe.intensity.1),
            }
        })
        .collect();
    let n_blobs = rng.int_inclusive(recipe.blob_count.0, recipe.blob_count.1);
    let blobs: Vec<Blob> = (0..n_blobs)
        .map(|_| {
            let (cx, cy) = point_in_disk(rng, center_radius);
            Blob {
                cx,
                cy,
                sigma: rng.range(recipe.blob_sigma_px.0, recipe.blob_sigma_px.1),
                amplitude: rng.range(recipe.intensity.0, recipe.intensity.1),
            }
        })
        .collect();

    let mut raw = render_ellipses(n, &ellipses, recipe.supersample);
    for (i, v) in raw.iter_mut().enumerate() {
        if !mask[i] {
            *v = 0.0;
            continue;
        }
        let (x, y) = pixel_center(n, n, i / n, i % n);
        for b in &blobs {
            let d2 = (x - b.cx).powi(2) + (y - b.cy).powi(2);
            if d2 <= 9.0 * b.sigma * b.sigma {
                *v += b.amplitude * (-d2 / (2.0 * b.sigma * b.sigma)).exp();
            }
        }
    }
    raw
}
