//! Training-pair generation: phantom -> clean dense-view sinogram (target)
//! and Poisson-corrupted sparse-view sinogram (input).

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{Image, Sinogram};
use crate::io::{self, Manifest, ManifestEntry};
use crate::rng::{self, Stream};
use crate::sim::noise::{apply_poisson_counts, NoiseLevel};
use crate::sim::phantom::{generate_phantom, PhantomRecipe};
use crate::sim::projector::Projector;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Noise assignment across a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseSpec {
    Fixed(NoiseLevel),
    /// Item `i` uses `NoiseLevel::ALL[i % 3]`.
    Mixed,
}

impl NoiseSpec {
    pub fn level_for(self, index: u64) -> NoiseLevel {
        match self {
            NoiseSpec::Fixed(l) => l,
            NoiseSpec::Mixed => NoiseLevel::cycled(index),
        }
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseSpec::Fixed(l) => l.fmt(f),
            NoiseSpec::Mixed => f.write_str("mixed"),
        }
    }
}

impl FromStr for NoiseSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("mixed") {
            Ok(NoiseSpec::Mixed)
        } else {
            s.parse().map(NoiseSpec::Fixed)
        }
    }
}

/// View counts of a training pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewCounts {
    pub sparse: usize,
    pub dense: usize,
}

impl Default for ViewCounts {
    fn default() -> Self {
        Self { sparse: 32, dense: 128 }
    }
}

/// One simulated example held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub index: u64,
    pub noise: NoiseLevel,
    pub phantom: Image,
    pub target: Sinogram,
    pub input: Sinogram,
}

/// Reusable simulator for one recipe. The dense-view projector is built once.
#[derive(Debug, Clone)]
pub struct PairSimulator {
    recipe: PhantomRecipe,
    views: ViewCounts,
    projector: Projector,
}

impl PairSimulator {
    pub fn new(recipe: PhantomRecipe, views: ViewCounts) -> Result<Self> {
        if views.sparse == 0 || !views.dense.is_multiple_of(views.sparse) {
            return Err(Error::Config(format!(
                "dense view count {} must be a multiple of sparse view count {}",
                views.dense, views.sparse
            )));
        }
        let probe = Image::zeros(recipe.size, recipe.size);
        let projector = Projector::for_image(&probe, views.dense)?;
        Ok(Self {
            recipe,
            views,
            projector,
        })
    }

    pub fn recipe(&self) -> &PhantomRecipe {
        &self.recipe
    }

    pub fn projector(&self) -> &Projector {
        &self.projector
    }

    /// Simulates item `index`. The sparse views are the dense views
    /// `0, step, 2*step, ...`, which share their angles exactly.
    pub fn simulate(&self, index: u64, noise: NoiseLevel) -> Result<Pair> {
        let phantom = generate_phantom(&self.recipe, index);
        let target = self.projector.project(&phantom)?;
        let clean_sparse = target.every_nth_view(self.views.dense / self.views.sparse)?;
        let mut rng = Stream::new(self.recipe.seed, rng::noise_stream(index));
        let input = apply_poisson_counts(&clean_sparse, noise.total_counts(), &mut rng)?;
        Ok(Pair {
            index,
            noise,
            phantom,
            target,
            input,
        })
    }
}

fn pair_names(index: u64) -> (String, String, String) {
    (
        format!("pair_{index:06}_input.sptb"),
        format!("pair_{index:06}_target.sptb"),
        format!("pair_{index:06}_phantom.sptb"),
    )
}

/// Writes `count` pairs plus `manifest.jsonl` into `out_dir`.
///
/// Items are generated independently from `(recipe.seed, index)`, so the
/// files do not depend on how many worker threads run.
pub fn make_dataset(
    recipe: &PhantomRecipe,
    count: u64,
    noise: NoiseSpec,
    views: ViewCounts,
    out_dir: impl AsRef<Path>,
) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let sim = PairSimulator::new(recipe.clone(), views)?;
    let write_one = |index: u64| -> Result<ManifestEntry> {
        let pair = sim.simulate(index, noise.level_for(index))?;
        let (input, target, phantom) = pair_names(index);
        io::write_sinogram(out_dir.join(&input), &pair.input)?;
        io::write_sinogram(out_dir.join(&target), &pair.target)?;
        io::write_image(out_dir.join(&phantom), &pair.phantom)?;
        Ok(ManifestEntry {
            index,
            input,
            target,
            phantom,
            seed: recipe.seed,
            noise: pair.noise.label().to_owned(),
        })
    };
    #[cfg(feature = "parallel")]
    let entries: Vec<Result<ManifestEntry>> = {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(write_one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let entries: Vec<Result<ManifestEntry>> = (0..count).map(write_one).collect();

    let manifest = Manifest {
        root: out_dir.to_path_buf(),
        entries: entries.into_iter().collect::<Result<_>>()?,
    };
    manifest.write(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
