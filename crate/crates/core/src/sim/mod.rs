//! Simulation of training and evaluation data: phantoms, parallel-beam
//! projection and Poisson count noise.

pub mod dataset;
pub mod noise;
pub mod phantom;
pub mod projector;

pub use dataset::{make_dataset, NoiseSpec, Pair, PairSimulator, ViewCounts};
pub use noise::{apply_poisson, NoiseLevel};
pub use phantom::{generate_phantom, shepp_logan, PhantomRecipe};
pub use projector::{project, Projector};
