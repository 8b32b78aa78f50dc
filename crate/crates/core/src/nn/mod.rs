//! Dense tensors, reverse-mode autodiff and the Adam optimiser: just the
//! operators the sinogram U-Net needs.

pub mod ops;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use optim::{Adam, Parameter};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Real, Tensor};
