//! Minimal reverse-mode autodiff tailored to this crate's models.

pub mod conv;
pub mod scalar;
pub mod tape;

pub use conv::ConvSpec;
pub use scalar::Scalar;
pub use tape::{Gradients, Tape, Var};
