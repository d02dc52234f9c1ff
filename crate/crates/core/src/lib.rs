//! Depth-face denoising with an implicit decoding network, plus a lightweight
//! depth+normal recognizer and the synthetic data pipeline, training loops,
//! and evaluation harness that exercise them end to end.

pub mod autodiff;
pub mod depth;
pub mod diif;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod recognizer;
pub mod train;

pub use error::{Error, Result};
