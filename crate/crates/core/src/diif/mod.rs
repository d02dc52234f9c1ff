//! Implicit-function depth denoiser: coordinate handling, encoder pyramid,
//! positional encoding, shared decoder, and the assembled model.

pub mod coord;
pub mod decoder;
pub mod encoder;
pub mod model;
pub mod pe;

pub use coord::{cell_center, make_coord_grid, nearest_cell, nearest_index};
pub use decoder::DiifDecoder;
pub use encoder::{DsResBlock, Encoder, ResBlock, PYRAMID_LEVELS};
pub use model::{denoise, level_offsets, model_inputs, DmdConfig, DmdNet};
pub use pe::PositionalEncoder;
