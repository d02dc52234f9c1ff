//! Lightweight three-path depth+normal recognizer with parameter counting
//! and the frozen perceptual extractor built on top of it.

pub mod blocks;
pub mod count;
pub mod model;
pub mod perceptual;

pub use blocks::{BackbonePath, BackboneTrace, ConvBnRelu, FusionBlock, SavHead};
pub use count::{
    count_block, count_layer, multibranch_fusion_block, plain_fusion_convblock, BlockSpec,
    ConvLayerSpec,
};
pub use model::{batch_inputs, embed_map, LdnfConfig, LdnfNet, RecognizerOutputs};
pub use perceptual::{normal_from_depth_var, LdnfPerceptual};
