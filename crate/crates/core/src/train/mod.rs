//! Training stages and evaluation: run configuration, the denoiser stage,
//! the two recognizer stages, and test-split evaluation.

pub mod config;
pub mod data;
pub mod denoiser;
pub mod eval;
pub mod recognizer;

pub use config::{lr_at, set_by_path, RecognizerShape, RunConfig, StageSchedule};
pub use data::{class_index, class_of, load_split, Sample};
pub use denoiser::{
    attach_frozen_recognizer, load_denoiser, mean_psnr_gain, train_denoiser, TrainOutcome,
};
pub use eval::{evaluate, EvalSummary};
pub use recognizer::{
    denoiser_ckpt_path, finetune_ckpt_path, finetune_recognizer, load_recognizer,
    materialize_denoised, pretrain_ckpt_path, pretrain_recognizer,
};
