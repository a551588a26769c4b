//! Conditional masked token modeling for multi-task video generation.
//!
//! Videos are split into supervoxels and quantized against a k-means
//! codebook. A task (frame prediction, interpolation, in/outpainting,
//! class-conditional generation) turns a video into padded condition tokens;
//! target tokens are corrupted with either their condition token or `[MASK]`,
//! and a token predictor trained on that corruption is decoded
//! non-autoregressively with a mask schedule and annealed Gumbel noise.

pub mod decoder;
pub mod error;
pub mod grid;
pub mod harness;
pub mod io;
pub mod masking;
pub mod predictor;
pub mod rng;
pub mod tasks;
pub mod tokenizer;
pub mod video;
pub mod vocab;

pub use decoder::{commit_decode, generate, DecodeConfig, DecodeTrace, Generation, StepSnapshot};
pub use error::{Error, Result, StageExt};
pub use grid::{Coord, GridShape, PixelBox, TokenGrid};
pub use masking::{
    commit_mask, cutoff_kth_smallest, gamma, masked_count, Cutoff, Region, Schedule,
};
pub use predictor::{OraclePredictor, PottsParams, ProbMatrix, TokenPredictor, TrainConfig};
pub use rng::Rng;
pub use tasks::{make_condition, ConditionBundle, TaskKind, TaskSpec};
pub use tokenizer::{decode, encode, fit_codebook, Codebook};
pub use video::{VideoDims, VideoTensor, VoxelMask};
pub use vocab::{InputToken, VocabularyLayout};
