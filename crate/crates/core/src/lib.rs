//! Data construction and reward machinery for tree-of-cue video reasoning.
//!
//! - [`segmentation`] turns shot boundaries and embeddings into clips.
//! - [`cue_tree`] builds the segment tree over clips and the compilation
//!   chain for a set of key clips.
//! - [`gateway`] talks to chat-completion backends and owns the prompts.
//! - [`sft`] and [`rl`] build the two datasets.
//! - [`reward`] holds the reward, advantage and GRPO objective math.

pub mod config;
pub mod cue_tree;
pub mod gateway;
pub mod model;
pub mod records;
pub mod report;
pub mod reward;
pub mod rl;
pub mod segmentation;
pub mod sft;

pub use config::{Config, ConfigError};
pub use model::{Clip, QaPair, QaRecord, QaType, RlSample, SftSample};
