//! Training-and-evaluation toolkit for binary deepfake image classification.
//!
//! The pipeline runs in stages: build a balanced video catalog with blind
//! video-level splits ([`catalog`]), turn the videos into a face-crop image
//! dataset ([`facepipe`]), fine-tune a convolutional backbone with a binary
//! head ([`classifier`], [`trainer`]), and evaluate on the held-out test
//! partition ([`evaluator`]).

pub mod catalog;
pub mod classifier;
pub mod config;
pub mod data;
pub mod evaluator;
pub mod facepipe;
pub mod fixture;
pub mod trainer;

pub use catalog::{Catalog, Label, Partition, SplitPlan, VideoRecord};
pub use classifier::ModelHandle;
pub use config::RunConfig;
pub use evaluator::{ConfusionMatrix, EvalReport};
pub use facepipe::{FaceDetection, FaceSample, FrameImage};
pub use trainer::{EpochStats, TrainConfig};
