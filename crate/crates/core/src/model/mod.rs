//! The permutation-invariant set classifier, its inputs and its training.

pub mod checkpoint;
mod classifier;
mod pointset;
mod train;

pub use classifier::{
    Architecture, Dense, FeatureGradient, ForwardRecord, GradientPass, InputGradient,
    SetClassifier,
};
pub use pointset::{ElementId, PointSet};
pub use train::{evaluate, train, EpochMetrics, TrainConfig};
