//! Spatial statistics, the feature vector and the classifier head.

pub mod eval;
pub mod features;
pub mod mlp;
pub mod spatial;
pub mod training;

pub use eval::{evaluate, ClassMetrics, EvalReport};
pub use features::{extract_features, features_from_stats, FEATURE_DIM};
pub use mlp::{gradient_check, train, MlpError, MlpModel, Prediction, TrainConfig, TrainReport};
pub use spatial::{spatial_stats, SpatialStats};
