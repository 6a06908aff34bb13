pub mod nn;
pub mod affect_metrics;
pub mod audio_features;
pub mod data_pipeline;
pub mod models;
pub mod training;

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
