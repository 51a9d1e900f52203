//! Library surface of the heat-risk CLI: config resolution and pipeline
//! orchestration, kept separate from argument parsing so integration
//! tests can drive the stages directly.

pub mod config;
pub mod pipeline;

pub use config::{resolve, validate_config, Overrides, PipelineConfig, RawConfig};
pub use pipeline::{
    estimate_references, prepare_features, run_estimate, run_pipeline, run_preprocess,
    run_score, PipelineSummary,
};
