//! Experiment plumbing: configuration, dataset layout, synthetic data,
//! the evaluation runner, model persistence and reports.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod persist;
pub mod report;
pub mod synth;

pub use config::{DetectionSource, Encoding, ExperimentConfig, SplitMode};
pub use dataset::{read_manifest, SequenceEntry, MANIFEST};
pub use experiment::{evaluate_model, run_experiment, train_model};
pub use persist::{load_model, model_digest, save_model, ModelBundle};
pub use report::MetricsReport;
pub use synth::{synth_generate, SynthParams};
