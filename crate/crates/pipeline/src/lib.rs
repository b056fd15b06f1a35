//! Batch pipeline around `lofar-core`: WAV ingestion, dataset manifests,
//! enhanced LOFAR sample generation, LFR1 export, plots and a synthetic
//! ship-noise corpus.

pub mod config;
pub mod export;
pub mod manifest;
pub mod pipeline;
pub mod plot;
pub mod synth;
pub mod wav;

pub use config::PipelineConfig;
pub use manifest::{ClassLabel, DatasetManifest, Split};
pub use pipeline::{run_pipeline, write_outputs, PipelineError, RunOptions, Stage};
