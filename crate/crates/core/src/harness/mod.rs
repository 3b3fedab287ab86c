//! Dataset construction, experiment configuration and the end-to-end
//! experiment driver behind the command-line tool.

mod config;
mod data;
mod experiment;

pub use config::{
    DataSource, ExperimentConfig, ExperimentKind, FilterConfig, IterativeConfig, Placement, PsfConfig,
    StabilizerConfig, Variant,
};
pub use data::{
    image_digest, ingest, patches, split_count, synthesize, synthetic_scene, Dataset, DEFAULT_TRAIN_FRACTION,
};
pub use experiment::{
    checkpoint_path, evaluate, gallery, load_dataset, pipelines, report_gallery, run_experiment, sigma_label,
    sweep, test_noise_seed, train_all, write_scatter, ExperimentOutcome, Pipeline, SweepRow,
};
