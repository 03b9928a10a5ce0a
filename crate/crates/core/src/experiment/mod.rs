//! Experiment orchestration behind the `faciesgan` command line: dataset
//! synthesis, training runs, evaluation reports, sweeps and summaries.

mod commands;
mod config;
pub mod plot;

pub use commands::{
    cmd_eval, cmd_report, cmd_synth, cmd_sweep, cmd_train, proportions, train_run, ConditionStats, EvalOptions,
    EvalOutput, Progress, Provenance, Report, RunArtifact, SynthOutput, TrainOptions, VariantSummary, ARTIFACT_FILE,
    BEST_FILE, CHECKPOINT_FILE, CONFIG_SNAPSHOT, EVAL_FILE, LOSS_FILE,
};
pub use config::{
    sha256_hex, DatasetPreset, DatasetSection, EvalSection, ExperimentConfig, ExperimentSection, LoadedConfig,
    NetworkSection, SweepSection,
};
