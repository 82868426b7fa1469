//! Data ingestion, temporal splitting, synthetic data and experiment runs.

pub mod data;
pub mod experiment;
pub mod split;
pub mod synth;

pub use data::{
    group_interactions, ingest, write_interactions, IngestReport, InteractionRow, UserRecord,
};
pub use experiment::{
    run, run_experiment, DataSource, EvalSplit, ExperimentConfig, ExperimentSummary, GridCell,
    ScorerSpec, Values, Workbench,
};
pub use split::{temporal_split, SplitConfig, SplitDataset, TestCase};
pub use synth::{generate_synthetic, SyntheticSpec};
