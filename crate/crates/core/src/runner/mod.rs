//! Configuration, dataset ingestion, the end-to-end audit pipeline and report
//! export.

pub mod config;
pub mod data;
pub mod export;
pub mod pipeline;
pub mod seeds;

pub use config::{AttackerSpec, AuditStrategy, DataSource, ExperimentConfig, SCHEMA};
pub use data::{
    generate_synthetic_dataset, load_binary_dataset, load_csv_dataset, read_binary_split,
    read_csv_split, write_binary_split, write_csv_split, Dataset, DatasetManifest,
};
pub use export::{export_report, report_json, write_atomic, ExportExtras};
pub use pipeline::{
    attacker_split, audit, compute_score_table, evaluate_score_table, load_or_generate_data,
    run_attacker, run_pipeline, train_target, with_workers, AttackerSplit, AuditOutput, ScoreTable,
};
pub use seeds::{sample_seed, stage_seed};
