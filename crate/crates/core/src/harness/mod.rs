//! Seeded instance generators and the Monte-Carlo experiment runner.

mod experiment;
mod gen;

pub use experiment::{
    run_experiment, run_experiment_with, write_records_csv, ExperimentConfig, ExperimentFamily,
    ExperimentRecord, CSV_COLUMNS,
};
pub use gen::{
    derive_seed, gen_bounded_noise, gen_certified_matrix, gen_gaussian_matrix, gen_planted_signal,
    CertifiedMatrix, Profile,
};
