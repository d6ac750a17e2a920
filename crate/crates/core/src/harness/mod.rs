//! Simulation experiments: scenario construction, runners and CSV output.
//!
//! Every runner is a pure function of its configuration. Repetitions run in
//! parallel, rows are collected in repetition order, and all randomness is
//! drawn from substreams of the configured seed, so identical configurations
//! give byte-identical tables.

pub mod config;
pub mod experiments;
pub mod output;
pub mod scenario;

pub use config::{AppendixConfig, DenoiseSettings, DfSettings, ExperimentConfig, ExperimentSpec, Resolved, VarianceSettings};
pub use experiments::{
    run_appendix_f, run_bias_table, run_denoise, run_df_figure, run_figure1, run_figure2, run_ivar_table, run_risk_table,
    run_rvar_table, step_signal, AppendixTables, BiasRow, DenoiseTable, DfRow, DfSummaryRow, DfTable, IvarRow,
    ResultRow, RiskTable, RvarRow, RvarTable, SelectionRow, SummaryRow,
};
pub use output::{run_and_write, write_csv, write_json, RunReport};
pub use scenario::{build_scenario, sigma2_for_snr, ScenarioTruth};
