//! Synthetic data, evaluation, sweeps and reports.

pub mod classify;
mod eval;
mod report;
pub mod sweep;
pub mod synth;

pub use classify::{gaussian_pool, gaussian_task, GaussianSpec};
pub use eval::{accuracy, evaluate, evaluate_timed, mse};
pub use report::{emit_report, read_report, EvalReport, EvalRow, ReportFormat, CSV_HEADER};
pub use sweep::{
    evaluate_grid, lambda_sensitivity, sweep, BetaAxis, Candidate, Protocol, Selection, SweepGrid,
    SweepOutcome,
};
pub use synth::{
    run_synth_suite, synth_generate, synth_heldout_mse, synth_select, synth_training_mse,
    OrderingCheck, SynthFit, SynthGrid, SynthSpec, SynthSuite, SynthTask,
};
