//! Synthetic factor markets with known population quantities, and the
//! Monte Carlo experiments that compare calibrated estimates against them.

mod dgp;
pub mod experiment;
pub mod oracle;

pub use dgp::{
    calibrate_dgp, draw_loadings, simulate_factors, simulate_panel, simulate_with_loadings, DgpCalibration, DgpParams,
    SimTruth, ERRORS_STREAM, FACTORS_STREAM, LOADINGS_STREAM,
};
pub use experiment::{run_experiment, Cell, ExperimentConfig, ExperimentKind, ExperimentTable};
pub use oracle::{oracle_delta, oracle_deltas, oracle_rho, population_long_run, population_return_cov};
