//! Factor-based distributionally robust mean-variance portfolios.
//!
//! The crate estimates a latent factor model from a panel of excess
//! returns, calibrates the radius of a Wasserstein ambiguity set around the
//! factor distribution together with a worst-case return floor, and solves
//! the resulting convex allocation problem. A rolling-window backtester and
//! a seeded Monte Carlo harness sit on top.
//!
//! ```no_run
//! use drofolio::{calibrate, CalibrationConfig, ReturnPanel, MissingPolicy};
//!
//! let panel = ReturnPanel::read_csv("returns.csv", MissingPolicy::Reject)?;
//! let cal = calibrate(&panel, &CalibrationConfig::new(5e-4))?;
//! let weights = drofolio::solve_hd_dro(&cal.problem(), 1e-8, 50_000)?;
//! println!("{:?}", weights.status);
//! # Ok::<(), drofolio::Error>(())
//! ```

pub mod backtest;
pub mod dro_solver;
pub mod error;
pub mod factor_model;
pub mod linalg;
pub mod longrun;
pub mod panel;
pub mod pipeline;
pub mod rng;
pub mod simulation;
pub mod uncertainty;

pub use backtest::{build_weights, metrics, rolling_backtest, BacktestReport, Metrics, StrategyKind, StrategySpec};
pub use dro_solver::{
    check_feasibility, kkt_residual, solve_bcz_dro, solve_hd_dro, DroProblem, Feasibility, PortfolioWeights,
    SolveStatus,
};
pub use error::{Error, Result};
pub use factor_model::{
    assemble_return_cov, cross_validate_threshold, estimate_factors, select_num_factors, threshold_residual_cov,
    CovModel, FactorFit, ShrinkageRule, SparseResidualCov,
};
pub use longrun::{autocov, default_bandwidth, hac_long_run_cov, LongRunCov};
pub use panel::{MissingPolicy, ReturnPanel};
pub use pipeline::{calibrate, Calibration, CalibrationConfig, FactorSelection, ThresholdChoice};
pub use simulation::{run_experiment, simulate_panel, DgpParams, ExperimentConfig, ExperimentKind, ExperimentTable};
pub use uncertainty::{
    max_feasible_rho, mv_closed_form, quadform_quantile, select_delta, select_rho, GBar, UncertaintyParams,
};
