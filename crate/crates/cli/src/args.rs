//! Command-line grammar.
//!
//! Every setting is optional on the command line so that a TOML manifest
//! passed with `--config` can supply it; the documented defaults apply when
//! neither does.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "drofolio",
    version,
    about = "Factor-based distributionally robust mean-variance portfolios",
    after_help = "Exit codes: 0 success, 1 internal failure, 2 configuration error, 3 data error, \
                  4 infeasible allocation.\nDROFOLIO_THREADS caps the number of worker threads."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Log verbosity on stderr (-v info, -vv debug, -vvv trace)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the latent factor model and the thresholded return covariance
    Estimate(EstimateArgs),
    /// Calibrate the ambiguity radius and the worst-case return floor
    CalibrateUncertainty(CalibrateArgs),
    /// Calibrate and solve the robust allocation problem
    Allocate(AllocateArgs),
    /// Rolling-window out-of-sample evaluation of one or more strategies
    Backtest(BacktestArgs),
    /// Seeded Monte Carlo experiments on the synthetic factor market
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML manifest whose keys mirror the long flags (underscores for
    /// dashes); flags take precedence over it
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output directory, created when missing [default: .]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Master seed for all random draws (unsigned integer) [default: 0]
    #[arg(long, value_name = "INT")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Wide CSV of per-period excess returns (decimal fractions): a time
    /// column followed by one column per asset
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,

    /// Drop assets with any missing observation instead of rejecting the file
    #[arg(long)]
    pub drop_incomplete_assets: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Soft,
    Hard,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Fixed number of latent factors (count); overrides the information
    /// criterion
    #[arg(long, value_name = "N", conflicts_with = "max_k")]
    pub k: Option<usize>,

    /// Largest factor count searched by the information criterion (count)
    /// [default: 8]
    #[arg(long, value_name = "N")]
    pub max_k: Option<usize>,

    /// Shrinkage applied to residual covariances below the threshold
    /// [default: soft]
    #[arg(long, value_name = "RULE")]
    pub threshold_rule: Option<RuleArg>,

    /// Fixed threshold constant (dimensionless multiple of the adaptive
    /// entry-wise threshold) [default: 0.5]
    #[arg(long, value_name = "C", conflicts_with = "threshold_cv")]
    pub threshold_c: Option<f64>,

    /// Choose the threshold constant by cross-validation on a grid over
    /// [0, 4]
    #[arg(long)]
    pub threshold_cv: bool,

    /// Number of random splits used by --threshold-cv (count) [default: 5]
    #[arg(long, value_name = "N")]
    pub cv_folds: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CalibrationArgs {
    /// Target return of the reference mean-variance portfolio, per period
    /// as a decimal fraction (0.0005 = 5 basis points) [default: 0.0005]
    #[arg(long, value_name = "RETURN", allow_negative_numbers = true)]
    pub target_return: Option<f64>,

    /// Confidence level of the ambiguity radius, a probability in (0, 1)
    /// [default: 0.95]
    #[arg(long, value_name = "PROB")]
    pub delta_level: Option<f64>,

    /// Coverage of the worst-case return floor, a probability in (0.5, 1)
    /// [default: 0.95]
    #[arg(long, value_name = "PROB")]
    pub rho_level: Option<f64>,

    /// Constant c of the HAC bandwidth rule c * T^(-1/8) * p^(1/4)
    /// (dimensionless) [default: 5]
    #[arg(long, value_name = "C")]
    pub bandwidth_c: Option<f64>,

    /// Monte Carlo draws per quantile (count) [default: 200000]
    #[arg(long, value_name = "N")]
    pub quantile_draws: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub calibration: CalibrationArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    /// Solver stopping tolerance on the duality gap (dimensionless)
    /// [default: 1e-8]
    #[arg(long, value_name = "TOL")]
    pub tol: Option<f64>,

    /// Solver iteration cap (count) [default: 50000]
    #[arg(long, value_name = "N")]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AllocateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub calibration: CalibrationArgs,
    #[command(flatten)]
    pub solver: SolverArgs,

    /// Override the calibrated ambiguity radius (squared factor units,
    /// >= 0)
    #[arg(long, value_name = "DELTA")]
    pub delta: Option<f64>,

    /// Override the calibrated worst-case return floor (per-period return,
    /// decimal fraction)
    #[arg(long, value_name = "RETURN", allow_negative_numbers = true)]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub calibration: CalibrationArgs,
    #[command(flatten)]
    pub solver: SolverArgs,

    /// Training window length (periods)
    #[arg(long, value_name = "PERIODS")]
    pub window: Option<usize>,

    /// Holding period between rebalances (periods) [default: 1]
    #[arg(long, value_name = "PERIODS")]
    pub holding: Option<usize>,

    /// Comma-separated strategies among hd_dro, bcz_dro, equal_weight,
    /// mv_sample, mv_poet [default: hd_dro,equal_weight,mv_poet]
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub strategies: Option<Vec<String>>,

    /// Fixed ambiguity radius for bcz_dro (squared return units, >= 0)
    #[arg(long, value_name = "DELTA")]
    pub delta: Option<f64>,

    /// Fixed return floor for bcz_dro (per-period return, decimal fraction)
    #[arg(long, value_name = "RETURN", allow_negative_numbers = true)]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Comma-separated experiments among delta_table, q_table,
    /// portfolio_table, feasibility_table, uncertainty_curve, or `all`
    /// [default: all]
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub kind: Option<Vec<String>>,

    /// Comma-separated asset counts (count each) [default: 30,50,100]
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub p: Option<Vec<usize>>,

    /// Replications per asset count (count) [default: 100]
    #[arg(long, value_name = "N")]
    pub reps: Option<usize>,

    /// Estimation sample length (periods) [default: 200]
    #[arg(long, value_name = "PERIODS")]
    pub t: Option<usize>,

    /// Out-of-sample length of the portfolio experiment (periods)
    /// [default: 200]
    #[arg(long, value_name = "PERIODS")]
    pub test_t: Option<usize>,

    /// Monte Carlo draws per estimated quantile (count) [default: 200000]
    #[arg(long, value_name = "N")]
    pub quantile_draws: Option<usize>,

    /// Monte Carlo draws per oracle quantile (count) [default: 1000000]
    #[arg(long, value_name = "N")]
    pub oracle_draws: Option<usize>,
}
