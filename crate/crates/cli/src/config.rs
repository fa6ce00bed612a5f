//! Resolution of command-line flags and the optional TOML manifest into a
//! validated [`RunConfig`].

use std::path::{Path, PathBuf};

use drofolio::backtest::StrategyKind;
use drofolio::dro_solver::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use drofolio::factor_model::default_threshold_grid;
use drofolio::{CalibrationConfig, ExperimentConfig, ExperimentKind, FactorSelection, MissingPolicy, ShrinkageRule, ThresholdChoice};
use serde::{Deserialize, Serialize};

use crate::args::{
    AllocateArgs, BacktestArgs, CalibrateArgs, CalibrationArgs, CommonArgs, DataArgs, EstimateArgs, ModelArgs, RuleArg,
    SimulateArgs, SolverArgs,
};
use crate::error::{CliError, CliResult};

const DEFAULT_TARGET_RETURN: f64 = 5e-4;
const DEFAULT_MAX_K: usize = 8;
const DEFAULT_CV_FOLDS: usize = 5;
const DEFAULT_STRATEGIES: [StrategyKind; 3] = [StrategyKind::HdDro, StrategyKind::EqualWeight, StrategyKind::MvPoet];

/// Contents of a `--config` manifest. Keys mirror the long flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub drop_incomplete_assets: Option<bool>,
    pub k: Option<usize>,
    pub max_k: Option<usize>,
    pub threshold_rule: Option<ShrinkageRule>,
    pub threshold_c: Option<f64>,
    pub threshold_cv: Option<bool>,
    pub cv_folds: Option<usize>,
    pub target_return: Option<f64>,
    pub delta_level: Option<f64>,
    pub rho_level: Option<f64>,
    pub bandwidth_c: Option<f64>,
    pub quantile_draws: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub delta: Option<f64>,
    pub rho: Option<f64>,
    pub window: Option<usize>,
    pub holding: Option<usize>,
    pub strategies: Option<Vec<String>>,
    pub kind: Option<Vec<String>>,
    pub p: Option<Vec<usize>>,
    pub reps: Option<usize>,
    pub t: Option<usize>,
    pub test_t: Option<usize>,
    pub oracle_draws: Option<usize>,
    /// Full experiment settings; the simulate flags override single fields.
    pub experiment: Option<ExperimentConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        // Paths in a manifest are relative to the manifest itself.
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.input, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    fn from_common(common: &CommonArgs) -> CliResult<Self> {
        match &common.config {
            Some(path) => Self::load(path),
            None => Ok(Self::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    Estimate,
    CalibrateUncertainty,
    Allocate,
    Backtest,
    Simulate,
}

impl CommandName {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandName::Estimate => "estimate",
            CommandName::CalibrateUncertainty => "calibrate-uncertainty",
            CommandName::Allocate => "allocate",
            CommandName::Backtest => "backtest",
            CommandName::Simulate => "simulate",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AllocationSettings {
    /// User overrides of the calibrated values.
    pub delta: Option<f64>,
    pub rho: Option<f64>,
    pub solver: SolverSettings,
}

#[derive(Debug, Clone, Serialize)]
pub struct BacktestSettings {
    pub window: usize,
    pub holding: usize,
    pub strategies: Vec<StrategyKind>,
    pub bcz_delta: Option<f64>,
    pub bcz_rho: Option<f64>,
    pub solver: SolverSettings,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSettings {
    pub kinds: Vec<ExperimentKind>,
    pub experiment: ExperimentConfig,
}

/// Fully resolved run. Its JSON form is hashed for provenance, so the
/// output directory is left out.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: CommandName,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub missing_policy: Option<MissingPolicy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub allocation: Option<AllocationSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backtest: Option<BacktestSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSettings>,
    #[serde(skip)]
    pub out: PathBuf,
}

impl RunConfig {
    fn base(command: CommandName, common: &CommonArgs, file: &FileConfig) -> Self {
        RunConfig {
            command,
            seed: common.seed.or(file.seed).unwrap_or(0),
            input: None,
            missing_policy: None,
            calibration: None,
            allocation: None,
            backtest: None,
            simulation: None,
            out: common.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from(".")),
        }
    }

    fn with_data(mut self, data: &DataArgs, file: &FileConfig) -> CliResult<Self> {
        let input = data
            .input
            .clone()
            .or_else(|| file.input.clone())
            .ok_or_else(|| CliError::config("--input is required"))?;
        if !input.is_file() {
            return Err(CliError::config(format!("input file {} does not exist", input.display())));
        }
        let drop = data.drop_incomplete_assets || file.drop_incomplete_assets.unwrap_or(false);
        self.input = Some(input);
        self.missing_policy = Some(if drop { MissingPolicy::DropAssets } else { MissingPolicy::Reject });
        Ok(self)
    }

    pub fn estimate(args: &EstimateArgs) -> CliResult<Self> {
        let file = FileConfig::from_common(&args.common)?;
        let mut run = Self::base(CommandName::Estimate, &args.common, &file).with_data(&args.data, &file)?;
        run.calibration = Some(calibration(&args.model, &CalibrationArgs::default(), &file, run.seed)?);
        Ok(run)
    }

    pub fn calibrate(args: &CalibrateArgs) -> CliResult<Self> {
        let file = FileConfig::from_common(&args.common)?;
        let mut run =
            Self::base(CommandName::CalibrateUncertainty, &args.common, &file).with_data(&args.data, &file)?;
        run.calibration = Some(calibration(&args.model, &args.calibration, &file, run.seed)?);
        Ok(run)
    }

    pub fn allocate(args: &AllocateArgs) -> CliResult<Self> {
        let file = FileConfig::from_common(&args.common)?;
        let mut run = Self::base(CommandName::Allocate, &args.common, &file).with_data(&args.data, &file)?;
        run.calibration = Some(calibration(&args.model, &args.calibration, &file, run.seed)?);
        let delta = args.delta.or(file.delta);
        if let Some(d) = delta {
            check_nonnegative("--delta", d)?;
        }
        let rho = args.rho.or(file.rho);
        if let Some(r) = rho {
            check_finite("--rho", r)?;
        }
        run.allocation = Some(AllocationSettings {
            delta,
            rho,
            solver: solver(&args.solver, &file)?,
        });
        Ok(run)
    }

    pub fn backtest(args: &BacktestArgs) -> CliResult<Self> {
        let file = FileConfig::from_common(&args.common)?;
        let mut run = Self::base(CommandName::Backtest, &args.common, &file).with_data(&args.data, &file)?;
        run.calibration = Some(calibration(&args.model, &args.calibration, &file, run.seed)?);
        let window = args
            .window
            .or(file.window)
            .ok_or_else(|| CliError::config("--window is required"))?;
        let holding = args.holding.or(file.holding).unwrap_or(1);
        if window < 2 || holding == 0 {
            return Err(CliError::config(format!(
                "window must be >= 2 and holding >= 1 periods, got {window} and {holding}"
            )));
        }
        let strategies = match args.strategies.as_ref().or(file.strategies.as_ref()) {
            Some(names) => parse_list::<StrategyKind>(names, "strategy")?,
            None => DEFAULT_STRATEGIES.to_vec(),
        };
        let bcz_delta = args.delta.or(file.delta);
        let bcz_rho = args.rho.or(file.rho);
        if strategies.contains(&StrategyKind::BczDro) {
            match (bcz_delta, bcz_rho) {
                (Some(d), Some(r)) => {
                    check_nonnegative("--delta", d)?;
                    check_finite("--rho", r)?;
                }
                _ => return Err(CliError::config("bcz_dro needs both --delta and --rho")),
            }
        }
        run.backtest = Some(BacktestSettings {
            window,
            holding,
            strategies,
            bcz_delta,
            bcz_rho,
            solver: solver(&args.solver, &file)?,
        });
        Ok(run)
    }

    pub fn simulate(args: &SimulateArgs) -> CliResult<Self> {
        let file = FileConfig::from_common(&args.common)?;
        let mut run = Self::base(CommandName::Simulate, &args.common, &file);
        let kinds = match args.kind.as_ref().or(file.kind.as_ref()) {
            Some(names) if names.iter().any(|n| n == "all") => ExperimentKind::ALL.to_vec(),
            Some(names) => parse_list::<ExperimentKind>(names, "experiment")?,
            None => ExperimentKind::ALL.to_vec(),
        };
        let mut exp = file.experiment.clone().unwrap_or_default();
        if let Some(p) = args.p.clone().or_else(|| file.p.clone()) {
            exp.p_values = p;
        }
        set(&mut exp.replications, args.reps.or(file.reps));
        set(&mut exp.t, args.t.or(file.t));
        set(&mut exp.test_t, args.test_t.or(file.test_t));
        set(&mut exp.quantile_draws, args.quantile_draws.or(file.quantile_draws));
        set(&mut exp.oracle_draws, args.oracle_draws.or(file.oracle_draws));
        exp.validate().map_err(|e| CliError::config(e.to_string()))?;
        run.simulation = Some(SimulationSettings { kinds, experiment: exp });
        Ok(run)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_list<T: std::str::FromStr>(names: &[String], what: &str) -> CliResult<Vec<T>> {
    let mut out = Vec::with_capacity(names.len());
    for n in names {
        let v = n
            .trim()
            .parse()
            .map_err(|_| CliError::config(format!("unknown {what} {n:?}")))?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(CliError::config(format!("empty {what} list")));
    }
    Ok(out)
}

fn check_nonnegative(flag: &str, x: f64) -> CliResult<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(format!("{flag} must be finite and >= 0, got {x}")))
    }
}

fn check_finite(flag: &str, x: f64) -> CliResult<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(format!("{flag} must be finite, got {x}")))
    }
}

fn solver(args: &SolverArgs, file: &FileConfig) -> CliResult<SolverSettings> {
    let tol = args.tol.or(file.tol).unwrap_or(DEFAULT_TOL);
    let max_iter = args.max_iter.or(file.max_iter).unwrap_or(DEFAULT_MAX_ITER);
    if !(tol > 0.0 && tol.is_finite()) || max_iter == 0 {
        return Err(CliError::config(format!(
            "solver tolerance must be positive and the iteration cap nonzero, got {tol} and {max_iter}"
        )));
    }
    Ok(SolverSettings { tol, max_iter })
}

fn calibration(model: &ModelArgs, cal: &CalibrationArgs, file: &FileConfig, seed: u64) -> CliResult<CalibrationConfig> {
    let mut cfg = CalibrationConfig::new(cal.target_return.or(file.target_return).unwrap_or(DEFAULT_TARGET_RETURN));
    cfg.seed = seed;
    cfg.factors = match (model.k, model.max_k) {
        (Some(k), _) => FactorSelection::Fixed(k),
        (None, Some(m)) => FactorSelection::BaiNg { max_k: m },
        (None, None) => match (file.k, file.max_k) {
            (Some(_), Some(_)) => return Err(CliError::config("k and max_k are mutually exclusive")),
            (Some(k), None) => FactorSelection::Fixed(k),
            (None, m) => FactorSelection::BaiNg {
                max_k: m.unwrap_or(DEFAULT_MAX_K),
            },
        },
    };
    match cfg.factors {
        FactorSelection::Fixed(0) | FactorSelection::BaiNg { max_k: 0 } => {
            return Err(CliError::config("the factor count must be at least 1"))
        }
        _ => {}
    }
    cfg.threshold_rule = match model.threshold_rule {
        Some(RuleArg::Soft) => ShrinkageRule::Soft,
        Some(RuleArg::Hard) => ShrinkageRule::Hard,
        None => file.threshold_rule.unwrap_or(ShrinkageRule::Soft),
    };
    let use_cv = model.threshold_cv || (model.threshold_c.is_none() && file.threshold_cv.unwrap_or(false));
    cfg.threshold = if use_cv {
        ThresholdChoice::CrossValidated {
            folds: model.cv_folds.or(file.cv_folds).unwrap_or(DEFAULT_CV_FOLDS),
            grid: default_threshold_grid(),
        }
    } else {
        ThresholdChoice::Fixed(model.threshold_c.or(file.threshold_c).unwrap_or(0.5))
    };
    set(&mut cfg.delta_level, cal.delta_level.or(file.delta_level));
    set(&mut cfg.rho_level, cal.rho_level.or(file.rho_level));
    set(&mut cfg.bandwidth_c, cal.bandwidth_c.or(file.bandwidth_c));
    set(&mut cfg.quantile_draws, cal.quantile_draws.or(file.quantile_draws));
    if cfg.quantile_draws == 0 {
        return Err(CliError::config("quantile draws must be positive"));
    }
    cfg.validate().map_err(|e| CliError::config(e.to_string()))?;
    Ok(cfg)
}
