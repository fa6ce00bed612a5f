//! End-to-end calibration on one training panel: factor count, factors,
//! covariance, long-run covariance, `delta`, reference weights and `rho`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dro_solver::DroProblem;
use crate::error::{Error, Result};
use crate::factor_model::{
    assemble_return_cov, cross_validate_threshold, default_threshold_grid, estimate_factors, select_num_factors,
    threshold_positive_definite, CovModel, FactorFit, ShrinkageRule, ThresholdCv,
};
use crate::longrun::{default_bandwidth, hac_long_run_cov, independent_long_run_cov, LongRunCov};
use crate::panel::ReturnPanel;
use crate::rng;
use crate::uncertainty::{mv_closed_form, select_delta_detailed, select_rho, DeltaSelection, UncertaintyParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorSelection {
    Fixed(usize),
    BaiNg { max_k: usize },
}

impl Default for FactorSelection {
    fn default() -> Self {
        FactorSelection::BaiNg { max_k: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdChoice {
    Fixed(f64),
    CrossValidated { folds: usize, grid: Vec<f64> },
}

impl Default for ThresholdChoice {
    fn default() -> Self {
        ThresholdChoice::Fixed(0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub factors: FactorSelection,
    pub threshold: ThresholdChoice,
    pub threshold_rule: ShrinkageRule,
    /// Constant `c` of the bandwidth rule `c T^{-1/8} p^{1/4}`.
    pub bandwidth_c: f64,
    pub delta_level: f64,
    pub rho_level: f64,
    /// Target per-period return of the reference portfolio.
    pub target_return: f64,
    pub quantile_draws: usize,
    pub seed: u64,
    /// Treat the factors as serially independent and skip HAC smoothing.
    pub serial_independence: bool,
}

impl CalibrationConfig {
    pub fn new(target_return: f64) -> Self {
        Self {
            factors: FactorSelection::default(),
            threshold: ThresholdChoice::default(),
            threshold_rule: ShrinkageRule::Soft,
            bandwidth_c: 5.0,
            delta_level: 0.95,
            rho_level: 0.95,
            target_return,
            quantile_draws: crate::uncertainty::DEFAULT_QUANTILE_DRAWS,
            seed: 0,
            serial_independence: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, level) in [("delta level", self.delta_level), ("rho level", self.rho_level)] {
            if !(level > 0.0 && level < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1), got {level}")));
            }
        }
        if self.rho_level <= 0.5 {
            return Err(Error::InvalidArgument(format!("rho level must exceed 0.5, got {}", self.rho_level)));
        }
        if !self.target_return.is_finite() {
            return Err(Error::NonFinite("target return"));
        }
        if !(self.bandwidth_c > 0.0 && self.bandwidth_c.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandwidth constant must be positive, got {}", self.bandwidth_c)));
        }
        match &self.threshold {
            ThresholdChoice::Fixed(c) if !(*c >= 0.0 && c.is_finite()) => {
                Err(Error::InvalidArgument(format!("threshold constant must be >= 0, got {c}")))
            }
            ThresholdChoice::CrossValidated { folds, grid } if *folds < 2 || grid.is_empty() => {
                Err(Error::InvalidArgument("cross-validation needs >= 2 folds and a nonempty grid".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Factor fit and covariance model of one panel.
#[derive(Debug, Clone)]
pub struct CovEstimate {
    pub k: usize,
    pub fit: FactorFit,
    pub cov: CovModel,
    pub threshold_cv: Option<ThresholdCv>,
}

/// Everything produced by [`calibrate`].
#[derive(Debug, Clone)]
pub struct Calibration {
    pub estimate: CovEstimate,
    pub long_run: LongRunCov,
    pub delta: DeltaSelection,
    /// Reference mean-variance weights on the factor covariance.
    pub w_mv: DVector<f64>,
    pub params: UncertaintyParams,
}

impl Calibration {
    pub fn fit(&self) -> &FactorFit {
        &self.estimate.fit
    }

    pub fn cov(&self) -> &CovModel {
        &self.estimate.cov
    }

    /// Robust allocation problem with the calibrated `delta` and `rho`.
    pub fn problem(&self) -> DroProblem {
        self.problem_with(self.params.delta, self.params.rho)
    }

    pub fn problem_with(&self, delta: f64, rho: f64) -> DroProblem {
        let cov = self.cov();
        DroProblem {
            loadings: cov.loadings.clone(),
            factor_cov: cov.factor_cov.clone(),
            factor_mean: cov.factor_mean.clone(),
            residual_cov: cov.residual_cov.matrix.clone(),
            delta,
            rho,
        }
    }
}

/// Number of factors to use on `panel`. A criterion choice of zero factors
/// is raised to one, since the robust program needs a factor space.
pub fn choose_factor_count(panel: &ReturnPanel, selection: &FactorSelection) -> Result<usize> {
    match *selection {
        FactorSelection::Fixed(k) => Ok(k),
        FactorSelection::BaiNg { max_k } => {
            let limit = panel.n_assets().min(panel.n_periods()) - 1;
            let k = select_num_factors(panel, max_k.min(limit))?;
            if k == 0 {
                tracing::warn!("information criterion selected no factors; using one");
            }
            Ok(k.max(1))
        }
    }
}

/// Factors plus thresholded covariance model.
pub fn estimate_cov_model(panel: &ReturnPanel, config: &CalibrationConfig) -> Result<CovEstimate> {
    config.validate()?;
    let k = choose_factor_count(panel, &config.factors)?;
    let fit = estimate_factors(panel, k)?;
    let (c, grid, threshold_cv) = match &config.threshold {
        ThresholdChoice::Fixed(c) => (*c, default_threshold_grid(), None),
        ThresholdChoice::CrossValidated { folds, grid } => {
            let cv = cross_validate_threshold(
                &fit.residuals,
                *folds,
                grid,
                config.threshold_rule,
                rng::child_seed(config.seed, 0),
            )?;
            (cv.c, grid.clone(), Some(cv))
        }
    };
    let residual_cov = threshold_positive_definite(&fit.residuals, c, config.threshold_rule, &grid)?;
    let cov = assemble_return_cov(&fit, &residual_cov)?;
    Ok(CovEstimate {
        k,
        fit,
        cov,
        threshold_cv,
    })
}

/// Runs the full calibration on a training panel.
pub fn calibrate(panel: &ReturnPanel, config: &CalibrationConfig) -> Result<Calibration> {
    let estimate = estimate_cov_model(panel, config)?;
    let fit = &estimate.fit;
    let long_run = if config.serial_independence {
        independent_long_run_cov(&fit.factor_mean)
    } else {
        let q = default_bandwidth(panel.n_periods(), panel.n_assets(), config.bandwidth_c);
        hac_long_run_cov(&fit.factors, &fit.factor_mean, q)?
    };
    let delta = select_delta_detailed(
        fit,
        &long_run,
        config.delta_level,
        config.quantile_draws,
        rng::child_seed(config.seed, 1),
    )?;
    let w_mv = mv_closed_form(&estimate.cov.mean, &estimate.cov.sigma_r, config.target_return)?;
    let mut params = select_rho(delta.delta, fit, &long_run, &w_mv, config.target_return, 1.0 - config.rho_level)?;
    params.delta_confidence = Some(delta.level);
    params.diagnostics.l0_quantile = Some(delta.l0_quantile);
    Ok(Calibration {
        estimate,
        long_run,
        delta,
        w_mv,
        params,
    })
}
