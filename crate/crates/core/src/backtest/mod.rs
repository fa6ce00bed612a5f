//! Rolling-window evaluation of allocation strategies.
//!
//! At each decision point the strategy is fitted on the trailing `window`
//! periods, and the resulting weights are held for the next `holding`
//! periods (the last block may be shorter).

mod metrics;
mod report;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{extended_float, metrics, Metrics};
pub use report::{read_equity_curve, write_equity_curve, write_weights_history, EquityCurve};

use crate::dro_solver::{solve_bcz_dro, solve_hd_dro, SolveStatus, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::panel::ReturnPanel;
use crate::pipeline::{calibrate, estimate_cov_model, CalibrationConfig, FactorSelection};
use crate::rng;
use crate::uncertainty::{gmv_weights, mv_closed_form, GBar, UncertaintyParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Factor-based robust portfolio with calibrated `delta` and `rho`.
    HdDro,
    /// Full-dimensional robust portfolio; needs fixed `delta` and `rho`.
    BczDro,
    EqualWeight,
    /// Mean-variance on the sample mean and covariance.
    MvSample,
    /// Mean-variance on the factor-based covariance.
    MvPoet,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::HdDro,
        StrategyKind::BczDro,
        StrategyKind::EqualWeight,
        StrategyKind::MvSample,
        StrategyKind::MvPoet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::HdDro => "hd_dro",
            StrategyKind::BczDro => "bcz_dro",
            StrategyKind::EqualWeight => "equal_weight",
            StrategyKind::MvSample => "mv_sample",
            StrategyKind::MvPoet => "mv_poet",
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy {s:?}")))
    }
}

/// A strategy together with everything needed to fit it on one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub calibration: CalibrationConfig,
    /// When both are set they replace the calibrated `delta` and `rho`.
    pub fixed_delta: Option<f64>,
    pub fixed_rho: Option<f64>,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl StrategySpec {
    pub fn new(kind: StrategyKind, target_return: f64) -> Self {
        Self {
            kind,
            calibration: CalibrationConfig::new(target_return),
            fixed_delta: None,
            fixed_rho: None,
            solver_tol: DEFAULT_TOL,
            solver_max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn with_fixed(mut self, delta: f64, rho: f64) -> Self {
        self.fixed_delta = Some(delta);
        self.fixed_rho = Some(rho);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.calibration.validate()?;
        match (self.fixed_delta, self.fixed_rho) {
            (Some(d), Some(r)) => {
                if !(d >= 0.0 && d.is_finite() && r.is_finite()) {
                    return Err(Error::InvalidArgument(format!("invalid fixed delta/rho ({d}, {r})")));
                }
            }
            (None, None) => {
                if self.kind == StrategyKind::BczDro {
                    return Err(Error::InvalidArgument("bcz_dro requires fixed delta and rho".into()));
                }
            }
            _ => {
                return Err(Error::InvalidArgument("fixed delta and rho must be given together".into()));
            }
        }
        Ok(())
    }

    fn max_factor_count(&self) -> usize {
        match self.calibration.factors {
            FactorSelection::Fixed(k) => k,
            FactorSelection::BaiNg { max_k } => max_k,
        }
    }
}

/// What happened while fitting one window.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WeightDiagnostics {
    pub k: Option<usize>,
    pub params: Option<UncertaintyParams>,
    pub g_bar: Option<GBar>,
    pub solver_status: Option<SolveStatus>,
    /// The robust problem was infeasible and minimum-variance weights were
    /// used instead.
    pub fallback: bool,
}

fn sample_moments(panel: &ReturnPanel, divisor_offset: usize) -> (DVector<f64>, DMatrix<f64>) {
    let r = panel.returns();
    let t = r.ncols();
    let mean = DVector::from_iterator(r.nrows(), r.row_iter().map(|row| row.sum() / t as f64));
    let mut centered = r.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let cov = symmetrize(&(&centered * centered.transpose() / (t - divisor_offset) as f64));
    (mean, cov)
}

/// Fits one strategy on a training panel and returns its weights.
pub fn build_weights(panel: &ReturnPanel, spec: &StrategySpec) -> Result<(DVector<f64>, WeightDiagnostics)> {
    spec.validate()?;
    let p = panel.n_assets();
    let mut diag = WeightDiagnostics::default();
    let target = spec.calibration.target_return;
    let weights = match spec.kind {
        StrategyKind::EqualWeight => DVector::from_element(p, 1.0 / p as f64),
        StrategyKind::MvSample => {
            let t = panel.n_periods();
            if p >= t {
                return Err(Error::SingularSampleCovariance { p, t });
            }
            let (mean, cov) = sample_moments(panel, 1);
            match mv_closed_form(&mean, &cov, target) {
                Err(Error::NotPositiveDefinite(_)) => return Err(Error::SingularSampleCovariance { p, t }),
                other => other?,
            }
        }
        StrategyKind::MvPoet => {
            let est = estimate_cov_model(panel, &spec.calibration)?;
            diag.k = Some(est.k);
            mv_closed_form(&est.cov.mean, &est.cov.sigma_r, target)?
        }
        StrategyKind::HdDro => {
            let cal = calibrate(panel, &spec.calibration)?;
            diag.k = Some(cal.estimate.k);
            let mut params = cal.params.clone();
            if let (Some(d), Some(r)) = (spec.fixed_delta, spec.fixed_rho) {
                params.delta = d;
                params.rho = r;
            }
            let problem = cal.problem_with(params.delta, params.rho);
            diag.params = Some(params);
            let out = solve_hd_dro(&problem, spec.solver_tol, spec.solver_max_iter)?;
            diag.g_bar = Some(out.g_bar);
            diag.solver_status = Some(out.status);
            match out.weights {
                Some(w) => w,
                None => {
                    tracing::warn!(g_bar = %out.g_bar, rho = problem.rho, "robust region empty; using minimum-variance weights");
                    diag.fallback = true;
                    gmv_weights(&cal.cov().sigma_r)?
                }
            }
        }
        StrategyKind::BczDro => {
            let (delta, rho) = (spec.fixed_delta.unwrap_or(0.0), spec.fixed_rho.unwrap_or(0.0));
            let (mean, cov) = sample_moments(panel, 0);
            let out = solve_bcz_dro(&mean, &cov, delta, rho, spec.solver_tol, spec.solver_max_iter)?;
            diag.g_bar = Some(out.g_bar);
            diag.solver_status = Some(out.status);
            match out.weights {
                Some(w) => w,
                None => {
                    tracing::warn!(g_bar = %out.g_bar, rho, "robust region empty; using minimum-variance weights");
                    diag.fallback = true;
                    gmv_weights(&cov).unwrap_or_else(|_| DVector::from_element(p, 1.0 / p as f64))
                }
            }
        }
    };
    Ok((weights, diag))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightRecord {
    pub rebalance_time: String,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRecord {
    pub window: usize,
    pub rebalance_time: String,
    #[serde(flatten)]
    pub diagnostics: WeightDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    pub strategy: StrategyKind,
    pub window: usize,
    pub holding: usize,
    pub asset_ids: Vec<String>,
    /// Time labels of the realized returns.
    pub return_times: Vec<String>,
    pub portfolio_returns: Vec<f64>,
    pub weights_history: Vec<WeightRecord>,
    pub metrics: Metrics,
    pub per_window_diagnostics: Vec<WindowRecord>,
}

/// Decision points `window, window + holding, ...` below `t`.
pub fn rebalance_schedule(t: usize, window: usize, holding: usize) -> Vec<usize> {
    if holding == 0 {
        return Vec::new();
    }
    (window..t).step_by(holding).collect()
}

/// Runs `spec` over `panel` with the given window and holding lengths.
pub fn rolling_backtest(panel: &ReturnPanel, spec: &StrategySpec, window: usize, holding: usize) -> Result<BacktestReport> {
    spec.validate()?;
    let t = panel.n_periods();
    if holding == 0 {
        return Err(Error::InvalidArgument("holding period must be at least 1".into()));
    }
    if window + holding > t {
        return Err(Error::InvalidArgument(format!(
            "window ({window}) + holding ({holding}) exceeds the {t} available periods"
        )));
    }
    let min_window = (2 * spec.max_factor_count()).max(4);
    if window < min_window {
        return Err(Error::InvalidArgument(format!("window must be at least {min_window} periods, got {window}")));
    }
    let schedule = rebalance_schedule(t, window, holding);
    let fitted: Vec<(DVector<f64>, WeightDiagnostics)> = schedule
        .par_iter()
        .enumerate()
        .map(|(j, &tc)| {
            let mut spec_j = spec.clone();
            spec_j.calibration.seed = rng::child_seed(spec.calibration.seed, j as u64);
            panel
                .window(tc - window, tc)
                .and_then(|train| build_weights(&train, &spec_j))
                .map_err(|e| Error::Window {
                    window: j,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;

    let r = panel.returns();
    let times = panel.time_index();
    let mut portfolio_returns = Vec::with_capacity(t - window);
    let mut return_times = Vec::with_capacity(t - window);
    let mut weights_history = Vec::with_capacity(schedule.len());
    let mut per_window_diagnostics = Vec::with_capacity(schedule.len());
    for (j, (&tc, (w, diag))) in schedule.iter().zip(fitted).enumerate() {
        for s in tc..(tc + holding).min(t) {
            portfolio_returns.push(w.dot(&r.column(s)));
            return_times.push(times[s].clone());
        }
        weights_history.push(WeightRecord {
            rebalance_time: times[tc].clone(),
            weights: w.iter().copied().collect(),
        });
        per_window_diagnostics.push(WindowRecord {
            window: j,
            rebalance_time: times[tc].clone(),
            diagnostics: diag,
        });
    }
    let metrics = metrics(&portfolio_returns)?;
    Ok(BacktestReport {
        strategy: spec.kind,
        window,
        holding,
        asset_ids: panel.asset_ids().to_vec(),
        return_times,
        portfolio_returns,
        weights_history,
        metrics,
        per_window_diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_length() {
        let s = rebalance_schedule(400, 125, 21);
        assert_eq!(s.len(), 14);
        assert_eq!(s[0], 125);
        assert_eq!(*s.last().unwrap(), 125 + 13 * 21);
    }

    #[test]
    fn strategy_names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
        }
        assert!("nope".parse::<StrategyKind>().is_err());
    }

    #[test]
    fn bcz_requires_fixed_parameters() {
        let spec = StrategySpec::new(StrategyKind::BczDro, 5e-4);
        assert!(spec.validate().is_err());
        assert!(spec.with_fixed(0.01, 0.0).validate().is_ok());
    }

    #[test]
    fn equal_weight_is_quarter_each() {
        let panel = ReturnPanel::from_matrix(DMatrix::from_fn(4, 10, |i, j| (i * j) as f64 * 1e-3)).unwrap();
        let (w, _) = build_weights(&panel, &StrategySpec::new(StrategyKind::EqualWeight, 0.0)).unwrap();
        assert_eq!(w.as_slice(), &[0.25; 4]);
    }

    #[test]
    fn sample_mv_refuses_wide_windows() {
        let panel = ReturnPanel::from_matrix(DMatrix::from_fn(6, 5, |i, j| ((i + 2 * j) % 5) as f64 * 1e-3)).unwrap();
        let err = build_weights(&panel, &StrategySpec::new(StrategyKind::MvSample, 1e-3)).unwrap_err();
        assert!(matches!(err, Error::SingularSampleCovariance { .. }));
        assert!(err.to_string().contains("mv_poet"));
    }
}
