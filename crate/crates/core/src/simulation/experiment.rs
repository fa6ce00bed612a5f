//! Seeded Monte Carlo experiments and their tabular output.
//!
//! Every experiment fixes the loadings once per asset count (drawn from the
//! master seed) and gives replication `r` the seed `child_seed(seed_p, r)`.
//! Replications run in parallel but results are collected in index order,
//! so output does not depend on the thread count.

use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backtest::{build_weights, StrategyKind, StrategySpec};
use crate::error::{Error, Result};
use crate::factor_model::estimate_factors;
use crate::longrun::{default_bandwidth, hac_long_run_cov};
use crate::pipeline::{estimate_cov_model, CalibrationConfig, FactorSelection, ThresholdChoice};
use crate::rng::child_seed;
use crate::uncertainty::{delta_levels_from_moments, max_feasible_rho, mv_closed_form, rho_from_parts, GBar};

use super::dgp::{draw_loadings, simulate_with_loadings, DgpParams};
use super::oracle::{oracle_deltas, oracle_rho, ORACLE_SEED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Estimated against oracle radius per confidence level.
    DeltaTable,
    /// Estimated against oracle `Q` per confidence level.
    QTable,
    /// Out-of-sample standard deviation of the robust, full-dimensional
    /// robust and equal-weight portfolios.
    PortfolioTable,
    /// Largest admissible return floor against the calibrated one.
    FeasibilityTable,
    /// Median radius as factor persistence grows.
    UncertaintyCurve,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        Self::DeltaTable,
        Self::QTable,
        Self::PortfolioTable,
        Self::FeasibilityTable,
        Self::UncertaintyCurve,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::DeltaTable => "delta_table",
            Self::QTable => "q_table",
            Self::PortfolioTable => "portfolio_table",
            Self::FeasibilityTable => "feasibility_table",
            Self::UncertaintyCurve => "uncertainty_curve",
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment {s:?}")))
    }
}

/// Settings shared by all experiments. The market for `p` assets is
/// [`DgpParams::fixture`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub p_values: Vec<usize>,
    /// Estimation sample length.
    pub t: usize,
    /// Out-of-sample length for the portfolio experiment.
    pub test_t: usize,
    pub replications: usize,
    pub levels: Vec<f64>,
    pub target_return: f64,
    pub threshold_c: f64,
    pub bandwidth_c: f64,
    /// Draws per estimated quantile.
    pub quantile_draws: usize,
    /// Draws per oracle quantile.
    pub oracle_draws: usize,
    /// Confidence of the radius used in the portfolio and feasibility
    /// experiments.
    pub portfolio_level: f64,
    /// Coverage `1 - eps` of the return floor.
    pub rho_level: f64,
    /// Multipliers of the autoregressive coefficients in the curve.
    pub ar_multipliers: Vec<f64>,
    /// Curve replications per multiplier.
    pub curve_replications: usize,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            p_values: vec![30, 50, 100],
            t: 200,
            test_t: 200,
            replications: 100,
            levels: vec![0.90, 0.95, 0.99],
            target_return: 5e-4,
            threshold_c: 0.5,
            bandwidth_c: 5.0,
            quantile_draws: 200_000,
            oracle_draws: 1_000_000,
            portfolio_level: 0.95,
            rho_level: 0.95,
            ar_multipliers: (1..=6).map(f64::from).collect(),
            curve_replications: 50,
            solver_tol: crate::dro_solver::DEFAULT_TOL,
            solver_max_iter: crate::dro_solver::DEFAULT_MAX_ITER,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.p_values.is_empty() || self.p_values.iter().any(|&p| p < 2) {
            return bad("p_values must be non-empty with every p >= 2".into());
        }
        if self.t < 10 || self.test_t < 2 {
            return bad(format!("t = {} and test_t = {} too short", self.t, self.test_t));
        }
        if self.replications == 0 || self.curve_replications == 0 {
            return bad("replication counts must be positive".into());
        }
        if self.quantile_draws == 0 || self.oracle_draws == 0 {
            return bad("draw counts must be positive".into());
        }
        for &l in self.levels.iter().chain([&self.portfolio_level]) {
            if !(l > 0.0 && l < 1.0) {
                return bad(format!("confidence level {l} outside (0, 1)"));
            }
        }
        if !(self.rho_level > 0.5 && self.rho_level < 1.0) {
            return bad(format!("rho_level {} outside (0.5, 1)", self.rho_level));
        }
        if !(self.threshold_c >= 0.0) || !(self.bandwidth_c > 0.0) {
            return bad("threshold_c must be >= 0 and bandwidth_c > 0".into());
        }
        Ok(())
    }

    fn eps(&self) -> f64 {
        1.0 - self.rho_level
    }

    fn calibration(&self, k: usize, seed: u64) -> CalibrationConfig {
        let mut c = CalibrationConfig::new(self.target_return);
        c.factors = FactorSelection::Fixed(k);
        c.threshold = ThresholdChoice::Fixed(self.threshold_c);
        c.bandwidth_c = self.bandwidth_c;
        c.delta_level = self.portfolio_level;
        c.rho_level = self.rho_level;
        c.quantile_draws = self.quantile_draws;
        c.seed = seed;
        c
    }
}

const LOADINGS_TAG: u64 = 1 << 32;
const CURVE_TAG: u64 = 1 << 33;

/// Seed of the data replications for asset count `p`.
pub fn p_seed(seed: u64, p: usize) -> u64 {
    child_seed(seed, p as u64)
}

/// Loadings held fixed across the replications for asset count `p`.
pub fn fixed_loadings(params: &DgpParams, seed: u64, p: usize) -> Result<DMatrix<f64>> {
    draw_loadings(params, child_seed(seed, LOADINGS_TAG + p as u64))
}

fn replicate<T: Send>(n: usize, seed: u64, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..n).into_par_iter().map(|r| f(child_seed(seed, r as u64))).collect()
}

/// Estimated radius at each of `config.levels` from one simulated sample.
pub fn delta_replication(params: &DgpParams, loadings: &DMatrix<f64>, config: &ExperimentConfig, seed: u64) -> Result<Vec<f64>> {
    let (panel, _) = simulate_with_loadings(params, loadings, config.t, seed)?;
    let fit = estimate_factors(&panel, params.k)?;
    let q = default_bandwidth(config.t, params.n_assets(), config.bandwidth_c);
    let lr = hac_long_run_cov(&fit.factors, &fit.factor_mean, q)?;
    let sel = delta_levels_from_moments(
        &fit.factor_mean,
        &lr.matrix,
        config.t,
        &config.levels,
        config.quantile_draws,
        child_seed(seed, 1),
    )?;
    Ok(sel.into_iter().map(|d| d.delta).collect())
}

/// Estimated `Q` at coverage `l` for each `l` in `config.levels`.
pub fn q_replication(params: &DgpParams, loadings: &DMatrix<f64>, config: &ExperimentConfig, seed: u64) -> Result<Vec<f64>> {
    let (panel, _) = simulate_with_loadings(params, loadings, config.t, seed)?;
    let est = estimate_cov_model(&panel, &config.calibration(params.k, seed))?;
    let w = mv_closed_form(&est.cov.mean, &est.cov.sigma_r, config.target_return)?;
    let q = default_bandwidth(config.t, params.n_assets(), config.bandwidth_c);
    let lr = hac_long_run_cov(&est.fit.factors, &est.fit.factor_mean, q)?;
    config
        .levels
        .iter()
        .map(|&l| {
            rho_from_parts(0.0, &est.fit.loadings, &lr.matrix, &w, config.t, config.target_return, 1.0 - l)
                .map(|u| u.diagnostics.q_value)
        })
        .collect()
}

/// Out-of-sample results of one portfolio replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PortfolioRep {
    pub sd_hd: f64,
    pub sd_bcz: f64,
    pub sd_equal: f64,
    pub fallback_hd: bool,
    pub fallback_bcz: bool,
}

/// Fits on `t` periods and evaluates on the following `test_t`. The
/// full-dimensional problem uses the oracle radius and floor so that both
/// robust portfolios face the same ambiguity budget.
pub fn portfolio_replication(
    params: &DgpParams,
    loadings: &DMatrix<f64>,
    config: &ExperimentConfig,
    oracle_delta: f64,
    oracle_rho: f64,
    seed: u64,
) -> Result<PortfolioRep> {
    let (panel, _) = simulate_with_loadings(params, loadings, config.t + config.test_t, seed)?;
    let train = panel.window(0, config.t)?;
    let test = panel.window(config.t, config.t + config.test_t)?;
    let cal = config.calibration(params.k, child_seed(seed, 1));
    let sd = |w: &nalgebra::DVector<f64>| {
        let r: Vec<f64> = test.returns().column_iter().map(|c| c.dot(w)).collect();
        let n = r.len() as f64;
        let m = r.iter().sum::<f64>() / n;
        (r.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    let spec_for = |kind| StrategySpec {
        calibration: cal.clone(),
        ..StrategySpec::new(kind, config.target_return)
    };
    let mut spec = spec_for(StrategyKind::HdDro);
    spec.solver_tol = config.solver_tol;
    spec.solver_max_iter = config.solver_max_iter;
    let (w_hd, d_hd) = build_weights(&train, &spec)?;
    let mut spec = spec_for(StrategyKind::BczDro).with_fixed(oracle_delta, oracle_rho);
    spec.solver_tol = config.solver_tol;
    spec.solver_max_iter = config.solver_max_iter;
    let (w_bcz, d_bcz) = build_weights(&train, &spec)?;
    let (w_eq, _) = build_weights(&train, &spec_for(StrategyKind::EqualWeight))?;
    Ok(PortfolioRep {
        sd_hd: sd(&w_hd),
        sd_bcz: sd(&w_bcz),
        sd_equal: sd(&w_eq),
        fallback_hd: d_hd.fallback,
        fallback_bcz: d_bcz.fallback,
    })
}

/// Largest admissible floor and the calibrated floor for freshly drawn
/// loadings, both at the population factor moments.
pub fn feasibility_replication(params: &DgpParams, config: &ExperimentConfig, delta: f64, seed: u64) -> Result<(GBar, f64)> {
    let b = draw_loadings(params, seed)?;
    let g = max_feasible_rho(&b, &params.stationary_mean(), delta)?;
    let rho = oracle_rho(params, &b, config.t, delta, config.target_return, config.eps())?.rho;
    Ok((g, rho))
}

/// Raw results of the radius experiment for one asset count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaStudy {
    pub p: usize,
    /// One entry per level.
    pub oracle: Vec<f64>,
    /// `replications x levels`.
    pub estimates: Vec<Vec<f64>>,
}

pub fn delta_study(config: &ExperimentConfig, p: usize, seed: u64) -> Result<DeltaStudy> {
    config.validate()?;
    let params = DgpParams::fixture(p);
    let b = fixed_loadings(&params, seed, p)?;
    let oracle = oracle_deltas(&params, config.t, &config.levels, config.oracle_draws, ORACLE_SEED)?;
    let estimates = replicate(config.replications, p_seed(seed, p), |s| delta_replication(&params, &b, config, s))?;
    Ok(DeltaStudy { p, oracle, estimates })
}

/// Raw results of the `Q` experiment for one asset count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QStudy {
    pub p: usize,
    pub oracle: Vec<f64>,
    pub estimates: Vec<Vec<f64>>,
}

pub fn q_study(config: &ExperimentConfig, p: usize, seed: u64) -> Result<QStudy> {
    config.validate()?;
    let params = DgpParams::fixture(p);
    let b = fixed_loadings(&params, seed, p)?;
    let oracle = config
        .levels
        .iter()
        .map(|&l| oracle_rho(&params, &b, config.t, 0.0, config.target_return, 1.0 - l).map(|u| u.diagnostics.q_value))
        .collect::<Result<Vec<_>>>()?;
    let estimates = replicate(config.replications, p_seed(seed, p), |s| q_replication(&params, &b, config, s))?;
    Ok(QStudy { p, oracle, estimates })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortfolioStudy {
    pub p: usize,
    pub oracle_delta: f64,
    pub oracle_rho: f64,
    pub reps: Vec<PortfolioRep>,
}

pub fn portfolio_study(config: &ExperimentConfig, p: usize, seed: u64) -> Result<PortfolioStudy> {
    config.validate()?;
    let params = DgpParams::fixture(p);
    let b = fixed_loadings(&params, seed, p)?;
    let delta = oracle_deltas(&params, config.t, &[config.portfolio_level], config.oracle_draws, ORACLE_SEED)?[0];
    let rho = oracle_rho(&params, &b, config.t, delta, config.target_return, config.eps())?.rho;
    let reps = replicate(config.replications, p_seed(seed, p), |s| {
        portfolio_replication(&params, &b, config, delta, rho, s)
    })?;
    Ok(PortfolioStudy {
        p,
        oracle_delta: delta,
        oracle_rho: rho,
        reps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityStudy {
    pub p: usize,
    pub delta: f64,
    pub g_bar: Vec<GBar>,
    pub rho: Vec<f64>,
}

pub fn feasibility_study(config: &ExperimentConfig, p: usize, seed: u64) -> Result<FeasibilityStudy> {
    config.validate()?;
    let params = DgpParams::fixture(p);
    let delta = oracle_deltas(&params, config.t, &[config.portfolio_level], config.oracle_draws, ORACLE_SEED)?[0];
    let out = replicate(config.replications, p_seed(seed, p), |s| feasibility_replication(&params, config, delta, s))?;
    let (g_bar, rho) = out.into_iter().unzip();
    Ok(FeasibilityStudy { p, delta, g_bar, rho })
}

/// Median estimated radius per level for each autoregressive multiplier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveStudy {
    pub p: usize,
    pub multipliers: Vec<f64>,
    /// `multipliers x levels`.
    pub medians: Vec<Vec<f64>>,
}

pub fn uncertainty_curve(config: &ExperimentConfig, p: usize, seed: u64) -> Result<CurveStudy> {
    config.validate()?;
    let base = DgpParams::fixture(p);
    let b = fixed_loadings(&base, seed, p)?;
    let mut medians = Vec::with_capacity(config.ar_multipliers.len());
    for (j, &mult) in config.ar_multipliers.iter().enumerate() {
        let params = base.with_scaled_ar(mult);
        params.validate()?;
        let s = child_seed(p_seed(seed, p), CURVE_TAG + j as u64);
        let est = replicate(config.curve_replications, s, |s| delta_replication(&params, &b, config, s))?;
        medians.push(
            (0..config.levels.len())
                .map(|l| median(&est.iter().map(|r| r[l]).collect::<Vec<_>>()))
                .collect(),
        );
    }
    Ok(CurveStudy {
        p,
        multipliers: config.ar_multipliers.clone(),
        medians,
    })
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with divisor `n - 1`.
pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

/// One table cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format_sig(*x, 12),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// Rounds to `digits` significant digits and prints the shortest decimal
/// that reads back to the rounded value.
pub fn format_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x);
    rounded.to_string()
}

/// A result table: one row per `(p, statistic)` or per multiplier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentTable {
    pub kind: ExperimentKind,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl ExperimentTable {
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Value in the first row whose leading cells match `keys`, at column
    /// `column`.
    pub fn lookup(&self, keys: &[Cell], column: &str) -> Option<&Cell> {
        let c = self.header.iter().position(|h| h == column)?;
        self.rows.iter().find(|r| r.starts_with(keys)).map(|r| &r[c])
    }
}

fn level_header(lead: &[&str], levels: &[f64]) -> Vec<String> {
    lead.iter()
        .map(|s| s.to_string())
        .chain(levels.iter().map(|l| format!("level_{l}")))
        .collect()
}

fn stat_row(p: usize, name: &str, values: impl IntoIterator<Item = f64>) -> Vec<Cell> {
    [Cell::Int(p as i64), Cell::Text(name.into())]
        .into_iter()
        .chain(values.into_iter().map(Cell::Float))
        .collect()
}

fn column(rows: &[Vec<f64>], l: usize) -> Vec<f64> {
    rows.iter().map(|r| r[l]).collect()
}

/// Rows for the oracle-vs-estimate tables.
fn comparison_rows(p: usize, oracle: &[f64], estimates: &[Vec<f64>]) -> Vec<Vec<Cell>> {
    let n = oracle.len();
    let med: Vec<f64> = (0..n).map(|l| median(&column(estimates, l))).collect();
    vec![
        stat_row(p, "oracle", oracle.iter().copied()),
        stat_row(p, "median", med.iter().copied()),
        stat_row(p, "mean", (0..n).map(|l| mean(&column(estimates, l)))),
        stat_row(p, "sd", (0..n).map(|l| std_dev(&column(estimates, l)))),
        stat_row(p, "ratio", (0..n).map(|l| med[l] / oracle[l])),
    ]
}

/// Runs an experiment for every `p` in the configuration.
pub fn run_experiment(kind: ExperimentKind, config: &ExperimentConfig, seed: u64) -> Result<ExperimentTable> {
    config.validate()?;
    let mut rows = Vec::new();
    let header = match kind {
        ExperimentKind::DeltaTable => {
            for &p in &config.p_values {
                let s = delta_study(config, p, seed)?;
                rows.extend(comparison_rows(p, &s.oracle, &s.estimates));
            }
            level_header(&["p", "statistic"], &config.levels)
        }
        ExperimentKind::QTable => {
            for &p in &config.p_values {
                let s = q_study(config, p, seed)?;
                rows.extend(comparison_rows(p, &s.oracle, &s.estimates));
            }
            level_header(&["p", "statistic"], &config.levels)
        }
        ExperimentKind::PortfolioTable => {
            for &p in &config.p_values {
                let s = portfolio_study(config, p, seed)?;
                let pick = |f: fn(&PortfolioRep) -> f64| s.reps.iter().map(f).collect::<Vec<_>>();
                let cols = [pick(|r| r.sd_hd), pick(|r| r.sd_bcz), pick(|r| r.sd_equal)];
                let count = |f: fn(&PortfolioRep) -> bool| s.reps.iter().filter(|r| f(r)).count() as f64;
                rows.push(stat_row(p, "mean_sd", cols.iter().map(|c| mean(c))));
                rows.push(stat_row(p, "median_sd", cols.iter().map(|c| median(c))));
                rows.push(stat_row(p, "fallbacks", [count(|r| r.fallback_hd), count(|r| r.fallback_bcz), 0.0]));
            }
            ["p", "statistic", "hd_dro", "bcz_dro", "equal_weight"].map(String::from).to_vec()
        }
        ExperimentKind::FeasibilityTable => {
            for &p in &config.p_values {
                let s = feasibility_study(config, p, seed)?;
                let finite: Vec<f64> = s.g_bar.iter().filter_map(|g| (!g.is_unbounded()).then(|| g.value())).collect();
                let admitted = s.g_bar.iter().zip(&s.rho).filter(|(g, r)| g.admits(**r)).count();
                let max_g = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                rows.push(vec![
                    Cell::Int(p as i64),
                    Cell::Float(s.delta),
                    Cell::Float(median(&finite)),
                    Cell::Float(max_g),
                    Cell::Int((s.g_bar.len() - finite.len()) as i64),
                    Cell::Float(median(&s.rho)),
                    Cell::Int(admitted as i64),
                    Cell::Int(s.rho.len() as i64),
                ]);
            }
            ["p", "delta", "median_g_bar", "max_g_bar", "unbounded", "median_rho", "feasible", "replications"]
                .map(String::from)
                .to_vec()
        }
        ExperimentKind::UncertaintyCurve => {
            for &p in &config.p_values {
                let s = uncertainty_curve(config, p, seed)?;
                for (m, med) in s.multipliers.iter().zip(&s.medians) {
                    rows.push(
                        [Cell::Int(p as i64), Cell::Float(*m)]
                            .into_iter()
                            .chain(med.iter().map(|x| Cell::Float(*x)))
                            .collect(),
                    );
                }
            }
            level_header(&["p", "ar_multiplier"], &config.levels)
        }
    };
    Ok(ExperimentTable { kind, header, rows })
}
