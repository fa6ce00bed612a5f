//! One handler per subcommand.

use std::io::Write;

use drofolio::backtest::{write_equity_curve, write_weights_history};
use drofolio::simulation::experiment::format_sig;
use drofolio::{
    calibrate, check_feasibility, rolling_backtest, run_experiment, solve_hd_dro, GBar, ReturnPanel, SolveStatus,
    StrategyKind, StrategySpec,
};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{ArtifactDir, Provenance};

/// Significant digits of model estimates written to CSV.
const DIGITS: usize = 12;

fn load_panel(run: &RunConfig) -> CliResult<ReturnPanel> {
    let input = run.input.as_ref().ok_or_else(|| CliError::Internal("no input resolved".into()))?;
    let panel = ReturnPanel::read_csv(input, run.missing_policy.unwrap_or_default())?;
    tracing::info!(assets = panel.n_assets(), periods = panel.n_periods(), "loaded panel");
    Ok(panel)
}

fn artifacts(run: &RunConfig) -> CliResult<ArtifactDir> {
    ArtifactDir::create(&run.out, Provenance::new(run)?)
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn factor_header(lead: &str, k: usize) -> Vec<String> {
    std::iter::once(lead.to_string())
        .chain((1..=k).map(|j| format!("factor_{j}")))
        .collect()
}

/// Rows `label, m[i, 0], m[i, 1], ...` at [`DIGITS`] significant digits.
fn labelled_rows<'a>(labels: impl IntoIterator<Item = &'a String>, m: &DMatrix<f64>) -> Vec<Vec<String>> {
    labels
        .into_iter()
        .zip(m.row_iter())
        .map(|(l, r)| std::iter::once(l.clone()).chain(r.iter().map(|x| format_sig(*x, DIGITS))).collect())
        .collect()
}

#[derive(Serialize)]
struct EstimateResult<'a> {
    n_assets: usize,
    n_periods: usize,
    k: usize,
    eigenvalues: &'a [f64],
    factor_mean: &'a [f64],
    factor_cov: Vec<Vec<f64>>,
    threshold_constant: f64,
    threshold_rule: drofolio::ShrinkageRule,
    residual_zero_fraction: f64,
    threshold_cv: Option<&'a drofolio::factor_model::ThresholdCv>,
}

pub fn estimate(run: &RunConfig) -> CliResult<()> {
    let panel = load_panel(run)?;
    let cfg = run.calibration.as_ref().ok_or_else(|| CliError::Internal("no calibration settings".into()))?;
    let est = drofolio::pipeline::estimate_cov_model(&panel, cfg)?;
    let out = artifacts(run)?;
    let ids = panel.asset_ids();
    let cov = &est.cov;
    out.json(
        "estimate.json",
        &EstimateResult {
            n_assets: panel.n_assets(),
            n_periods: panel.n_periods(),
            k: est.k,
            eigenvalues: &est.fit.eigenvalues,
            factor_mean: cov.factor_mean.as_slice(),
            factor_cov: rows_of(&cov.factor_cov),
            threshold_constant: cov.residual_cov.threshold_constant,
            threshold_rule: cov.residual_cov.rule,
            residual_zero_fraction: cov.residual_cov.zero_fraction,
            threshold_cv: est.threshold_cv.as_ref(),
        },
    )?;
    out.table("loadings.csv", &factor_header("asset_id", est.k), &labelled_rows(ids, &cov.loadings))?;
    out.table(
        "factors.csv",
        &factor_header("time", est.k),
        &labelled_rows(panel.time_index(), &est.fit.factors.transpose()),
    )?;
    let cov_header: Vec<String> = std::iter::once("asset_id".to_string()).chain(ids.iter().cloned()).collect();
    out.table("covariance.csv", &cov_header, &labelled_rows(ids, &cov.sigma_r))?;
    println!("estimated {} factors on {} assets x {} periods", est.k, panel.n_assets(), panel.n_periods());
    Ok(())
}

#[derive(Serialize)]
struct CalibrationResult<'a> {
    k: usize,
    params: &'a drofolio::UncertaintyParams,
    delta_selection: &'a drofolio::uncertainty::DeltaSelection,
    long_run_cov: Vec<Vec<f64>>,
    hac_bandwidth: usize,
    reference_weights: &'a [f64],
    g_bar: GBar,
    rho_admissible: bool,
}

pub fn calibrate_uncertainty(run: &RunConfig) -> CliResult<()> {
    let panel = load_panel(run)?;
    let cfg = run.calibration.as_ref().ok_or_else(|| CliError::Internal("no calibration settings".into()))?;
    let cal = calibrate(&panel, cfg)?;
    let feas = check_feasibility(&cal.problem())?;
    let out = artifacts(run)?;
    out.json(
        "uncertainty.json",
        &CalibrationResult {
            k: cal.estimate.k,
            params: &cal.params,
            delta_selection: &cal.delta,
            long_run_cov: rows_of(&cal.long_run.matrix),
            hac_bandwidth: cal.long_run.bandwidth,
            reference_weights: cal.w_mv.as_slice(),
            g_bar: feas.g_bar,
            rho_admissible: feas.feasible,
        },
    )?;
    println!(
        "delta = {:e}, rho = {:e}, G_bar = {}",
        cal.params.delta, cal.params.rho, feas.g_bar
    );
    Ok(())
}

#[derive(Serialize)]
struct AllocationResult {
    status: SolveStatus,
    delta: f64,
    rho: f64,
    delta_overridden: bool,
    rho_overridden: bool,
    g_bar: GBar,
    objective: Option<f64>,
    iterations: usize,
    budget_residual: Option<f64>,
    return_slack: Option<f64>,
    calibrated: drofolio::UncertaintyParams,
}

fn write_weights(out: &ArtifactDir, ids: &[String], w: &DVector<f64>) -> CliResult<()> {
    out.csv("weights.csv", |f, comments| {
        for c in comments {
            writeln!(f, "# {c}")?;
        }
        let mut csv = csv::Writer::from_writer(f);
        csv.write_record(["asset_id", "weight"])?;
        for (id, x) in ids.iter().zip(w.iter()) {
            // Shortest round-trip form keeps the budget exact on re-read.
            csv.write_record([id.as_str(), &x.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    Ok(())
}

pub fn allocate(run: &RunConfig) -> CliResult<()> {
    let panel = load_panel(run)?;
    let cfg = run.calibration.as_ref().ok_or_else(|| CliError::Internal("no calibration settings".into()))?;
    let settings = run.allocation.as_ref().ok_or_else(|| CliError::Internal("no allocation settings".into()))?;
    let cal = calibrate(&panel, cfg)?;
    let delta = settings.delta.unwrap_or(cal.params.delta);
    let rho = settings.rho.unwrap_or(cal.params.rho);
    let problem = cal.problem_with(delta, rho);
    let feas = check_feasibility(&problem)?;
    let out = artifacts(run)?;
    let mut result = AllocationResult {
        status: SolveStatus::Infeasible,
        delta,
        rho,
        delta_overridden: settings.delta.is_some(),
        rho_overridden: settings.rho.is_some(),
        g_bar: feas.g_bar,
        objective: None,
        iterations: 0,
        budget_residual: None,
        return_slack: None,
        calibrated: cal.params.clone(),
    };
    if !feas.feasible {
        out.json("allocation.json", &result)?;
        return Err(CliError::Infeasible { rho, g_bar: feas.g_bar });
    }
    let sol = solve_hd_dro(&problem, settings.solver.tol, settings.solver.max_iter)?;
    result.status = sol.status;
    result.objective = Some(sol.objective);
    result.iterations = sol.iterations;
    result.budget_residual = Some(sol.budget_residual);
    result.return_slack = Some(sol.return_slack);
    out.json("allocation.json", &result)?;
    match (&sol.weights, sol.status) {
        (Some(w), SolveStatus::Optimal) => {
            write_weights(&out, panel.asset_ids(), w)?;
            println!(
                "optimal after {} iterations: objective {:e}, delta {:e}, rho {:e}, G_bar {}",
                sol.iterations, sol.objective, delta, rho, feas.g_bar
            );
            Ok(())
        }
        (Some(w), _) => {
            write_weights(&out, panel.asset_ids(), w)?;
            Err(CliError::Internal(format!(
                "solver stopped at the iteration cap ({} iterations); weights written are not certified",
                sol.iterations
            )))
        }
        (None, _) => Err(CliError::Infeasible { rho, g_bar: sol.g_bar }),
    }
}

pub fn backtest(run: &RunConfig) -> CliResult<()> {
    let panel = load_panel(run)?;
    let cfg = run.calibration.as_ref().ok_or_else(|| CliError::Internal("no calibration settings".into()))?;
    let bt = run.backtest.as_ref().ok_or_else(|| CliError::Internal("no backtest settings".into()))?;
    if bt.window >= panel.n_periods() {
        return Err(CliError::config(format!(
            "window of {} periods leaves nothing to evaluate in a panel of {}",
            bt.window,
            panel.n_periods()
        )));
    }
    let mut reports = Vec::with_capacity(bt.strategies.len());
    for &kind in &bt.strategies {
        let mut spec = StrategySpec::new(kind, cfg.target_return);
        spec.calibration = cfg.clone();
        spec.solver_tol = bt.solver.tol;
        spec.solver_max_iter = bt.solver.max_iter;
        if kind == StrategyKind::BczDro {
            if let (Some(d), Some(r)) = (bt.bcz_delta, bt.bcz_rho) {
                spec = spec.with_fixed(d, r);
            }
        }
        tracing::info!(strategy = %kind, "running backtest");
        reports.push(rolling_backtest(&panel, &spec, bt.window, bt.holding)?);
    }
    let out = artifacts(run)?;
    let header: Vec<String> = ["strategy", "cr", "risk", "sr", "mdd", "rebalances", "fallbacks"]
        .map(String::from)
        .to_vec();
    let mut rows = Vec::new();
    for rep in &reports {
        let name = rep.strategy.name();
        out.json(&format!("{name}_report.json"), rep)?;
        out.csv(&format!("{name}_equity.csv"), |w, c| write_equity_curve(rep, w, c))?;
        out.csv(&format!("{name}_weights.csv"), |w, c| write_weights_history(rep, w, c))?;
        let m = &rep.metrics;
        let fallbacks = rep.per_window_diagnostics.iter().filter(|d| d.diagnostics.fallback).count();
        rows.push(vec![
            name.to_string(),
            format_sig(m.cr, DIGITS),
            format_sig(m.risk, DIGITS),
            format_sig(m.sr, DIGITS),
            format_sig(m.mdd, DIGITS),
            rep.weights_history.len().to_string(),
            fallbacks.to_string(),
        ]);
        println!("{name}: CR {:.6} risk {:.6} SR {:.6} MDD {:.6}", m.cr, m.risk, m.sr, m.mdd);
    }
    out.table("summary.csv", &header, &rows)?;
    Ok(())
}

#[derive(Serialize)]
struct SimulationSidecar<'a> {
    kind: drofolio::ExperimentKind,
    seed: u64,
    experiment: &'a drofolio::ExperimentConfig,
    header: &'a [String],
    rows: usize,
}

pub fn simulate(run: &RunConfig) -> CliResult<()> {
    let sim = run.simulation.as_ref().ok_or_else(|| CliError::Internal("no simulation settings".into()))?;
    let out = artifacts(run)?;
    for &kind in &sim.kinds {
        tracing::info!(experiment = %kind, "running experiment");
        let table = run_experiment(kind, &sim.experiment, run.seed)?;
        out.csv(&format!("{kind}.csv"), |w, c| table.write_csv(w, c))?;
        out.json(
            &format!("{kind}.json"),
            &SimulationSidecar {
                kind,
                seed: run.seed,
                experiment: &sim.experiment,
                header: &table.header,
                rows: table.rows.len(),
            },
        )?;
        println!("{kind}: {} rows", table.rows.len());
    }
    Ok(())
}
