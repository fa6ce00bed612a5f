//! Population counterparts of the calibrated quantities under a
//! [`DgpParams`] market.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::uncertainty::{delta_levels_from_moments, mv_closed_form, rho_from_parts, UncertaintyParams};

use super::DgpParams;

/// Draw count and seed used for oracle quantiles.
pub const ORACLE_DRAWS: usize = 1_000_000;
pub const ORACLE_SEED: u64 = 0x5eed_0c1e;

/// Long-run covariance of the independent AR(1) factors:
/// `diag(sigma_v^2 / (1 - alpha)^2)`.
pub fn population_long_run(params: &DgpParams) -> DMatrix<f64> {
    let v = params.innovation_var();
    DMatrix::from_diagonal(&DVector::from_iterator(
        params.k,
        v.iter().zip(&params.ar_coef).map(|(s, a)| s / (1.0 - a).powi(2)),
    ))
}

/// Factor covariance `diag(1 - m^2)`.
pub fn population_factor_cov(params: &DgpParams) -> DMatrix<f64> {
    let m = params.stationary_mean();
    DMatrix::from_diagonal(&m.map(|x| 1.0 - x * x))
}

/// `B diag(1 - m^2) B' + Sigma_e`.
pub fn population_return_cov(params: &DgpParams, loadings: &DMatrix<f64>) -> DMatrix<f64> {
    let c = loadings * population_factor_cov(params) * loadings.transpose() + &params.error_cov;
    crate::linalg::symmetrize(&c)
}

/// Radius at each confidence level evaluated at the population factor mean
/// and long-run covariance, for samples of length `t`.
pub fn oracle_deltas(params: &DgpParams, t: usize, levels: &[f64], draws: usize, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    let sel = delta_levels_from_moments(
        &params.stationary_mean(),
        &population_long_run(params),
        t,
        levels,
        draws,
        seed,
    )?;
    Ok(sel.into_iter().map(|d| d.delta).collect())
}

/// [`oracle_deltas`] for one level with the default oracle draws and seed.
pub fn oracle_delta(params: &DgpParams, t: usize, level: f64) -> Result<f64> {
    Ok(oracle_deltas(params, t, &[level], ORACLE_DRAWS, ORACLE_SEED)?[0])
}

/// Population mean-variance weights for the target return.
pub fn oracle_weights(params: &DgpParams, loadings: &DMatrix<f64>, target: f64) -> Result<DVector<f64>> {
    let mu = loadings * params.stationary_mean();
    mv_closed_form(&mu, &population_return_cov(params, loadings), target)
}

/// Return floor and its diagnostics at the population quantities.
pub fn oracle_rho(
    params: &DgpParams,
    loadings: &DMatrix<f64>,
    t: usize,
    delta: f64,
    target: f64,
    eps: f64,
) -> Result<UncertaintyParams> {
    let w = oracle_weights(params, loadings, target)?;
    rho_from_parts(delta, loadings, &population_long_run(params), &w, t, target, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn iid_case_matches_chi_square() {
        let mut params = DgpParams::fixture(4);
        params.ar_coef = vec![0.0, 0.0];
        params.ar_intercept = vec![0.0, 0.0];
        assert_eq!(population_long_run(&params), DMatrix::identity(2, 2));
        let d = oracle_delta(&params, 200, 0.95).unwrap();
        let exact = ChiSquared::new(2.0).unwrap().inverse_cdf(0.95) / (4.0 * 200.0);
        assert!((d / exact - 1.0).abs() < 0.01, "{d} vs {exact}");
    }

    #[test]
    fn fixture_long_run_variances() {
        let v = population_long_run(&DgpParams::fixture(10));
        assert!((v[(0, 0)] - 1.3522).abs() < 1e-3);
        assert!((v[(1, 1)] - 1.2221).abs() < 1e-3);
    }
}
