//! Latent factor estimation and the factor-based return covariance.
//!
//! Returns are modeled as `r_t = B f_t + e_t`. Factors and loadings come
//! from principal components of the panel, the residual covariance is
//! thresholded entry-wise, and the two parts are recombined into
//! `Sigma_r = B (I - mu_f mu_f') B' + Sigma_e`.

mod pca;
mod threshold;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use pca::{
    bai_ng_criterion, bai_ng_penalty, estimate_factors, estimate_factors_with, select_num_factors, FactorFit, GramSide,
};
pub use threshold::{
    cross_validate_threshold, default_threshold_grid, linear_grid, threshold_positive_definite,
    threshold_residual_cov, ResidualMoments, ShrinkageRule, SparseResidualCov, ThresholdCv,
};

use crate::error::{Error, Result};

/// Assembled covariance model of the returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovModel {
    pub sigma_r: DMatrix<f64>,
    pub loadings: DMatrix<f64>,
    /// `I_K - mu_f mu_f'`.
    pub factor_cov: DMatrix<f64>,
    pub residual_cov: SparseResidualCov,
    /// `B mu_f`.
    pub mean: DVector<f64>,
    pub factor_mean: DVector<f64>,
}

/// Combines the factor part and the thresholded residual covariance.
pub fn assemble_return_cov(fit: &FactorFit, residual_cov: &SparseResidualCov) -> Result<CovModel> {
    let p = fit.n_assets();
    let sp = residual_cov.matrix.shape();
    if sp != (p, p) {
        return Err(Error::dims("residual covariance", format!("{p}x{p}"), format!("{}x{}", sp.0, sp.1)));
    }
    let k = fit.k;
    let mu = &fit.factor_mean;
    let factor_cov = DMatrix::identity(k, k) - mu * mu.transpose();
    // Compute one triangle and mirror it so the result is exactly symmetric.
    let bf = &fit.loadings * &factor_cov;
    let mut sigma_r = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let v = bf.row(i).dot(&fit.loadings.row(j)) + residual_cov.matrix[(i, j)];
            sigma_r[(i, j)] = v;
            sigma_r[(j, i)] = v;
        }
    }
    Ok(CovModel {
        sigma_r,
        loadings: fit.loadings.clone(),
        factor_cov,
        residual_cov: residual_cov.clone(),
        mean: &fit.loadings * mu,
        factor_mean: mu.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::ReturnPanel;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn assembled_covariance_is_exactly_symmetric() {
        let mut g = rng::stream(3, 0);
        let r = DMatrix::from_fn(12, 40, |_, _| {
            let z: f64 = StandardNormal.sample(&mut g);
            0.01 * z
        });
        let panel = ReturnPanel::from_matrix(r).unwrap();
        let fit = estimate_factors(&panel, 2).unwrap();
        let sp = threshold_residual_cov(&fit.residuals, 0.5, ShrinkageRule::Soft).unwrap();
        let cov = assemble_return_cov(&fit, &sp).unwrap();
        assert_eq!(cov.sigma_r, cov.sigma_r.transpose());
        let direct = &fit.loadings * &cov.factor_cov * fit.loadings.transpose() + &sp.matrix;
        assert!((&direct - &cov.sigma_r).abs().max() < 1e-10);
        assert!((&cov.mean - &fit.loadings * &fit.factor_mean).abs().max() == 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut g = rng::stream(4, 0);
        let r = DMatrix::from_fn(5, 20, |_, _| StandardNormal.sample(&mut g));
        let fit = estimate_factors(&ReturnPanel::from_matrix(r).unwrap(), 1).unwrap();
        let bad = threshold_residual_cov(&DMatrix::from_element(4, 20, 1.0), 0.0, ShrinkageRule::Soft).unwrap();
        assert!(matches!(assemble_return_cov(&fit, &bad), Err(Error::DimensionMismatch { .. })));
    }
}
