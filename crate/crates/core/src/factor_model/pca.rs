//! Principal-component factors and loadings, and the information criterion
//! for the number of factors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_finite_matrix, sym_eigen_desc};
use crate::panel::ReturnPanel;

/// Which Gram matrix to decompose. Both give the same factors; `Auto` picks
/// the smaller one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramSide {
    #[default]
    Auto,
    /// The `T x T` matrix `R'R`.
    Time,
    /// The `p x p` matrix `RR'`, mapping eigenvectors back through `R'`.
    Asset,
}

/// Estimated latent factor structure of a return panel.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorFit {
    pub k: usize,
    /// `K x T`, normalized so that `factors * factors' / T = I`.
    pub factors: DMatrix<f64>,
    /// `p x K`, equal to `returns * factors' / T`.
    pub loadings: DMatrix<f64>,
    /// Time average of each factor.
    pub factor_mean: DVector<f64>,
    /// `factors * factors' / T`; the identity up to rounding.
    pub second_moment: DMatrix<f64>,
    /// `returns - loadings * factors`.
    pub residuals: DMatrix<f64>,
    /// Leading `k` eigenvalues of `R'R`, descending.
    pub eigenvalues: Vec<f64>,
}

impl FactorFit {
    pub fn n_periods(&self) -> usize {
        self.factors.ncols()
    }

    pub fn n_assets(&self) -> usize {
        self.loadings.nrows()
    }
}

/// Top-`k` orthonormal eigenvectors of `R'R` (as a `T x k` matrix) and
/// their eigenvalues.
fn leading_time_eigvecs(r: &DMatrix<f64>, k: usize, side: GramSide) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let (p, t) = r.shape();
    let use_time = match side {
        GramSide::Time => true,
        GramSide::Asset => false,
        GramSide::Auto => t <= p,
    };
    if use_time {
        let gram = r.transpose() * r;
        let (vals, vecs) = sym_eigen_desc(&gram)?;
        return Ok((vecs.columns(0, k).into_owned(), vals.iter().take(k).copied().collect()));
    }
    let gram = r * r.transpose();
    let (vals, vecs) = sym_eigen_desc(&gram)?;
    let top = vals[0].max(0.0);
    if vals[k - 1] <= top * 1e-13 {
        // Rank-deficient: the asset-side map R'u / sqrt(lambda) breaks down.
        return leading_time_eigvecs(r, k, GramSide::Time);
    }
    let mut v = DMatrix::zeros(t, k);
    for j in 0..k {
        let col = r.transpose() * vecs.column(j) / vals[j].sqrt();
        v.set_column(j, &col);
    }
    // One modified Gram-Schmidt pass removes rounding drift from the mapping.
    for j in 0..k {
        for i in 0..j {
            let proj = v.column(i).dot(&v.column(j));
            let ci = v.column(i).into_owned();
            v.column_mut(j).axpy(-proj, &ci, 1.0);
        }
        let n = v.column(j).norm();
        v.column_mut(j).scale_mut(1.0 / n);
    }
    Ok((v, vals.iter().take(k).copied().collect()))
}

/// PCA estimate of factors and loadings with `k` factors.
pub fn estimate_factors(panel: &ReturnPanel, k: usize) -> Result<FactorFit> {
    estimate_factors_with(panel, k, GramSide::Auto)
}

pub fn estimate_factors_with(panel: &ReturnPanel, k: usize, side: GramSide) -> Result<FactorFit> {
    let r = panel.returns();
    let (p, t) = r.shape();
    let max = p.min(t);
    if k == 0 || k > max {
        return Err(Error::FactorCountOutOfRange { k, max });
    }
    check_finite_matrix(r, "return panel")?;
    let (v, eigenvalues) = leading_time_eigvecs(r, k, side)?;
    let sqrt_t = (t as f64).sqrt();
    let mut factors = v.transpose() * sqrt_t;
    let mut loadings = r * factors.transpose() / t as f64;

    // Fix the sign of each factor: the largest-magnitude loading is positive.
    for j in 0..k {
        let col = loadings.column(j);
        let (imax, _) = col
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |(bi, bv), (i, &x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) });
        if col[imax] < 0.0 {
            loadings.column_mut(j).neg_mut();
            factors.row_mut(j).neg_mut();
        }
    }

    let factor_mean = DVector::from_iterator(k, (0..k).map(|j| factors.row(j).sum() / t as f64));
    let second_moment = &factors * factors.transpose() / t as f64;
    let residuals = r - &loadings * &factors;
    Ok(FactorFit {
        k,
        factors,
        loadings,
        factor_mean,
        second_moment,
        residuals,
        eigenvalues,
    })
}

/// Penalty weight `((p+T)/(pT)) * ln(pT/(p+T))` of the information criterion.
pub fn bai_ng_penalty(p: usize, t: usize) -> f64 {
    let (p, t) = (p as f64, t as f64);
    (p + t) / (p * t) * (p * t / (p + t)).ln()
}

/// Criterion values for `K = 0..=max_k`:
/// `ln(||R - R V_K V_K'||_F^2 / (pT)) + K * penalty`, with `V_K` the leading
/// eigenvectors of `R'R`.
pub fn bai_ng_criterion(panel: &ReturnPanel, max_k: usize) -> Result<Vec<f64>> {
    let r = panel.returns();
    let (p, t) = r.shape();
    let limit = p.min(t) - 1;
    if max_k == 0 || max_k > limit {
        return Err(Error::InvalidArgument(format!("max_k must lie in 1..={limit}, got {max_k}")));
    }
    check_finite_matrix(r, "return panel")?;
    let total = r.norm_squared();
    if total == 0.0 {
        return Err(Error::DegeneratePanel);
    }
    let gram = if t <= p { r.transpose() * r } else { r * r.transpose() };
    let (vals, _) = sym_eigen_desc(&gram)?;
    let penalty = bai_ng_penalty(p, t);
    let scale = (p * t) as f64;
    let mut explained = 0.0;
    let mut out = Vec::with_capacity(max_k + 1);
    for k in 0..=max_k {
        if k > 0 {
            explained += vals[k - 1].max(0.0);
        }
        let ssr = (total - explained).max(total * f64::EPSILON);
        out.push((ssr / scale).ln() + k as f64 * penalty);
    }
    Ok(out)
}

/// Number of factors minimizing the information criterion; ties go to the
/// smaller count.
pub fn select_num_factors(panel: &ReturnPanel, max_k: usize) -> Result<usize> {
    let crit = bai_ng_criterion(panel, max_k)?;
    let mut best = 0;
    for (k, &v) in crit.iter().enumerate() {
        if v < crit[best] {
            best = k;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise_panel(p: usize, t: usize, sd: f64, seed: u64) -> ReturnPanel {
        let mut g = rng::stream(seed, 0);
        let m = DMatrix::from_fn(p, t, |_, _| {
            let z: f64 = StandardNormal.sample(&mut g);
            sd * z
        });
        ReturnPanel::from_matrix(m).unwrap()
    }

    #[test]
    fn rank_one_panel_is_reproduced() {
        let t = 12;
        let f = DVector::<f64>::from_fn(t, |i, _| if i % 3 == 0 { 1.5 } else { -0.75 });
        let f = &f * ((t as f64).sqrt() / f.norm());
        let b = DVector::from_vec(vec![0.5, -1.0, 2.0, 0.25]);
        let r = &b * f.transpose();
        let fit = estimate_factors(&ReturnPanel::from_matrix(r.clone()).unwrap(), 1).unwrap();
        let err = (&fit.loadings * &fit.factors - &r).norm();
        assert!(err <= 1e-8, "reconstruction error {err}");
        // largest-magnitude loading (2.0) is positive
        assert!(fit.loadings[(2, 0)] > 0.0);
    }

    #[test]
    fn normalization_and_reconstruction_hold() {
        let panel = noise_panel(7, 15, 1.0, 3);
        for side in [GramSide::Time, GramSide::Asset] {
            let fit = estimate_factors_with(&panel, 3, side).unwrap();
            let gram = &fit.factors * fit.factors.transpose() / 15.0;
            assert!((gram - DMatrix::identity(3, 3)).abs().max() < 1e-8);
            let recon = &fit.loadings * &fit.factors + &fit.residuals;
            assert!((recon - panel.returns()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn both_gram_sides_agree() {
        let panel = noise_panel(6, 20, 0.1, 11);
        let a = estimate_factors_with(&panel, 2, GramSide::Time).unwrap();
        let b = estimate_factors_with(&panel, 2, GramSide::Asset).unwrap();
        assert!((&a.factors - &b.factors).abs().max() < 1e-8);
        assert!((&a.loadings - &b.loadings).abs().max() < 1e-10);
    }

    #[test]
    fn k_out_of_range_is_an_error() {
        let panel = noise_panel(3, 5, 1.0, 1);
        assert!(matches!(estimate_factors(&panel, 0), Err(Error::FactorCountOutOfRange { .. })));
        assert!(matches!(estimate_factors(&panel, 4), Err(Error::FactorCountOutOfRange { .. })));
        assert!(estimate_factors(&panel, 3).is_ok());
    }

    #[test]
    fn zero_factor_criterion_is_log_mean_square() {
        let panel = noise_panel(10, 30, 0.2, 5);
        let crit = bai_ng_criterion(&panel, 3).unwrap();
        let ms = panel.returns().norm_squared() / 300.0;
        assert!((crit[0] - ms.ln()).abs() < 1e-12);
    }

    #[test]
    fn criterion_matches_direct_residual_evaluation() {
        let panel = noise_panel(9, 25, 0.3, 8);
        let crit = bai_ng_criterion(&panel, 4).unwrap();
        let g = bai_ng_penalty(9, 25);
        for k in 1..=4 {
            let fit = estimate_factors_with(&panel, k, GramSide::Time).unwrap();
            let direct = (fit.residuals.norm_squared() / 225.0).ln() + k as f64 * g;
            assert!((direct - crit[k]).abs() < 1e-9, "k={k}: {direct} vs {}", crit[k]);
        }
    }

    #[test]
    fn iid_noise_selects_zero_factors() {
        // N(0, 0.01 I) entries, p = 50, T = 200
        let panel = noise_panel(50, 200, 0.1, 42);
        let crit = bai_ng_criterion(&panel, 8).unwrap();
        assert!(crit[1] > crit[0], "penalty should dominate: {crit:?}");
        assert_eq!(select_num_factors(&panel, 8).unwrap(), 0);
    }

    #[test]
    fn all_zero_panel_is_degenerate() {
        let panel = ReturnPanel::from_matrix(DMatrix::zeros(4, 6)).unwrap();
        assert!(matches!(select_num_factors(&panel, 2), Err(Error::DegeneratePanel)));
    }
}
