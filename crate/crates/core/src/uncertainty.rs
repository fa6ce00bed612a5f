//! Calibration of the ambiguity radius `delta` and the worst-case return
//! floor `rho`, the closed-form mean-variance portfolio, and the largest
//! feasible `rho` for a given radius.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::factor_model::FactorFit;
use crate::linalg::{check_finite_matrix, check_finite_vector, ones, sym_eigen_desc};
use crate::longrun::LongRunCov;
use crate::rng;

/// Default number of Monte Carlo draws for [`quadform_quantile`].
pub const DEFAULT_QUANTILE_DRAWS: usize = 200_000;

const CHUNK: usize = 8192;

/// Calibrated ambiguity parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyParams {
    pub delta: f64,
    pub rho: f64,
    /// Confidence level used for `delta`, when it was calibrated.
    pub delta_confidence: Option<f64>,
    pub rho_confidence: f64,
    pub target_return: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Quantile of `||Z||^2 / (4 (1 - mu_f' mu_f))`, before dividing by `T`.
    pub l0_quantile: Option<f64>,
    /// The `eps`-quantile of `N(0, w' B V B' w)`.
    pub a_quantile: f64,
    /// `T^{-1/2} A / ||B' w||`.
    pub q_value: f64,
    /// `||B' w||`.
    pub norm_bw: f64,
}

/// Radius selection together with its intermediate quantile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaSelection {
    pub delta: f64,
    pub level: f64,
    pub l0_quantile: f64,
}

fn check_level(level: f64, what: &str) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} must lie in (0, 1), got {level}")))
    }
}

/// Monte Carlo `level`-quantile of `||Z||^2` for `Z ~ N(0, cov)`.
///
/// Draws are generated as `sum_i lambda_i chi2_1` over the eigenvalues of
/// `cov`, in fixed-size chunks each fed by its own substream of `seed`, so
/// the result depends only on `(cov, level, draws, seed)`.
pub fn quadform_quantile(cov: &DMatrix<f64>, level: f64, draws: usize, seed: u64) -> Result<f64> {
    Ok(quadform_quantiles(cov, &[level], draws, seed)?[0])
}

/// Several quantiles from one common set of draws.
pub fn quadform_quantiles(cov: &DMatrix<f64>, levels: &[f64], draws: usize, seed: u64) -> Result<Vec<f64>> {
    for &level in levels {
        check_level(level, "quantile level")?;
    }
    if draws < 1000 {
        return Err(Error::InvalidArgument(format!("at least 1000 draws required, got {draws}")));
    }
    if !cov.is_square() {
        return Err(Error::dims("quadratic form covariance", "square", format!("{}x{}", cov.nrows(), cov.ncols())));
    }
    check_finite_matrix(cov, "quadratic form covariance")?;
    let (vals, _) = sym_eigen_desc(cov)?;
    let scale = vals.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-10 * scale.max(1.0) {
        return Err(Error::NotPositiveSemidefinite {
            context: "quadratic form covariance",
            min_eigenvalue: min,
        });
    }
    let lambdas: Vec<f64> = vals.iter().map(|x| x.max(0.0)).collect();
    if lambdas.iter().all(|&l| l == 0.0) {
        return Ok(vec![0.0; levels.len()]);
    }
    let n_chunks = draws.div_ceil(CHUNK);
    let mut samples: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let len = CHUNK.min(draws - c * CHUNK);
            let mut g = rng::stream(seed, c as u64);
            let lambdas = &lambdas;
            (0..len)
                .map(move |_| {
                    lambdas
                        .iter()
                        .map(|l| {
                            let z: f64 = StandardNormal.sample(&mut g);
                            l * z * z
                        })
                        .sum::<f64>()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    samples.par_sort_unstable_by(f64::total_cmp);
    Ok(levels
        .iter()
        .map(|&level| samples[((level * draws as f64).ceil() as usize).clamp(1, draws) - 1])
        .collect())
}

/// `delta = quantile(||Z||^2) / (4 T (1 - mu_f' mu_f))` with `Z ~ N(0, V)`.
pub fn delta_from_moments(
    factor_mean: &DVector<f64>,
    long_run: &DMatrix<f64>,
    t: usize,
    level: f64,
    draws: usize,
    seed: u64,
) -> Result<DeltaSelection> {
    let mut out = delta_levels_from_moments(factor_mean, long_run, t, &[level], draws, seed)?;
    Ok(out.remove(0))
}

/// [`delta_from_moments`] at several levels sharing one set of draws.
pub fn delta_levels_from_moments(
    factor_mean: &DVector<f64>,
    long_run: &DMatrix<f64>,
    t: usize,
    levels: &[f64],
    draws: usize,
    seed: u64,
) -> Result<Vec<DeltaSelection>> {
    check_finite_vector(factor_mean, "factor mean")?;
    if long_run.shape() != (factor_mean.len(), factor_mean.len()) {
        return Err(Error::dims("long-run covariance", factor_mean.len(), long_run.nrows()));
    }
    if t == 0 {
        return Err(Error::InvalidArgument("sample length must be positive".into()));
    }
    let mm = factor_mean.norm_squared();
    if mm >= 1.0 {
        return Err(Error::FactorMeanInconsistent(mm));
    }
    let qs = quadform_quantiles(long_run, levels, draws, seed)?;
    Ok(levels
        .iter()
        .zip(qs)
        .map(|(&level, q)| {
            let l0 = q / (4.0 * (1.0 - mm));
            DeltaSelection {
                delta: l0 / t as f64,
                level,
                l0_quantile: l0,
            }
        })
        .collect())
}

/// Radius at confidence `level` from an estimated factor model.
pub fn select_delta(fit: &FactorFit, longrun: &LongRunCov, level: f64, draws: usize, seed: u64) -> Result<f64> {
    select_delta_detailed(fit, longrun, level, draws, seed).map(|d| d.delta)
}

pub fn select_delta_detailed(
    fit: &FactorFit,
    longrun: &LongRunCov,
    level: f64,
    draws: usize,
    seed: u64,
) -> Result<DeltaSelection> {
    delta_from_moments(&fit.factor_mean, &longrun.matrix, fit.n_periods(), level, draws, seed)
}

/// Efficient-frontier weights with `w'1 = 1` and `w'mean = target`.
pub fn mv_closed_form(mean: &DVector<f64>, cov: &DMatrix<f64>, target: f64) -> Result<DVector<f64>> {
    let p = mean.len();
    if cov.shape() != (p, p) {
        return Err(Error::dims("covariance", format!("{p}x{p}"), format!("{}x{}", cov.nrows(), cov.ncols())));
    }
    check_finite_vector(mean, "mean")?;
    check_finite_matrix(cov, "covariance")?;
    let chol = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite("mean-variance covariance"))?;
    let one = ones(p);
    let si_mu = chol.solve(mean);
    let si_one = chol.solve(&one);
    let a1 = mean.dot(&si_one);
    let a2 = mean.dot(&si_mu);
    let a3 = one.dot(&si_one);
    let a4 = a2 * a3 - a1 * a1;
    if a4.abs() <= 1e-12 * (a2 * a3).abs() || a4 == 0.0 {
        return Err(Error::IllPosedMeanVariance { a4, scale: a2 * a3 });
    }
    Ok(si_mu * ((target * a3 - a1) / a4) + si_one * ((a2 - target * a1) / a4))
}

/// Global minimum-variance weights `Sigma^{-1} 1 / (1' Sigma^{-1} 1)`.
pub fn gmv_weights(cov: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_finite_matrix(cov, "covariance")?;
    let chol = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite("minimum-variance covariance"))?;
    let x = chol.solve(&ones(cov.nrows()));
    let s = x.sum();
    Ok(x / s)
}

/// Standard normal quantile.
pub fn normal_quantile(prob: f64) -> f64 {
    Normal::standard().inverse_cdf(prob)
}

/// Return-floor selection from its ingredients: `B` (`p x K`), the long-run
/// covariance `V` and the reference weights `w`.
#[allow(clippy::too_many_arguments)]
pub fn rho_from_parts(
    delta: f64,
    loadings: &DMatrix<f64>,
    long_run: &DMatrix<f64>,
    w: &DVector<f64>,
    t: usize,
    target: f64,
    eps: f64,
) -> Result<UncertaintyParams> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta must be finite and >= 0, got {delta}")));
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 0.5), got {eps}")));
    }
    let (p, k) = loadings.shape();
    if w.len() != p {
        return Err(Error::dims("reference weights", p, w.len()));
    }
    if long_run.shape() != (k, k) {
        return Err(Error::dims("long-run covariance", k, long_run.nrows()));
    }
    if (w.sum() - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!("reference weights must sum to 1, got {}", w.sum())));
    }
    let u = loadings.transpose() * w;
    let var = u.dot(&(long_run * &u));
    let norm_bw = u.norm();
    if var < -1e-12 * (long_run.norm() * norm_bw * norm_bw).max(f64::MIN_POSITIVE) {
        return Err(Error::NotPositiveSemidefinite {
            context: "reference portfolio factor variance",
            min_eigenvalue: var,
        });
    }
    let sigma = var.max(0.0).sqrt();
    let a_quantile = sigma * normal_quantile(eps);
    let sqrt_t = (t as f64).sqrt();
    let rho = target - (delta.sqrt() * norm_bw - a_quantile / sqrt_t);
    let q_value = if norm_bw > 0.0 { a_quantile / (sqrt_t * norm_bw) } else { 0.0 };
    Ok(UncertaintyParams {
        delta,
        rho,
        delta_confidence: None,
        rho_confidence: 1.0 - eps,
        target_return: target,
        diagnostics: Diagnostics {
            l0_quantile: None,
            a_quantile,
            q_value,
            norm_bw,
        },
    })
}

/// `rho = target - (sqrt(delta) ||B'w|| - T^{-1/2} A)`.
pub fn select_rho(
    delta: f64,
    fit: &FactorFit,
    longrun: &LongRunCov,
    w_mv: &DVector<f64>,
    target: f64,
    eps: f64,
) -> Result<UncertaintyParams> {
    rho_from_parts(delta, &fit.loadings, &longrun.matrix, w_mv, fit.n_periods(), target, eps)
}

/// Supremum of `w' B mu_f - sqrt(delta) ||B'w||` over the budget hyperplane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GBar {
    Finite(f64),
    Unbounded,
}

impl GBar {
    /// Tolerance used when comparing `rho` with a finite bound.
    pub const TOLERANCE: f64 = 1e-10;

    pub fn admits(self, rho: f64) -> bool {
        match self {
            GBar::Finite(g) => rho <= g + Self::TOLERANCE,
            GBar::Unbounded => true,
        }
    }

    /// The bound as a number, `+inf` when unbounded.
    pub fn value(self) -> f64 {
        match self {
            GBar::Finite(g) => g,
            GBar::Unbounded => f64::INFINITY,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, GBar::Unbounded)
    }
}

impl std::fmt::Display for GBar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GBar::Finite(g) => write!(f, "{g:e}"),
            GBar::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl Serialize for GBar {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            GBar::Finite(g) => s.serialize_f64(*g),
            GBar::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

/// A point or a ray certifying how large the robust return can be made.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Witness {
    /// A maximizer on the budget hyperplane.
    Maximizer(DVector<f64>),
    /// `base + t * direction` stays on the hyperplane and the robust return
    /// grows at `rate > 0` per unit `t`.
    Ray {
        base: DVector<f64>,
        direction: DVector<f64>,
        rate: f64,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct FeasibilityAnalysis {
    pub g_bar: GBar,
    pub witness: Witness,
}

/// Pseudo-inverse machinery for `C = [1 B]` through the eigen-decomposition
/// of the small matrix `C'C`.
struct Augmented {
    c: DMatrix<f64>,
    range_vecs: DMatrix<f64>,
    range_inv_vals: DVector<f64>,
    null_vecs: DMatrix<f64>,
}

impl Augmented {
    fn new(b: &DMatrix<f64>) -> Result<Self> {
        let (p, k) = b.shape();
        let mut c = DMatrix::zeros(p, k + 1);
        c.column_mut(0).fill(1.0);
        c.columns_mut(1, k).copy_from(b);
        let (vals, vecs) = sym_eigen_desc(&(c.transpose() * &c))?;
        let cutoff = vals[0].max(0.0) * 1e-12;
        let rank = vals.iter().take_while(|&&v| v > cutoff).count();
        Ok(Self {
            range_vecs: vecs.columns(0, rank).into_owned(),
            range_inv_vals: DVector::from_iterator(rank, vals.iter().take(rank).map(|v| 1.0 / v)),
            null_vecs: vecs.columns(rank, k + 1 - rank).into_owned(),
            c,
        })
    }

    /// Least-squares, least-norm `x` minimizing `||C x - rhs||`.
    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let ct = self.c.transpose() * rhs;
        let coef = (self.range_vecs.transpose() * ct).component_mul(&self.range_inv_vals);
        &self.range_vecs * coef
    }

    /// Least-norm `w` with `C' w = rhs` (exact when `rhs` is orthogonal to
    /// the null space of `C`).
    fn solve_transposed(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let coef = (self.range_vecs.transpose() * rhs).component_mul(&self.range_inv_vals);
        &self.c * (&self.range_vecs * coef)
    }
}

/// Exact solution of `sup { mu'w - s ||B'w|| : 1'w = 1 }` through its conic
/// dual `min { lambda : lambda 1 + B y = mu, ||y|| <= s }`.
pub(crate) fn analyze_feasibility(mu: &DVector<f64>, b: &DMatrix<f64>, s: f64) -> Result<FeasibilityAnalysis> {
    let p = mu.len();
    if b.nrows() != p {
        return Err(Error::dims("loadings", p, b.nrows()));
    }
    check_finite_vector(mu, "mean")?;
    check_finite_matrix(b, "loadings")?;
    let k = b.ncols();
    let aug = Augmented::new(b)?;
    let x = aug.solve(mu);
    let residual = mu - &aug.c * &x;
    let equal = DVector::from_element(p, 1.0 / p as f64);

    if residual.norm() > 1e-9 * mu.norm().max(1e-300) {
        // mu has a component orthogonal to 1 and range(B): a linear ray with
        // no penalty.
        let rate = residual.norm_squared();
        return Ok(FeasibilityAnalysis {
            g_bar: GBar::Unbounded,
            witness: Witness::Ray {
                base: equal,
                direction: residual,
                rate,
            },
        });
    }

    let lambda_p = x[0];
    let a = x.rows(1, k).into_owned();
    let z = &aug.null_vecs;
    let z_lambda = z.row(0).transpose();
    let m = z.rows(1, k).into_owned();
    // Split a into its range(M) and orthogonal parts, and express z_lambda as
    // M' g with g in range(M).
    let (a_perp, g) = if m.ncols() == 0 {
        (a.clone(), DVector::zeros(k))
    } else {
        let mtm = m.transpose() * &m;
        let chol = mtm.cholesky().ok_or(Error::NotPositiveDefinite("null-space block"))?;
        let a_par = &m * chol.solve(&(m.transpose() * &a));
        let g = &m * chol.solve(&z_lambda);
        (&a - a_par, g)
    };
    let perp = a_perp.norm();
    if perp > s {
        let mut rhs = DVector::zeros(k + 1);
        rhs.rows_mut(1, k).copy_from(&a_perp);
        let direction = aug.solve_transposed(&rhs);
        let bd = b.transpose() * &direction;
        let rate = mu.dot(&direction) - s * bd.norm();
        return Ok(FeasibilityAnalysis {
            g_bar: GBar::Unbounded,
            witness: Witness::Ray {
                base: equal,
                direction,
                rate,
            },
        });
    }
    let radius = (s * s - perp * perp).max(0.0).sqrt();
    let gn = g.norm();
    let mut g_bar = lambda_p - g.dot(&a) - gn * radius;
    // Below the least-squares noise floor the sign carries no information.
    if g_bar.abs() <= 1e-12 * (x.norm() + gn * (a.norm() + radius)) {
        g_bar = 0.0;
    }
    let y_star = if gn > 0.0 { &a_perp - &g * (radius / gn) } else { a.clone() };

    // Maximizer: 1'w = 1 and B'w = c y*, with c chosen so the system is
    // consistent.
    let mut e0 = DVector::zeros(k + 1);
    e0[0] = 1.0;
    let mut ey = DVector::zeros(k + 1);
    ey.rows_mut(1, k).copy_from(&y_star);
    let c = if z.ncols() == 0 || y_star.norm() < s * (1.0 - 1e-12) {
        0.0
    } else {
        let n0 = z.transpose() * &e0;
        let ny = z.transpose() * &ey;
        let den = ny.norm_squared();
        if den > 0.0 {
            (-n0.dot(&ny) / den).max(0.0)
        } else {
            0.0
        }
    };
    let w = aug.solve_transposed(&(e0 + ey * c));
    Ok(FeasibilityAnalysis {
        g_bar: GBar::Finite(g_bar),
        witness: Witness::Maximizer(w),
    })
}

/// Largest `rho` for which the robust feasible region is nonempty.
pub fn max_feasible_rho(loadings: &DMatrix<f64>, factor_mean: &DVector<f64>, delta: f64) -> Result<GBar> {
    if loadings.ncols() != factor_mean.len() {
        return Err(Error::dims("factor mean", loadings.ncols(), factor_mean.len()));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta must be finite and >= 0, got {delta}")));
    }
    let mu = loadings * factor_mean;
    Ok(analyze_feasibility(&mu, loadings, delta.sqrt())?.g_bar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::ChiSquared;

    fn robust_return(mu: &DVector<f64>, b: &DMatrix<f64>, s: f64, w: &DVector<f64>) -> f64 {
        mu.dot(w) - s * (b.transpose() * w).norm()
    }

    #[test]
    fn chi_square_quantile() {
        let exact = ChiSquared::new(1.0).unwrap().inverse_cdf(0.95);
        let q = quadform_quantile(&DMatrix::identity(1, 1), 0.95, 200_000, 1).unwrap();
        assert!((q - exact).abs() < 0.05, "{q} vs {exact}");
    }

    #[test]
    fn zero_covariance_gives_zero() {
        assert_eq!(quadform_quantile(&DMatrix::zeros(2, 2), 0.9, 1000, 3).unwrap(), 0.0);
    }

    #[test]
    fn quantile_rejects_indefinite_and_few_draws() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(quadform_quantile(&m, 0.9, 1000, 1).is_err());
        assert!(quadform_quantile(&DMatrix::identity(1, 1), 0.9, 999, 1).is_err());
    }

    #[test]
    fn mv_two_asset_midpoint() {
        let w = mv_closed_form(&DVector::from_vec(vec![0.1, 0.2]), &DMatrix::identity(2, 2), 0.15).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mv_constant_mean_is_ill_posed() {
        let err = mv_closed_form(&DVector::from_element(3, 0.02), &DMatrix::identity(3, 3), 0.02).unwrap_err();
        assert!(matches!(err, Error::IllPosedMeanVariance { .. }));
    }

    #[test]
    fn rho_without_uncertainty_is_target() {
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.5]);
        let w = DVector::from_vec(vec![0.5, 0.5]);
        let p = rho_from_parts(0.0, &b, &DMatrix::zeros(1, 1), &w, 100, 0.01, 0.05).unwrap();
        assert_eq!(p.rho, 0.01);
        assert_eq!(p.diagnostics.a_quantile, 0.0);
    }

    #[test]
    fn normal_quantile_accuracy() {
        assert!((normal_quantile(0.05) + 1.6448536269514722).abs() < 1e-9);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-9);
    }

    #[test]
    fn g_bar_is_zero_when_penalty_dominates() {
        let b = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.8, 0.1, 0.0, 1.2, 0.1, 0.9]);
        let mf = DVector::from_vec(vec![0.05, 0.03]);
        let g = max_feasible_rho(&b, &mf, 0.01).unwrap();
        match g {
            GBar::Finite(v) => assert!(v.abs() < 1e-12, "{v}"),
            GBar::Unbounded => panic!("expected finite bound"),
        }
        assert!(max_feasible_rho(&b, &mf, 0.001).unwrap().is_unbounded());
    }

    #[test]
    fn zero_delta_with_nonconstant_mean_is_unbounded() {
        let b = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let g = max_feasible_rho(&b, &DVector::from_vec(vec![0.1]), 0.0).unwrap();
        assert!(g.is_unbounded());
    }

    #[test]
    fn identity_loadings_closed_form_and_maximizer() {
        // With B = I: sup = mbar - sqrt((s^2 - ||mu - mbar 1||^2) / p).
        let mu = DVector::from_vec(vec![0.01, 0.03, 0.02]);
        let b = DMatrix::identity(3, 3);
        let s = 0.1;
        let an = analyze_feasibility(&mu, &b, s).unwrap();
        let mbar = mu.mean();
        let dev = (&mu - DVector::from_element(3, mbar)).norm_squared();
        let expected = mbar - ((s * s - dev) / 3.0).sqrt();
        let GBar::Finite(g) = an.g_bar else { panic!("unbounded") };
        assert!((g - expected).abs() < 1e-12, "{g} vs {expected}");
        let Witness::Maximizer(w) = an.witness else { panic!("no maximizer") };
        assert!((w.sum() - 1.0).abs() < 1e-12);
        assert!((robust_return(&mu, &b, s, &w) - g).abs() < 1e-12);
    }

    #[test]
    fn unbounded_rays_increase_the_robust_return() {
        let b = DMatrix::from_row_slice(4, 1, &[1.0, 0.5, 0.2, 0.1]);
        let mu = &b * DVector::from_vec(vec![0.3]);
        let s = 0.1;
        let an = analyze_feasibility(&mu, &b, s).unwrap();
        let Witness::Ray { base, direction, rate } = an.witness else { panic!("expected ray") };
        assert!(rate > 0.0);
        assert!(direction.sum().abs() < 1e-12);
        let r0 = robust_return(&mu, &b, s, &base);
        let r1 = robust_return(&mu, &b, s, &(&base + &direction * 10.0));
        assert!(r1 > r0 + 5.0 * rate);
    }
}
