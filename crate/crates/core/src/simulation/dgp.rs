//! Synthetic factor market: AR(1) factors with unit second moment,
//! block-diagonal Gaussian loadings and Gaussian errors.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor_model::{default_threshold_grid, estimate_factors, threshold_positive_definite, ShrinkageRule};
use crate::linalg::{check_finite_matrix, min_eigenvalue, psd_factor};
use crate::panel::ReturnPanel;
use crate::rng;

/// Random stream indices used by [`simulate_panel`].
pub const LOADINGS_STREAM: u64 = 0;
pub const FACTORS_STREAM: u64 = 1;
pub const ERRORS_STREAM: u64 = 2;

/// Parameters of the synthetic market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpParams {
    pub k: usize,
    pub ar_coef: Vec<f64>,
    pub ar_intercept: Vec<f64>,
    /// Number of assets loading on each factor; one block per factor.
    pub block_sizes: Vec<usize>,
    pub loading_mean: Vec<f64>,
    pub loading_sd: Vec<f64>,
    pub error_cov: DMatrix<f64>,
}

impl DgpParams {
    /// Two-factor reference market with `p` assets. Not estimated from any
    /// data set; it only has to be a plausible, stationary configuration.
    pub fn fixture(p: usize) -> Self {
        let mut error_cov = DMatrix::identity(p, p) * 1e-4;
        for i in 1..p {
            error_cov[(i, i - 1)] = 2e-5;
            error_cov[(i - 1, i)] = 2e-5;
        }
        Self {
            k: 2,
            ar_coef: vec![0.15, 0.10],
            ar_intercept: vec![0.02, 0.01],
            block_sizes: vec![p / 2, p - p / 2],
            loading_mean: vec![1.0, 0.9],
            loading_sd: vec![0.3, 0.3],
            error_cov,
        }
    }

    pub fn n_assets(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    /// Copy with every autoregressive coefficient multiplied by `factor`.
    pub fn with_scaled_ar(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.ar_coef.iter_mut().for_each(|a| *a *= factor);
        out
    }

    /// Stationary means `beta / (1 - alpha)`.
    pub fn stationary_mean(&self) -> DVector<f64> {
        DVector::from_iterator(self.k, self.ar_coef.iter().zip(&self.ar_intercept).map(|(a, b)| b / (1.0 - a)))
    }

    /// Innovation variances `(1 - alpha^2)(1 - m^2)`, which make the
    /// stationary second moment equal to one.
    pub fn innovation_var(&self) -> DVector<f64> {
        let m = self.stationary_mean();
        DVector::from_iterator(self.k, self.ar_coef.iter().zip(m.iter()).map(|(a, m)| (1.0 - a * a) * (1.0 - m * m)))
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        if k == 0 {
            return Err(Error::InvalidArgument("at least one factor required".into()));
        }
        for (name, len) in [
            ("ar_coef", self.ar_coef.len()),
            ("ar_intercept", self.ar_intercept.len()),
            ("block_sizes", self.block_sizes.len()),
            ("loading_mean", self.loading_mean.len()),
            ("loading_sd", self.loading_sd.len()),
        ] {
            if len != k {
                return Err(Error::InvalidArgument(format!("{name} has {len} entries, expected {k}")));
            }
        }
        if let Some(a) = self.ar_coef.iter().find(|a| !(a.abs() < 1.0)) {
            return Err(Error::InvalidArgument(format!("non-stationary autoregressive coefficient {a}")));
        }
        if let Some(v) = self.innovation_var().iter().find(|v| !(**v > 0.0)) {
            return Err(Error::InvalidArgument(format!("non-positive innovation variance {v}")));
        }
        if self.loading_sd.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidArgument("loading standard deviations must be >= 0".into()));
        }
        let p = self.n_assets();
        if p < 2 {
            return Err(Error::InvalidArgument("at least two assets required".into()));
        }
        if self.error_cov.shape() != (p, p) {
            return Err(Error::dims("error covariance", format!("{p}x{p}"), format!("{:?}", self.error_cov.shape())));
        }
        check_finite_matrix(&self.error_cov, "error covariance")?;
        let min = min_eigenvalue(&self.error_cov)?;
        if min < -1e-12 {
            return Err(Error::NotPositiveSemidefinite {
                context: "error covariance",
                min_eigenvalue: min,
            });
        }
        Ok(())
    }
}

/// Population quantities behind a simulated panel.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub loadings: DMatrix<f64>,
    /// `K x T`.
    pub factors: DMatrix<f64>,
    pub error_cov: DMatrix<f64>,
}

fn normal<R: Rng>(g: &mut R) -> f64 {
    StandardNormal.sample(g)
}

/// Block-diagonal loadings: rows of block `i` load only on factor `i`.
pub fn draw_loadings(params: &DgpParams, seed: u64) -> Result<DMatrix<f64>> {
    params.validate()?;
    let mut g = rng::stream(seed, LOADINGS_STREAM);
    let mut b = DMatrix::zeros(params.n_assets(), params.k);
    let mut row = 0;
    for (j, &size) in params.block_sizes.iter().enumerate() {
        let dist = Normal::new(params.loading_mean[j], params.loading_sd[j])
            .map_err(|e| Error::InvalidArgument(format!("loading distribution: {e}")))?;
        for _ in 0..size {
            b[(row, j)] = dist.sample(&mut g);
            row += 1;
        }
    }
    Ok(b)
}

/// `K x T` factor paths started from their stationary law.
pub fn simulate_factors(params: &DgpParams, t: usize, seed: u64) -> Result<DMatrix<f64>> {
    params.validate()?;
    let mut g = rng::stream(seed, FACTORS_STREAM);
    let m = params.stationary_mean();
    let sv = params.innovation_var().map(f64::sqrt);
    let mut f = DMatrix::zeros(params.k, t);
    for i in 0..params.k {
        let (a, b) = (params.ar_coef[i], params.ar_intercept[i]);
        let mut x = m[i] + (1.0 - m[i] * m[i]).sqrt() * normal(&mut g);
        for s in 0..t {
            if s > 0 {
                x = b + a * x + sv[i] * normal(&mut g);
            }
            f[(i, s)] = x;
        }
    }
    Ok(f)
}

/// Simulates `t` periods on the given loadings.
pub fn simulate_with_loadings(
    params: &DgpParams,
    loadings: &DMatrix<f64>,
    t: usize,
    seed: u64,
) -> Result<(ReturnPanel, SimTruth)> {
    if t < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 periods, got {t}")));
    }
    let p = params.n_assets();
    if loadings.shape() != (p, params.k) {
        return Err(Error::dims("loadings", format!("{p}x{}", params.k), format!("{:?}", loadings.shape())));
    }
    let factors = simulate_factors(params, t, seed)?;
    let l = psd_factor(&params.error_cov)?;
    let mut g = rng::stream(seed, ERRORS_STREAM);
    let z = DMatrix::from_fn(l.ncols(), t, |_, _| normal(&mut g));
    let returns = loadings * &factors + &l * z;
    let panel = ReturnPanel::from_matrix(returns)?;
    Ok((
        panel,
        SimTruth {
            loadings: loadings.clone(),
            factors,
            error_cov: params.error_cov.clone(),
        },
    ))
}

/// Draws loadings, factors and errors from independent streams of `seed`.
pub fn simulate_panel(params: &DgpParams, t: usize, seed: u64) -> Result<(ReturnPanel, SimTruth)> {
    let b = draw_loadings(params, seed)?;
    simulate_with_loadings(params, &b, t, seed)
}

/// Parameters estimated from a panel, with flags for factors whose
/// autoregressive fit had to be clipped into the stationary region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DgpCalibration {
    pub params: DgpParams,
    pub clipped: Vec<bool>,
    /// Asset indices of the panel in block order.
    pub asset_order: Vec<usize>,
}

const MAX_AR: f64 = 0.99;

/// Fits the synthetic-market parameters to a return panel: AR(1) by least
/// squares on the estimated factors, loading moments per block (assets
/// grouped by their dominant factor) and a thresholded error covariance
/// with `C = 0.5`.
pub fn calibrate_dgp(panel: &ReturnPanel, k: usize) -> Result<DgpCalibration> {
    let t = panel.n_periods();
    if t <= 10 * k {
        return Err(Error::InvalidArgument(format!("need more than {} periods to calibrate {k} factors", 10 * k)));
    }
    let fit = estimate_factors(panel, k)?;
    let mut ar_coef = Vec::with_capacity(k);
    let mut ar_intercept = Vec::with_capacity(k);
    let mut clipped = Vec::with_capacity(k);
    for i in 0..k {
        let x: Vec<f64> = fit.factors.row(i).iter().copied().collect();
        let (lag, lead) = (&x[..t - 1], &x[1..]);
        let n = (t - 1) as f64;
        let mx = lag.iter().sum::<f64>() / n;
        let my = lead.iter().sum::<f64>() / n;
        let sxy: f64 = lag.iter().zip(lead).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = lag.iter().map(|a| (a - mx).powi(2)).sum();
        let mut a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let mut flag = false;
        if a.abs() >= MAX_AR {
            a = a.clamp(-MAX_AR, MAX_AR);
            flag = true;
        }
        let mut b = my - a * mx;
        // Keep the implied stationary mean inside (-1, 1).
        let m = b / (1.0 - a);
        if m.abs() >= MAX_AR {
            b = MAX_AR.copysign(m) * (1.0 - a);
            flag = true;
        }
        ar_coef.push(a);
        ar_intercept.push(b);
        clipped.push(flag);
    }

    let p = panel.n_assets();
    let group: Vec<usize> = (0..p)
        .map(|row| {
            (0..k)
                .max_by(|&a, &b| fit.loadings[(row, a)].abs().total_cmp(&fit.loadings[(row, b)].abs()))
                .unwrap_or(0)
        })
        .collect();
    let mut asset_order = Vec::with_capacity(p);
    let mut block_sizes = vec![0; k];
    let mut loading_mean = vec![0.0; k];
    let mut loading_sd = vec![0.0; k];
    for j in 0..k {
        let members: Vec<usize> = (0..p).filter(|&i| group[i] == j).collect();
        let vals: Vec<f64> = members.iter().map(|&i| fit.loadings[(i, j)]).collect();
        block_sizes[j] = members.len();
        if !vals.is_empty() {
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            loading_mean[j] = mean;
            if vals.len() > 1 {
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
                loading_sd[j] = var.sqrt();
            }
        }
        asset_order.extend(members);
    }

    let sp = threshold_positive_definite(&fit.residuals, 0.5, ShrinkageRule::Soft, &default_threshold_grid())?;
    let error_cov = DMatrix::from_fn(p, p, |i, j| sp.matrix[(asset_order[i], asset_order[j])]);
    let params = DgpParams {
        k,
        ar_coef,
        ar_intercept,
        block_sizes,
        loading_mean,
        loading_sd,
        error_cov,
    };
    params.validate()?;
    Ok(DgpCalibration {
        params,
        clipped,
        asset_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_valid() {
        for p in [2, 3, 30, 101] {
            DgpParams::fixture(p).validate().unwrap();
        }
    }

    #[test]
    fn iid_unit_factor() {
        let params = DgpParams {
            k: 1,
            ar_coef: vec![0.0],
            ar_intercept: vec![0.0],
            block_sizes: vec![2],
            loading_mean: vec![1.0],
            loading_sd: vec![0.0],
            error_cov: DMatrix::identity(2, 2) * 1e-4,
        };
        let f = simulate_factors(&params, 100_000, 3).unwrap();
        let m2 = f.norm_squared() / 100_000.0;
        assert!((m2 - 1.0).abs() < 0.01, "{m2}");
    }

    #[test]
    fn blocks_are_exclusive() {
        let params = DgpParams::fixture(10);
        let b = draw_loadings(&params, 4).unwrap();
        for i in 0..5 {
            assert_eq!(b[(i, 1)], 0.0);
            assert_eq!(b[(i + 5, 0)], 0.0);
        }
    }

    #[test]
    fn simulation_is_seeded() {
        let params = DgpParams::fixture(6);
        let (a, _) = simulate_panel(&params, 20, 5).unwrap();
        let (b, _) = simulate_panel(&params, 20, 5).unwrap();
        let (c, _) = simulate_panel(&params, 20, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn explosive_parameters_are_rejected() {
        let mut params = DgpParams::fixture(4);
        params.ar_coef[0] = 1.0;
        assert!(params.validate().is_err());
        let mut params = DgpParams::fixture(4);
        params.ar_intercept[0] = 0.9;
        assert!(params.validate().is_err());
    }
}
