//! Long-run covariance of the estimated factors by Bartlett-kernel HAC
//! smoothing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_finite_matrix, check_finite_vector, sym_eigen_desc, symmetrize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Bartlett,
}

impl Kernel {
    /// Kernel weight at `x = j / q`.
    pub fn weight(self, x: f64) -> f64 {
        match self {
            Kernel::Bartlett => (1.0 - x.abs()).max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRunCov {
    pub matrix: DMatrix<f64>,
    pub bandwidth: usize,
    pub kernel: Kernel,
}

/// Eigenvalues below this (relative to the largest magnitude) count as
/// rounding noise rather than genuine indefiniteness.
const PSD_TOLERANCE: f64 = 1e-10;

/// `(1/T) sum_{t > lag} (f_t - mean)(f_{t-lag} - mean)'`.
pub fn autocov(factors: &DMatrix<f64>, mean: &DVector<f64>, lag: usize) -> Result<DMatrix<f64>> {
    let (k, t) = factors.shape();
    if mean.len() != k {
        return Err(Error::dims("factor mean", k, mean.len()));
    }
    if lag >= t {
        return Err(Error::InvalidArgument(format!("lag {lag} must be below the sample length {t}")));
    }
    let centered = DMatrix::from_fn(k, t, |i, s| factors[(i, s)] - mean[i]);
    let lead = centered.columns(lag, t - lag);
    let lagged = centered.columns(0, t - lag);
    Ok(lead * lagged.transpose() / t as f64)
}

/// Bartlett HAC estimate `C(0) + sum_{j=1}^{q-1} (1 - j/q)(C(j) + C(j)')`.
pub fn hac_long_run_cov(factors: &DMatrix<f64>, mean: &DVector<f64>, bandwidth: usize) -> Result<LongRunCov> {
    if bandwidth == 0 {
        return Err(Error::InvalidArgument("bandwidth must be at least 1".into()));
    }
    check_finite_matrix(factors, "factors")?;
    check_finite_vector(mean, "factor mean")?;
    let kernel = Kernel::Bartlett;
    let t = factors.ncols();
    let q = bandwidth as f64;
    let mut v = autocov(factors, mean, 0)?;
    for j in 1..bandwidth.min(t) {
        let c = autocov(factors, mean, j)?;
        let w = kernel.weight(j as f64 / q);
        v += (&c + c.transpose()) * w;
    }
    let mut matrix = symmetrize(&v);
    let (vals, vecs) = sym_eigen_desc(&matrix)?;
    let scale = vals.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let min = vals[vals.len() - 1];
    if min < -PSD_TOLERANCE * scale.max(1.0) {
        return Err(Error::NotPositiveSemidefinite {
            context: "HAC long-run covariance",
            min_eigenvalue: min,
        });
    }
    if min < 0.0 {
        let clipped = DVector::from_iterator(vals.len(), vals.iter().map(|x| x.max(0.0)));
        matrix = symmetrize(&(&vecs * DMatrix::from_diagonal(&clipped) * vecs.transpose()));
    }
    Ok(LongRunCov {
        matrix,
        bandwidth,
        kernel,
    })
}

/// Long-run covariance of serially independent PCA factors: `I - mu mu'`.
pub fn independent_long_run_cov(mean: &DVector<f64>) -> LongRunCov {
    let k = mean.len();
    LongRunCov {
        matrix: symmetrize(&(DMatrix::identity(k, k) - mean * mean.transpose())),
        bandwidth: 1,
        kernel: Kernel::Bartlett,
    }
}

/// `max(1, floor(c * T^(-1/8) * p^(1/4)))`.
pub fn default_bandwidth(t: usize, p: usize, c: f64) -> usize {
    let q = c * (t as f64).powf(-0.125) * (p as f64).powf(0.25);
    (q.floor() as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn hand_computed_lag_one() {
        let f = DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        let m = DVector::from_element(1, 2.5);
        let c = autocov(&f, &m, 1).unwrap();
        assert!((c[(0, 0)] - 0.3125).abs() < 1e-15);
    }

    #[test]
    fn last_lag_is_a_single_cross_product() {
        let f = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, -1.0, 3.0, 1.0]);
        let m = DVector::zeros(2);
        let c = autocov(&f, &m, 2).unwrap();
        let expected = f.column(2) * f.column(0).transpose() / 3.0;
        assert_eq!(c, expected);
        assert!(autocov(&f, &m, 3).is_err());
    }

    #[test]
    fn bandwidth_one_is_lag_zero() {
        let mut g = rng::stream(1, 0);
        let f = DMatrix::from_fn(3, 50, |_, _| StandardNormal.sample(&mut g));
        let m = DVector::from_fn(3, |i, _| f.row(i).mean());
        let v = hac_long_run_cov(&f, &m, 1).unwrap();
        assert_eq!(v.matrix, autocov(&f, &m, 0).unwrap());
    }

    #[test]
    fn default_bandwidth_values() {
        assert_eq!(default_bandwidth(200, 100, 5.0), 8);
        assert_eq!(default_bandwidth(200, 30, 5.0), 6);
        assert_eq!(default_bandwidth(200, 30, 0.01), 1);
    }

    #[test]
    fn independent_shortcut() {
        let m = DVector::from_vec(vec![0.1, -0.2]);
        let v = independent_long_run_cov(&m);
        assert!((v.matrix[(0, 1)] - 0.02).abs() < 1e-15);
        assert!((v.matrix[(1, 1)] - 0.96).abs() < 1e-15);
    }
}
