//! Adaptive entry-wise thresholding of the residual covariance and the
//! cross-validated choice of the threshold constant.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_finite_matrix, is_positive_definite};
use crate::rng;

/// Shrinkage applied to off-diagonal entries below their threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShrinkageRule {
    Hard,
    #[default]
    Soft,
}

impl ShrinkageRule {
    #[inline]
    pub fn apply(self, s: f64, tau: f64) -> f64 {
        match self {
            ShrinkageRule::Hard => {
                if s.abs() > tau {
                    s
                } else {
                    0.0
                }
            }
            ShrinkageRule::Soft => s.signum() * (s.abs() - tau).max(0.0),
        }
    }
}

impl std::str::FromStr for ShrinkageRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(ShrinkageRule::Hard),
            "soft" => Ok(ShrinkageRule::Soft),
            other => Err(Error::InvalidArgument(format!("unknown shrinkage rule {other:?}"))),
        }
    }
}

/// Thresholded residual covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseResidualCov {
    pub matrix: DMatrix<f64>,
    pub threshold_constant: f64,
    pub rule: ShrinkageRule,
    /// Share of off-diagonal entries set to zero.
    pub zero_fraction: f64,
}

/// Sample covariance `s_ij` and the entry-wise scale `sqrt(theta_ij)` of a
/// residual matrix; computed once and reused across threshold constants.
#[derive(Debug, Clone)]
pub struct ResidualMoments {
    pub sample_cov: DMatrix<f64>,
    pub sqrt_theta: DMatrix<f64>,
    /// `sqrt(1/p) + sqrt(ln p / T)`.
    pub omega: f64,
}

impl ResidualMoments {
    pub fn new(residuals: &DMatrix<f64>) -> Result<Self> {
        check_finite_matrix(residuals, "residuals")?;
        let (p, t) = residuals.shape();
        if p == 0 || t == 0 {
            return Err(Error::InvalidArgument("empty residual matrix".into()));
        }
        let tf = t as f64;
        let sample_cov = residuals * residuals.transpose() / tf;
        let mut sqrt_theta = DMatrix::zeros(p, p);
        for i in 0..p {
            let ei = residuals.row(i);
            for j in 0..=i {
                let ej = residuals.row(j);
                let s = sample_cov[(i, j)];
                let theta = ei.iter().zip(ej.iter()).map(|(a, b)| (a * b - s).powi(2)).sum::<f64>() / tf;
                let v = theta.sqrt();
                sqrt_theta[(i, j)] = v;
                sqrt_theta[(j, i)] = v;
            }
        }
        let pf = p as f64;
        let omega = (1.0 / pf).sqrt() + (pf.ln() / tf).sqrt();
        // Symmetric by construction: use the lower triangle for both halves.
        let mut sym = sample_cov;
        for i in 0..p {
            for j in 0..i {
                sym[(j, i)] = sym[(i, j)];
            }
        }
        Ok(Self {
            sample_cov: sym,
            sqrt_theta,
            omega,
        })
    }

    pub fn threshold(&self, c: f64, rule: ShrinkageRule) -> SparseResidualCov {
        let p = self.sample_cov.nrows();
        let mut matrix = self.sample_cov.clone();
        let mut zeros = 0usize;
        for i in 0..p {
            for j in 0..i {
                let tau = c * self.sqrt_theta[(i, j)] * self.omega;
                let v = rule.apply(self.sample_cov[(i, j)], tau);
                if v == 0.0 {
                    zeros += 1;
                }
                matrix[(i, j)] = v;
                matrix[(j, i)] = v;
            }
        }
        let pairs = p * (p - 1) / 2;
        SparseResidualCov {
            matrix,
            threshold_constant: c,
            rule,
            zero_fraction: if pairs == 0 { 1.0 } else { zeros as f64 / pairs as f64 },
        }
    }
}

/// Thresholds the residual sample covariance with `tau_ij = c * sqrt(theta_ij) * omega`.
pub fn threshold_residual_cov(residuals: &DMatrix<f64>, c: f64, rule: ShrinkageRule) -> Result<SparseResidualCov> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("threshold constant must be finite and >= 0, got {c}")));
    }
    Ok(ResidualMoments::new(residuals)?.threshold(c, rule))
}

/// Thresholds at `c`; if the result is not positive definite, walks up the
/// grid until it is.
pub fn threshold_positive_definite(
    residuals: &DMatrix<f64>,
    c: f64,
    rule: ShrinkageRule,
    grid: &[f64],
) -> Result<SparseResidualCov> {
    let moments = ResidualMoments::new(residuals)?;
    let first = moments.threshold(c, rule);
    if is_positive_definite(&first.matrix) {
        return Ok(first);
    }
    for &g in grid.iter().filter(|&&g| g > c) {
        let cand = moments.threshold(g, rule);
        if is_positive_definite(&cand.matrix) {
            tracing::debug!(from = c, to = g, "raised threshold constant to restore positive definiteness");
            return Ok(cand);
        }
    }
    Err(Error::NotPositiveDefinite("thresholded residual covariance"))
}

/// `points` values evenly spaced on `[0, 4]`; the default is 21 points.
pub fn default_threshold_grid() -> Vec<f64> {
    linear_grid(0.0, 4.0, 21)
}

pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        n => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Outcome of cross-validating the threshold constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCv {
    pub c: f64,
    pub c_lower: f64,
    pub c_upper: f64,
    pub grid: Vec<f64>,
    /// Mean validation loss per grid value; `None` where some fold is not
    /// positive definite.
    pub losses: Vec<Option<f64>>,
}

struct Fold {
    train: ResidualMoments,
    validation_cov: DMatrix<f64>,
}

fn make_fold(residuals: &DMatrix<f64>, seed: u64, index: usize) -> Result<Fold> {
    let t = residuals.ncols();
    let n_train = ((2 * t) as f64 / 3.0).round() as usize;
    let n_train = n_train.clamp(1, t - 1);
    let mut order: Vec<usize> = (0..t).collect();
    order.shuffle(&mut rng::stream(seed, index as u64));
    let (train, valid) = order.split_at_mut(n_train);
    train.sort_unstable();
    valid.sort_unstable();
    let pick = |cols: &[usize]| DMatrix::from_fn(residuals.nrows(), cols.len(), |i, j| residuals[(i, cols[j])]);
    let train_m = pick(train);
    let valid_m = pick(valid);
    Ok(Fold {
        train: ResidualMoments::new(&train_m)?,
        validation_cov: &valid_m * valid_m.transpose() / valid_m.ncols() as f64,
    })
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    let p = m.nrows();
    (0..p).all(|i| (0..i).all(|j| m[(i, j)] == 0.0))
}

/// Chooses the threshold constant by `folds` random 2/3 - 1/3 splits of the
/// time indices, minimizing the mean squared Frobenius distance between the
/// thresholded training covariance and the validation sample covariance.
pub fn cross_validate_threshold(
    residuals: &DMatrix<f64>,
    folds: usize,
    grid: &[f64],
    rule: ShrinkageRule,
    seed: u64,
) -> Result<ThresholdCv> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("at least 2 folds required, got {folds}")));
    }
    if grid.is_empty() || grid.windows(2).any(|w| w[0] > w[1]) || grid.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::InvalidArgument("threshold grid must be nonempty, nonnegative and ascending".into()));
    }
    if residuals.ncols() < 3 {
        return Err(Error::InvalidArgument("cross-validation needs at least 3 periods".into()));
    }
    let fold_data: Vec<Fold> = (0..folds)
        .into_par_iter()
        .map(|j| make_fold(residuals, seed, j))
        .collect::<Result<_>>()?;

    // Per grid value: (all folds PD, all folds diagonal, mean loss, first failing fold).
    let evals: Vec<(bool, bool, f64, Option<usize>)> = grid
        .par_iter()
        .map(|&c| {
            let mut loss = 0.0;
            let mut diag = true;
            let mut failing = None;
            for (j, fold) in fold_data.iter().enumerate() {
                let est = fold.train.threshold(c, rule);
                if failing.is_none() && !is_positive_definite(&est.matrix) {
                    failing = Some(j);
                }
                diag &= is_diagonal(&est.matrix);
                loss += (&est.matrix - &fold.validation_cov).norm_squared();
            }
            (failing.is_none(), diag, loss / folds as f64, failing)
        })
        .collect();

    let Some(lower_idx) = evals.iter().position(|e| e.0) else {
        let last = evals.len() - 1;
        return Err(Error::ThresholdNotPositiveDefinite {
            fold: evals[last].3.unwrap_or(0),
            c: grid[last],
        });
    };
    let upper_idx = evals.iter().position(|e| e.1).unwrap_or(grid.len() - 1).max(lower_idx);
    let mut best = lower_idx;
    for i in lower_idx..=upper_idx {
        if evals[i].0 && evals[i].2 < evals[best].2 {
            best = i;
        }
    }
    Ok(ThresholdCv {
        c: grid[best],
        c_lower: grid[lower_idx],
        c_upper: grid[upper_idx],
        grid: grid.to_vec(),
        losses: evals.iter().map(|e| e.0.then_some(e.2)).collect(),
    })
}
