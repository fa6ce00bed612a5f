//! Solver for the factor-based distributionally robust mean-variance
//! program
//!
//! ```text
//! minimize    (sqrt(w' B S_F B' w) + sqrt(delta) ||B'w||)^2 + w' S_e w
//! subject to  1'w = 1,   w' B mu_f >= rho + sqrt(delta) ||B'w||
//! ```
//!
//! and of its full-dimensional special case (`B = I`, `S_e = 0`).
//!
//! The problem is lifted to `(w, sigma, tau)` with the cone constraints
//! `sigma >= ||G'w||` (`G G' = B S_F B'`) and `tau >= ||B'w||`, and solved by
//! a primal log-barrier method with equality-constrained Newton steps.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{check_finite_matrix, check_finite_vector, min_eigenvalue, ones, psd_factor};
use crate::uncertainty::{analyze_feasibility, gmv_weights, GBar, Witness};

/// Smoothing constant for the Euclidean norms in [`objective_gradient`] and
/// [`kkt_residual`].
pub const NORM_SMOOTHING: f64 = 1e-10;
pub const DEFAULT_TOL: f64 = 1e-8;
/// Smallest effective tolerance. Tighter requests are clamped: past this
/// point the barrier Hessian is too ill-conditioned for further progress.
pub const MIN_TOL: f64 = 1e-9;
const MAX_CENTERING_STEPS: usize = 200;
pub const DEFAULT_MAX_ITER: usize = 50_000;

/// One instance of the robust allocation problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroProblem {
    /// `p x K`.
    pub loadings: DMatrix<f64>,
    /// `K x K`, positive semidefinite.
    pub factor_cov: DMatrix<f64>,
    pub factor_mean: DVector<f64>,
    /// `p x p`, positive semidefinite.
    pub residual_cov: DMatrix<f64>,
    pub delta: f64,
    pub rho: f64,
}

fn check_psd(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    let asym = (m - m.transpose()).abs().max();
    let scale = m.abs().max().max(f64::MIN_POSITIVE);
    if asym > 1e-10 * scale {
        return Err(Error::InvalidArgument(format!("{context} is not symmetric")));
    }
    if m.nrows() == 0 {
        return Ok(());
    }
    let min = min_eigenvalue(m)?;
    if min < -1e-10 * scale.max(1.0) {
        return Err(Error::NotPositiveSemidefinite {
            context,
            min_eigenvalue: min,
        });
    }
    Ok(())
}

impl DroProblem {
    pub fn new(
        loadings: DMatrix<f64>,
        factor_cov: DMatrix<f64>,
        factor_mean: DVector<f64>,
        residual_cov: DMatrix<f64>,
        delta: f64,
        rho: f64,
    ) -> Result<Self> {
        let problem = Self {
            loadings,
            factor_cov,
            factor_mean,
            residual_cov,
            delta,
            rho,
        };
        problem.validate()?;
        Ok(problem)
    }

    /// The full-dimensional problem on returns: identity loadings and no
    /// residual term.
    pub fn full_dimensional(mean: DVector<f64>, cov: DMatrix<f64>, delta: f64, rho: f64) -> Result<Self> {
        let p = mean.len();
        Self::new(DMatrix::identity(p, p), cov, mean, DMatrix::zeros(p, p), delta, rho)
    }

    pub fn n_assets(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (p, k) = self.loadings.shape();
        if p == 0 {
            return Err(Error::InvalidArgument("problem has no assets".into()));
        }
        if self.factor_cov.shape() != (k, k) {
            return Err(Error::dims("factor covariance", format!("{k}x{k}"), format!("{:?}", self.factor_cov.shape())));
        }
        if self.factor_mean.len() != k {
            return Err(Error::dims("factor mean", k, self.factor_mean.len()));
        }
        if self.residual_cov.shape() != (p, p) {
            return Err(Error::dims("residual covariance", format!("{p}x{p}"), format!("{:?}", self.residual_cov.shape())));
        }
        check_finite_matrix(&self.loadings, "loadings")?;
        check_finite_matrix(&self.factor_cov, "factor covariance")?;
        check_finite_vector(&self.factor_mean, "factor mean")?;
        check_finite_matrix(&self.residual_cov, "residual covariance")?;
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta must be finite and >= 0, got {}", self.delta)));
        }
        if !self.rho.is_finite() {
            return Err(Error::NonFinite("rho"));
        }
        check_psd(&self.factor_cov, "factor covariance")?;
        check_psd(&self.residual_cov, "residual covariance")?;
        Ok(())
    }

    /// `B mu_f`.
    pub fn asset_mean(&self) -> DVector<f64> {
        &self.loadings * &self.factor_mean
    }

    /// `B S_F B' + S_e`.
    pub fn return_cov(&self) -> DMatrix<f64> {
        &self.loadings * &self.factor_cov * self.loadings.transpose() + &self.residual_cov
    }

    fn sqrt_delta(&self) -> f64 {
        self.delta.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

/// Solver output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortfolioWeights {
    /// `None` when the problem is infeasible.
    pub weights: Option<DVector<f64>>,
    pub objective: f64,
    /// `1'w - 1`.
    pub budget_residual: f64,
    /// `w' B mu_f - rho - sqrt(delta) ||B'w||`.
    pub return_slack: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub g_bar: GBar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub g_bar: GBar,
}

/// Whether the robust feasible region is nonempty, i.e. `rho <= G_bar`.
pub fn check_feasibility(problem: &DroProblem) -> Result<Feasibility> {
    problem.validate()?;
    let an = analyze_feasibility(&problem.asset_mean(), &problem.loadings, problem.sqrt_delta())?;
    Ok(Feasibility {
        feasible: an.g_bar.admits(problem.rho),
        g_bar: an.g_bar,
    })
}

/// Objective value at `w` (no smoothing).
pub fn objective(problem: &DroProblem, w: &DVector<f64>) -> f64 {
    let bw = problem.loadings.transpose() * w;
    let sys = bw.dot(&(&problem.factor_cov * &bw)).max(0.0).sqrt();
    let pen = problem.sqrt_delta() * bw.norm();
    (sys + pen).powi(2) + w.dot(&(&problem.residual_cov * w))
}

/// Gradient of the objective with each norm replaced by
/// `sqrt(||x||^2 + eps^2)`, `eps =` [`NORM_SMOOTHING`].
pub fn objective_gradient(problem: &DroProblem, w: &DVector<f64>) -> DVector<f64> {
    let eps2 = NORM_SMOOTHING * NORM_SMOOTHING;
    let b = &problem.loadings;
    let bw = b.transpose() * w;
    let fbw = &problem.factor_cov * &bw;
    let a = (bw.dot(&fbw).max(0.0) + eps2).sqrt();
    let nb = (bw.norm_squared() + eps2).sqrt();
    let s = problem.sqrt_delta();
    let inner = fbw / a + &bw * (s / nb);
    b * inner * (2.0 * (a + s * nb)) + &problem.residual_cov * w * 2.0
}

/// Return-constraint function `rho + sqrt(delta) ||B'w|| - w' B mu_f`
/// (feasible when `<= 0`) and its smoothed gradient.
fn return_constraint(problem: &DroProblem, w: &DVector<f64>) -> (f64, DVector<f64>) {
    let eps2 = NORM_SMOOTHING * NORM_SMOOTHING;
    let b = &problem.loadings;
    let bw = b.transpose() * w;
    let mu = problem.asset_mean();
    let s = problem.sqrt_delta();
    let value = problem.rho + s * bw.norm() - mu.dot(w);
    let nb = (bw.norm_squared() + eps2).sqrt();
    let grad = b * bw * (s / nb) - mu;
    (value, grad)
}

fn return_slack(problem: &DroProblem, w: &DVector<f64>) -> f64 {
    -return_constraint(problem, w).0
}

/// Stationarity and complementarity residual at `w`, with the budget
/// multiplier and the nonnegative return-constraint multiplier fitted by
/// least squares. Zero at an optimum.
pub fn kkt_residual(problem: &DroProblem, w: &DVector<f64>) -> f64 {
    let grad = objective_gradient(problem, w);
    let (g, dg) = return_constraint(problem, w);
    let one = ones(w.len());
    let eval = |nu: f64, lambda: f64| -> f64 {
        let r = &grad + &one * nu + &dg * lambda;
        (r.norm_squared() + (lambda * g).powi(2) + g.max(0.0).powi(2)).sqrt()
    };
    // Boundary candidate lambda = 0.
    let nu0 = -grad.sum() / w.len() as f64;
    let mut best = eval(nu0, 0.0);
    // Interior candidate from the 2x2 normal equations of
    // min ||grad + nu 1 + lambda dg||^2 + (lambda g)^2.
    let a11 = one.dot(&one);
    let a12 = one.dot(&dg);
    let a22 = dg.dot(&dg) + g * g;
    let b1 = -one.dot(&grad);
    let b2 = -dg.dot(&grad);
    let det = a11 * a22 - a12 * a12;
    if det.abs() > 1e-300 {
        let nu = (a22 * b1 - a12 * b2) / det;
        let lambda = (a11 * b2 - a12 * b1) / det;
        if lambda >= 0.0 {
            best = best.min(eval(nu, lambda));
        }
    }
    best
}

/// Lifted barrier problem.
struct Barrier<'a> {
    problem: &'a DroProblem,
    s: f64,
    rho: f64,
    mu: DVector<f64>,
    g: DMatrix<f64>,
    ggt: DMatrix<f64>,
    bbt: DMatrix<f64>,
    has_tau: bool,
    fscale: f64,
}

struct Parts {
    d1: f64,
    gu: DVector<f64>,
    d2: f64,
    bu: DVector<f64>,
    c3: f64,
}

impl<'a> Barrier<'a> {
    fn new(problem: &'a DroProblem, rho: f64) -> Result<Self> {
        let s = problem.sqrt_delta();
        let lf = psd_factor(&problem.factor_cov)?;
        let g = &problem.loadings * lf;
        let ggt = &g * g.transpose();
        let bbt = &problem.loadings * problem.loadings.transpose();
        Ok(Self {
            problem,
            s,
            rho,
            mu: problem.asset_mean(),
            g,
            ggt,
            bbt,
            has_tau: s > 0.0,
            fscale: 1.0,
        })
    }

    fn p(&self) -> usize {
        self.mu.len()
    }

    fn n(&self) -> usize {
        self.p() + 1 + usize::from(self.has_tau)
    }

    fn tau(&self, x: &DVector<f64>) -> f64 {
        if self.has_tau {
            x[self.p() + 1]
        } else {
            0.0
        }
    }

    fn lifted_objective(&self, x: &DVector<f64>) -> f64 {
        let p = self.p();
        let w = x.rows(0, p);
        let sum = x[p] + self.s * self.tau(x);
        sum * sum + w.dot(&(&self.problem.residual_cov * w))
    }

    /// Slack quantities, or `None` outside the barrier domain.
    fn parts(&self, x: &DVector<f64>) -> Option<Parts> {
        let p = self.p();
        let w = x.rows(0, p);
        let sigma = x[p];
        let u = self.g.transpose() * w;
        let nu = u.norm();
        if !(sigma > nu) {
            return None;
        }
        let d1 = (sigma - nu) * (sigma + nu);
        let (d2, bu) = if self.has_tau {
            let tau = x[p + 1];
            let v = self.problem.loadings.transpose() * w;
            let nv = v.norm();
            if !(tau > nv) {
                return None;
            }
            (((tau - nv) * (tau + nv)), &self.problem.loadings * v)
        } else {
            (1.0, DVector::zeros(p))
        };
        let c3 = self.mu.dot(&w) - self.s * self.tau(x) - self.rho;
        if !(c3 > 0.0 && d1 > 0.0 && d2 > 0.0) {
            return None;
        }
        Some(Parts {
            d1,
            gu: &self.g * u,
            d2,
            bu,
            c3,
        })
    }

    fn value(&self, x: &DVector<f64>, t: f64) -> Option<f64> {
        let parts = self.parts(x)?;
        let mut phi = -parts.d1.ln() - parts.c3.ln();
        if self.has_tau {
            phi -= parts.d2.ln();
        }
        Some(t * self.lifted_objective(x) / self.fscale + phi)
    }

    fn barrier_param(&self) -> f64 {
        if self.has_tau {
            5.0
        } else {
            3.0
        }
    }

    fn grad_hess(&self, x: &DVector<f64>, t: f64, parts: &Parts) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.p();
        let n = self.n();
        let ts = t / self.fscale;
        let w = x.rows(0, p);
        let sigma = x[p];
        let tau = self.tau(x);
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);

        // Objective.
        let se = &self.problem.residual_cov;
        let sum = sigma + self.s * tau;
        grad.rows_mut(0, p).copy_from(&(se * w * (2.0 * ts)));
        grad[p] = 2.0 * ts * sum;
        hess.view_mut((0, 0), (p, p)).copy_from(&(se * (2.0 * ts)));
        hess[(p, p)] += 2.0 * ts;
        if self.has_tau {
            grad[p + 1] = 2.0 * ts * self.s * sum;
            hess[(p, p + 1)] += 2.0 * ts * self.s;
            hess[(p + 1, p)] += 2.0 * ts * self.s;
            hess[(p + 1, p + 1)] += 2.0 * ts * self.s * self.s;
        }

        // Cone barriers -ln(z^2 - ||M'w||^2) for (z, M) = (sigma, G) and (tau, B).
        let mut cone = |idx: usize, z: f64, d: f64, mu_vec: &DVector<f64>, mmt: &DMatrix<f64>| {
            let uu = z * z - d;
            grad.rows_mut(0, p).axpy(2.0 / d, mu_vec, 1.0);
            grad[idx] -= 2.0 * z / d;
            let mut hw = hess.view_mut((0, 0), (p, p));
            hw += mmt * (2.0 / d);
            hw.ger(4.0 / (d * d), mu_vec, mu_vec, 1.0);
            let cross = mu_vec * (-4.0 * z / (d * d));
            for i in 0..p {
                hess[(i, idx)] += cross[i];
                hess[(idx, i)] += cross[i];
            }
            hess[(idx, idx)] += (2.0 * z * z + 2.0 * uu) / (d * d);
        };
        cone(p, sigma, parts.d1, &parts.gu, &self.ggt);
        if self.has_tau {
            cone(p + 1, tau, parts.d2, &parts.bu, &self.bbt);
        }

        // Linear barrier -ln(mu'w - s tau - rho).
        let mut a = DVector::zeros(n);
        a.rows_mut(0, p).copy_from(&self.mu);
        if self.has_tau {
            a[p + 1] = -self.s;
        }
        grad.axpy(-1.0 / parts.c3, &a, 1.0);
        hess.ger(1.0 / (parts.c3 * parts.c3), &a, &a, 1.0);
        (grad, hess)
    }
}

/// Builds a strictly feasible lifted starting point.
fn initial_point(bar: &Barrier<'_>, w: &DVector<f64>, margin: f64) -> DVector<f64> {
    let p = bar.p();
    let u = bar.g.transpose() * w;
    let v = bar.problem.loadings.transpose() * w;
    let scale = u.norm() + bar.s * v.norm() + w.dot(&(&bar.problem.residual_cov * w)).max(0.0).sqrt();
    let mut x = DVector::zeros(bar.n());
    x.rows_mut(0, p).copy_from(w);
    x[p] = u.norm() + 0.1 * scale + 1e-12;
    if bar.has_tau {
        // Leaves half of the return margin for the linear constraint.
        x[p + 1] = v.norm() + margin / (2.0 * bar.s);
    }
    x
}

fn robust_margin(bar: &Barrier<'_>, w: &DVector<f64>) -> f64 {
    bar.mu.dot(w) - bar.s * (bar.problem.loadings.transpose() * w).norm() - bar.rho
}

/// Solves the robust allocation problem.
///
/// Feasibility is checked first; an empty region returns
/// [`SolveStatus::Infeasible`] without iterating. `tol` bounds the relative
/// duality gap of the barrier path (clamped below at [`MIN_TOL`]) and
/// `max_iter` the total number of Newton steps.
pub fn solve_hd_dro(problem: &DroProblem, tol: f64, max_iter: usize) -> Result<PortfolioWeights> {
    problem.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let tol = tol.max(MIN_TOL);
    let p = problem.n_assets();
    let s = problem.sqrt_delta();
    let analysis = analyze_feasibility(&problem.asset_mean(), &problem.loadings, s)?;
    let g_bar = analysis.g_bar;
    if !g_bar.admits(problem.rho) {
        return Ok(PortfolioWeights {
            weights: None,
            objective: f64::NAN,
            budget_residual: f64::NAN,
            return_slack: f64::NAN,
            status: SolveStatus::Infeasible,
            iterations: 0,
            g_bar,
        });
    }

    // Keep a sliver of interior when rho sits on the boundary.
    let mut rho = problem.rho;
    if let GBar::Finite(g) = g_bar {
        let eta = 1e-10 * g.abs().max(1.0);
        if rho > g - eta {
            rho = g - eta;
        }
    }
    let mut bar = Barrier::new(problem, rho)?;

    // Strictly feasible reference point from the feasibility witness.
    let w_ref = match &analysis.witness {
        Witness::Maximizer(w) => w.clone(),
        Witness::Ray { base, direction, rate } => {
            let base_margin = robust_margin(&bar, base);
            let want = rho.abs().max(bar.mu.amax()).max(1e-12);
            let step = ((want - base_margin) / rate).max(0.0);
            base + direction * step
        }
    };
    let ref_margin = robust_margin(&bar, &w_ref);
    if !(ref_margin > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "could not construct a strictly feasible start (margin {ref_margin:e})"
        )));
    }
    // Prefer a more central start when one is available.
    let mut candidates = Vec::new();
    if let Ok(gmv) = gmv_weights(&problem.return_cov()) {
        for theta in [0.0, 0.5, 0.9] {
            candidates.push(&gmv * (1.0 - theta) + &w_ref * theta);
        }
    }
    candidates.push(w_ref.clone());
    let w0 = candidates
        .into_iter()
        .find(|w| robust_margin(&bar, w) >= 0.25 * ref_margin)
        .unwrap_or(w_ref);
    let margin = robust_margin(&bar, &w0);
    let mut x = initial_point(&bar, &w0, margin);
    bar.fscale = bar.lifted_objective(&x).max(f64::MIN_POSITIVE);

    let nu_param = bar.barrier_param();
    let n = bar.n();
    let mut t = nu_param;
    let mut iterations = 0usize;
    let mut converged = false;
    'outer: loop {
        // Centering by damped Newton steps. Near the precision floor the
        // decrement can stall above its threshold, hence the step cap.
        for _ in 0..MAX_CENTERING_STEPS {
            if iterations >= max_iter {
                break 'outer;
            }
            let Some(parts) = bar.parts(&x) else { break 'outer };
            let (grad, mut hess) = bar.grad_hess(&x, t, &parts);
            let reg = 1e-14 * hess.diagonal().amax().max(1.0);
            for i in 0..n {
                hess[(i, i)] += reg;
            }
            let mut kkt = DMatrix::zeros(n + 1, n + 1);
            kkt.view_mut((0, 0), (n, n)).copy_from(&hess);
            for i in 0..p {
                kkt[(i, n)] = 1.0;
                kkt[(n, i)] = 1.0;
            }
            let mut rhs = DVector::zeros(n + 1);
            rhs.rows_mut(0, n).copy_from(&(-&grad));
            rhs[n] = 1.0 - x.rows(0, p).sum();
            let Some(sol) = kkt.lu().solve(&rhs) else { break 'outer };
            let dx = sol.rows(0, n).into_owned();
            iterations += 1;
            let decrement = dx.dot(&(&hess * &dx));
            if !decrement.is_finite() {
                break 'outer;
            }
            let f0 = bar.value(&x, t).unwrap_or(f64::INFINITY);
            let slope = grad.dot(&dx);
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-14 {
                let cand = &x + &dx * alpha;
                if let Some(fv) = bar.value(&cand, t) {
                    if decrement < 1e-6 || fv <= f0 + 0.25 * alpha * slope {
                        x = cand;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted || decrement / 2.0 <= 1e-11 {
                break;
            }
        }
        let fnow = bar.lifted_objective(&x) / bar.fscale;
        if nu_param / t <= tol * fnow.max(1e-8) {
            converged = true;
            break;
        }
        t *= 10.0;
    }

    let mut w = x.rows(0, p).into_owned();
    let drift = 1.0 - w.sum();
    w.add_scalar_mut(drift / p as f64);
    let slack = return_slack(problem, &w);
    let budget_residual = w.sum() - 1.0;
    let status = if converged && budget_residual.abs() <= 1e-8 && slack >= -1e-8 {
        SolveStatus::Optimal
    } else {
        SolveStatus::MaxIter
    };
    Ok(PortfolioWeights {
        objective: objective(problem, &w),
        budget_residual,
        return_slack: slack,
        weights: Some(w),
        status,
        iterations,
        g_bar,
    })
}

/// Full-dimensional robust problem on the return mean and covariance.
pub fn solve_bcz_dro(
    mean: &DVector<f64>,
    second_moment_cov: &DMatrix<f64>,
    delta: f64,
    rho: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PortfolioWeights> {
    let problem = DroProblem::full_dimensional(mean.clone(), second_moment_cov.clone(), delta, rho)?;
    solve_hd_dro(&problem, tol, max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal(g: &mut impl Rng) -> f64 {
        StandardNormal.sample(g)
    }

    fn random_problem(p: usize, k: usize, delta: f64, seed: u64) -> DroProblem {
        let mut g = rng::stream(seed, 0);
        let b = DMatrix::from_fn(p, k, |_, _| normal(&mut g));
        let a = DMatrix::from_fn(k, k, |_, _| normal(&mut g));
        let factor_cov = &a * a.transpose() / k as f64 + DMatrix::identity(k, k) * 0.1;
        let factor_mean = DVector::from_fn(k, |_, _| 0.3 * normal(&mut g));
        let e = DMatrix::from_fn(p, p, |_, _| 0.3 * normal(&mut g));
        let residual_cov = &e * e.transpose() / p as f64 + DMatrix::identity(p, p) * 0.05;
        DroProblem::new(b, factor_cov, factor_mean, residual_cov, delta, 0.0).unwrap()
    }

    fn with_feasible_rho(mut problem: DroProblem, offset: f64) -> DroProblem {
        let f = check_feasibility(&problem).unwrap();
        problem.rho = match f.g_bar {
            GBar::Finite(g) => g - offset,
            GBar::Unbounded => {
                let w = DVector::from_element(problem.n_assets(), 1.0 / problem.n_assets() as f64);
                -return_constraint(&DroProblem { rho: 0.0, ..problem.clone() }, &w).0 - offset
            }
        };
        problem
    }

    #[test]
    fn zero_delta_with_slack_return_is_minimum_variance() {
        let mut problem = random_problem(6, 2, 0.0, 1);
        problem.rho = -1e3;
        let out = solve_hd_dro(&problem, 1e-10, 5000).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        let gmv = gmv_weights(&problem.return_cov()).unwrap();
        let w = out.weights.unwrap();
        assert!((&w - &gmv).amax() < 1e-6, "{w} vs {gmv}");
    }

    #[test]
    fn large_delta_gives_equal_weights() {
        let mut g = rng::stream(5, 0);
        let p = 5;
        let mean = DVector::from_fn(p, |_, _| 0.01 + 0.01 * normal(&mut g));
        let a = DMatrix::from_fn(p, p, |_, _| 0.1 * normal(&mut g));
        let cov = &a * a.transpose() + DMatrix::identity(p, p) * 0.01;
        let out = solve_bcz_dro(&mean, &cov, 1e6, -1e4, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        let w = out.weights.unwrap();
        assert!(w.iter().all(|x| (x - 0.2).abs() <= 1e-3), "{w}");
    }

    #[test]
    fn scalar_example_is_infeasible() {
        let out = solve_bcz_dro(
            &DVector::from_element(1, 0.05),
            &DMatrix::from_element(1, 1, 0.04),
            0.01,
            0.01,
            DEFAULT_TOL,
            DEFAULT_MAX_ITER,
        )
        .unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
        assert!(out.weights.is_none());
    }

    #[test]
    fn converged_solution_has_small_kkt_residual() {
        for seed in 0..10 {
            let problem = with_feasible_rho(random_problem(8, 2, 0.05, seed), 0.05);
            let out = solve_hd_dro(&problem, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            assert_eq!(out.status, SolveStatus::Optimal, "seed {seed}: {out:?}");
            let w = out.weights.unwrap();
            let r = kkt_residual(&problem, &w);
            assert!(r <= 10.0 * DEFAULT_TOL, "seed {seed}: residual {r}");
            let ew = DVector::from_element(8, 1.0 / 8.0);
            assert!(kkt_residual(&problem, &ew) > r);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let problem = random_problem(5, 2, 0.1, 3);
        let mut g = rng::stream(9, 0);
        for _ in 0..20 {
            let w = DVector::from_fn(5, |_, _| normal(&mut g));
            let grad = objective_gradient(&problem, &w);
            let h = 1e-6;
            for i in 0..5 {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[i] += h;
                wm[i] -= h;
                let fd = (objective(&problem, &wp) - objective(&problem, &wm)) / (2.0 * h);
                assert!((fd - grad[i]).abs() <= 1e-5 * grad[i].abs().max(1.0), "{fd} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn boundary_rho_is_solved() {
        let problem = with_feasible_rho(random_problem(4, 1, 0.5, 11), 0.0);
        let out = solve_hd_dro(&problem, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_ne!(out.status, SolveStatus::Infeasible);
        assert!(out.return_slack >= -1e-8);
    }
}
