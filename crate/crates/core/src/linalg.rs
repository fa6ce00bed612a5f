//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetric eigen-decomposition with eigenvalues sorted in descending
/// order; eigenvectors are the matching columns.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric eigen-solver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// `(m + m') / 2`, exactly symmetric.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = m.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite()) && m.clone().cholesky().is_some()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    let (values, _) = sym_eigen_desc(m)?;
    Ok(values.iter().copied().fold(f64::INFINITY, f64::min))
}

/// A factor `L` (n x r) with `L L' = m` for a symmetric PSD `m`, built from
/// the eigen-decomposition with negative eigenvalues clipped to zero.
/// Columns with zero eigenvalue are dropped.
pub fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (values, vectors) = sym_eigen_desc(m)?;
    let scale = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let keep: Vec<usize> = (0..values.len())
        .filter(|&i| values[i] > scale * 1e-15 && values[i] > 0.0)
        .collect();
    let mut l = DMatrix::zeros(m.nrows(), keep.len());
    for (dst, &i) in keep.iter().enumerate() {
        l.set_column(dst, &(vectors.column(i) * values[i].sqrt()));
    }
    Ok(l)
}

/// Cholesky-based solve for a symmetric positive definite system with
/// several right-hand sides.
pub fn spd_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite(context))?;
    Ok(chol.solve(rhs))
}

pub fn ones(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0)
}

pub fn check_finite_matrix(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn check_finite_vector(v: &DVector<f64>, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Max-abs entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_is_sorted_descending() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 1.0]);
        let (vals, vecs) = sym_eigen_desc(&m).unwrap();
        assert_eq!(vals.as_slice(), &[5.0, 2.0, 1.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn psd_factor_reconstructs() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0]);
        let m = &a * a.transpose();
        let l = psd_factor(&m).unwrap();
        assert_eq!(l.ncols(), 2);
        assert!((&l * l.transpose() - &m).abs().max() < 1e-12);
    }

    #[test]
    fn symmetrize_is_exact() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1 + 0.2, 0.3, 4.0]);
        let s = symmetrize(&m);
        assert_eq!(s[(0, 1)], s[(1, 0)]);
    }
}
