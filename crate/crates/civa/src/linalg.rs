//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{CivaError, Result};

/// Orthonormalize the columns of a square matrix with a sign-fixed QR so
/// the result is a deterministic function of the input.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols().min(r.nrows()) {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Cholesky factor of a symmetric matrix, retrying with growing diagonal
/// loading when the plain factorization fails. Returns the factor and the
/// absolute ridge that was added (zero when none was needed).
pub fn cholesky_with_ridge(
    sigma: &DMatrix<f64>,
    ridge_rel: f64,
) -> Option<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(sigma.clone()) {
        return Some((c, 0.0));
    }
    let dim = sigma.nrows().max(1) as f64;
    let scale = (sigma.trace() / dim).abs().max(f64::MIN_POSITIVE);
    let mut ridge = ridge_rel.max(f64::EPSILON) * scale;
    for _ in 0..12 {
        let mut loaded = sigma.clone();
        for i in 0..loaded.nrows() {
            loaded[(i, i)] += ridge;
        }
        if let Some(c) = Cholesky::new(loaded) {
            return Some((c, ridge));
        }
        ridge *= 10.0;
    }
    None
}

/// `log det` of a matrix from its Cholesky factor.
pub fn cholesky_log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// `log |det m|` via LU. Errors on an exactly singular or non-finite result.
pub fn log_abs_det(m: &DMatrix<f64>) -> Result<f64> {
    let lu = m.clone().lu();
    let u = lu.u();
    let mut acc = 0.0;
    for i in 0..u.nrows() {
        let d = u[(i, i)].abs();
        if d == 0.0 || !d.is_finite() {
            return Err(CivaError::DegenerateDemixing("singular matrix".into()));
        }
        acc += d.ln();
    }
    Ok(acc)
}

/// 2-norm condition number.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// A factor `F` with `F Fᵀ = m` for a symmetric positive semidefinite `m`.
/// Cholesky when possible, otherwise the symmetric square root with
/// negative eigenvalues clamped to zero.
pub fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c.unpack());
    }
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.amax().max(1.0);
    if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale || !l.is_finite()) {
        return Err(CivaError::NumericalFailure(
            "matrix is not positive semidefinite".into(),
        ));
    }
    let sqrt = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    let mut f = eig.eigenvectors.clone();
    for (j, s) in sqrt.iter().enumerate() {
        f.column_mut(j).scale_mut(*s);
    }
    Ok(&f * eig.eigenvectors.transpose())
}

pub fn is_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn orthonormalize_gives_orthogonal_matrix() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
        let q = orthonormalize(&m);
        let qtq = q.transpose() * &q;
        assert_relative_eq!(qtq, DMatrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn ridge_only_when_needed() {
        let spd = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (_, ridge) = cholesky_with_ridge(&spd, 1e-9).unwrap();
        assert_eq!(ridge, 0.0);
        let singular = DMatrix::from_element(2, 2, 1.0);
        let (c, ridge) = cholesky_with_ridge(&singular, 1e-9).unwrap();
        assert!(ridge > 0.0);
        assert!(cholesky_log_det(&c).is_finite());
    }

    #[test]
    fn log_det_matches_determinant() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, -2.0, 4.0]);
        assert_relative_eq!(log_abs_det(&m).unwrap(), 14f64.ln(), epsilon = 1e-12);
        assert!(log_abs_det(&DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn psd_factor_handles_singular_input() {
        let m = DMatrix::from_element(3, 3, 1.0);
        let f = psd_factor(&m).unwrap();
        assert_relative_eq!(&f * f.transpose(), m, epsilon = 1e-10);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(psd_factor(&bad).is_err());
    }
}
