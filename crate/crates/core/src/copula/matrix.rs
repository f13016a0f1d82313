use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

pub const EIGEN_FLOOR: f64 = 1e-8;

/// Eigenvalue clipping at [`EIGEN_FLOOR`] followed by rescaling to unit
/// diagonal. Input is symmetrized first.
pub fn repair_correlation(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return m.clone();
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let clipped = eig.eigenvalues.map(|l| l.max(EIGEN_FLOOR));
    let r = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let d: Vec<f64> = (0..n).map(|i| r[(i, i)].sqrt()).collect();
    let mut out = DMatrix::from_fn(n, n, |i, j| r[(i, j)] / (d[i] * d[j]));
    for i in 0..n {
        out[(i, i)] = 1.0;
        for j in 0..i {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Checks symmetry, unit diagonal and positive semidefiniteness.
pub fn check_correlation(m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    for i in 0..n {
        if (m[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(Error::numerical(format!(
                "diagonal entry {i} is {}",
                m[(i, i)]
            )));
        }
        for j in 0..i {
            if m[(i, j)] != m[(j, i)] {
                return Err(Error::numerical(format!(
                    "matrix not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let lmin = min_eigenvalue(m);
    if lmin < -1e-10 {
        return Err(Error::numerical(format!(
            "minimum eigenvalue {lmin} is negative"
        )));
    }
    Ok(())
}

/// Lower-triangular factor `L` with `L Lᵀ = m`. Falls back to a symmetric
/// square root built from the eigen decomposition when Cholesky fails.
pub fn factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c.l());
    }
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.min() < -1e-10 || eig.eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(Error::numerical(format!(
            "cannot factor correlation matrix:\n{m}"
        )));
    }
    let s = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&s))
}

/// Contiguous principal submatrix over `range`.
pub fn restrict(m: &DMatrix<f64>, range: std::ops::Range<usize>) -> DMatrix<f64> {
    m.view((range.start, range.start), (range.len(), range.len()))
        .into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repair_fixes_indefinite_matrix() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        assert!(min_eigenvalue(&m) < 0.0);
        let r = repair_correlation(&m);
        check_correlation(&r).unwrap();
        let l = factor(&r).unwrap();
        assert!((&l * l.transpose() - &r).abs().max() < 1e-9);
    }

    #[test]
    fn repair_keeps_valid_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let r = repair_correlation(&m);
        assert!((r - m).abs().max() < 1e-12);
    }

    #[test]
    fn restriction_stays_psd() {
        let n = 6;
        let m = DMatrix::from_fn(n, n, |i, j| 0.7f64.powi((i as i32 - j as i32).abs()));
        for a in 0..n {
            check_correlation(&restrict(&m, a..n)).unwrap();
        }
    }
}
