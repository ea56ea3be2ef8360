//! Small symmetric positive-definite helpers for `W^T W + δI`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

fn gram_plus_delta(w: &DenseMatrix, delta: f64) -> Result<DMatrix<f64>> {
    let g = w.matmul_tn(w)?;
    let r = w.cols();
    Ok(DMatrix::from_fn(r, r, |i, j| {
        g.get(i, j) + if i == j { delta } else { 0.0 }
    }))
}

fn cholesky(w: &DenseMatrix, delta: f64) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if !(delta > 0.0) {
        return Err(Error::Config(format!("delta must be positive, got {delta}")));
    }
    gram_plus_delta(w, delta)?
        .cholesky()
        .ok_or_else(|| Error::Numerical("W^T W + delta I is not positive definite".into()))
}

/// `log det(W^T W + δI)` from the Cholesky factor, never from a raw determinant.
pub fn logdet_gram(w: &DenseMatrix, delta: f64) -> Result<f64> {
    let chol = cholesky(w, delta)?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// `(W^T W + δI)^{-1}`, symmetrized.
pub fn inverse_gram(w: &DenseMatrix, delta: f64) -> Result<DenseMatrix> {
    let inv = cholesky(w, delta)?.inverse();
    let r = w.cols();
    Ok(DenseMatrix::from_fn(r, r, |i, j| 0.5 * (inv[(i, j)] + inv[(j, i)])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_columns() {
        let w = DenseMatrix::identity(3);
        let v = logdet_gram(&w, 0.1).unwrap();
        assert!((v - 3.0 * 1.1f64.ln()).abs() < 1e-14);
        let inv = inverse_gram(&w, 0.1).unwrap();
        assert!((inv.get(0, 0) - 1.0 / 1.1).abs() < 1e-14);
        assert_eq!(inv.get(0, 1), 0.0);
    }

    #[test]
    fn inverse_times_gram_is_identity() {
        let w = DenseMatrix::from_fn(6, 3, |i, j| ((i + 2 * j) % 5) as f64 * 0.3 + 0.1);
        let inv = inverse_gram(&w, 0.1).unwrap();
        let mut g = w.matmul_tn(&w).unwrap();
        for i in 0..3 {
            g.set(i, i, g.get(i, i) + 0.1);
        }
        let p = g.matmul(&inv).unwrap();
        assert!(p.max_abs_diff(&DenseMatrix::identity(3)).unwrap() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_delta() {
        assert!(logdet_gram(&DenseMatrix::identity(2), 0.0).is_err());
    }
}
