//! Dense eigendecomposition of general (non-normal) complex matrices.
//!
//! The complex Schur form `C = Q·R·Q*` comes from nalgebra; eigenvectors of
//! the upper-triangular factor are obtained by back substitution and mapped
//! back through `Q`.

use nalgebra::Schur;
use num_complex::Complex64;

use super::CMatrix;
use crate::error::{Error, Result};

const SCHUR_MAX_ITER: usize = 10_000;

/// Eigenvalues and unit-norm eigenvectors (columns of `vectors`), sorted by
/// real part and then imaginary part.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<Complex64>,
    pub vectors: CMatrix,
}

impl Eigen {
    /// `‖C·W − W·diag(λ)‖_F / ‖C‖_F`.
    pub fn relative_residual(&self, c: &CMatrix) -> f64 {
        let mut scaled = self.vectors.clone();
        for (j, lambda) in self.values.iter().enumerate() {
            for x in scaled.column_mut(j).iter_mut() {
                *x *= lambda;
            }
        }
        let resid = (c * &self.vectors - scaled).norm();
        let scale = c.norm();
        if scale == 0.0 {
            resid
        } else {
            resid / scale
        }
    }
}

pub fn eig_general(c: &CMatrix) -> Result<Eigen> {
    if !c.is_square() {
        return Err(Error::InvalidInput(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            c.nrows(),
            c.ncols()
        )));
    }
    if c.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigenFailure("matrix has non-finite entries".into()));
    }
    let m = c.nrows();
    if m == 0 {
        return Ok(Eigen {
            values: vec![],
            vectors: CMatrix::zeros(0, 0),
        });
    }
    let schur = Schur::try_new(c.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or_else(|| {
        Error::EigenFailure(format!(
            "Schur iteration did not converge within {SCHUR_MAX_ITER} sweeps ({m}x{m}, ‖C‖_F = {:e})",
            c.norm()
        ))
    })?;
    let (q, r) = schur.unpack();
    let values: Vec<Complex64> = (0..m).map(|i| r[(i, i)]).collect();

    // Perturb vanishing pivots so defective or clustered spectra still yield
    // finite vectors with a small residual.
    let small = (f64::EPSILON * r.norm()).max(f64::MIN_POSITIVE);
    let mut x = CMatrix::zeros(m, m);
    for k in 0..m {
        x[(k, k)] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in i + 1..=k {
                acc += r[(i, j)] * x[(j, k)];
            }
            let mut pivot = r[(i, i)] - values[k];
            if pivot.norm() < small {
                pivot = Complex64::new(small, 0.0);
            }
            x[(i, k)] = -acc / pivot;
        }
        let scale = x.column(k).norm();
        if !scale.is_finite() {
            return Err(Error::EigenFailure(format!(
                "eigenvector {k} overflowed during back substitution"
            )));
        }
        x.column_mut(k).unscale_mut(scale);
    }
    let mut w = q * x;
    for k in 0..m {
        let norm = w.column(k).norm();
        w.column_mut(k).unscale_mut(norm);
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .re
            .total_cmp(&values[b].re)
            .then(values[a].im.total_cmp(&values[b].im))
    });
    let sorted_values = order.iter().map(|&i| values[i]).collect();
    let sorted_vectors = CMatrix::from_fn(m, m, |i, j| w[(i, order[j])]);
    Ok(Eigen {
        values: sorted_values,
        vectors: sorted_vectors,
    })
}
