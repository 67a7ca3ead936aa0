//! One-sided (Hestenes) Jacobi SVD for complex matrices.
//!
//! nalgebra 0.34/0.35 return wrong singular values for some exactly
//! rank-deficient inputs (the 9×9 all-ones matrix comes back with
//! σ₁ = 11.25), which is precisely the shape of exact-data Toeplitz
//! matrices here. Jacobi is slower but has no such failure mode and keeps
//! high relative accuracy in the small singular values.

use num_complex::Complex64;

use super::CMatrix;

const MAX_SWEEPS: usize = 80;

/// Thin SVD `A = U·diag(σ)·V*` with `σ` in descending order.
///
/// For an `m×n` input with `m ≥ n`, `U` is `m×n` and `V` is `n×n`. Columns of
/// `U` belonging to a zero singular value are left zero.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v: CMatrix,
}

fn col_dot(a: &CMatrix, p: usize, q: usize) -> Complex64 {
    a.column(p)
        .iter()
        .zip(a.column(q).iter())
        .map(|(x, y)| x.conj() * y)
        .sum()
}

fn rotate(a: &mut CMatrix, p: usize, q: usize, c: f64, s: f64, phase: Complex64) {
    for i in 0..a.nrows() {
        let ap = a[(i, p)];
        let aq = a[(i, q)] * phase;
        a[(i, p)] = ap * c - aq * s;
        a[(i, q)] = ap * s + aq * c;
    }
}

pub fn jacobi_svd(input: &CMatrix) -> Svd {
    let transposed = input.nrows() < input.ncols();
    let mut a = if transposed { input.adjoint() } else { input.clone() };
    let (m, n) = a.shape();
    let mut v = CMatrix::identity(n, n);
    let tol = f64::EPSILON * (m as f64);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = col_dot(&a, p, q);
                let g = gamma.norm();
                if g == 0.0 || g <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // make the pair's inner product real, then a real rotation
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s, phase);
                rotate(&mut v, p, q, c, s, phase);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let u = CMatrix::from_fn(m, n, |i, k| {
        let j = order[k];
        if norms[j] > 0.0 {
            a[(i, j)] / norms[j]
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let v = CMatrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    if transposed {
        Svd { u: v, sigma, v: u }
    } else {
        Svd { u, sigma, v }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(m: usize, n: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(m, n, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    fn rebuild(s: &Svd) -> CMatrix {
        let k = s.sigma.len();
        let d = CMatrix::from_diagonal(&DVector::from_iterator(
            k,
            s.sigma.iter().map(|&x| Complex64::new(x, 0.0)),
        ));
        &s.u * d * s.v.adjoint()
    }

    #[test]
    fn all_ones_every_size() {
        for n in 1..14 {
            let a = CMatrix::from_element(n, n, Complex64::new(1.0, 0.0));
            let s = jacobi_svd(&a);
            assert!((s.sigma[0] - n as f64).abs() < 1e-12, "n = {n}: {}", s.sigma[0]);
            assert!(s.sigma[1..].iter().all(|&x| x < 1e-12));
        }
    }

    #[test]
    fn random_factorization() {
        for (seed, (m, n)) in [(5, 5), (9, 4), (3, 7), (25, 25)].into_iter().enumerate() {
            let a = random(m, n, seed as u64);
            let s = jacobi_svd(&a);
            assert!((rebuild(&s) - &a).norm() <= 1e-12 * a.norm());
            let k = m.min(n);
            assert!((s.u.adjoint() * &s.u - CMatrix::identity(k, k)).norm() < 1e-12);
            assert!((s.v.adjoint() * &s.v - CMatrix::identity(k, k)).norm() < 1e-12);
            assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    /// Singular values of a Hermitian PSD matrix are its eigenvalues; here
    /// they are known because the matrix is built from them.
    #[test]
    fn prescribed_spectrum() {
        let q = jacobi_svd(&random(6, 6, 42)).u;
        let wanted = [5.0, 3.0, 1.0, 1e-4, 1e-9, 0.0];
        let d = CMatrix::from_diagonal(&DVector::from_iterator(
            6,
            wanted.iter().map(|&x| Complex64::new(x, 0.0)),
        ));
        let a = &q * d * q.adjoint();
        let s = jacobi_svd(&a);
        for (x, y) in s.sigma.iter().zip(wanted) {
            assert!((x - y).abs() < 1e-13, "{x} vs {y}");
        }
    }
}
