//! Small complex linear-algebra helpers shared across modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{IsacError, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Draws an `rows x cols` matrix with i.i.d. CN(0,1) entries.
pub fn gaussian_cmat<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    // Column-major fill so the draw order is part of the determinism contract.
    let mut m = CMat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            m[(i, j)] = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
        }
    }
    m
}

/// Eigenvalues of a Hermitian matrix, sorted descending.
pub fn hermitian_eigvals(m: &CMat) -> Result<Vec<f64>> {
    check_hermitian(m, 1e-8)?;
    let sym = SymmetricEigen::new(m.clone());
    let mut vals: Vec<f64> = sym.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(vals)
}

/// Maximum absolute deviation from Hermitian symmetry.
pub fn hermitian_drift(m: &CMat) -> f64 {
    let d = m - m.adjoint();
    d.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn check_hermitian(m: &CMat, tol: f64) -> Result<()> {
    if !m.is_square() {
        return Err(IsacError::Dimension("hermitian check on non-square matrix".into()));
    }
    let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let drift = hermitian_drift(m);
    if drift > tol * scale {
        return Err(IsacError::Numeric(format!(
            "non-Hermitian drift {drift:.3e} exceeds tolerance {tol:.1e}"
        )));
    }
    Ok(())
}

/// Solves A x = b for Hermitian positive-definite A via Cholesky.
pub fn hpd_solve(a: &CMat, b: &CVec) -> Result<CVec> {
    let chol: Cholesky<Complex64, Dyn> = Cholesky::new(a.clone())
        .ok_or_else(|| IsacError::Numeric("Cholesky failed: matrix not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// Column-stacking vectorization.
pub fn vec_of(m: &CMat) -> CVec {
    CVec::from_iterator(m.nrows() * m.ncols(), m.iter().copied())
}

/// Haar-distributed unitary via QR of a Gaussian matrix with phase fixing.
pub fn haar_unitary<R: Rng>(n: usize, rng: &mut R) -> CMat {
    let g = gaussian_cmat(n, n, rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    // Fix the column phases so the factorization is unique.
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Max-abs entry of U^H U - I.
pub fn unitarity_defect(u: &CMat) -> f64 {
    let n = u.ncols();
    let g = u.adjoint() * u;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for n in [1, 3, 6] {
            let u = haar_unitary(n, &mut rng);
            assert!(unitarity_defect(&u) < 1e-10);
        }
    }

    #[test]
    fn hermitian_eigvals_of_identity() {
        let m = CMat::identity(4, 4);
        let vals = hermitian_eigvals(&m).unwrap();
        for v in vals {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hpd_solve_round_trip() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let g = gaussian_cmat(5, 5, &mut rng);
        let a = &g * g.adjoint() + CMat::identity(5, 5);
        let b = CVec::from_fn(5, |i, _| Complex64::new(i as f64 + 1.0, -0.5));
        let x = hpd_solve(&a, &b).unwrap();
        let r = &a * &x - &b;
        assert!(r.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-10);
    }

    #[test]
    fn gaussian_entries_have_unit_variance() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 100_000;
        let m = gaussian_cmat(n, 1, &mut rng);
        let var: f64 = m.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        assert!((var - 1.0).abs() < 0.02, "per-entry variance {var}");
    }
}
