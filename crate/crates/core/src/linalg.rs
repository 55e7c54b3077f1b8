//! Thin wrappers over nalgebra for the small dense problems that show up
//! here: mass-matrix solves (n <= 7) and return-map eigenvalues (n <= 16).

use alloc::vec::Vec;
use nalgebra::{Complex, ComplexField, DMatrix, DVector};

/// Solve A x = b for a small square system. Returns None when A is singular
/// to working precision.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().lu().solve(b)
}

/// All eigenvalues of a small real matrix, complex pairs included.
pub fn eigenvalues(a: &DMatrix<f64>) -> Option<Vec<Complex<f64>>> {
    let schur = a.clone().try_schur(1e-12, 10_000)?;
    schur.complex_eigenvalues().iter().copied().collect::<Vec<_>>().into()
}

/// Largest eigenvalue magnitude.
pub fn spectral_radius(eigs: &[Complex<f64>]) -> f64 {
    eigs.iter().map(|e| e.modulus()).fold(0.0, f64::max)
}
