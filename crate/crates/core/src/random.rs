//! Random test data: matrices, quadruples and generator models with bounded entries.

use rand::Rng;

use crate::matrix::{c, ComplexMatrix};

/// Matrix with real and imaginary parts uniform in `[-scale, scale]`.
pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| c(rng.random_range(-scale..=scale), rng.random_range(-scale..=scale)))
}

/// Random Hermitian matrix with entries bounded by `scale`.
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, d: usize, scale: f64) -> ComplexMatrix {
    let a = random_matrix(rng, d, d, scale);
    (&a + a.adjoint()) * c(0.5, 0.0)
}

/// Random unit vector as a `d × 1` matrix.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> ComplexMatrix {
    loop {
        let v = random_matrix(rng, d, 1, 1.0);
        let n = v.norm();
        if n > 1e-3 {
            return v / c(n, 0.0);
        }
    }
}
