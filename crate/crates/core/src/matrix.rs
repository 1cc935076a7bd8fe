//! Dense complex linear algebra shared by the rest of the crate.
//!
//! Matrices are `nalgebra` dynamic matrices over `Complex<f64>`. Superoperators
//! act on column-stacked vectorizations, so the map `X ↦ A X B` is represented
//! by `Bᵀ ⊗ A`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Real scalar as a complex number.
#[inline]
pub fn r(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(d: usize) -> ComplexMatrix {
    ComplexMatrix::identity(d, d)
}

pub fn zeros(rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(rows, cols)
}

/// Build a matrix from real row-major data.
pub fn from_real_rows(rows: usize, cols: usize, data: &[f64]) -> ComplexMatrix {
    assert_eq!(data.len(), rows * cols);
    ComplexMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| r(x)))
}

/// Conjugate transpose.
pub fn adjoint(a: &ComplexMatrix) -> ComplexMatrix {
    a.adjoint()
}

pub fn frobenius(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn spectral_norm(a: &ComplexMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

pub fn is_finite(a: &ComplexMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn ensure_finite(a: &ComplexMatrix, what: &str) -> Result<()> {
    if is_finite(a) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub fn ensure_square(a: &ComplexMatrix, what: &str) -> Result<usize> {
    if a.nrows() == a.ncols() {
        Ok(a.nrows())
    } else {
        Err(Error::DimensionMismatch(format!("{what} must be square, got {}x{}", a.nrows(), a.ncols())))
    }
}

pub fn ensure_shape(a: &ComplexMatrix, rows: usize, cols: usize, what: &str) -> Result<()> {
    if a.nrows() == rows && a.ncols() == cols {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!("{what} must be {rows}x{cols}, got {}x{}", a.nrows(), a.ncols())))
    }
}

/// `(A + A†)/2`.
pub fn hermitian_part(a: &ComplexMatrix) -> ComplexMatrix {
    (a + a.adjoint()) * r(0.5)
}

/// Eigen-decomposition of the Hermitian part of `a`, eigenvalues ascending.
///
/// Columns of the returned matrix are the matching unit eigenvectors.
pub fn hermitian_eigen(a: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), zeros(0, 0));
    }
    let eig = SymmetricEigen::new(hermitian_part(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Smallest eigenvalue of `(A + A†)/2`, after checking that `A` is Hermitian
/// to within `herm_tol * max(1, ‖A‖_F)`.
pub fn min_eig_hermitian(a: &ComplexMatrix, herm_tol: f64) -> Result<f64> {
    ensure_square(a, "min_eig_hermitian argument")?;
    let residual = frobenius(&(a - a.adjoint()));
    let bound = herm_tol * frobenius(a).max(1.0);
    if residual > bound {
        return Err(Error::NotHermitian { residual, bound });
    }
    Ok(hermitian_eigen(a).0.first().copied().unwrap_or(0.0))
}

/// Matrix exponential (scaling and squaring with a degree-13 Padé approximant).
pub fn expm(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = ensure_square(a, "expm argument")?;
    if n == 0 {
        return Ok(zeros(0, 0));
    }
    if a.iter().all(|z| *z == ZERO) {
        return Ok(identity(n));
    }
    Ok(a.exp())
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Column-stacking vectorization, returned as an `(rows*cols) × 1` matrix.
pub fn vec(a: &ComplexMatrix) -> ComplexMatrix {
    // nalgebra storage is column-major, so the raw slice is already column-stacked.
    ComplexMatrix::from_column_slice(a.len(), 1, a.as_slice())
}

/// Inverse of [`vec`] for a `d × d` matrix.
pub fn unvec(v: &ComplexMatrix, d: usize) -> Result<ComplexMatrix> {
    if v.len() != d * d || (v.ncols() != 1 && v.nrows() != 1) {
        return Err(Error::DimensionMismatch(format!("cannot unvec {}x{} into {d}x{d}", v.nrows(), v.ncols())));
    }
    Ok(ComplexMatrix::from_column_slice(d, d, v.as_slice()))
}

/// Linear map on `d × d` matrices, stored as a `d² × d²` matrix acting on
/// column-stacked vectorizations.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperOperator {
    dim: usize,
    matrix: ComplexMatrix,
}

impl SuperOperator {
    pub fn new(dim: usize, matrix: ComplexMatrix) -> Result<Self> {
        ensure_shape(&matrix, dim * dim, dim * dim, "superoperator matrix")?;
        Ok(Self { dim, matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim, matrix: identity(dim * dim) }
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, matrix: zeros(dim * dim, dim * dim) }
    }

    /// Tabulate an arbitrary linear map on its matrix-unit basis.
    pub fn from_fn<F>(dim: usize, mut map: F) -> Self
    where
        F: FnMut(&ComplexMatrix) -> ComplexMatrix,
    {
        let mut matrix = zeros(dim * dim, dim * dim);
        for j in 0..dim {
            for i in 0..dim {
                let mut unit = zeros(dim, dim);
                unit[(i, j)] = ONE;
                let image = map(&unit);
                matrix.set_column(i + j * dim, &vec(&image).column(0));
            }
        }
        Self { dim, matrix }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn apply(&self, b: &ComplexMatrix) -> ComplexMatrix {
        let image = &self.matrix * vec(b);
        ComplexMatrix::from_column_slice(self.dim, self.dim, image.as_slice())
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &SuperOperator) -> SuperOperator {
        SuperOperator { dim: self.dim, matrix: &self.matrix * &other.matrix }
    }

    pub fn scale(&self, s: C64) -> SuperOperator {
        SuperOperator { dim: self.dim, matrix: &self.matrix * s }
    }

    pub fn add(&self, other: &SuperOperator) -> SuperOperator {
        SuperOperator { dim: self.dim, matrix: &self.matrix + &other.matrix }
    }

    /// Dual with respect to the trace pairing: `tr[S(B) ρ] = tr[B S'(ρ)]`.
    pub fn trace_dual(&self) -> SuperOperator {
        let p = transpose_permutation(self.dim);
        SuperOperator { dim: self.dim, matrix: &p * self.matrix.transpose() * &p }
    }

    /// Frobenius distance between the matrix representations.
    pub fn distance(&self, other: &SuperOperator) -> f64 {
        frobenius(&(&self.matrix - &other.matrix))
    }

    pub fn norm(&self) -> f64 {
        frobenius(&self.matrix)
    }
}

/// Permutation `P` with `P vec(X) = vec(Xᵀ)`.
fn transpose_permutation(d: usize) -> ComplexMatrix {
    let mut p = zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            // vec(X)[i + j d] = X_ij, vec(Xᵀ)[j + i d] = X_ij
            p[(j + i * d, i + j * d)] = ONE;
        }
    }
    p
}

/// Superoperator of `X ↦ A X`.
pub fn superop_left(a: &ComplexMatrix, d: usize) -> Result<SuperOperator> {
    ensure_shape(a, d, d, "superop_left operand")?;
    Ok(SuperOperator { dim: d, matrix: kron(&identity(d), a) })
}

/// Superoperator of `X ↦ X A`.
pub fn superop_right(a: &ComplexMatrix, d: usize) -> Result<SuperOperator> {
    ensure_shape(a, d, d, "superop_right operand")?;
    Ok(SuperOperator { dim: d, matrix: kron(&a.transpose(), &identity(d)) })
}

/// Superoperator of the sandwich `X ↦ A X B`.
pub fn superop_sandwich(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<SuperOperator> {
    let d = ensure_square(a, "sandwich left factor")?;
    ensure_shape(b, d, d, "sandwich right factor")?;
    Ok(SuperOperator { dim: d, matrix: kron(&b.transpose(), a) })
}

/// Trace distance `½‖A − B‖₁` between Hermitian matrices.
pub fn trace_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let (values, _) = hermitian_eigen(&(a - b));
    0.5 * values.iter().map(|v| v.abs()).sum::<f64>()
}

/// Orthonormal basis (as columns) of the null space of `a`, using a
/// singular-value cutoff relative to the largest singular value.
pub fn null_space(a: &ComplexMatrix, rel_cutoff: f64) -> ComplexMatrix {
    let n = a.ncols();
    if a.nrows() == 0 || a.iter().all(|z| *z == ZERO) {
        return identity(n);
    }
    // Row space of `a` = column space of a†, read off the left singular vectors.
    let svd = a.adjoint().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let mut projector = identity(n);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > rel_cutoff * smax {
            let col = u.column(k);
            projector -= col * col.adjoint();
        }
    }
    let (values, vectors) = hermitian_eigen(&projector);
    let keep: Vec<usize> = (0..n).filter(|&i| values[i] > 0.5).collect();
    let mut basis = zeros(n, keep.len());
    for (col, &i) in keep.iter().enumerate() {
        basis.set_column(col, &vectors.column(i));
    }
    basis
}

/// Serde adapters for the `[[[re, im], ...], ...]` matrix literal format.
pub mod literal {
    use super::{ComplexMatrix, ComplexVector, C64};
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &ComplexMatrix) -> Vec<Vec<[f64; 2]>> {
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<[f64; 2]>]) -> Result<ComplexMatrix, String> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != ncols) {
            return Err("ragged matrix literal".to_string());
        }
        let m = ComplexMatrix::from_fn(nrows, ncols, |i, j| C64::new(rows[i][j][0], rows[i][j][1]));
        if !super::is_finite(&m) {
            return Err("non-finite matrix entry".to_string());
        }
        Ok(m)
    }

    pub fn serialize<S: Serializer>(m: &ComplexMatrix, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ComplexMatrix, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }

    /// `Vec<ComplexMatrix>` as a list of matrix literals.
    pub mod list {
        use super::*;

        pub fn serialize<S: Serializer>(ms: &[ComplexMatrix], s: S) -> Result<S::Ok, S::Error> {
            ms.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<ComplexMatrix>, D::Error> {
            let raw = Vec::<Vec<Vec<[f64; 2]>>>::deserialize(d)?;
            raw.iter().map(|m| from_rows(m).map_err(D::Error::custom)).collect()
        }
    }

    /// A complex vector as a flat list of `[re, im]` pairs.
    pub mod vector {
        use super::*;

        pub fn serialize<S: Serializer>(v: &ComplexVector, s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ComplexVector, D::Error> {
            let raw = Vec::<[f64; 2]>::deserialize(d)?;
            if raw.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
                return Err(D::Error::custom("non-finite vector entry"));
            }
            Ok(ComplexVector::from_iterator(raw.len(), raw.iter().map(|p| C64::new(p[0], p[1]))))
        }
    }

    /// A complex scalar as `[re, im]`.
    pub mod scalar {
        use super::*;

        pub fn serialize<S: Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
            [z.re, z.im].serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
            let p = <[f64; 2]>::deserialize(d)?;
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(D::Error::custom("non-finite scalar"));
            }
            Ok(C64::new(p[0], p[1]))
        }
    }
}
