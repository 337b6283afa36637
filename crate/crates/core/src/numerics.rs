//! Dense matrix primitives: positive-diagonal QR, least squares, subspace
//! distance, spectral norm and symmetric eigenvalues.
//!
//! Everything here is a pure function over `nalgebra` dense matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Columns whose singular values fall below this fraction of the largest one
/// are treated as linearly dependent.
pub const RANK_TOL: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;

/// A `d x r` matrix with orthonormal columns.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthonormalBasis(Matrix);

impl OrthonormalBasis {
    /// Wraps `m` after checking `max |m^T m - I| <= tol`.
    pub fn try_new(m: Matrix, tol: f64) -> Result<Self> {
        let dev = orthonormality_defect(&m);
        if dev > tol {
            return Err(Error::DimensionMismatch {
                expected: format!("orthonormal columns (defect <= {tol:e})"),
                got: format!("defect {dev:e}"),
            });
        }
        Ok(Self(m))
    }

    /// Orthonormalizes an arbitrary full-rank matrix.
    pub fn from_span(m: &Matrix) -> Result<Self> {
        Ok(qr_positive(m)?.0)
    }

    /// `d x r` identity-like basis spanning the first `r` coordinate axes.
    pub fn canonical(d: usize, r: usize) -> Self {
        Self(Matrix::identity(d, r))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn rank(&self) -> usize {
        self.0.ncols()
    }
}

impl AsRef<Matrix> for OrthonormalBasis {
    fn as_ref(&self) -> &Matrix {
        &self.0
    }
}

/// `max |m^T m - I|` over all entries.
pub fn orthonormality_defect(m: &Matrix) -> f64 {
    let gram = m.transpose() * m;
    let k = gram.nrows();
    let mut worst = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Thin QR factorization `m = q r` with `diag(r) > 0`.
///
/// The sign convention makes the factorization unique, so two nodes holding
/// identical inputs always produce bitwise identical bases.
pub fn qr_positive(m: &Matrix) -> Result<(OrthonormalBasis, Matrix)> {
    let (rows, cols) = m.shape();
    if rows < cols || cols == 0 {
        return Err(Error::DimensionMismatch {
            expected: "tall matrix with rows >= cols >= 1".into(),
            got: format!("{rows}x{cols}"),
        });
    }
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();

    // Q has orthonormal columns, so the singular values of R are those of m.
    let sv = r.singular_values();
    let sigma_max = sv.max();
    let sigma_min = sv.min();
    if !(sigma_max > 0.0) || !(sigma_min > RANK_TOL * sigma_max) {
        return Err(Error::RankDeficient {
            sigma_min,
            sigma_max,
            context: format!("qr of {rows}x{cols}"),
        });
    }

    for i in 0..cols {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
            q.column_mut(i).neg_mut();
        }
    }
    Ok((OrthonormalBasis(q), r))
}

/// Solves `min_b |a b - y|` for a full-column-rank `a`.
pub fn least_squares(a: &Matrix, y: &Vector) -> Result<Vector> {
    if a.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("response of length {}", a.nrows()),
            got: format!("length {}", y.len()),
        });
    }
    let (q, r) = qr_positive(a)?;
    let qty = q.matrix().tr_mul(y);
    r.solve_upper_triangular(&qty).ok_or_else(|| Error::RankDeficient {
        sigma_min: 0.0,
        sigma_max: 0.0,
        context: "back substitution".into(),
    })
}

/// `SD(u1, u2) = |(I - u1 u1^T) u2|_2`.
pub fn subspace_distance(u1: &OrthonormalBasis, u2: &OrthonormalBasis) -> Result<f64> {
    subspace_distance_raw(u1.matrix(), u2.matrix())
}

pub(crate) fn subspace_distance_raw(u1: &Matrix, u2: &Matrix) -> Result<f64> {
    if u1.shape() != u2.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", u1.nrows(), u1.ncols()),
            got: format!("{}x{}", u2.nrows(), u2.ncols()),
        });
    }
    let residual = u2 - u1 * u1.tr_mul(u2);
    Ok(spectral_norm(&residual).min(1.0))
}

/// Largest singular value, via the largest eigenvalue of the smaller Gram
/// matrix.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = if m.nrows() >= m.ncols() {
        m.tr_mul(m)
    } else {
        m * m.transpose()
    };
    let top = SymmetricEigen::new(gram).eigenvalues.max();
    top.max(0.0).sqrt()
}

/// Eigenvalues of a symmetric matrix, in descending order.
pub fn symmetric_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: "square matrix".into(),
            got: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let mut values: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}
