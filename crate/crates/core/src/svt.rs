//! Singular-value hard thresholding `Γ_r`: projection onto matrices of rank ≤ r.

use faer::linalg::matmul::triangular::{self, BlockStructure};
use faer::{Accum, Conj, Mat, MatRef, Par, Side};

use crate::error::{Error, Result};
use crate::unfold::Matrix;
use crate::C64;

/// How the dominant singular subspace is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SvdRoute {
    /// Thin SVD of the matrix itself.
    #[default]
    Thin,
    /// Eigendecomposition of the Gram matrix on the short side (`AAᴴ` or
    /// `AᴴA`), then projection of `A` onto the top-`r` eigenvectors. Gives the
    /// same projection as [`SvdRoute::Thin`] but is several times faster for
    /// the strongly rectangular unfoldings used in reconstruction.
    Gram,
}

pub(crate) fn to_faer(m: &Matrix) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

pub(crate) fn from_faer(m: MatRef<'_, C64>) -> Matrix {
    Matrix::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Best rank-≤`r` approximation of `m` (Eckart–Young), via a thin SVD.
pub fn svt(m: &Matrix, r: usize) -> Result<Matrix> {
    svt_with(m, r, SvdRoute::Thin)
}

pub fn svt_with(m: &Matrix, r: usize, route: SvdRoute) -> Result<Matrix> {
    if r == 0 {
        return Err(Error::Config("rank threshold must be >= 1".into()));
    }
    let (rows, cols) = m.dim();
    if r >= rows.min(cols) {
        return Ok(m.clone());
    }
    let a = to_faer(m);
    let x = match route {
        SvdRoute::Thin => thin_projection(&a, r)?,
        SvdRoute::Gram => gram_projection(&a, r)?,
    };
    Ok(from_faer(x.as_ref()))
}

/// [`svt_with`] that also returns the singular values of `m` (all of them for
/// the thin route, square roots of the Gram eigenvalues otherwise), sorted in
/// nonincreasing order.
pub fn singular_values_of_projection(m: &Matrix, r: usize, route: SvdRoute) -> Result<(Matrix, Vec<f64>)> {
    let (x, s) = project_with_spectrum(to_faer(m), r, route)?;
    Ok((from_faer(x.as_ref()), s))
}

pub(crate) fn project_with_spectrum(a: Mat<C64>, r: usize, route: SvdRoute) -> Result<(Mat<C64>, Vec<f64>)> {
    if r == 0 {
        return Err(Error::Config("rank threshold must be >= 1".into()));
    }
    let (rows, cols) = (a.nrows(), a.ncols());
    match route {
        SvdRoute::Thin => {
            let svd = a.thin_svd().map_err(|e| {
                Error::Numerical(format!("SVD of {rows}x{cols} matrix failed: {e:?}"))
            })?;
            let s: Vec<f64> = (0..rows.min(cols)).map(|k| svd.S().column_vector()[k].re).collect();
            if r >= rows.min(cols) {
                return Ok((a, s));
            }
            let u = svd.U().subcols(0, r);
            let v = svd.V().subcols(0, r);
            let us = Mat::from_fn(rows, r, |i, k| u[(i, k)] * s[k]);
            Ok((&us * v.adjoint(), s))
        }
        SvdRoute::Gram => {
            let (basis, evals) = gram_basis(&a)?;
            let n = evals.len();
            let s: Vec<f64> = evals.iter().rev().map(|&e| e.max(0.0).sqrt()).collect();
            if r >= n {
                return Ok((a, s));
            }
            Ok((project(&a, basis.as_ref().subcols(n - r, r)), s))
        }
    }
}

fn gram_basis(a: &Mat<C64>) -> Result<(Mat<C64>, Vec<f64>)> {
    let wide = a.nrows() <= a.ncols();
    let n = if wide { a.nrows() } else { a.ncols() };
    let mut gram = Mat::<C64>::zeros(n, n);
    // only the lower half is read by the eigensolver
    let (lhs, conj_lhs, rhs, conj_rhs) = if wide {
        (a.as_ref(), Conj::No, a.transpose(), Conj::Yes)
    } else {
        (a.transpose(), Conj::Yes, a.as_ref(), Conj::No)
    };
    triangular::matmul_with_conj(
        gram.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Replace,
        lhs,
        BlockStructure::Rectangular,
        conj_lhs,
        rhs,
        BlockStructure::Rectangular,
        conj_rhs,
        C64::new(1.0, 0.0),
        Par::Seq,
    );
    let evd = gram.self_adjoint_eigen(Side::Lower).map_err(|e| {
        Error::Numerical(format!(
            "eigendecomposition of {0}x{0} Gram matrix failed: {e:?}",
            gram.nrows()
        ))
    })?;
    let evals = (0..gram.nrows()).map(|k| evd.S().column_vector()[k].re).collect();
    Ok((evd.U().to_owned(), evals))
}

fn project(a: &Mat<C64>, basis: MatRef<'_, C64>) -> Mat<C64> {
    if a.nrows() <= a.ncols() {
        basis * (basis.adjoint() * a)
    } else {
        (a * basis) * basis.adjoint()
    }
}

fn thin_projection(a: &Mat<C64>, r: usize) -> Result<Mat<C64>> {
    let svd = a
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD of {}x{} matrix failed: {e:?}", a.nrows(), a.ncols())))?;
    let s = svd.S().column_vector();
    let u = svd.U().subcols(0, r);
    let v = svd.V().subcols(0, r);
    let us = Mat::from_fn(a.nrows(), r, |i, k| u[(i, k)] * s[k].re);
    Ok(&us * v.adjoint())
}

fn gram_projection(a: &Mat<C64>, r: usize) -> Result<Mat<C64>> {
    // eigenvalues come back in nondecreasing order
    let (basis, evals) = gram_basis(a)?;
    let n = evals.len();
    Ok(project(a, basis.as_ref().subcols(n - r, r)))
}

/// Singular values of `m`, in nonincreasing order.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    let a = to_faer(m);
    a.singular_values()
        .map_err(|e| Error::Numerical(format!("SVD of {}x{} matrix failed: {e:?}", m.nrows(), m.ncols())))
}
