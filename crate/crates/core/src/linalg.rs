//! Least-squares solvers shared by fusion and ELM training.
//!
//! All routes solve `min ||A w - b||`. [`min_norm_lstsq`] goes through a thin
//! SVD and drops singular values below `rank_tol * sigma_max`, giving the
//! minimum-norm solution `sum_k (u_k' b / sigma_k) v_k`. [`normal_equations`]
//! is the textbook `(A'A)^-1 A'b` and refuses rank-deficient inputs.
//!
//! Matrices are nalgebra types; the SVD and symmetric eigen-decomposition
//! come from faer, whose SVD stays accurate on exactly rank-deficient input.

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Default relative singular-value cutoff for an `rows x cols` system.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    1e-10 * rows.max(cols) as f64
}

fn to_faer(a: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin SVD `A = U diag(sigma) V'` with `sigma` in descending order.
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub fn thin_svd(a: &DMatrix<f64>) -> Result<ThinSvd> {
    let svd = to_faer(a)
        .thin_svd()
        .map_err(|e| Error::domain(format!("SVD failed to converge: {e:?}")))?;
    let s = svd.S().column_vector();
    Ok(ThinSvd {
        u: from_faer(svd.U()),
        sigma: (0..s.nrows()).map(|k| s[k]).collect(),
        v: from_faer(svd.V()),
    })
}

/// Eigenvalues and eigenvectors (as columns) of a symmetric matrix.
fn symmetric_eigen(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let eig = to_faer(a)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::domain(format!("eigen-decomposition failed to converge: {e:?}")))?;
    let s = eig.S().column_vector();
    Ok(((0..s.nrows()).map(|k| s[k]).collect(), from_faer(eig.U())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstsqSolution {
    pub x: DVector<f64>,
    /// Number of singular values kept.
    pub rank: usize,
}

/// Truncated-SVD minimum-norm least squares.
pub fn min_norm_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rank_tol: f64) -> Result<LstsqSolution> {
    if a.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "matrix has {} rows but right-hand side has {}",
            a.nrows(),
            b.len()
        )));
    }
    let cols = a.ncols();
    if a.nrows() == 0 || cols == 0 {
        return Err(Error::domain("least squares on an empty matrix"));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::domain("least squares input contains non-finite values"));
    }
    let svd = thin_svd(a)?;
    let sigma_max = svd.sigma.iter().copied().fold(0.0, f64::max);
    let cutoff = rank_tol * sigma_max;

    let mut x = DVector::zeros(cols);
    let mut rank = 0;
    if sigma_max > 0.0 {
        for (k, &s) in svd.sigma.iter().enumerate() {
            if s <= cutoff || s == 0.0 {
                continue;
            }
            rank += 1;
            let coef = svd.u.column(k).dot(b) / s;
            x.axpy(coef, &svd.v.column(k), 1.0);
        }
    }
    Ok(LstsqSolution { x, rank })
}

/// The same truncated solution written through the cross-correlation
/// vector `theta = A' b`: `sum_k (v_k' theta / sigma_k^2) v_k`.
pub fn min_norm_lstsq_cross_correlation(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    rank_tol: f64,
) -> Result<LstsqSolution> {
    if a.nrows() != b.len() {
        return Err(Error::Dimension("row count mismatch".into()));
    }
    let theta = a.transpose() * b;
    let svd = thin_svd(a)?;
    let sigma_max = svd.sigma.iter().copied().fold(0.0, f64::max);
    let mut x = DVector::zeros(a.ncols());
    let mut rank = 0;
    for (k, &s) in svd.sigma.iter().enumerate() {
        if sigma_max == 0.0 || s <= rank_tol * sigma_max {
            continue;
        }
        rank += 1;
        let v = svd.v.column(k);
        x.axpy(v.dot(&theta) / (s * s), &v, 1.0);
    }
    Ok(LstsqSolution { x, rank })
}

/// Plain least squares `(A'A)^-1 A' b`.
///
/// Requires more rows than columns and `sigma_min > rank_tol * sigma_max`;
/// otherwise returns [`Error::RankDeficient`].
pub fn normal_equations(a: &DMatrix<f64>, b: &DVector<f64>, rank_tol: f64) -> Result<DVector<f64>> {
    let (rows, cols) = a.shape();
    if rows != b.len() {
        return Err(Error::Dimension("row count mismatch".into()));
    }
    if rows <= cols {
        return Err(Error::domain(format!(
            "plain least squares needs more rows than columns ({rows} x {cols})"
        )));
    }
    let sv = thin_svd(a)?.sigma;
    let s_max = sv.iter().copied().fold(0.0, f64::max);
    let s_min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if s_max == 0.0 || s_min <= rank_tol * s_max {
        return Err(Error::RankDeficient {
            ratio: if s_max > 0.0 { s_min / s_max } else { 0.0 },
        });
    }
    let gram = a.transpose() * a;
    let rhs = a.transpose() * b;
    let chol = gram.cholesky().ok_or(Error::RankDeficient { ratio: s_min / s_max })?;
    Ok(chol.solve(&rhs))
}

/// Minimum-norm least squares for many right-hand sides through the
/// eigen-decomposition of `A'A`.
///
/// Eigenvalues below `eig_tol * lambda_max` are dropped. This route is
/// meant for tall systems (rows far above columns), where forming the
/// `cols x cols` Gram matrix is much cheaper than a full SVD of `A`.
pub fn gram_min_norm_lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>, eig_tol: f64) -> Result<(DMatrix<f64>, usize)> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension("row count mismatch".into()));
    }
    let a_t = a.transpose();
    let gram = &a_t * a;
    let cross = &a_t * b;
    let (eigenvalues, eigenvectors) = symmetric_eigen(&gram)?;
    let lambda_max = eigenvalues.iter().copied().fold(0.0, f64::max);
    let mut x = DMatrix::zeros(a.ncols(), b.ncols());
    let mut rank = 0;
    if lambda_max <= 0.0 {
        return Ok((x, 0));
    }
    for (k, &lambda) in eigenvalues.iter().enumerate() {
        if lambda <= eig_tol * lambda_max {
            continue;
        }
        rank += 1;
        let v = eigenvectors.column(k);
        let proj = (v.transpose() * &cross) / lambda;
        x += v * proj;
    }
    Ok((x, rank))
}
