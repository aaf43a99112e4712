//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, RowDVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type CRow = RowDVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Relative eigenvalue floor below which a Hermitian matrix is treated as singular.
pub const PINV_RTOL: f64 = 1e-12;

/// `(m + mᴴ) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// A 1×n dense matrix from a row vector.
pub fn row_matrix(r: &CRow) -> CMat {
    CMat::from_iterator(1, r.len(), r.iter().copied())
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Squared Frobenius norm.
pub fn fro2(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Real part of `Tr(a b)` without forming the product.
pub fn trace_product_re(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

/// Cholesky factorization of the Hermitian part, rejecting non-positive pivots.
pub fn cholesky(m: &CMat) -> Result<Cholesky<C64, Dyn>> {
    let not_pd = || Error::Numerical("matrix is not positive definite".into());
    let chol = hermitian_part(m).cholesky().ok_or_else(not_pd)?;
    let l = chol.l_dirty();
    let ok = (0..m.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-12 * d.re
    });
    if ok {
        Ok(chol)
    } else {
        Err(not_pd())
    }
}

/// Natural log-determinant of a Hermitian positive-definite matrix via Cholesky.
pub fn logdet_hpd(m: &CMat) -> Result<f64> {
    let chol = cholesky(m)?;
    let l = chol.l_dirty();
    Ok((0..m.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

pub fn log2det_hpd(m: &CMat) -> Result<f64> {
    Ok(logdet_hpd(m)? / std::f64::consts::LN_2)
}

/// Solves `a x = b` for Hermitian positive-definite `a`.
pub fn solve_hpd(a: &CMat, b: &CMat) -> Result<CMat> {
    let chol = cholesky(a)?;
    Ok(chol.solve(b))
}

pub fn inverse_hpd(a: &CMat) -> Result<CMat> {
    let chol = cholesky(a)?;
    Ok(hermitian_part(&chol.inverse()))
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted descending.
pub fn eigh_desc(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = hermitian_part(m).symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    let (vals, _) = eigh_desc(m);
    vals.last().copied().unwrap_or(0.0)
}

/// Minimum-norm solution of `a x = b` for Hermitian PSD `a`.
///
/// Eigenvalues below `PINV_RTOL * λ_max` are treated as zero.
pub fn pinv_solve_hermitian(a: &CMat, b: &CMat) -> CMat {
    let (vals, vecs) = eigh_desc(a);
    let floor = PINV_RTOL * vals.first().copied().unwrap_or(0.0).max(0.0);
    let mut y = vecs.adjoint() * b;
    for (i, &v) in vals.iter().enumerate() {
        let scale = if v > floor && v > 0.0 { 1.0 / v } else { 0.0 };
        y.row_mut(i).scale_mut(scale);
    }
    vecs * y
}

/// Economy SVD with singular values sorted descending (ties keep the solver's order).
pub struct SortedSvd {
    pub singular_values: Vec<f64>,
    /// Left singular vectors, one per column.
    pub u: CMat,
    /// Right singular vectors, one per column.
    pub v: CMat,
}

/// Computed with `faer`: nalgebra's complex SVD returns wrong factors for some
/// rank-deficient inputs when singular vectors are requested.
pub fn svd_sorted(m: &CMat) -> Result<SortedSvd> {
    let (rows, cols) = m.shape();
    let r = rows.min(cols);
    if r == 0 {
        return Ok(SortedSvd { singular_values: Vec::new(), u: CMat::zeros(rows, 0), v: CMat::zeros(cols, 0) });
    }
    let f = faer::Mat::<C64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let svd = f.thin_svd().map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S(), svd.V());
    let values: Vec<f64> = (0..r).map(|i| s[i].re).collect();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    Ok(SortedSvd {
        singular_values: order.iter().map(|&i| values[i]).collect(),
        u: CMat::from_fn(rows, r, |i, j| u[(i, order[j])]),
        v: CMat::from_fn(cols, r, |i, j| v[(i, order[j])]),
    })
}

/// The `count` dominant left singular vectors of `m`, completed with an
/// orthonormal complement when the economy SVD has fewer columns.
pub fn leading_left_vectors(m: &CMat, count: usize) -> Result<CMat> {
    let rows = m.nrows();
    if count > rows {
        return Err(Error::Dimension(format!("cannot take {count} orthonormal vectors in dimension {rows}")));
    }
    let u = svd_sorted(m)?.u;
    let mut out = CMat::zeros(rows, count);
    let mut filled = count.min(u.ncols());
    out.columns_mut(0, filled).copy_from(&u.columns(0, filled));
    for e in 0..rows {
        if filled == count {
            break;
        }
        let mut v = CVec::zeros(rows);
        v[e] = ONE;
        for _ in 0..2 {
            for j in 0..filled {
                let q = out.column(j).into_owned();
                v -= &q * q.dotc(&v);
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            out.set_column(filled, &v.unscale(norm));
            filled += 1;
        }
    }
    Ok(out)
}

/// Orthonormal basis of the column space of `m` (rank decided with relative tolerance `rtol`).
pub fn column_space_basis(m: &CMat, rtol: f64) -> Result<CMat> {
    if m.ncols() == 0 {
        return Ok(CMat::zeros(m.nrows(), 0));
    }
    let svd = svd_sorted(m)?;
    let top = svd.singular_values.first().copied().unwrap_or(0.0);
    let rank = svd
        .singular_values
        .iter()
        .take_while(|&&s| top > 0.0 && s > rtol * top)
        .count();
    Ok(svd.u.columns(0, rank).into_owned())
}
