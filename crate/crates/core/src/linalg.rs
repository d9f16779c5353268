//! Dense linear-algebra helpers shared by the cone, theory and algebra layers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type RVec = DVector<f64>;
pub type RMat = DMatrix<f64>;
pub type CVec = DVector<Complex64>;
pub type CMat = DMatrix<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn complexify(m: &RMat) -> CMat {
    m.map(c)
}

pub fn complexify_vec(v: &RVec) -> CVec {
    v.map(c)
}

/// Numerical rank with a relative cutoff on the singular values.
pub fn rank(m: &RMat, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max().max(1.0);
    sv.iter().filter(|&&s| s > tol * top).count()
}

pub fn rank_c(m: &CMat, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max().max(1.0);
    sv.iter().filter(|&&s| s > tol * top).count()
}

/// Rank of a family of vectors stacked as columns.
pub fn rank_of(vectors: &[RVec], tol: f64) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    rank(&RMat::from_columns(vectors), tol)
}

/// Orthonormal basis of the kernel of `m`, obtained from the Gram matrix spectrum.
pub fn null_space_c(m: &CMat, tol: f64) -> Vec<CVec> {
    let n = m.ncols();
    if m.nrows() == 0 {
        return (0..n)
            .map(|k| CVec::from_fn(n, |i, _| if i == k { c(1.0) } else { c(0.0) }))
            .collect();
    }
    let gram = m.adjoint() * m;
    let eig = hermitian(&gram).symmetric_eigen();
    let top = eig.eigenvalues.max().max(1.0);
    (0..n)
        .filter(|&k| eig.eigenvalues[k].abs() <= tol * tol * top)
        .map(|k| eig.eigenvectors.column(k).into_owned())
        .collect()
}

pub fn null_space(m: &RMat, tol: f64) -> Vec<RVec> {
    let n = m.ncols();
    if m.nrows() == 0 {
        return (0..n)
            .map(|k| RVec::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 }))
            .collect();
    }
    let gram = m.transpose() * m;
    let eig = gram.symmetric_eigen();
    let top = eig.eigenvalues.max().max(1.0);
    (0..n)
        .filter(|&k| eig.eigenvalues[k].abs() <= tol * tol * top)
        .map(|k| eig.eigenvectors.column(k).into_owned())
        .collect()
}

/// Hermitian part `(m + m^†) / 2`.
pub fn hermitian(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5)
}

/// Eigen-decomposition of the Hermitian part of `m`, eigenvalues ascending.
pub fn eigh(m: &CMat) -> (RVec, CMat) {
    let eig = hermitian(m).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = RVec::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let vectors = CMat::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    eigh(m).0[0]
}

pub fn max_eigenvalue(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let (v, _) = eigh(m);
    v[v.len() - 1]
}

/// Applies a real function to the spectrum of a Hermitian matrix.
pub fn spectral_map(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh(m);
    let d = CMat::from_diagonal(&vals.map(|x| c(f(x))));
    &vecs * d * vecs.adjoint()
}

/// Re Tr(a b).
pub fn trace_product(a: &CMat, b: &CMat) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc.re
}

pub fn ctrace_product(a: &CMat, b: &CMat) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn matrix_unit(n: usize, r: usize, s: usize) -> CMat {
    let mut m = CMat::zeros(n, n);
    m[(r, s)] = c(1.0);
    m
}

/// Row-major flattening, `v[i * ncols + j] = m[(i, j)]`.
pub fn vec_rows(m: &RMat) -> RVec {
    RVec::from_iterator(m.nrows() * m.ncols(), m.transpose().iter().copied())
}

pub fn unvec_rows(v: &RVec, nrows: usize, ncols: usize) -> RMat {
    RMat::from_fn(nrows, ncols, |i, j| v[i * ncols + j])
}

pub fn cvec_rows(m: &CMat) -> CVec {
    CVec::from_iterator(m.nrows() * m.ncols(), m.transpose().iter().copied())
}

pub fn cunvec_rows(v: &CVec, nrows: usize, ncols: usize) -> CMat {
    CMat::from_fn(nrows, ncols, |i, j| v[i * ncols + j])
}

pub fn kron_vec(a: &RVec, b: &RVec) -> RVec {
    RVec::from_fn(a.len() * b.len(), |k, _| a[k / b.len()] * b[k % b.len()])
}

pub fn normalized(v: &RVec) -> RVec {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        v.clone()
    }
}

/// True if `a` and `b` span the same open ray.
pub fn same_ray(a: &RVec, b: &RVec, tol: f64) -> bool {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return false;
    }
    (a / na - b / nb).amax() <= tol.max(1e-12) * 10.0
}

pub fn max_abs_diff(a: &RMat, b: &RMat) -> f64 {
    (a - b).amax()
}

pub fn cmax_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Least-squares solution of `a x = b`, returning the solution and the residual norm.
pub fn lstsq(a: &RMat, b: &RVec, tol: f64) -> (RVec, f64) {
    let svd = a.clone().svd(true, true);
    let top = svd.singular_values.max().max(1.0);
    let x = svd
        .solve(b, tol * top)
        .unwrap_or_else(|_| RVec::zeros(a.ncols()));
    let r = (a * &x - b).norm();
    (x, r)
}

pub fn lstsq_c(a: &CMat, b: &CVec, tol: f64) -> (CVec, f64) {
    let svd = a.clone().svd(true, true);
    let top = svd.singular_values.max().max(1.0);
    let x = svd
        .solve(b, tol * top)
        .unwrap_or_else(|_| CVec::zeros(a.ncols()));
    let r = (a * &x - b).norm();
    (x, r)
}
