//! Small dense helpers shared by the alignment and evaluation code.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOL: f64 = 1e-12;

/// `U Vᵀ` from the SVD `a = U Σ Vᵀ`, together with `σ_min / σ_max`.
pub fn polar_factor(a: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s = &svd.singular_values;
    let smax = s.max();
    let smin = s.min();
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    (u * v_t, ratio)
}

/// `max |Q Qᵀ − I|`.
pub fn orthogonality_error(q: &DMatrix<f64>) -> f64 {
    let qqt = q * q.transpose();
    let n = qqt.nrows();
    let mut err: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            err = err.max((qqt[(i, j)] - target).abs());
        }
    }
    err
}

/// Haar-distributed element of O(d) via QR of a Gaussian matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = gaussian_matrix(d, d, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    // fill row-major so the draw order does not depend on storage layout
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows().max(1) as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Subtract the column means in place.
pub fn center_columns(x: &mut DMatrix<f64>) -> DVector<f64> {
    let means = column_means(x);
    for (j, mut col) in x.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    means
}
