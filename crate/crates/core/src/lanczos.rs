//! Restarted block Lanczos for a few extremal eigenpairs of a symmetric
//! operator.
//!
//! The Krylov basis is kept fully orthogonal (classical Gram-Schmidt applied
//! twice) and the Rayleigh quotient is formed explicitly from the stored
//! operator images, so the basis does not have to be a pure Krylov space:
//! deflated directions are replaced by random vectors and restarts keep the
//! leading Ritz vectors (thick restart). A block size at least as large as
//! the wanted eigenvalue multiplicity is needed to resolve repeated
//! eigenvalues, which is the normal case for synchronisation matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::gaussian_matrix;

/// A real symmetric linear operator applied to blocks of column vectors.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;

    /// `A · x` for an `dim × k` block `x`.
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64>;

    fn to_dense(&self) -> DMatrix<f64> {
        self.apply(&DMatrix::identity(self.dim(), self.dim()))
    }
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self * x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    LargestAlgebraic,
    /// Largest `|λ|`; on (near) ties the positive eigenvalue comes first.
    LargestMagnitude,
}

#[derive(Debug, Clone)]
pub struct EigOptions {
    /// Number of eigenpairs that must converge.
    pub nev: usize,
    pub which: Which,
    /// Residual bound `‖A y − θ y‖ ≤ tol` for unit Ritz vectors `y`.
    pub tol: f64,
    /// Maximum number of block operator applications.
    pub max_iter: usize,
    /// Defaults to `nev + 1`.
    pub block_size: Option<usize>,
    /// Maximum number of basis vectors between restarts.
    pub basis_size: Option<usize>,
    /// Operators of at most this dimension are solved densely.
    pub dense_below: usize,
    pub seed: u64,
}

impl EigOptions {
    pub fn new(nev: usize, which: Which) -> Self {
        EigOptions {
            nev,
            which,
            tol: 1e-10,
            max_iter: 50 * nev + 1000,
            block_size: None,
            basis_size: None,
            dense_below: 48,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigResult {
    /// Ritz values in wanted order. Holds `nev + 1` values when the search
    /// space allows it; the last one is a diagnostic estimate and is not
    /// subject to the convergence test.
    pub values: Vec<f64>,
    /// `dim × nev` orthonormal eigenvector estimates.
    pub vectors: DMatrix<f64>,
    pub residuals: Vec<f64>,
    /// Block operator applications performed.
    pub iterations: usize,
    pub dense: bool,
}

const CHECK_EVERY: usize = 4;

/// Compute the `nev` wanted eigenpairs of `op`, optionally warm-started from
/// the columns of `start`.
pub fn eigsh<A: SymmetricOperator + ?Sized>(
    op: &A,
    opts: &EigOptions,
    start: Option<&DMatrix<f64>>,
) -> Result<EigResult> {
    let n = op.dim();
    let nev = opts.nev;
    if nev == 0 || nev > n {
        return Err(Error::InvalidArgument(format!(
            "cannot compute {nev} eigenpairs of a {n}-dimensional operator"
        )));
    }
    let b = opts.block_size.unwrap_or(nev + 1).max(1).min(n);
    let basis = opts
        .basis_size
        .unwrap_or(0)
        .max(4 * b)
        .max(nev + 2 * b)
        .min(n);
    if n <= opts.dense_below || basis >= n {
        return dense_eigsh(op, opts);
    }
    let keep = (basis - b).min((nev + 1).max(basis / 2));

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut q = DMatrix::<f64>::zeros(n, basis);
    let mut aq = DMatrix::<f64>::zeros(n, basis);

    let mut block = DMatrix::<f64>::zeros(n, b);
    let mut filled = 0;
    if let Some(s) = start {
        assert_eq!(s.nrows(), n, "start block has wrong dimension");
        for j in 0..s.ncols().min(b) {
            block.set_column(filled, &s.column(j));
            filled += 1;
        }
    }
    if filled < b {
        let extra = gaussian_matrix(n, b - filled, &mut rng);
        block.columns_mut(filled, b - filled).copy_from(&extra);
    }
    orthonormalize_block(&q, 0, &mut block, &mut rng);
    let ablock = op.apply(&block);
    q.columns_mut(0, b).copy_from(&block);
    aq.columns_mut(0, b).copy_from(&ablock);
    // projected matrix QᵀAQ, extended block by block
    let mut proj = DMatrix::<f64>::zeros(basis, basis);
    proj.view_mut((0, 0), (b, b)).copy_from(&block.tr_mul(&ablock));
    let mut k = b;
    let mut frontier = (0, b);
    let mut iterations = 1;

    loop {
        // Rayleigh-Ritz on the current basis
        let qk = q.columns(0, k);
        let aqk = aq.columns(0, k);
        let mut t = proj.view((0, 0), (k, k)).into_owned();
        symmetrize(&mut t);
        let (theta, s) = sorted_eigen(t, opts.which);

        let ritz = qk * s.columns(0, nev);
        let aritz = aqk * s.columns(0, nev);
        let residuals: Vec<f64> = (0..nev)
            .map(|j| (aritz.column(j) - ritz.column(j) * theta[j]).norm())
            .collect();
        let converged = residuals.iter().all(|&r| r <= opts.tol);
        if converged {
            let values = theta.iter().take(nev + 1).copied().collect();
            return Ok(EigResult {
                values,
                vectors: ritz,
                residuals,
                iterations,
                dense: false,
            });
        }
        if iterations >= opts.max_iter {
            let max_residual = residuals.iter().cloned().fold(0.0, f64::max);
            return Err(Error::EigenNotConverged {
                iterations,
                residuals,
                max_residual,
            });
        }

        if k + b > basis {
            // thick restart
            let m = keep.min(k);
            let sm = s.columns(0, m);
            let new_q = q.columns(0, k) * sm;
            let new_aq = aq.columns(0, k) * sm;
            q.columns_mut(0, m).copy_from(&new_q);
            aq.columns_mut(0, m).copy_from(&new_aq);
            proj.fill(0.0);
            for j in 0..m {
                proj[(j, j)] = theta[j];
            }
            k = m;
            frontier = (0, b.min(m));
        }

        // extend by a few blocks between convergence checks
        let mut steps = 0;
        while k + b <= basis && iterations < opts.max_iter && steps < CHECK_EVERY {
            steps += 1;
            let (f0, fl) = frontier;
            let mut w = DMatrix::<f64>::zeros(n, b);
            w.columns_mut(0, fl).copy_from(&aq.columns(f0, fl));
            if fl < b {
                let extra = gaussian_matrix(n, b - fl, &mut rng);
                w.columns_mut(fl, b - fl).copy_from(&extra);
            }
            orthonormalize_block(&q, k, &mut w, &mut rng);
            let aw = op.apply(&w);
            iterations += 1;
            q.columns_mut(k, b).copy_from(&w);
            aq.columns_mut(k, b).copy_from(&aw);
            let cross = q.columns(0, k + b).tr_mul(&aw);
            proj.view_mut((0, k), (k + b, b)).copy_from(&cross);
            proj.view_mut((k, 0), (b, k + b)).copy_from(&cross.transpose());
            frontier = (k, b);
            k += b;
        }
    }
}

fn symmetrize(t: &mut DMatrix<f64>) {
    let n = t.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (t[(i, j)] + t[(j, i)]);
            t[(i, j)] = v;
            t[(j, i)] = v;
        }
    }
}

/// Eigen-decomposition of a small symmetric matrix, columns ordered by
/// `which`.
pub(crate) fn sorted_eigen(t: DMatrix<f64>, which: Which) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(t);
    let vals = eig.eigenvalues.as_slice().to_vec();
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut order: Vec<usize> = (0..vals.len()).collect();
    match which {
        Which::LargestAlgebraic => order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b))),
        Which::LargestMagnitude => {
            order.sort_by(|&a, &b| {
                vals[b]
                    .abs()
                    .total_cmp(&vals[a].abs())
                    .then(vals[b].total_cmp(&vals[a]))
                    .then(a.cmp(&b))
            });
            // treat magnitudes equal up to rounding as ties, positive first
            let tie = 1e-10 * scale.max(f64::MIN_POSITIVE);
            let mut swapped = true;
            while swapped {
                swapped = false;
                for i in 1..order.len() {
                    let (a, b) = (vals[order[i - 1]], vals[order[i]]);
                    if (a.abs() - b.abs()).abs() <= tie && b > a {
                        order.swap(i - 1, i);
                        swapped = true;
                    }
                }
            }
        }
    }
    let values = order.iter().map(|&i| vals[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// Orthonormalise the columns of `w` against `q[:, ..k]` and each other.
/// Columns that vanish are replaced by random directions.
fn orthonormalize_block(q: &DMatrix<f64>, k: usize, w: &mut DMatrix<f64>, rng: &mut ChaCha8Rng) {
    let n = w.nrows();
    let b = w.ncols();
    for _ in 0..2 {
        if k > 0 {
            let qk = q.columns(0, k);
            let c = qk.tr_mul(w);
            w.gemm(-1.0, &qk, &c, 1.0);
        }
    }
    for j in 0..b {
        let mut attempts = 0;
        // columns already orthogonal to q only need q again if they lose
        // most of their norm within the block or were replaced
        let mut fresh = false;
        loop {
            let original = w.column(j).norm();
            for pass in 0..2 {
                if k > 0 && (fresh || pass == 1) {
                    let qk = q.columns(0, k);
                    let c = qk.tr_mul(&w.column(j));
                    let proj = qk * c;
                    let mut col = w.column_mut(j);
                    col -= proj;
                }
                for i in 0..j {
                    let dot = w.column(i).dot(&w.column(j));
                    let wi = w.column(i).clone_owned();
                    w.column_mut(j).axpy(-dot, &wi, 1.0);
                }
                if pass == 0 && w.column(j).norm() >= std::f64::consts::FRAC_1_SQRT_2 * original {
                    break;
                }
            }
            let norm = w.column(j).norm();
            if norm > 1e-10 * original.max(f64::MIN_POSITIVE) && norm > 1e-300 {
                w.column_mut(j).scale_mut(1.0 / norm);
                break;
            }
            attempts += 1;
            assert!(attempts < 16, "unable to extend orthonormal basis");
            let fresh_col = gaussian_matrix(n, 1, rng);
            w.set_column(j, &fresh_col.column(0));
            fresh = true;
        }
    }
}

fn dense_eigsh<A: SymmetricOperator + ?Sized>(op: &A, opts: &EigOptions) -> Result<EigResult> {
    let mut a = op.to_dense();
    symmetrize(&mut a);
    let nev = opts.nev;
    let (theta, s) = sorted_eigen(a.clone(), opts.which);
    let vectors = s.columns(0, nev).clone_owned();
    let av = &a * &vectors;
    let residuals = (0..nev)
        .map(|j| (av.column(j) - vectors.column(j) * theta[j]).norm())
        .collect();
    Ok(EigResult {
        values: theta.into_iter().take(nev + 1).collect(),
        vectors,
        residuals,
        iterations: 0,
        dense: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    /// Symmetric matrix with prescribed spectrum and a random eigenbasis.
    fn with_spectrum(spectrum: &[f64], seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = crate::linalg::random_orthogonal(spectrum.len(), &mut rng);
        &q * DMatrix::from_diagonal(&DVector::from_column_slice(spectrum)) * q.transpose()
    }

    #[test]
    fn finds_repeated_top_eigenvalue() {
        let mut spec: Vec<f64> = (0..120).map(|i| -0.9 + 1.6 * i as f64 / 120.0).collect();
        spec[0] = 1.0;
        spec[1] = 1.0;
        spec[2] = 1.0;
        let a = with_spectrum(&spec, 4);
        let r = eigsh(&a, &EigOptions::new(3, Which::LargestAlgebraic), None).unwrap();
        assert!(!r.dense);
        for j in 0..3 {
            assert!((r.values[j] - 1.0).abs() < 1e-10);
            assert!(r.residuals[j] <= 1e-10);
        }
        let next = spec[3..].iter().cloned().fold(f64::MIN, f64::max);
        assert!((r.values[3] - next).abs() < 1e-3);
    }

    #[test]
    fn largest_magnitude_picks_both_ends() {
        let mut spec: Vec<f64> = (0..100).map(|i| -0.5 + i as f64 / 100.0).collect();
        spec[10] = -3.0;
        spec[20] = 2.0;
        let a = with_spectrum(&spec, 9);
        let r = eigsh(&a, &EigOptions::new(2, Which::LargestMagnitude), None).unwrap();
        assert!((r.values[0] + 3.0).abs() < 1e-10);
        assert!((r.values[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn magnitude_ties_prefer_positive() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let r = eigsh(&a, &EigOptions::new(1, Which::LargestMagnitude), None).unwrap();
        assert!(r.dense);
        assert!((r.values[0] - 1.0).abs() < 1e-14);
        assert!((r.values[1] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn exact_warm_start_converges_without_expansion() {
        let spec: Vec<f64> = (0..80).map(|i| 1.0 - i as f64 / 80.0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = crate::linalg::random_orthogonal(80, &mut rng);
        let a = &q * DMatrix::from_diagonal(&DVector::from_vec(spec)) * q.transpose();
        let start = q.columns(0, 2).clone_owned();
        let mut opts = EigOptions::new(2, Which::LargestAlgebraic);
        opts.block_size = Some(2);
        let r = eigsh(&a, &opts, Some(&start)).unwrap();
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn reports_non_convergence() {
        let spec: Vec<f64> = (0..200).map(|i| 1.0 - 1e-6 * i as f64).collect();
        let a = with_spectrum(&spec, 5);
        let mut opts = EigOptions::new(4, Which::LargestAlgebraic);
        opts.max_iter = 3;
        opts.tol = 1e-14;
        assert!(matches!(eigsh(&a, &opts, None), Err(Error::EigenNotConverged { iterations: 3, .. })));
    }
}
