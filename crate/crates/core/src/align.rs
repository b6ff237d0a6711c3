//! Patch alignment: rotation synchronisation over the patch graph, a patch
//! level translation solve, and centroid stitching.
//!
//! Convention: patch `k` observes the global coordinates as
//! `X^(k) ≈ X S_kᵀ + 1 t_kᵀ`, and `R_ij ≈ S_i S_jᵀ` maps patch `j`
//! coordinates into the frame of patch `i`. The synchronised estimate of a
//! patch in the common frame is `X^(k) Ŝ_k`.

use std::collections::VecDeque;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;

use crate::embed::PatchEmbedding;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::lanczos::{eigsh, EigOptions, SymmetricOperator, Which};
use crate::linalg::{center_columns, column_means, polar_factor, RANK_TOL};
use crate::patch::PatchGraph;

/// Relative spectral gap below which the top-`d` eigenspace is reported as
/// ill-determined.
pub const GAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum AlignWarning {
    /// The cross-covariance of an overlap is (numerically) rank deficient.
    DegenerateOverlap { i: usize, j: usize, ratio: f64 },
    /// `(λ_d − λ_{d+1}) / λ_1` is tiny.
    DegenerateSpectrum { gap: f64 },
}

impl fmt::Display for AlignWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlignWarning::DegenerateOverlap { i, j, ratio } => write!(
                f,
                "degenerate overlap between patches {i} and {j} (singular value ratio {ratio:.3e})"
            ),
            AlignWarning::DegenerateSpectrum { gap } => {
                write!(f, "degenerate synchronisation spectrum (relative gap {gap:.3e})")
            }
        }
    }
}

/// Orthogonal `R` minimising `‖x̃j Rᵀ − x̃i‖_F` over the centred point sets.
#[derive(Debug, Clone)]
pub struct RelativeTransform {
    pub matrix: DMatrix<f64>,
    /// `σ_min / σ_max` of the cross-covariance.
    pub ratio: f64,
}

impl RelativeTransform {
    pub fn is_degenerate(&self) -> bool {
        self.ratio < RANK_TOL
    }
}

pub fn estimate_relative_transform(xi: &DMatrix<f64>, xj: &DMatrix<f64>) -> Result<RelativeTransform> {
    assert_eq!(xi.shape(), xj.shape(), "overlap coordinates must have equal shape");
    let (o, d) = xi.shape();
    if o <= d {
        return Err(Error::InsufficientOverlap { overlap: o, dim: d });
    }
    let mut ci = xi.clone();
    let mut cj = xj.clone();
    center_columns(&mut ci);
    center_columns(&mut cj);
    let h = cj.transpose() * ci;
    let svd = h.svd(true, true);
    let u = svd.u.expect("u requested");
    let v = svd.v_t.expect("v_t requested").transpose();
    let s = &svd.singular_values;
    let smax = s.max();
    let ratio = if smax > 0.0 { s.min() / smax } else { 0.0 };
    Ok(RelativeTransform {
        matrix: v * u.transpose(),
        ratio,
    })
}

/// One `R_ij` per patch edge `i < j`; `R_ji` is always the transpose.
#[derive(Debug, Clone)]
pub struct RelativeTransforms {
    dim: usize,
    pairs: Vec<(usize, usize)>,
    blocks: Vec<DMatrix<f64>>,
    ratios: Vec<f64>,
}

impl RelativeTransforms {
    /// Estimate every edge transform from the overlap coordinates.
    pub fn estimate(embeddings: &[PatchEmbedding], pg: &PatchGraph, exec: Exec) -> Result<Self> {
        let dim = check_embeddings(embeddings, pg)?;
        let est = exec.try_map(pg.num_edges(), |e| {
            let edge = &pg.edges()[e];
            let xi = embeddings[edge.i].rows(&edge.overlap);
            let xj = embeddings[edge.j].rows(&edge.overlap);
            estimate_relative_transform(&xi, &xj).map_err(|err| match err {
                Error::InsufficientOverlap { overlap, dim } => Error::Patch {
                    patch: edge.i,
                    message: format!(
                        "overlap with patch {} has {overlap} nodes, alignment in dimension {dim} needs at least {}",
                        edge.j,
                        dim + 1
                    ),
                },
                other => other,
            })
        })?;
        Ok(RelativeTransforms {
            dim,
            pairs: pg.edge_pairs(),
            ratios: est.iter().map(|r| r.ratio).collect(),
            blocks: est.into_iter().map(|r| r.matrix).collect(),
        })
    }

    /// Use given blocks, one per edge of `pg` in edge order.
    pub fn from_blocks(pg: &PatchGraph, dim: usize, blocks: Vec<DMatrix<f64>>) -> Self {
        assert_eq!(blocks.len(), pg.num_edges(), "one block per patch edge");
        assert!(blocks.iter().all(|b| b.shape() == (dim, dim)));
        RelativeTransforms {
            dim,
            pairs: pg.edge_pairs(),
            ratios: vec![1.0; blocks.len()],
            blocks,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `R_ij` for any ordered pair of adjacent patches.
    pub fn get(&self, i: usize, j: usize) -> Option<DMatrix<f64>> {
        let key = (i.min(j), i.max(j));
        let e = self.pairs.binary_search(&key).ok()?;
        Some(if i < j {
            self.blocks[e].clone()
        } else {
            self.blocks[e].transpose()
        })
    }

    pub fn edge_block(&self, e: usize) -> &DMatrix<f64> {
        &self.blocks[e]
    }

    pub fn warnings(&self) -> Vec<AlignWarning> {
        self.pairs
            .iter()
            .zip(&self.ratios)
            .filter(|(_, &r)| r < RANK_TOL)
            .map(|(&(i, j), &ratio)| AlignWarning::DegenerateOverlap { i, j, ratio })
            .collect()
    }
}

/// Block-sparse `M` with `M_ij = w_ij R_ij / deg_i`, stored by block rows.
#[derive(Debug, Clone)]
pub struct SyncMatrix {
    dim: usize,
    row_offsets: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
    blocks: Vec<DMatrix<f64>>,
    degree: Vec<f64>,
}

pub fn build_sync_matrix(rel: &RelativeTransforms, pg: &PatchGraph) -> Result<SyncMatrix> {
    let p = pg.num_patches();
    let adj = pg.adjacency();
    let mut row_offsets = Vec::with_capacity(p + 1);
    row_offsets.push(0);
    let mut cols = Vec::new();
    let mut weights = Vec::new();
    let mut blocks = Vec::new();
    let mut degree = Vec::with_capacity(p);
    for (i, nbrs) in adj.iter().enumerate() {
        if nbrs.is_empty() {
            return Err(Error::IsolatedPatch { patch: i });
        }
        let mut row: Vec<(usize, usize)> = nbrs.clone();
        row.sort_unstable();
        let mut deg = 0.0;
        for (j, e) in row {
            let w = pg.edges()[e].overlap_weight() as f64;
            let r = rel.edge_block(e);
            cols.push(j);
            weights.push(w);
            blocks.push(if i < j { r.clone() } else { r.transpose() });
            deg += w;
        }
        degree.push(deg);
        row_offsets.push(cols.len());
    }
    Ok(SyncMatrix {
        dim: rel.dim(),
        row_offsets,
        cols,
        weights,
        blocks,
        degree,
    })
}

impl SyncMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_patches(&self) -> usize {
        self.degree.len()
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    /// Number of stored nonzero entries.
    pub fn nnz(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.iter().filter(|&&x| x != 0.0).count())
            .sum()
    }

    /// `M_ij`, `None` when `i` and `j` are not adjacent.
    pub fn block(&self, i: usize, j: usize) -> Option<DMatrix<f64>> {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        let pos = self.cols[range.clone()].binary_search(&j).ok()? + range.start;
        Some(&self.blocks[pos] * (self.weights[pos] / self.degree[i]))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let (p, d) = (self.num_patches(), self.dim);
        let mut m = DMatrix::zeros(p * d, p * d);
        for i in 0..p {
            for pos in self.row_offsets[i]..self.row_offsets[i + 1] {
                let j = self.cols[pos];
                let b = &self.blocks[pos] * (self.weights[pos] / self.degree[i]);
                m.view_mut((i * d, j * d), (d, d)).copy_from(&b);
            }
        }
        m
    }

    /// The similar symmetric matrix `D^{-1/2} W D^{-1/2}` as an operator.
    pub fn symmetric(&self, exec: Exec) -> SymmetricSync<'_> {
        SymmetricSync { sync: self, exec }
    }
}

pub struct SymmetricSync<'a> {
    sync: &'a SyncMatrix,
    exec: Exec,
}

impl SymmetricOperator for SymmetricSync<'_> {
    fn dim(&self) -> usize {
        self.sync.num_patches() * self.sync.dim
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let s = self.sync;
        let d = s.dim;
        let k = x.ncols();
        let mut out = vec![0.0; self.dim() * k];
        if k == 0 || d == 0 {
            return DMatrix::zeros(self.dim(), k);
        }
        self.exec.for_each_chunk_mut(&mut out, d * k, |i, chunk| {
            let mut acc = DMatrix::<f64>::zeros(d, k);
            for pos in s.row_offsets[i]..s.row_offsets[i + 1] {
                let j = s.cols[pos];
                let scale = s.weights[pos] / (s.degree[i] * s.degree[j]).sqrt();
                acc.gemm(scale, &s.blocks[pos], &x.rows(j * d, d), 1.0);
            }
            for r in 0..d {
                for c in 0..k {
                    chunk[r * k + c] = acc[(r, c)];
                }
            }
        });
        let mut y = DMatrix::zeros(self.dim(), k);
        for (row, vals) in out.chunks(k).enumerate() {
            for (c, &v) in vals.iter().enumerate() {
                y[(row, c)] = v;
            }
        }
        y
    }
}

#[derive(Debug, Clone)]
pub struct EigenSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub exec: Exec,
    /// Start from rotations propagated along a BFS spanning tree.
    pub warm_start: bool,
    pub dense_below: usize,
}

impl EigenSettings {
    pub fn new(d: usize) -> Self {
        EigenSettings {
            tol: 1e-10,
            max_iter: 50 * d + 1000,
            seed: 0,
            exec: Exec::Parallel,
            warm_start: true,
            dense_below: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LeadingEigenvectors {
    /// `pd × d` eigenvectors of `M`.
    pub u: DMatrix<f64>,
    /// `λ_1..λ_{d+1}` (the last one when available).
    pub values: Vec<f64>,
    /// Residuals of the symmetric problem for unit vectors.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub warning: Option<AlignWarning>,
}

/// Rotations obtained by walking a BFS tree from patch 0, `S_j = R_ji S_i`,
/// stacked as a `pd × d` block.
pub fn spanning_tree_rotations(sync: &SyncMatrix) -> DMatrix<f64> {
    let (p, d) = (sync.num_patches(), sync.dim);
    let mut s = DMatrix::zeros(p * d, d);
    let mut seen = vec![false; p];
    let mut queue = VecDeque::new();
    for root in 0..p {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        s.view_mut((root * d, 0), (d, d)).fill_with_identity();
        queue.push_back(root);
        while let Some(i) = queue.pop_front() {
            let si = s.rows(i * d, d).into_owned();
            for pos in sync.row_offsets[i]..sync.row_offsets[i + 1] {
                let j = sync.cols[pos];
                if !seen[j] {
                    seen[j] = true;
                    // blocks[pos] is R_ij, so R_ji = R_ijᵀ
                    let sj = sync.blocks[pos].transpose() * &si;
                    s.rows_mut(j * d, d).copy_from(&sj);
                    queue.push_back(j);
                }
            }
        }
    }
    s
}

pub fn leading_eigenvectors(sync: &SyncMatrix, d: usize, settings: &EigenSettings) -> Result<LeadingEigenvectors> {
    let op = sync.symmetric(settings.exec);
    let mut opts = EigOptions::new(d, Which::LargestAlgebraic);
    opts.tol = settings.tol;
    opts.max_iter = settings.max_iter;
    opts.seed = settings.seed;
    opts.dense_below = settings.dense_below;
    let block = d + (d / 2).max(2);
    opts.block_size = Some(block);
    // a short basis restarts too often once the gap below λ_d is small
    opts.basis_size = Some((16 * block).min((4 * block).max(400)));
    let start = settings.warm_start.then(|| {
        let mut s = spanning_tree_rotations(sync);
        for (i, deg) in sync.degree.iter().enumerate() {
            s.rows_mut(i * sync.dim, sync.dim).scale_mut(deg.sqrt());
        }
        s
    });
    let res = eigsh(&op, &opts, start.as_ref())?;
    let mut u = res.vectors;
    for (i, deg) in sync.degree.iter().enumerate() {
        u.rows_mut(i * sync.dim, sync.dim).scale_mut(1.0 / deg.sqrt());
    }
    let warning = match res.values.get(d) {
        Some(&next) if res.values[0] != 0.0 => {
            let gap = (res.values[d - 1] - next) / res.values[0].abs();
            (gap < GAP_TOL).then_some(AlignWarning::DegenerateSpectrum { gap })
        }
        _ => None,
    };
    Ok(LeadingEigenvectors {
        u,
        values: res.values,
        residuals: res.residuals,
        iterations: res.iterations,
        warning,
    })
}

/// Nearest orthogonal matrix to `block`.
pub fn project_orthogonal(block: &DMatrix<f64>, patch: usize) -> Result<DMatrix<f64>> {
    let (q, ratio) = polar_factor(block);
    if !(ratio >= RANK_TOL) {
        return Err(Error::RankDeficient { patch, ratio });
    }
    Ok(q)
}

#[derive(Debug, Clone)]
pub struct Synchronised {
    pub transforms: Vec<DMatrix<f64>>,
    /// `X^(k) Ŝ_k` for every patch.
    pub rotated: Vec<PatchEmbedding>,
    pub eigen: Option<LeadingEigenvectors>,
    pub sync_nnz: usize,
    pub warnings: Vec<AlignWarning>,
}

pub fn synchronise_rotations(
    embeddings: &[PatchEmbedding],
    pg: &PatchGraph,
    settings: &EigenSettings,
) -> Result<Synchronised> {
    let d = check_embeddings(embeddings, pg)?;
    if pg.num_patches() == 1 {
        return Ok(Synchronised {
            transforms: vec![DMatrix::identity(d, d)],
            rotated: embeddings.to_vec(),
            eigen: None,
            sync_nnz: 0,
            warnings: Vec::new(),
        });
    }
    pg.ensure_connected()?;
    let rel = RelativeTransforms::estimate(embeddings, pg, settings.exec)?;
    let mut warnings = rel.warnings();
    let sync = build_sync_matrix(&rel, pg)?;
    let eig = leading_eigenvectors(&sync, d, settings)?;
    warnings.extend(eig.warning.clone());
    let transforms = (0..pg.num_patches())
        .map(|k| project_orthogonal(&eig.u.rows(k * d, d).into_owned(), k))
        .collect::<Result<Vec<_>>>()?;
    let rotated = embeddings
        .iter()
        .zip(&transforms)
        .map(|(e, s)| PatchEmbedding {
            patch_index: e.patch_index,
            node_ids: e.node_ids.clone(),
            coords: &e.coords * s,
        })
        .collect();
    for w in &warnings {
        warn!("{w}");
    }
    Ok(Synchronised {
        transforms,
        rotated,
        eigen: Some(eig),
        sync_nnz: sync.nnz(),
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct Translations {
    /// `p × d`, column means zero.
    pub t: DMatrix<f64>,
    /// Iterations used per coordinate column.
    pub iterations: Vec<usize>,
    /// `‖B T − C‖` after each iteration, per column (starting at `T = 0`).
    pub residual_history: Vec<Vec<f64>>,
}

/// Least-squares patch translations from the overlap mean differences.
pub fn solve_translations(rotated: &[PatchEmbedding], pg: &PatchGraph, tol: f64, max_iter: usize) -> Result<Translations> {
    let d = check_embeddings(rotated, pg)?;
    let m = pg.num_edges();
    let mut c = DMatrix::zeros(m, d);
    for (e, edge) in pg.edges().iter().enumerate() {
        let diff = rotated[edge.i].rows(&edge.overlap) - rotated[edge.j].rows(&edge.overlap);
        c.set_row(e, &column_means(&diff).transpose());
    }
    solve_incidence_lsq(pg, &c, tol, max_iter)
}

/// Minimise `‖B T − C‖` where row `e = (k, l)` of `B` is `δ_l − δ_k`, by
/// CGLS per column, then subtract the column means of `T`.
pub fn solve_incidence_lsq(pg: &PatchGraph, c: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<Translations> {
    let p = pg.num_patches();
    let edges = pg.edge_pairs();
    assert_eq!(c.nrows(), edges.len(), "one row of C per patch edge");
    let b_mul = |x: &[f64]| -> Vec<f64> { edges.iter().map(|&(k, l)| x[l] - x[k]).collect() };
    let bt_mul = |r: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; p];
        for (&(k, l), &v) in edges.iter().zip(r) {
            out[l] += v;
            out[k] -= v;
        }
        out
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let d = c.ncols();
    let mut t = DMatrix::zeros(p, d);
    let mut iterations = Vec::with_capacity(d);
    let mut history = Vec::with_capacity(d);
    for col in 0..d {
        let mut x = vec![0.0; p];
        let mut r: Vec<f64> = c.column(col).iter().copied().collect();
        let mut s = bt_mul(&r);
        let norm0 = dot(&s, &s).sqrt();
        let mut hist = vec![dot(&r, &r).sqrt()];
        let mut it = 0;
        if norm0 > 0.0 {
            let mut dir = s.clone();
            let mut gamma = dot(&s, &s);
            loop {
                if it == max_iter {
                    return Err(Error::LsqNotConverged {
                        iterations: it,
                        residual: gamma.sqrt() / norm0,
                    });
                }
                it += 1;
                let q = b_mul(&dir);
                let alpha = gamma / dot(&q, &q);
                for (xi, di) in x.iter_mut().zip(&dir) {
                    *xi += alpha * di;
                }
                for (ri, qi) in r.iter_mut().zip(&q) {
                    *ri -= alpha * qi;
                }
                hist.push(dot(&r, &r).sqrt());
                s = bt_mul(&r);
                let gamma_new = dot(&s, &s);
                if gamma_new.sqrt() <= tol * norm0 {
                    break;
                }
                let beta = gamma_new / gamma;
                gamma = gamma_new;
                for (di, si) in dir.iter_mut().zip(&s) {
                    *di = si + beta * *di;
                }
            }
        }
        let mean = x.iter().sum::<f64>() / p as f64;
        for (k, xi) in x.iter().enumerate() {
            t[(k, col)] = xi - mean;
        }
        iterations.push(it);
        history.push(hist);
    }
    Ok(Translations {
        t,
        iterations,
        residual_history: history,
    })
}

/// Centroid of `X̂^(k) + T̂_k` over the patches containing each node.
pub fn stitch(rotated: &[PatchEmbedding], translations: &DMatrix<f64>, n: usize) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let d = translations.ncols();
    let mut sum = DMatrix::zeros(n, d);
    let mut count = vec![0usize; n];
    for (k, emb) in rotated.iter().enumerate() {
        for (r, &v) in emb.node_ids.iter().enumerate() {
            if v >= n {
                return Err(Error::NodeOutOfRange { id: v, n });
            }
            for c in 0..d {
                sum[(v, c)] += emb.coords[(r, c)] + translations[(k, c)];
            }
            count[v] += 1;
        }
    }
    for (v, &cnt) in count.iter().enumerate() {
        if cnt == 0 {
            return Err(Error::UncoveredNode { node: v });
        }
        sum.row_mut(v).scale_mut(1.0 / cnt as f64);
    }
    Ok((sum, count))
}

/// Centroid of the raw patch coordinates, no alignment.
pub fn no_trans_baseline(embeddings: &[PatchEmbedding], pg: &PatchGraph, n: usize) -> Result<DMatrix<f64>> {
    let d = check_embeddings(embeddings, pg)?;
    stitch(embeddings, &DMatrix::zeros(embeddings.len(), d), n).map(|(x, _)| x)
}

#[derive(Debug, Clone)]
pub struct AlignOptions {
    pub tol_eigen: f64,
    pub tol_lsq: f64,
    /// Defaults to `50 d + 1000` block applications.
    pub max_iter_eigen: Option<usize>,
    /// Defaults to `100 p`.
    pub max_iter_lsq: Option<usize>,
    pub seed: u64,
    pub exec: Exec,
    pub warm_start: bool,
}

impl Default for AlignOptions {
    fn default() -> Self {
        AlignOptions {
            tol_eigen: 1e-10,
            tol_lsq: 1e-10,
            max_iter_eigen: None,
            max_iter_lsq: None,
            seed: 0,
            exec: Exec::Parallel,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlignDiagnostics {
    /// `λ_1..λ_{d+1}` of the synchronisation matrix.
    pub eigenvalues: Vec<f64>,
    pub eigen_iterations: usize,
    pub eigen_residuals: Vec<f64>,
    pub lsq_iterations: Vec<usize>,
    pub lsq_residuals: Vec<Vec<f64>>,
    pub sync_nnz: usize,
    /// Mean overlap size over patch edges.
    pub mean_overlap: f64,
    pub warnings: Vec<AlignWarning>,
}

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub transforms: Vec<DMatrix<f64>>,
    /// `p × d`.
    pub translations: DMatrix<f64>,
    /// `n × d`.
    pub global: DMatrix<f64>,
    pub coverage: Vec<usize>,
    pub diagnostics: AlignDiagnostics,
}

/// Full alignment of `embeddings` (patch order of `pg`) into an `n × d`
/// global embedding.
pub fn align(embeddings: &[PatchEmbedding], pg: &PatchGraph, n: usize, opts: &AlignOptions) -> Result<AlignmentResult> {
    let d = check_embeddings(embeddings, pg)?;
    let p = pg.num_patches();
    let settings = EigenSettings {
        tol: opts.tol_eigen,
        max_iter: opts.max_iter_eigen.unwrap_or(50 * d + 1000),
        seed: opts.seed,
        exec: opts.exec,
        warm_start: opts.warm_start,
        ..EigenSettings::new(d)
    };
    let sync = synchronise_rotations(embeddings, pg, &settings)?;
    let tr = if p == 1 {
        Translations {
            t: DMatrix::zeros(1, d),
            iterations: vec![0; d],
            residual_history: vec![vec![0.0]; d],
        }
    } else {
        solve_translations(&sync.rotated, pg, opts.tol_lsq, opts.max_iter_lsq.unwrap_or(100 * p))?
    };
    let (global, coverage) = stitch(&sync.rotated, &tr.t, n)?;
    let mean_overlap = if pg.num_edges() == 0 {
        0.0
    } else {
        pg.edges().iter().map(|e| e.overlap_weight() as f64).sum::<f64>() / pg.num_edges() as f64
    };
    let eig = sync.eigen.as_ref();
    Ok(AlignmentResult {
        transforms: sync.transforms,
        translations: tr.t,
        global,
        coverage,
        diagnostics: AlignDiagnostics {
            eigenvalues: eig.map(|e| e.values.clone()).unwrap_or_default(),
            eigen_iterations: eig.map_or(0, |e| e.iterations),
            eigen_residuals: eig.map(|e| e.residuals.clone()).unwrap_or_default(),
            lsq_iterations: tr.iterations,
            lsq_residuals: tr.residual_history,
            sync_nnz: sync.sync_nnz,
            mean_overlap,
            warnings: sync.warnings,
        },
    })
}

/// Checks patch order, node sets and a common dimension; returns `d`.
fn check_embeddings(embeddings: &[PatchEmbedding], pg: &PatchGraph) -> Result<usize> {
    if embeddings.len() != pg.num_patches() {
        return Err(Error::InvalidArgument(format!(
            "{} patch embeddings for {} patches",
            embeddings.len(),
            pg.num_patches()
        )));
    }
    let d = embeddings.first().map_or(0, PatchEmbedding::dim);
    if d == 0 {
        return Err(Error::InvalidArgument("embedding dimension is zero".into()));
    }
    for (k, e) in embeddings.iter().enumerate() {
        let err = |message: String| Error::Patch { patch: k, message };
        if e.dim() != d {
            return Err(err(format!("dimension {} differs from {d}", e.dim())));
        }
        if e.node_ids != pg.patch(k) {
            return Err(err("embedding node ids differ from the patch".into()));
        }
    }
    Ok(d)
}

/// Per patch: `d` rows of `Ŝ_k`, then the translation row.
pub fn write_transforms(path: &Path, transforms: &[DMatrix<f64>], translations: &DMatrix<f64>) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let d = translations.ncols();
    writeln!(w, "# patches {} dim {d}", transforms.len()).map_err(io)?;
    for (k, s) in transforms.iter().enumerate() {
        writeln!(w, "# patch {k}").map_err(io)?;
        for r in 0..d {
            let row: Vec<String> = s.row(r).iter().map(|x| x.to_string()).collect();
            writeln!(w, "{}", row.join(" ")).map_err(io)?;
        }
        let row: Vec<String> = translations.row(k).iter().map(|x| x.to_string()).collect();
        writeln!(w, "{}", row.join(" ")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_transforms(path: &Path) -> Result<(Vec<DMatrix<f64>>, DMatrix<f64>)> {
    let io = |e| Error::io(path, e);
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                path: path.into(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        rows.push((idx + 1, vals));
    }
    let d = rows.first().map_or(0, |r| r.1.len());
    if d == 0 || rows.len() % (d + 1) != 0 {
        return Err(Error::Format {
            path: path.into(),
            message: format!("{} rows do not form blocks of {} rows", rows.len(), d + 1),
        });
    }
    if let Some((line, r)) = rows.iter().find(|r| r.1.len() != d) {
        return Err(Error::Parse {
            path: path.into(),
            line: *line,
            message: format!("expected {d} values, found {}", r.len()),
        });
    }
    let p = rows.len() / (d + 1);
    let mut transforms = Vec::with_capacity(p);
    let mut t = DMatrix::zeros(p, d);
    for (k, block) in rows.chunks(d + 1).enumerate() {
        transforms.push(DMatrix::from_fn(d, d, |r, c| block[r].1[c]));
        for c in 0..d {
            t[(k, c)] = block[d].1[c];
        }
    }
    Ok((transforms, t))
}
