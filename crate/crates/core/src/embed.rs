//! Local patch embeddings: a deterministic spectral embedder and an import
//! path for coordinates produced elsewhere.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graph::{induced_subgraph, Graph};
use crate::l2ge;
use crate::lanczos::{eigsh, EigOptions, SymmetricOperator, Which};
use crate::patch::PatchGraph;

/// Coordinates of one patch; row `r` belongs to global node `node_ids[r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchEmbedding {
    pub patch_index: usize,
    pub node_ids: Vec<usize>,
    pub coords: DMatrix<f64>,
}

impl PatchEmbedding {
    pub fn new(patch_index: usize, node_ids: Vec<usize>, coords: DMatrix<f64>) -> Result<Self> {
        let err = |message: String| Error::Patch {
            patch: patch_index,
            message,
        };
        if node_ids.len() != coords.nrows() {
            return Err(err(format!(
                "{} node ids for {} coordinate rows",
                node_ids.len(),
                coords.nrows()
            )));
        }
        if node_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(err("node ids not strictly sorted".into()));
        }
        if let Some(pos) = coords.iter().position(|x| !x.is_finite()) {
            let row = pos % coords.nrows().max(1);
            return Err(err(format!("non-finite coordinate for node {}", node_ids[row])));
        }
        Ok(PatchEmbedding {
            patch_index,
            node_ids,
            coords,
        })
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    /// Row index of global node `v`.
    pub fn row_of(&self, v: usize) -> Option<usize> {
        self.node_ids.binary_search(&v).ok()
    }

    /// Rows for `nodes`, which must all belong to the patch.
    pub fn rows(&self, nodes: &[usize]) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(nodes.len(), d);
        for (r, &v) in nodes.iter().enumerate() {
            let src = self.row_of(v).expect("node belongs to patch");
            out.row_mut(r).copy_from(&self.coords.row(src));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let ids: Vec<u64> = self.node_ids.iter().map(|&v| v as u64).collect();
        l2ge::write(path, &ids, &self.coords)
    }
}

pub fn embedding_file(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("patch_{k}.l2ge"))
}

/// `D^{-1/2} A D^{-1/2}`; isolated nodes have zero rows.
pub struct NormalizedAdjacency<'a> {
    graph: &'a Graph,
    inv_sqrt_degree: Vec<f64>,
    exec: Exec,
}

impl<'a> NormalizedAdjacency<'a> {
    pub fn new(graph: &'a Graph, exec: Exec) -> Self {
        let inv_sqrt_degree = (0..graph.num_nodes())
            .map(|u| {
                let deg: f64 = match graph.edge_weights(u) {
                    Some(w) => w.iter().sum(),
                    None => graph.degree(u) as f64,
                };
                if deg > 0.0 {
                    1.0 / deg.sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        NormalizedAdjacency {
            graph,
            inv_sqrt_degree,
            exec,
        }
    }

    pub fn entry(&self, u: usize, v: usize) -> f64 {
        let nb = self.graph.neighbors(u);
        match nb.binary_search(&v) {
            Ok(k) => {
                let w = self.graph.edge_weights(u).map_or(1.0, |w| w[k]);
                w * self.inv_sqrt_degree[u] * self.inv_sqrt_degree[v]
            }
            Err(_) => 0.0,
        }
    }
}

impl SymmetricOperator for NormalizedAdjacency<'_> {
    fn dim(&self) -> usize {
        self.graph.num_nodes()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim();
        let k = x.ncols();
        // row-major output so each node's row is one contiguous chunk
        let mut out = vec![0.0; n * k];
        self.exec.for_each_chunk_mut(&mut out, k.max(1), |u, row| {
            let nb = self.graph.neighbors(u);
            let ws = self.graph.edge_weights(u);
            for (idx, &v) in nb.iter().enumerate() {
                let w = ws.map_or(1.0, |w| w[idx]) * self.inv_sqrt_degree[u] * self.inv_sqrt_degree[v];
                for c in 0..k {
                    row[c] += w * x[(v, c)];
                }
            }
        });
        DMatrix::from_row_slice(n, k, &out)
    }
}

#[derive(Debug, Clone)]
pub struct EmbedOptions {
    /// Residual tolerance for the eigensolver.
    pub tol: f64,
    pub seed: u64,
    pub exec: Exec,
    /// Graphs up to this size are decomposed densely. The wanted
    /// eigenvalues of sparse graphs sit in a tightly clustered bulk once `d`
    /// is in the tens, and below a few thousand nodes a dense solve is faster
    /// than Lanczos.
    pub dense_below: usize,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions {
            tol: 1e-9,
            seed: 0,
            exec: Exec::Parallel,
            dense_below: 3000,
        }
    }
}

/// Spectral coordinates of a graph: the `d` eigenpairs of the normalised
/// adjacency largest in `|λ|`, scaled as `V · diag(|λ|^{1/2})`.
///
/// The entry of largest magnitude of every eigenvector is made positive
/// (lowest index on ties).
pub fn spectral_embed(g: &Graph, d: usize, opts: &EmbedOptions) -> Result<DMatrix<f64>> {
    let (vectors, values) = spectral_pairs(g, d, opts)?;
    let mut coords = vectors;
    for (j, mut col) in coords.column_iter_mut().enumerate() {
        col.scale_mut(values[j].abs().sqrt());
    }
    Ok(coords)
}

/// Sign-normalised eigenvectors and eigenvalues used by [`spectral_embed`].
pub fn spectral_pairs(g: &Graph, d: usize, opts: &EmbedOptions) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = g.num_nodes();
    if d > n {
        return Err(Error::DimensionTooLarge { d, n });
    }
    if d == 0 {
        return Ok((DMatrix::zeros(n, 0), Vec::new()));
    }
    let op = NormalizedAdjacency::new(g, opts.exec);
    let mut eig_opts = EigOptions::new(d, Which::LargestMagnitude);
    eig_opts.tol = opts.tol;
    eig_opts.seed = opts.seed;
    eig_opts.dense_below = opts.dense_below;
    eig_opts.block_size = Some(d + (d / 4).max(4));
    let res = eigsh(&op, &eig_opts, None)?;
    let mut vectors = res.vectors;
    for mut col in vectors.column_iter_mut() {
        let max = col.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let pivot = col
            .iter()
            .position(|x| x.abs() >= max * (1.0 - 1e-10))
            .unwrap_or(0);
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
    }
    Ok((vectors, res.values.into_iter().take(d).collect()))
}

/// Embed every patch independently on its induced subgraph.
pub fn embed_all_patches(
    g: &Graph,
    pg: &PatchGraph,
    d: usize,
    opts: &EmbedOptions,
) -> Result<Vec<PatchEmbedding>> {
    // each patch gets its own single-threaded solve; parallelism is across patches
    let inner = EmbedOptions {
        exec: Exec::Sequential,
        ..opts.clone()
    };
    opts.exec.try_map(pg.num_patches(), |k| {
        let nodes = pg.patch(k);
        let wrap = |e: Error| Error::Patch {
            patch: k,
            message: e.to_string(),
        };
        let (sub, _) = induced_subgraph(g, nodes).map_err(wrap)?;
        let coords = spectral_embed(&sub, d, &inner).map_err(wrap)?;
        PatchEmbedding::new(k, nodes.to_vec(), coords)
    })
}

/// Write `patch_<k>.l2ge` for every embedding.
pub fn export_embeddings(dir: &Path, embeddings: &[PatchEmbedding]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for emb in embeddings {
        emb.write(&embedding_file(dir, emb.patch_index))?;
    }
    Ok(())
}

/// Load one file per patch (in patch order) and check it against the patch
/// graph.
pub fn import_embeddings(paths: &[PathBuf], pg: &PatchGraph) -> Result<Vec<PatchEmbedding>> {
    if paths.len() != pg.num_patches() {
        return Err(Error::InvalidArgument(format!(
            "{} embedding files for {} patches",
            paths.len(),
            pg.num_patches()
        )));
    }
    let mut dim: Option<(usize, &Path)> = None;
    let mut out = Vec::with_capacity(paths.len());
    for (k, path) in paths.iter().enumerate() {
        let file = l2ge::read(path)?;
        let bad = |message: String| Error::Format {
            path: path.clone(),
            message,
        };
        let d = file.coords.ncols();
        match dim {
            None => dim = Some((d, path)),
            Some((d0, first)) if d0 != d => {
                return Err(bad(format!(
                    "dimension {d} differs from {d0} in {}",
                    first.display()
                )))
            }
            Some(_) => {}
        }
        let mut rows: Vec<(usize, usize)> = file
            .node_ids
            .iter()
            .enumerate()
            .map(|(r, &id)| (id as usize, r))
            .collect();
        rows.sort_unstable();
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(bad(format!("node {} appears twice", w[0].0)));
        }
        let patch = pg.patch(k);
        let ids: Vec<usize> = rows.iter().map(|r| r.0).collect();
        if let Some(&missing) = patch.iter().find(|v| ids.binary_search(v).is_err()) {
            return Err(bad(format!("patch {k} node {missing} missing from file")));
        }
        if let Some(&extra) = ids.iter().find(|v| patch.binary_search(v).is_err()) {
            return Err(bad(format!("node {extra} does not belong to patch {k}")));
        }
        let mut coords = DMatrix::zeros(ids.len(), d);
        for (dst, &(_, src)) in rows.iter().enumerate() {
            coords.row_mut(dst).copy_from(&file.coords.row(src));
        }
        if let Some(pos) = coords.iter().position(|x| !x.is_finite()) {
            let row = pos % coords.nrows().max(1);
            return Err(bad(format!("non-finite coordinate for node {}", ids[row])));
        }
        out.push(PatchEmbedding::new(k, ids, coords)?);
    }
    Ok(out)
}
