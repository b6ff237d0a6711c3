//! Patch graph construction, effective-resistance sparsification and
//! overlap expansion.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graph::Graph;
use crate::partition::Partition;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchEdge {
    pub i: usize,
    pub j: usize,
    /// Sorted `P_i ∩ P_j`.
    pub overlap: Vec<usize>,
}

impl PatchEdge {
    pub fn overlap_weight(&self) -> usize {
        self.overlap.len()
    }
}

/// Patches (sorted node sets) and the edges between them. Edges are stored
/// once with `i < j`, sorted; the overlap of every edge is the intersection
/// of its two patches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGraph {
    patches: Vec<Vec<usize>>,
    edges: Vec<PatchEdge>,
}

impl PatchGraph {
    pub fn new(patches: Vec<Vec<usize>>, pairs: &[(usize, usize)]) -> Result<Self> {
        let p = patches.len();
        for (k, patch) in patches.iter().enumerate() {
            if patch.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Patch {
                    patch: k,
                    message: "node list not strictly sorted".into(),
                });
            }
        }
        let mut norm: Vec<(usize, usize)> = Vec::with_capacity(pairs.len());
        for &(a, b) in pairs {
            if a >= p || b >= p || a == b {
                return Err(Error::InvalidArgument(format!(
                    "invalid patch edge ({a}, {b}) for {p} patches"
                )));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        norm.dedup();
        let edges = norm
            .into_iter()
            .map(|(i, j)| PatchEdge {
                i,
                j,
                overlap: sorted_intersection(&patches[i], &patches[j]),
            })
            .collect();
        Ok(PatchGraph { patches, edges })
    }

    pub fn num_patches(&self) -> usize {
        self.patches.len()
    }

    pub fn patch(&self, k: usize) -> &[usize] {
        &self.patches[k]
    }

    pub fn patches(&self) -> &[Vec<usize>] {
        &self.patches
    }

    pub fn edges(&self) -> &[PatchEdge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.i, e.j)).collect()
    }

    /// Per patch: `(neighbour, edge index)` sorted by neighbour.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.num_patches()];
        for (idx, e) in self.edges.iter().enumerate() {
            adj[e.i].push((e.j, idx));
            adj[e.j].push((e.i, idx));
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    pub fn num_components(&self) -> usize {
        let p = self.num_patches();
        let mut uf = UnionFind::new(p);
        for e in &self.edges {
            uf.union(e.i, e.j);
        }
        (0..p).filter(|&k| uf.find(k) == k).count()
    }

    pub fn is_connected(&self) -> bool {
        self.num_patches() <= 1 || self.num_components() == 1
    }

    pub fn ensure_connected(&self) -> Result<()> {
        if self.is_connected() {
            Ok(())
        } else {
            Err(Error::DisconnectedPatchGraph {
                components: self.num_components(),
            })
        }
    }

    /// Number of patches containing each node of `0..n`.
    pub fn coverage(&self, n: usize) -> Result<Vec<usize>> {
        let mut cov = vec![0usize; n];
        for patch in &self.patches {
            for &v in patch {
                if v >= n {
                    return Err(Error::NodeOutOfRange { id: v, n });
                }
                cov[v] += 1;
            }
        }
        Ok(cov)
    }

    /// Smallest overlap over all patch edges, `None` without edges.
    pub fn min_overlap(&self) -> Option<usize> {
        self.edges.iter().map(PatchEdge::overlap_weight).min()
    }

    /// Write `patch_<k>.txt` files and `patch_graph.txt` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (k, patch) in self.patches.iter().enumerate() {
            let path = patch_file(dir, k);
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            for v in patch {
                writeln!(w, "{v}").map_err(|e| Error::io(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join(PATCH_GRAPH_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for e in &self.edges {
            writeln!(w, "{} {} {}", e.i, e.j, e.overlap_weight()).map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }

    /// Read what [`PatchGraph::write_dir`] wrote. Recorded overlap weights
    /// must match the patch files.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let mut patches = Vec::new();
        loop {
            let path = patch_file(dir, patches.len());
            if !path.exists() {
                break;
            }
            patches.push(read_id_list(&path)?);
        }
        if patches.is_empty() {
            return Err(Error::Empty(format!("no patch files in {}", dir.display())));
        }
        let path = dir.join(PATCH_GRAPH_FILE);
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut pairs = Vec::new();
        let mut weights = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let fields: Vec<usize> = t
                .split_whitespace()
                .map(|f| f.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse {
                    path: path.clone(),
                    line: idx + 1,
                    message: "expected \"i j w\"".into(),
                })?;
            if fields.len() != 3 {
                return Err(Error::Parse {
                    path: path.clone(),
                    line: idx + 1,
                    message: "expected \"i j w\"".into(),
                });
            }
            pairs.push((fields[0], fields[1]));
            weights.push(((fields[0].min(fields[1]), fields[0].max(fields[1])), fields[2]));
        }
        let pg = PatchGraph::new(patches, &pairs)?;
        for ((i, j), w) in weights {
            let e = pg.edges.iter().find(|e| e.i == i && e.j == j).expect("edge present");
            if e.overlap_weight() != w {
                return Err(Error::Format {
                    path: path.clone(),
                    message: format!(
                        "edge ({i}, {j}) records overlap {w}, patch files give {}",
                        e.overlap_weight()
                    ),
                });
            }
        }
        Ok(pg)
    }
}

pub const PATCH_GRAPH_FILE: &str = "patch_graph.txt";

pub fn patch_file(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("patch_{k}.txt"))
}

fn read_id_list(path: &Path) -> Result<Vec<usize>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        ids.push(t.parse::<usize>().map_err(|_| Error::Parse {
            path: path.into(),
            line: idx + 1,
            message: format!("invalid node id {t:?}"),
        })?);
    }
    Ok(ids)
}

pub(crate) fn sorted_intersection(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut x, mut y) = (0, 0);
    let mut out = Vec::new();
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[x]);
                x += 1;
                y += 1;
            }
        }
    }
    out
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Clusters become patches; two patches are adjacent iff a graph edge
/// crosses between them.
pub fn build_patch_graph(g: &Graph, part: &Partition) -> Result<PatchGraph> {
    if part.assignment().len() != g.num_nodes() {
        return Err(Error::InvalidArgument(format!(
            "partition covers {} nodes, graph has {}",
            part.assignment().len(),
            g.num_nodes()
        )));
    }
    let mut pairs: Vec<(usize, usize)> = g
        .edges()
        .filter_map(|(u, v)| {
            let (a, b) = (part.cluster_of(u), part.cluster_of(v));
            (a != b).then(|| (a.min(b), a.max(b)))
        })
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    PatchGraph::new(part.clusters().to_vec(), &pairs)
}

fn memberships(pg: &PatchGraph, n: usize) -> Result<Vec<Vec<usize>>> {
    let mut member = vec![Vec::new(); n];
    for (k, patch) in pg.patches().iter().enumerate() {
        for &v in patch {
            if v >= n {
                return Err(Error::NodeOutOfRange { id: v, n });
            }
            member[v].push(k);
        }
    }
    Ok(member)
}

/// Conductance weight per patch edge, in edge order.
///
/// `c_ij = |{(u,v) ∈ E : u ∈ P_i, v ∈ P_j}| / min(vol P_i, vol P_j)` where
/// edges are ordered pairs, so `vol P = Σ_{u ∈ P} deg(u)`.
pub fn conductance_weights(g: &Graph, pg: &PatchGraph) -> Result<Vec<f64>> {
    let member = memberships(pg, g.num_nodes())?;
    let index: HashMap<(usize, usize), usize> = pg
        .edges()
        .iter()
        .enumerate()
        .map(|(idx, e)| ((e.i, e.j), idx))
        .collect();
    let mut volume = vec![0usize; pg.num_patches()];
    let mut cross = vec![0usize; pg.num_edges()];
    for u in 0..g.num_nodes() {
        for &a in &member[u] {
            volume[a] += g.degree(u);
        }
        for &v in g.neighbors(u) {
            for &a in &member[u] {
                for &b in &member[v] {
                    if a < b {
                        if let Some(&idx) = index.get(&(a, b)) {
                            cross[idx] += 1;
                        }
                    }
                }
            }
        }
    }
    pg.edges()
        .iter()
        .zip(&cross)
        .map(|(e, &c)| {
            let denom = volume[e.i].min(volume[e.j]);
            if denom == 0 || c == 0 {
                Err(Error::InvalidArgument(format!(
                    "patch edge ({}, {}) has no crossing graph edges",
                    e.i, e.j
                )))
            } else {
                Ok(c as f64 / denom as f64)
            }
        })
        .collect()
}

/// Exact effective resistance of every patch edge in the patch graph
/// weighted by `conductance`.
///
/// Uses `L⁺ = (L + J/p)⁻¹ − J/p` for the connected weighted Laplacian `L`.
pub fn effective_resistance(pg: &PatchGraph, conductance: &[f64]) -> Result<Vec<f64>> {
    pg.ensure_connected()?;
    if conductance.len() != pg.num_edges() {
        return Err(Error::InvalidArgument(format!(
            "{} conductances for {} edges",
            conductance.len(),
            pg.num_edges()
        )));
    }
    if let Some(c) = conductance.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return Err(Error::InvalidArgument(format!("non-positive conductance {c}")));
    }
    let p = pg.num_patches();
    let shift = 1.0 / p as f64;
    let mut lap = DMatrix::from_element(p, p, shift);
    for (e, &c) in pg.edges().iter().zip(conductance) {
        lap[(e.i, e.i)] += c;
        lap[(e.j, e.j)] += c;
        lap[(e.i, e.j)] -= c;
        lap[(e.j, e.i)] -= c;
    }
    let inv = lap
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("patch Laplacian not positive definite".into()))?
        .inverse();
    Ok(pg
        .edges()
        .iter()
        .map(|e| inv[(e.i, e.i)] + inv[(e.j, e.j)] - 2.0 * inv[(e.i, e.j)])
        .collect())
}

/// Per-edge conductance and effective resistance driving the sparsifier.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsifierWeights {
    pub conductance: Vec<f64>,
    pub resistance: Vec<f64>,
}

impl SparsifierWeights {
    pub fn compute(g: &Graph, pg: &PatchGraph) -> Result<Self> {
        let conductance = conductance_weights(g, pg)?;
        let resistance = effective_resistance(pg, &conductance)?;
        Ok(SparsifierWeights {
            conductance,
            resistance,
        })
    }

    /// `r_ij · c_ij` per edge.
    pub fn sampling_weights(&self) -> Vec<f64> {
        self.conductance
            .iter()
            .zip(&self.resistance)
            .map(|(c, r)| c * r)
            .collect()
    }
}

/// Number of edges kept by [`sparsify_patch_graph`].
pub fn sparsified_edge_count(p: usize, num_edges: usize, target_degree: usize) -> usize {
    let tree = p.saturating_sub(1);
    let extra = ((target_degree.saturating_sub(1)) * p + 1).min(num_edges - tree);
    tree + extra
}

/// Maximum spanning tree under `r·c`, plus `min((k−1)p + 1, remaining)`
/// further edges drawn without replacement with probability proportional
/// to `r·c`.
pub fn sparsify_patch_graph(
    pg: &PatchGraph,
    weights: &SparsifierWeights,
    target_degree: usize,
    seed: u64,
) -> Result<PatchGraph> {
    pg.ensure_connected()?;
    if target_degree == 0 {
        return Err(Error::InvalidArgument("target degree must be at least 1".into()));
    }
    let w = weights.sampling_weights();
    if w.len() != pg.num_edges() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} edges",
            w.len(),
            pg.num_edges()
        )));
    }
    let p = pg.num_patches();
    let mut order: Vec<usize> = (0..pg.num_edges()).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    let mut uf = UnionFind::new(p);
    let mut keep = vec![false; pg.num_edges()];
    for &idx in &order {
        let e = &pg.edges()[idx];
        if uf.union(e.i, e.j) {
            keep[idx] = true;
        }
    }

    let mut rest: Vec<usize> = (0..pg.num_edges()).filter(|&idx| !keep[idx]).collect();
    let draws = ((target_degree - 1) * p + 1).min(rest.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..draws {
        let total: f64 = rest.iter().map(|&idx| w[idx]).sum();
        let mut x = rng.random::<f64>() * total;
        let mut pick = rest.len() - 1;
        for (pos, &idx) in rest.iter().enumerate() {
            if x < w[idx] {
                pick = pos;
                break;
            }
            x -= w[idx];
        }
        keep[rest.remove(pick)] = true;
    }

    let pairs: Vec<(usize, usize)> = pg
        .edges()
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(e, _)| (e.i, e.j))
        .collect();
    PatchGraph::new(pg.patches().to_vec(), &pairs)
}

/// Grow each cluster towards its patch-graph neighbours until every edge
/// overlaps in at least `min_overlap` nodes.
///
/// `pg` must have disjoint patches (the clusters). Patch `i` takes between
/// `⌈l/2⌉` and `⌊u/2⌋` nodes from each neighbouring cluster `j`, found by
/// breadth-first frontiers starting at the cluster boundary; oversized
/// frontiers are sampled uniformly.
pub fn expand_patches(
    g: &Graph,
    pg: &PatchGraph,
    min_overlap: usize,
    max_overlap: usize,
    seed: u64,
    exec: Exec,
) -> Result<PatchGraph> {
    let n = g.num_nodes();
    let target = min_overlap.div_ceil(2);
    let cap = max_overlap / 2;
    if max_overlap < min_overlap || cap < target {
        return Err(Error::InvalidArgument(format!(
            "overlap bounds l = {min_overlap}, u = {max_overlap} leave no room: need ⌊u/2⌋ ≥ ⌈l/2⌉"
        )));
    }
    let mut cluster_of = vec![usize::MAX; n];
    for (k, patch) in pg.patches().iter().enumerate() {
        for &v in patch {
            if v >= n {
                return Err(Error::NodeOutOfRange { id: v, n });
            }
            if cluster_of[v] != usize::MAX {
                return Err(Error::Patch {
                    patch: k,
                    message: format!("node {v} already belongs to patch {}", cluster_of[v]),
                });
            }
            cluster_of[v] = k;
        }
    }

    let directed: Vec<(usize, usize)> = pg
        .edges()
        .iter()
        .flat_map(|e| [(e.i, e.j), (e.j, e.i)])
        .collect();
    let additions = exec.try_map(directed.len(), |idx| {
        let (i, j) = directed[idx];
        let mut rng = ChaCha8Rng::seed_from_u64(pair_seed(seed, i, j));
        grow_towards(g, &cluster_of, pg.patch(i), i, j, target, cap, &mut rng)
    })?;

    let mut patches: Vec<Vec<usize>> = pg.patches().to_vec();
    for ((i, _), added) in directed.iter().zip(additions) {
        patches[*i].extend(added);
    }
    for patch in &mut patches {
        patch.sort_unstable();
    }
    PatchGraph::new(patches, &pg.edge_pairs())
}

fn pair_seed(seed: u64, i: usize, j: usize) -> u64 {
    let mut x = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [i as u64, j as u64] {
        x = (x ^ v).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x ^= x >> 31;
    }
    x
}

#[allow(clippy::too_many_arguments)]
fn grow_towards(
    g: &Graph,
    cluster_of: &[usize],
    cluster_i: &[usize],
    i: usize,
    j: usize,
    target: usize,
    cap: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let mut added: Vec<usize> = Vec::new();
    let mut in_patch: HashSet<usize> = HashSet::new();
    let mut frontier: Vec<usize> = cluster_i
        .iter()
        .flat_map(|&u| g.neighbors(u).iter().copied())
        .filter(|&v| cluster_of[v] == j)
        .collect();
    frontier.sort_unstable();
    frontier.dedup();

    while added.len() < target {
        if frontier.is_empty() {
            return Err(Error::FrontierExhausted {
                patch: i,
                towards: j,
                reached: added.len(),
                target,
            });
        }
        if frontier.len() + added.len() > cap {
            let want = cap - added.len();
            let mut picked: Vec<usize> = sample(rng, frontier.len(), want)
                .into_iter()
                .map(|pos| frontier[pos])
                .collect();
            picked.sort_unstable();
            frontier = picked;
        }
        for &v in &frontier {
            in_patch.insert(v);
        }
        added.extend_from_slice(&frontier);
        let mut next: Vec<usize> = frontier
            .iter()
            .flat_map(|&u| g.neighbors(u).iter().copied())
            .filter(|&v| cluster_of[v] == j && !in_patch.contains(&v))
            .collect();
        next.sort_unstable();
        next.dedup();
        frontier = next;
    }
    added.sort_unstable();
    Ok(added)
}
