//! Reconstruction AUC, Procrustes recovery error, synthetic benchmark
//! instances and the full / l2g / no-trans comparison.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::align::{align, no_trans_baseline, AlignOptions};
use crate::embed::{embed_all_patches, spectral_embed, EmbedOptions, PatchEmbedding};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graph::Graph;
use crate::linalg::{center_columns, gaussian_matrix, random_orthogonal, RANK_TOL};
use crate::patch::PatchGraph;

#[derive(Debug, Clone, PartialEq)]
pub struct AucReport {
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
    pub seed: u64,
}

/// `m` distinct non-adjacent pairs `u < v`, uniformly at random.
pub fn sample_non_edges(g: &Graph, count: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let n = g.num_nodes() as u128;
    let available = n * n.saturating_sub(1) / 2 - g.num_edges() as u128;
    if count as u128 > available {
        return Err(Error::NotEnoughNonEdges {
            requested: count,
            available: available as usize,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.num_nodes();
    if (count as u128) * 2 <= available {
        // sparse regime: rejection sampling
        let mut seen = HashSet::with_capacity(count);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b {
                continue;
            }
            let pair = (a.min(b), a.max(b));
            if g.has_edge(pair.0, pair.1) || !seen.insert(pair) {
                continue;
            }
            out.push(pair);
        }
        Ok(out)
    } else {
        // dense regime: enumerate and pick a uniform subset
        let mut all = Vec::with_capacity(available as usize);
        for u in 0..n {
            for v in u + 1..n {
                if !g.has_edge(u, v) {
                    all.push((u, v));
                }
            }
        }
        let mut idx = sample(&mut rng, all.len(), count).into_vec();
        idx.sort_unstable();
        Ok(idx.into_iter().map(|i| all[i]).collect())
    }
}

/// Probability that a random positive outscores a random negative, ties
/// counted one half. Exact pair counting on sorted negatives.
pub fn auc_from_scores(positive: &[f64], negative: &[f64]) -> f64 {
    if positive.is_empty() || negative.is_empty() {
        return f64::NAN;
    }
    let mut neg = negative.to_vec();
    neg.sort_by(f64::total_cmp);
    let mut twice_wins: u128 = 0;
    for &s in positive {
        let below = neg.partition_point(|&x| x < s);
        let not_above = neg.partition_point(|&x| x <= s);
        twice_wins += 2 * below as u128 + (not_above - below) as u128;
    }
    twice_wins as f64 / (2 * positive.len() as u128 * negative.len() as u128) as f64
}

fn dot_rows(x: &DMatrix<f64>, u: usize, v: usize) -> f64 {
    let mut s = 0.0;
    for c in 0..x.ncols() {
        s += x[(u, c)] * x[(v, c)];
    }
    s
}

/// Edge reconstruction AUC with dot-product scores against as many sampled
/// non-edges as there are edges.
pub fn auc_reconstruction(x: &DMatrix<f64>, g: &Graph, seed: u64) -> Result<AucReport> {
    if x.nrows() != g.num_nodes() {
        return Err(Error::InvalidArgument(format!(
            "embedding has {} rows for {} nodes",
            x.nrows(),
            g.num_nodes()
        )));
    }
    let m = g.num_edges();
    let negatives = sample_non_edges(g, m, seed)?;
    let pos: Vec<f64> = g.edges().map(|(u, v)| dot_rows(x, u, v)).collect();
    let neg: Vec<f64> = negatives.iter().map(|&(u, v)| dot_rows(x, u, v)).collect();
    Ok(AucReport {
        auc: auc_from_scores(&pos, &neg),
        positives: pos.len(),
        negatives: neg.len(),
        seed,
    })
}

#[derive(Debug, Clone)]
pub struct Procrustes {
    /// `‖X Qᵀ + 1tᵀ − Y‖_F / √n` at the optimum.
    pub distance: f64,
    pub rotation: DMatrix<f64>,
    pub translation: DVector<f64>,
    /// Centred `X` has numerical rank below `d`.
    pub degenerate: bool,
}

/// Best rigid motion (rotations and reflections) taking `x` onto `y`.
pub fn procrustes(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Procrustes> {
    if x.shape() != y.shape() {
        return Err(Error::InvalidArgument(format!(
            "shapes {:?} and {:?} differ",
            x.shape(),
            y.shape()
        )));
    }
    let (n, d) = x.shape();
    if n < d + 1 {
        return Err(Error::InvalidArgument(format!("{n} points cannot fix a rigid motion in dimension {d}")));
    }
    let mut xc = x.clone();
    let mut yc = y.clone();
    let mx = center_columns(&mut xc);
    let my = center_columns(&mut yc);
    let svd = (xc.transpose() * &yc).svd(true, true);
    let u = svd.u.expect("u requested");
    let v = svd.v_t.expect("v_t requested").transpose();
    let q = v * u.transpose();
    let translation = &my - &q * &mx;
    let mut residual = x * q.transpose() - y;
    for mut row in residual.row_iter_mut() {
        row += translation.transpose();
    }
    let distance = residual.norm() / (n as f64).sqrt();
    let sx = xc.svd(false, false).singular_values;
    let smax = sx.max();
    let degenerate = smax == 0.0 || sx.min() < RANK_TOL * smax;
    Ok(Procrustes {
        distance,
        rotation: q,
        translation,
        degenerate,
    })
}

pub fn procrustes_distance(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    procrustes(x, y).map(|p| p.distance)
}

#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    /// Ground truth, `n × d`.
    pub x: DMatrix<f64>,
    pub pg: PatchGraph,
    pub patches: Vec<PatchEmbedding>,
    pub transforms: Vec<DMatrix<f64>>,
    /// `p × d`.
    pub translations: DMatrix<f64>,
    pub sigma: f64,
    pub seed: u64,
}

/// Scale of the planted translations.
pub const TRANSLATION_SCALE: f64 = 5.0;

/// Ring of `p` patches over contiguous node blocks; each patch borrows
/// `⌈l/2⌉` nodes from both neighbouring blocks and observes
/// `X S_kᵀ + 1 t_kᵀ + σ N`.
///
/// All random draws are made in the same order whatever `σ` is, so instances
/// differing only in `σ` share `X`, the planted motions and the noise
/// pattern.
pub fn generate_synthetic(n: usize, d: usize, p: usize, sigma: f64, l: usize, seed: u64) -> Result<SyntheticInstance> {
    if p == 0 || d == 0 {
        return Err(Error::InvalidArgument("need p ≥ 1 and d ≥ 1".into()));
    }
    if n < p * (d + 1) {
        return Err(Error::InvalidArgument(format!("n = {n} < p·(d+1) = {}", p * (d + 1))));
    }
    if l < d + 1 {
        return Err(Error::InvalidArgument(format!("overlap l = {l} < d + 1 = {}", d + 1)));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise level {sigma} is not a finite non-negative number")));
    }
    let base = n / p;
    let extra = n % p;
    let starts: Vec<usize> = (0..=p).map(|k| k * base + k.min(extra)).collect();
    let half = l.div_ceil(2);
    if p > 1 && half > base {
        return Err(Error::InvalidArgument(format!(
            "blocks of {base} nodes cannot lend ⌈l/2⌉ = {half} nodes"
        )));
    }
    let patches: Vec<Vec<usize>> = (0..p)
        .map(|k| {
            let mut nodes: Vec<usize> = (starts[k]..starts[k + 1]).collect();
            if p > 1 {
                let next = (k + 1) % p;
                let prev = (k + p - 1) % p;
                nodes.extend(starts[next]..starts[next] + half);
                nodes.extend(starts[prev + 1] - half..starts[prev + 1]);
            }
            nodes.sort_unstable();
            nodes.dedup();
            nodes
        })
        .collect();
    let pairs: Vec<(usize, usize)> = if p == 1 {
        Vec::new()
    } else {
        (0..p).map(|k| (k, (k + 1) % p)).collect()
    };
    let pg = PatchGraph::new(patches, &pairs)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = gaussian_matrix(n, d, &mut rng);
    let mut transforms = Vec::with_capacity(p);
    let mut translations = DMatrix::zeros(p, d);
    let mut embeddings = Vec::with_capacity(p);
    for k in 0..p {
        let s = random_orthogonal(d, &mut rng);
        let t = gaussian_matrix(1, d, &mut rng) * TRANSLATION_SCALE;
        let nodes = pg.patch(k).to_vec();
        let noise = gaussian_matrix(nodes.len(), d, &mut rng);
        let mut coords = x.select_rows(&nodes) * s.transpose() + noise * sigma;
        for mut row in coords.row_iter_mut() {
            row += &t;
        }
        translations.set_row(k, &t.row(0));
        transforms.push(s);
        embeddings.push(PatchEmbedding::new(k, nodes, coords)?);
    }
    Ok(SyntheticInstance {
        x,
        pg,
        patches: embeddings,
        transforms,
        translations,
        sigma,
        seed,
    })
}

/// Graph joining every node to the `k` nodes with the largest dot product,
/// a ground truth for AUC evaluation of embeddings without a source graph.
pub fn dot_product_graph(x: &DMatrix<f64>, k: usize, exec: Exec) -> Result<Graph> {
    let n = x.nrows();
    let xt = x.transpose();
    let lists = exec.map(n, |u| {
        let mut scores: Vec<(f64, usize)> = (0..n)
            .filter(|&v| v != u)
            .map(|v| (xt.column(u).dot(&xt.column(v)), v))
            .collect();
        let k = k.min(scores.len());
        if k == 0 {
            return Vec::new();
        }
        scores.select_nth_unstable_by(k - 1, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        scores[..k].iter().map(|&(_, v)| (u.min(v), u.max(v))).collect::<Vec<_>>()
    });
    let edges: Vec<(usize, usize)> = lists.into_iter().flatten().collect();
    Graph::from_edges(n, &edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    Full,
    L2g,
    NoTrans,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Full, Scenario::L2g, Scenario::NoTrans];

    pub fn tag(self) -> &'static str {
        match self {
            Scenario::Full => "full",
            Scenario::L2g => "l2g",
            Scenario::NoTrans => "no-trans",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRow {
    pub scenario: Scenario,
    pub d: usize,
    pub report: AucReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTable {
    pub rows: Vec<ScenarioRow>,
}

impl ScenarioTable {
    pub fn auc(&self, scenario: Scenario, d: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.d == d)
            .map(|r| r.report.auc)
    }

    pub fn extend(&mut self, other: ScenarioTable) {
        self.rows.extend(other.rows);
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.rows.iter().map(|r| r.d).collect();
        d.sort_unstable();
        d.dedup();
        d
    }
}

/// Evaluate already computed embeddings of the three scenarios on `g`, all
/// against the same negative sample.
pub fn evaluate_scenarios(
    g: &Graph,
    d: usize,
    embeddings: [(Scenario, &DMatrix<f64>); 3],
    seed: u64,
    exec: Exec,
) -> Result<ScenarioTable> {
    let rows = exec.try_map(3, |i| {
        let (scenario, x) = embeddings[i];
        auc_reconstruction(x, g, seed).map(|report| ScenarioRow { scenario, d, report })
    })?;
    Ok(ScenarioTable { rows })
}

#[derive(Debug, Clone, Default)]
pub struct CompareOptions {
    pub embed: EmbedOptions,
    pub align: AlignOptions,
}

/// Run the three scenarios end to end: spectral embedding of the whole
/// graph, aligned patch embeddings, and unaligned patch embeddings.
pub fn compare_scenarios(g: &Graph, pg: &PatchGraph, d: usize, seed: u64, opts: &CompareOptions) -> Result<ScenarioTable> {
    let n = g.num_nodes();
    let full = spectral_embed(g, d, &opts.embed)?;
    let patches = embed_all_patches(g, pg, d, &opts.embed)?;
    let aligned = align(&patches, pg, n, &opts.align)?;
    let baseline = no_trans_baseline(&patches, pg, n)?;
    evaluate_scenarios(
        g,
        d,
        [
            (Scenario::Full, &full),
            (Scenario::L2g, &aligned.global),
            (Scenario::NoTrans, &baseline),
        ],
        seed,
        opts.align.exec,
    )
}

/// Tab-separated `scenario d auc positives negatives seed`.
pub fn write_report(path: &Path, table: &ScenarioTable) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "scenario\td\tauc\tpositives\tnegatives\tseed").map_err(io)?;
    for r in &table.rows {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.scenario.tag(),
            r.d,
            r.report.auc,
            r.report.positives,
            r.report.negatives,
            r.report.seed
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// One row per dimension: `d full l2g no-trans`.
pub fn write_series(path: &Path, table: &ScenarioTable) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "d\tfull\tl2g\tno-trans").map_err(io)?;
    for d in table.dims() {
        let cell = |s| table.auc(s, d).map_or_else(|| "NA".to_string(), |a| a.to_string());
        writeln!(
            w,
            "{d}\t{}\t{}\t{}",
            cell(Scenario::Full),
            cell(Scenario::L2g),
            cell(Scenario::NoTrans)
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
