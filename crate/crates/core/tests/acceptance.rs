//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! The Cora criteria read the edge list named by `L2G_CORA` (one `u v` pair
//! per line). Without it they fail and say so; a planted-partition graph of
//! the same size is then run and reported on INFO lines only.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use l2g_core::align::{
    align, build_sync_matrix, leading_eigenvectors, no_trans_baseline, AlignOptions, AlignmentResult, EigenSettings,
    RelativeTransforms,
};
use l2g_core::embed::{embed_all_patches, export_embeddings, spectral_embed, EmbedOptions, PatchEmbedding};
use l2g_core::eval::{
    auc_reconstruction, dot_product_graph, evaluate_scenarios, generate_synthetic, procrustes_distance,
    sample_non_edges, Scenario,
};
use l2g_core::graph::{largest_connected_component, load_edge_list, Graph};
use l2g_core::linalg::{gaussian_matrix, orthogonality_error, random_orthogonal};
use l2g_core::partition::{fennel_partition, FennelOptions, Partition};
use l2g_core::patch::{
    build_patch_graph, effective_resistance, expand_patches, sparsified_edge_count, sparsify_patch_graph, PatchGraph,
    SparsifierWeights,
};
use l2g_core::{l2ge, Exec};

type Outcome = Result<String, String>;

/// Worst `‖Ŝ Ŝᵀ − I‖_max` and sync nonzero excess over every alignment run.
#[derive(Default)]
struct Tally {
    runs: usize,
    transforms: usize,
    worst_orthogonality: f64,
    nnz_violations: Vec<String>,
}

static TALLY: Mutex<Tally> = Mutex::new(Tally {
    runs: 0,
    transforms: 0,
    worst_orthogonality: 0.0,
    nnz_violations: Vec::new(),
});

fn run_align(embs: &[PatchEmbedding], pg: &PatchGraph, n: usize, opts: &AlignOptions) -> AlignmentResult {
    let res = align(embs, pg, n, opts).expect("alignment");
    let d = embs[0].dim();
    let mut t = TALLY.lock().unwrap();
    t.runs += 1;
    for s in &res.transforms {
        t.transforms += 1;
        t.worst_orthogonality = t.worst_orthogonality.max(orthogonality_error(s));
    }
    let bound = 2 * pg.num_edges() * d * d;
    if res.diagnostics.sync_nnz > bound {
        let msg = format!("nnz {} > {bound} (p = {})", res.diagnostics.sync_nnz, pg.num_patches());
        t.nnz_violations.push(msg);
    }
    res
}

fn sequential() -> AlignOptions {
    AlignOptions {
        exec: Exec::Sequential,
        ..AlignOptions::default()
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- 1

fn exact_recovery() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for seed in 0..10 {
        let start = Instant::now();
        let inst = generate_synthetic(1000, 8, 10, 0.0, 9, seed).map_err(|e| e.to_string())?;
        let res = run_align(&inst.patches, &inst.pg, 1000, &AlignOptions::default());
        let elapsed = start.elapsed();
        let err = procrustes_distance(&res.global, &inst.x).map_err(|e| e.to_string())?;
        check(err < 1e-6, || format!("seed {seed}: error {err:e}"))?;
        check(elapsed < Duration::from_secs(10), || format!("seed {seed}: {elapsed:?}"))?;
        worst = worst.max(err);
        slowest = slowest.max(elapsed);
    }
    Ok(format!("max error {worst:.2e} < 1e-6 over 10 seeds, slowest {slowest:.2?}"))
}

// ---------------------------------------------------------------- 2

fn gauge_invariance() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        for sigma in [0.0, 0.01] {
            let inst = generate_synthetic(1000, 8, 10, sigma, 9, seed).map_err(|e| e.to_string())?;
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let q = random_orthogonal(8, &mut rng);
            let t = gaussian_matrix(1, 8, &mut rng) * 10.0;
            let moved: Vec<_> = inst
                .patches
                .iter()
                .map(|e| {
                    let mut e = e.clone();
                    e.coords = &e.coords * &q;
                    for mut row in e.coords.row_iter_mut() {
                        row += &t;
                    }
                    e
                })
                .collect();
            let a = run_align(&inst.patches, &inst.pg, 1000, &sequential()).global;
            let b = run_align(&moved, &inst.pg, 1000, &sequential()).global;
            // the motion applied to the first output
            let mut a_moved = &a * &q;
            for mut row in a_moved.row_iter_mut() {
                row += &t;
            }
            let dist = procrustes_distance(&a, &b).map_err(|e| e.to_string())?;
            let dist_moved = procrustes_distance(&a_moved, &b).map_err(|e| e.to_string())?;
            check(dist <= 1e-8 && dist_moved <= 1e-8, || {
                format!("seed {seed} sigma {sigma}: distance {dist:e}")
            })?;
            worst = worst.max(dist).max(dist_moved);
        }
    }
    Ok(format!("max Procrustes distance {worst:.2e} <= 1e-8 (5 seeds, sigma 0 and 0.01)"))
}

// ---------------------------------------------------------------- 3

fn noise_robustness() -> Outcome {
    let sigmas = [0.0, 0.01, 0.05];
    let mut at_001 = Vec::new();
    for seed in 0..10 {
        let errs: Vec<f64> = sigmas
            .iter()
            .map(|&s| {
                let inst = generate_synthetic(1000, 8, 10, s, 9, seed).expect("instance");
                let res = run_align(&inst.patches, &inst.pg, 1000, &AlignOptions::default());
                procrustes_distance(&res.global, &inst.x).expect("distance")
            })
            .collect();
        check(errs.windows(2).all(|w| w[0] <= w[1]), || {
            format!("seed {seed}: errors {errs:?} not monotone in sigma")
        })?;
        at_001.push(errs[1]);
    }
    at_001.sort_by(f64::total_cmp);
    let median = 0.5 * (at_001[4] + at_001[5]);
    check(median <= 0.1, || format!("median error at sigma 0.01 is {median:e} > 0.1"))?;
    Ok(format!("median error {median:.3e} <= 10 sigma = 0.1; monotone over {{0, 0.01, 0.05}} for 10 seeds"))
}

// ---------------------------------------------------------------- 4

fn orthogonality() -> Outcome {
    let t = TALLY.lock().unwrap();
    check(t.transforms > 0, || "no alignment runs recorded".into())?;
    check(t.worst_orthogonality <= 1e-9, || {
        format!("worst error {:e}", t.worst_orthogonality)
    })?;
    Ok(format!(
        "worst |S S^T - I|_max {:.2e} <= 1e-9 over {} transforms in {} alignment runs",
        t.worst_orthogonality, t.transforms, t.runs
    ))
}

// ---------------------------------------------------------------- 5 to 7

struct Prepared {
    g: Graph,
    part: Partition,
    candidates: PatchGraph,
    pg: PatchGraph,
}

const CORA_P: usize = 10;
const CORA_K: usize = 4;
const CORA_L: usize = 129;
const CORA_U: usize = 256;

fn prepare(g: Graph, seed: u64) -> Result<Prepared, String> {
    let min_size = CORA_L.div_ceil(2);
    let part = fennel_partition(&g, &FennelOptions::new(CORA_P, min_size)).map_err(|e| e.to_string())?;
    let candidates = build_patch_graph(&g, &part).map_err(|e| e.to_string())?;
    let weights = SparsifierWeights::compute(&g, &candidates).map_err(|e| e.to_string())?;
    let sparse = sparsify_patch_graph(&candidates, &weights, CORA_K, seed).map_err(|e| e.to_string())?;
    let pg = expand_patches(&g, &sparse, CORA_L, CORA_U, seed, Exec::Parallel).map_err(|e| e.to_string())?;
    Ok(Prepared {
        g,
        part,
        candidates,
        pg,
    })
}

fn patch_contracts(prep: &Prepared) -> Outcome {
    let pg = &prep.pg;
    check(pg.is_connected(), || "patch graph not connected".into())?;
    let mut min_overlap = usize::MAX;
    let mut max_side = 0;
    for e in pg.edges() {
        min_overlap = min_overlap.min(e.overlap.len());
        for (a, b) in [(e.i, e.j), (e.j, e.i)] {
            let cluster = prep.part.cluster(b);
            let side = pg.patch(a).iter().filter(|v| cluster.binary_search(v).is_ok()).count();
            max_side = max_side.max(side);
        }
    }
    check(min_overlap >= CORA_L, || format!("overlap {min_overlap} < {CORA_L}"))?;
    check(max_side < CORA_U / 2 + 1, || format!("per-side overlap {max_side} > {}", CORA_U / 2))?;
    let candidates = prep.candidates.num_edges();
    let expected = (CORA_P - 1) + ((CORA_K - 1) * CORA_P + 1).min(candidates - (CORA_P - 1));
    check(pg.num_edges() == expected, || {
        format!("{} patch edges, expected {expected} from {candidates} candidates", pg.num_edges())
    })?;
    // independent of the helper used inside the sparsifier
    check(sparsified_edge_count(CORA_P, candidates, CORA_K) == expected, || {
        "edge count helper disagrees".into()
    })?;
    Ok(format!(
        "connected; min overlap {min_overlap} >= {CORA_L}; max per-side overlap {max_side} <= {}; {} edges = {expected}",
        CORA_U / 2,
        pg.num_edges()
    ))
}

struct Sweep {
    /// `(seed, d, full, l2g, no-trans)`
    rows: Vec<(u64, usize, f64, f64, f64)>,
}

fn sweep(g: &Graph, seeds: &[u64]) -> Result<Sweep, String> {
    let mut rows = Vec::new();
    for &seed in seeds {
        let prep = prepare(g.clone(), seed)?;
        for d in [32, 64, 128] {
            let embed = EmbedOptions {
                seed,
                ..EmbedOptions::default()
            };
            let n = prep.g.num_nodes();
            let full = spectral_embed(&prep.g, d, &embed).map_err(|e| e.to_string())?;
            let patches = embed_all_patches(&prep.g, &prep.pg, d, &embed).map_err(|e| e.to_string())?;
            let aligned = run_align(&patches, &prep.pg, n, &AlignOptions { seed, ..AlignOptions::default() });
            let base = no_trans_baseline(&patches, &prep.pg, n).map_err(|e| e.to_string())?;
            let table = evaluate_scenarios(
                &prep.g,
                d,
                [(Scenario::Full, &full), (Scenario::L2g, &aligned.global), (Scenario::NoTrans, &base)],
                seed,
                Exec::Parallel,
            )
            .map_err(|e| e.to_string())?;
            let auc = |s| table.auc(s, d).expect("row");
            rows.push((seed, d, auc(Scenario::Full), auc(Scenario::L2g), auc(Scenario::NoTrans)));
        }
    }
    Ok(Sweep { rows })
}

fn beats_baseline(sweep: &Sweep) -> Outcome {
    for &(seed, d, _, l2g, base) in &sweep.rows {
        check(l2g > base, || format!("seed {seed} d {d}: l2g {l2g:.4} <= no-trans {base:.4}"))?;
    }
    let margin = sweep.rows.iter().map(|r| r.3 - r.4).fold(f64::INFINITY, f64::min);
    Ok(format!("l2g > no-trans in {} runs, smallest margin {margin:.4}", sweep.rows.len()))
}

fn gap_trend(sweep: &Sweep) -> Outcome {
    let mut parts = Vec::new();
    for seed in sweep.rows.iter().map(|r| r.0).collect::<std::collections::BTreeSet<_>>() {
        let gap = |d| {
            let r = sweep.rows.iter().find(|r| r.0 == seed && r.1 == d).expect("row");
            r.2 - r.3
        };
        let (g32, g64, g128) = (gap(32), gap(64), gap(128));
        check(g128 <= g32, || format!("seed {seed}: gap {g128:.4} at d=128 > {g32:.4} at d=32"))?;
        parts.push(format!("seed {seed}: {g32:.4} / {g64:.4} / {g128:.4}"));
    }
    Ok(format!("gap full - l2g at d = 32/64/128, {}", parts.join("; ")))
}

fn synthetic_beats_baseline() -> Outcome {
    let mut margins = Vec::new();
    for seed in 0..5 {
        let inst = generate_synthetic(1000, 8, 10, 0.0, 9, seed).map_err(|e| e.to_string())?;
        let g = dot_product_graph(&inst.x, 10, Exec::Parallel).map_err(|e| e.to_string())?;
        let res = run_align(&inst.patches, &inst.pg, 1000, &AlignOptions::default());
        let base = no_trans_baseline(&inst.patches, &inst.pg, 1000).map_err(|e| e.to_string())?;
        let l2g = auc_reconstruction(&res.global, &g, seed).map_err(|e| e.to_string())?.auc;
        let none = auc_reconstruction(&base, &g, seed).map_err(|e| e.to_string())?.auc;
        check(l2g > none, || format!("synthetic seed {seed}: l2g {l2g:.4} <= no-trans {none:.4}"))?;
        margins.push(l2g - none);
    }
    let min = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(format!("synthetic: l2g > no-trans for 5 seeds, smallest margin {min:.4}"))
}

fn load_cora() -> Result<Graph, String> {
    let path = std::env::var("L2G_CORA").map_err(|_| "L2G_CORA not set; the Cora edge list is not available".to_string())?;
    let (raw, _) = load_edge_list(Path::new(&path)).map_err(|e| e.to_string())?;
    let (g, _) = largest_connected_component(&raw).map_err(|e| e.to_string())?;
    check(g.num_nodes() == 2485 && 2 * g.num_edges() == 10138, || {
        format!(
            "{path}: LCC has {} nodes and {} ordered edges, expected 2485 and 10138",
            g.num_nodes(),
            2 * g.num_edges()
        )
    })?;
    Ok(g)
}

/// Planted partition with Cora's node count, class count and mean degree.
fn cora_sized_proxy(seed: u64) -> Graph {
    let (n, blocks) = (2485usize, 7usize);
    let (p_in, p_out) = (0.0092, 0.00038);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if u * blocks / n == v * blocks / n { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let raw = Graph::from_edges(n, &edges).expect("proxy graph");
    largest_connected_component(&raw).expect("lcc").0
}

// ---------------------------------------------------------------- 8

fn oracle_equivalences() -> Outcome {
    let auc_cases = auc_matches_enumeration()?;
    let er_cases = resistance_matches_pseudoinverse()?;
    let (eig_cases, worst_angle) = eigenvectors_match_dense()?;
    Ok(format!(
        "AUC exact on {auc_cases} graphs (n <= 8); resistance within 1e-10 on {er_cases} patch graphs (p <= 10); \
         eigenvectors on {eig_cases} instances (pd <= 200), max principal angle sine {worst_angle:.1e}"
    ))
}

fn auc_matches_enumeration() -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut cases = 0;
    while cases < 300 {
        let n = rng.random_range(3..=8);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random::<f64>() < 0.4 {
                    edges.push((u, v));
                }
            }
        }
        let g = Graph::from_edges(n, &edges).map_err(|e| e.to_string())?;
        let m = g.num_edges();
        if m == 0 || m > n * (n - 1) / 2 - m {
            continue;
        }
        // small integer coordinates make ties common
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-2i32..=2) as f64);
        let seed = rng.random::<u64>();
        let report = auc_reconstruction(&x, &g, seed).map_err(|e| e.to_string())?;

        let negatives = sample_non_edges(&g, m, seed).map_err(|e| e.to_string())?;
        let mut distinct = negatives.clone();
        distinct.sort_unstable();
        distinct.dedup();
        check(distinct.len() == m, || "repeated negative pair".into())?;
        check(negatives.iter().all(|&(u, v)| u < v && !edges.contains(&(u, v))), || {
            "negative pair is an edge".into()
        })?;
        let score = |u: usize, v: usize| x.row(u).dot(&x.row(v));
        let mut twice_wins = 0u64;
        for &(a, b) in &edges {
            for &(c, d) in &negatives {
                let (sp, sn) = (score(a, b), score(c, d));
                twice_wins += if sp > sn { 2 } else if sp == sn { 1 } else { 0 };
            }
        }
        let brute = twice_wins as f64 / (2 * m * m) as f64;
        check(report.auc == brute, || format!("n {n}: auc {} != enumeration {brute}", report.auc))?;
        cases += 1;
    }
    Ok(cases)
}

fn resistance_matches_pseudoinverse() -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut cases = 0;
    for p in 2..=10usize {
        for _ in 0..20 {
            // random spanning tree plus random extra edges
            let mut pairs: Vec<(usize, usize)> = (1..p).map(|k| (rng.random_range(0..k), k)).collect();
            for a in 0..p {
                for b in a + 1..p {
                    if rng.random::<f64>() < 0.3 && !pairs.contains(&(a, b)) {
                        pairs.push((a, b));
                    }
                }
            }
            let patches: Vec<Vec<usize>> = (0..p).map(|k| vec![k]).collect();
            let pg = PatchGraph::new(patches, &pairs).map_err(|e| e.to_string())?;
            let conductance: Vec<f64> = (0..pg.num_edges()).map(|_| rng.random_range(0.05..3.0)).collect();
            let r = effective_resistance(&pg, &conductance).map_err(|e| e.to_string())?;

            let mut lap = DMatrix::<f64>::zeros(p, p);
            for (e, &c) in pg.edges().iter().zip(&conductance) {
                lap[(e.i, e.i)] += c;
                lap[(e.j, e.j)] += c;
                lap[(e.i, e.j)] -= c;
                lap[(e.j, e.i)] -= c;
            }
            let pinv = lap.pseudo_inverse(1e-12).map_err(|e| e.to_string())?;
            for (idx, e) in pg.edges().iter().enumerate() {
                let mut b = DVector::<f64>::zeros(p);
                b[e.i] = 1.0;
                b[e.j] = -1.0;
                let oracle = b.dot(&(&pinv * &b));
                check((r[idx] - oracle).abs() <= 1e-10, || {
                    format!("p {p} edge ({}, {}): {} vs {oracle}", e.i, e.j, r[idx])
                })?;
            }
            cases += 1;
        }
    }
    Ok(cases)
}

fn principal_angle_sine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    (&qb - &qa * (qa.transpose() * &qb)).svd(false, false).singular_values.max()
}

fn eigenvectors_match_dense() -> Result<(usize, f64), String> {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for (p, d, sigma) in [(10, 8, 0.05), (20, 8, 0.1), (25, 8, 0.05), (40, 5, 0.2), (12, 3, 0.3)] {
        assert!(p * d <= 200);
        let l = 3 * d;
        let inst = generate_synthetic(p * 2 * l, d, p, sigma, l, p as u64).map_err(|e| e.to_string())?;
        let rel = RelativeTransforms::estimate(&inst.patches, &inst.pg, Exec::Sequential).map_err(|e| e.to_string())?;
        let sync = build_sync_matrix(&rel, &inst.pg).map_err(|e| e.to_string())?;

        let m = sync.to_dense();
        let half = DVector::from_iterator(p * d, (0..p * d).map(|r| sync.degree()[r / d].sqrt()));
        let sym = DMatrix::from_fn(p * d, p * d, |r, c| half[r] * m[(r, c)] / half[c]);
        let sym = (&sym + sym.transpose()) * 0.5;
        let se = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..p * d).collect();
        order.sort_by(|&a, &b| se.eigenvalues[b].total_cmp(&se.eigenvalues[a]));
        let oracle = DMatrix::from_fn(p * d, d, |r, c| se.eigenvectors[(r, order[c])] / half[r]);
        // the wanted subspace is only defined when λ_d is separated from λ_{d+1}
        let gap = se.eigenvalues[order[d - 1]] - se.eigenvalues[order[d]];
        check(gap > 1e-3, || format!("p {p} d {d}: oracle gap {gap:e} leaves the subspace undefined"))?;

        for warm_start in [false, true] {
            let settings = EigenSettings {
                dense_below: 0,
                warm_start,
                exec: Exec::Sequential,
                ..EigenSettings::new(d)
            };
            let eig = leading_eigenvectors(&sync, d, &settings).map_err(|e| e.to_string())?;
            let angle = principal_angle_sine(&eig.u, &oracle);
            check(angle < 1e-8, || format!("p {p} d {d} warm {warm_start}: sine {angle:e}"))?;
            worst = worst.max(angle);
            cases += 1;
        }
    }
    Ok((cases, worst))
}

// ---------------------------------------------------------------- 9

fn pipeline_files(g: &Graph, dir: &Path) -> Result<Vec<Vec<u8>>, String> {
    let opts = FennelOptions {
        seed: 3,
        shuffle: true,
        ..FennelOptions::new(10, 9)
    };
    let part = fennel_partition(g, &opts).map_err(|e| e.to_string())?;
    let candidates = build_patch_graph(g, &part).map_err(|e| e.to_string())?;
    let weights = SparsifierWeights::compute(g, &candidates).map_err(|e| e.to_string())?;
    let sparse = sparsify_patch_graph(&candidates, &weights, 4, 3).map_err(|e| e.to_string())?;
    let pg = expand_patches(g, &sparse, 17, 34, 3, Exec::Sequential).map_err(|e| e.to_string())?;
    let embed = EmbedOptions {
        seed: 3,
        exec: Exec::Sequential,
        ..EmbedOptions::default()
    };
    let embs = embed_all_patches(g, &pg, 8, &embed).map_err(|e| e.to_string())?;
    export_embeddings(dir, &embs).map_err(|e| e.to_string())?;
    let res = run_align(&embs, &pg, g.num_nodes(), &sequential());
    let ids: Vec<u64> = (0..g.num_nodes() as u64).collect();
    l2ge::write(&dir.join("global.l2ge"), &ids, &res.global).map_err(|e| e.to_string())?;
    let mut names: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| e.expect("dir entry").path())
        .collect();
    names.sort();
    names.iter().map(|p| std::fs::read(p).map_err(|e| e.to_string())).collect()
}

fn determinism() -> Outcome {
    let g = planted_graph(600, 6, 0.08, 0.004, 21);
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fa = pipeline_files(&g, a.path())?;
    let fb = pipeline_files(&g, b.path())?;
    check(fa.len() == fb.len() && fa == fb, || "embedding files differ between runs".into())?;
    let bytes: usize = fa.iter().map(Vec::len).sum();
    Ok(format!("{} L2GE files ({bytes} bytes) bit-identical across two sequential runs", fa.len()))
}

fn planted_graph(n: usize, blocks: usize, p_in: f64, p_out: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if u * blocks / n == v * blocks / n { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    largest_connected_component(&Graph::from_edges(n, &edges).expect("graph")).expect("lcc").0
}

// ---------------------------------------------------------------- 10

/// Planted instance over a patch graph shaped like the sparsifier output:
/// a ring plus `p` random chords, so the mean patch degree is about 4.
/// Every patch edge lends a private slice of `⌈l/2⌉` nodes in each direction.
fn chorded_instance(p: usize, block: usize, d: usize, sigma: f64, seed: u64) -> (Vec<PatchEmbedding>, PatchGraph) {
    let half = (d + 1).div_ceil(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(usize, usize)> = (0..p).map(|k| (k.min((k + 1) % p), k.max((k + 1) % p))).collect();
    let mut lent = vec![2usize; p];
    while pairs.len() < 2 * p {
        let (a, b) = (rng.random_range(0..p), rng.random_range(0..p));
        let pair = (a.min(b), a.max(b));
        if a == b || pairs.contains(&pair) || (lent[a] + 1) * half > block || (lent[b] + 1) * half > block {
            continue;
        }
        lent[a] += 1;
        lent[b] += 1;
        pairs.push(pair);
    }
    let mut patches: Vec<Vec<usize>> = (0..p).map(|k| (k * block..(k + 1) * block).collect()).collect();
    let mut slot = vec![0usize; p];
    for &(a, b) in &pairs {
        for (from, to) in [(a, b), (b, a)] {
            let start = from * block + slot[from] * half;
            slot[from] += 1;
            patches[to].extend(start..start + half);
        }
    }
    for patch in &mut patches {
        patch.sort_unstable();
    }
    let pg = PatchGraph::new(patches, &pairs).expect("patch graph");
    let x = gaussian_matrix(p * block, d, &mut rng);
    let embs = (0..p)
        .map(|k| {
            let s = random_orthogonal(d, &mut rng);
            let t = gaussian_matrix(1, d, &mut rng) * 5.0;
            let nodes = pg.patch(k).to_vec();
            let mut coords = x.select_rows(&nodes) * s.transpose() + gaussian_matrix(nodes.len(), d, &mut rng) * sigma;
            for mut row in coords.row_iter_mut() {
                row += &t;
            }
            PatchEmbedding::new(k, nodes, coords).expect("embedding")
        })
        .collect();
    (embs, pg)
}

/// Best of three sequential alignments, with the sync nonzeros and their bound.
fn alignment_time(embs: &[PatchEmbedding], pg: &PatchGraph) -> (Duration, usize, usize) {
    let n = pg.patches().iter().flatten().max().map_or(0, |m| m + 1);
    let d = embs[0].dim();
    let mut best = Duration::MAX;
    let mut nnz = 0;
    for _ in 0..3 {
        let start = Instant::now();
        let res = run_align(embs, pg, n, &sequential());
        best = best.min(start.elapsed());
        nnz = res.diagnostics.sync_nnz;
    }
    (best, nnz, 2 * pg.num_edges() * d * d)
}

/// Total alignment time over five random chorded instances with `p` patches.
/// One instance is too noisy: its eigensolver iteration count moves in steps.
fn chorded_time(p: usize) -> Result<Duration, String> {
    let (d, block, sigma) = (8, 100, 0.01);
    let mut total = Duration::ZERO;
    for seed in 10..15 {
        let (embs, pg) = chorded_instance(p, block, d, sigma, seed);
        let (t, nnz, bound) = alignment_time(&embs, &pg);
        check(nnz <= bound, || format!("nnz {nnz} > {bound} (p = {p}, seed {seed})"))?;
        total += t;
    }
    Ok(total)
}

fn scalability(info: &mut Vec<String>) -> Outcome {
    let (d, block, sigma) = (8, 100, 0.01);
    let t32 = chorded_time(32)?;
    let t64 = chorded_time(64)?;

    let ring32 = generate_synthetic(32 * block, d, 32, sigma, d + 1, 10).map_err(|e| e.to_string())?;
    let ring64 = generate_synthetic(64 * block, d, 64, sigma, d + 1, 10).map_err(|e| e.to_string())?;
    let (r32, _, _) = alignment_time(&ring32.patches, &ring32.pg);
    let (r64, _, _) = alignment_time(&ring64.patches, &ring64.pg);
    info.push(format!(
        "ring layout (spectral gap shrinking as 1/p^2), p 32 -> 64: {r32:.2?} -> {r64:.2?}, ratio {:.2}",
        r64.as_secs_f64() / r32.as_secs_f64()
    ));

    let violations = TALLY.lock().unwrap().nnz_violations.clone();
    check(violations.is_empty(), || violations.join("; "))?;
    let ratio = t64.as_secs_f64() / t32.as_secs_f64();
    check(ratio <= 2.5, || format!("time ratio {ratio:.2} > 2.5 ({t32:.2?} -> {t64:.2?})"))?;
    Ok(format!(
        "nnz <= 2|E|d^2 in every run; degree-4 patch graphs, 5 instances each, p 32 -> 64: {t32:.2?} -> {t64:.2?}, ratio {ratio:.2} <= 2.5"
    ))
}

// ----------------------------------------------------------------

fn guarded<T>(label: &str, f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f));
    eprintln!("acceptance: {label} took {:.1?}", start.elapsed());
    match result {
        Ok(r) => r,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        }
    }
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut info = Vec::new();

    results.push((1, "noise-free exact recovery", guarded("criterion 1", exact_recovery)));
    results.push((2, "gauge invariance", guarded("criterion 2", gauge_invariance)));
    results.push((3, "noise robustness", guarded("criterion 3", noise_robustness)));

    let (c5, c6, c7) = match load_cora() {
        Ok(g) => {
            let c5 = guarded("criterion 5", || patch_contracts(&prepare(g.clone(), 0)?));
            let (c6, c7) = evaluate_sweep(guarded("criteria 6 and 7 sweep", || sweep(&g, &[0, 1])));
            (c5, c6, c7)
        }
        Err(reason) => {
            let proxy = cora_sized_proxy(5);
            info.push(format!(
                "cora-sized planted partition ({} nodes, {} ordered edges), reported for reference only:",
                proxy.num_nodes(),
                2 * proxy.num_edges()
            ));
            let p5 = guarded("proxy patch contracts", || patch_contracts(&prepare(proxy.clone(), 0)?));
            let (p6, p7) = evaluate_sweep(guarded("proxy sweep", || sweep(&proxy, &[0])));
            info.push(format!("  patch contracts: {}", show(&p5)));
            info.push(format!("  l2g vs no-trans: {}", show(&p6)));
            info.push(format!("  gap trend: {}", show(&p7)));
            (Err(reason.clone()), Err(reason.clone()), Err(reason))
        }
    };
    results.push((5, "patch construction contracts on Cora", c5));
    let synth = guarded("criterion 6 synthetic", synthetic_beats_baseline);
    let c6 = match (synth, c6) {
        (Ok(s), Ok(c)) => Ok(format!("{s}; Cora: {c}")),
        (Ok(s), Err(c)) => Err(format!("{s}; Cora: {c}")),
        (Err(s), _) => Err(s),
    };
    results.push((6, "alignment beats the unaligned baseline", c6));
    results.push((7, "gap trend on Cora (ordering only)", c7));
    results.push((8, "oracle equivalences", guarded("criterion 8", oracle_equivalences)));
    results.push((9, "determinism", guarded("criterion 9", determinism)));
    results.push((10, "scalability shape", guarded("criterion 10", || scalability(&mut info))));
    // runs last so that it covers every alignment above
    results.push((4, "orthogonality of emitted transforms", guarded("criterion 4", orthogonality)));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (id, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {id:>2}: PASS  {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("criterion {id:>2}: FAIL  {name}: {reason}");
            }
        }
    }
    for line in &info {
        println!("INFO {line}");
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn evaluate_sweep(sweep: Result<Sweep, String>) -> (Outcome, Outcome) {
    match sweep {
        Ok(s) => (beats_baseline(&s), gap_trend(&s)),
        Err(e) => (Err(e.clone()), Err(e)),
    }
}

fn show(o: &Outcome) -> String {
    match o {
        Ok(s) => format!("holds: {s}"),
        Err(s) => format!("does not hold: {s}"),
    }
}
