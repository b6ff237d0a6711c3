//! One function per subcommand. Each reads its inputs from the workdir,
//! writes its artifacts there and updates the manifest.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use l2g_core::align::{self as aligner, no_trans_baseline, write_transforms, AlignOptions};
use l2g_core::embed::{embed_all_patches, embedding_file, export_embeddings, import_embeddings, spectral_embed, EmbedOptions};
use l2g_core::eval::{
    compare_scenarios, dot_product_graph, evaluate_scenarios, generate_synthetic, procrustes_distance, write_report,
    write_series, CompareOptions, Scenario, ScenarioTable,
};
use l2g_core::graph::{largest_connected_component, load_edge_list, read_indexed_edge_list, Graph, NodeMapping};
use l2g_core::partition::{fennel_partition, partition_quality, FennelOptions, Partition};
use l2g_core::patch::{
    build_patch_graph, expand_patches, patch_file, sparsify_patch_graph, PatchGraph, SparsifierWeights, PATCH_GRAPH_FILE,
};
use l2g_core::{l2ge, Exec};

use crate::config::Config;
use crate::manifest::Manifest;
use crate::Failure;

const GRAPH: &str = "graph.txt";
const MAPPING: &str = "mapping.txt";
const PARTITION: &str = "partition.txt";
const PATCH_DIR: &str = "patches";
const EMBED_DIR: &str = "embeddings";
const GLOBAL: &str = "global.l2ge";
const TRANSFORMS: &str = "transforms.txt";
const GROUND_TRUTH: &str = "ground_truth.l2ge";
const REPORT: &str = "report.tsv";
const SERIES: &str = "series.tsv";

pub struct Ctx {
    pub cfg: Config,
    pub exec: Exec,
    pub workdir: PathBuf,
    pub manifest: Manifest,
}

impl Ctx {
    pub fn open(cfg: Config, exec: Exec) -> Result<Self> {
        let workdir = cfg.workdir.clone();
        std::fs::create_dir_all(&workdir).with_context(|| format!("creating {}", workdir.display()))?;
        let manifest = Manifest::load(&workdir)?;
        Ok(Ctx {
            cfg,
            exec,
            workdir,
            manifest,
        })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.workdir.join(rel)
    }

    fn begin(&mut self, stage: &str) {
        self.manifest.clear_stage(stage);
        let hash = self.cfg.hash();
        self.manifest.set(&format!("stage.{stage}.config_hash"), hash);
        self.manifest.set(&format!("stage.{stage}.seed"), self.cfg.seed);
    }

    fn consume(&mut self, stage: &str, rel: &str, producer: &str) -> Result<PathBuf> {
        self.manifest.consume(&self.workdir, stage, rel, producer)?;
        Ok(self.path(rel))
    }

    fn output(&mut self, stage: &str, rel: &str) -> Result<()> {
        self.manifest.record_output(&self.workdir, stage, rel)
    }

    fn fact(&mut self, stage: &str, key: &str, value: impl ToString) {
        self.manifest.set(&format!("stage.{stage}.{key}"), value);
    }

    fn finish(&mut self) -> Result<()> {
        self.manifest.save(&self.workdir)
    }

    fn load_graph(&mut self, stage: &str) -> Result<Graph> {
        let path = self.consume(stage, GRAPH, "partition")?;
        Ok(read_indexed_edge_list(&path)?)
    }

    /// Patch graph files; the patch count comes from `patch_graph.txt`'s
    /// producer record or the files present.
    fn load_patches(&mut self, stage: &str) -> Result<PatchGraph> {
        let graph_rel = format!("{PATCH_DIR}/{PATCH_GRAPH_FILE}");
        self.consume(stage, &graph_rel, "patches")?;
        let dir = self.path(PATCH_DIR);
        let pg = PatchGraph::read_dir(&dir)?;
        for k in 0..pg.num_patches() {
            self.consume(stage, &patch_rel(k), "patches")?;
        }
        Ok(pg)
    }

    fn load_embeddings(&mut self, stage: &str, pg: &PatchGraph) -> Result<Vec<l2g_core::embed::PatchEmbedding>> {
        let mut paths = Vec::with_capacity(pg.num_patches());
        for k in 0..pg.num_patches() {
            let rel = embed_rel(k);
            if !self.path(&rel).exists() {
                return Err(Failure::missing(format!(
                    "missing {}; run `l2g embed` first or place externally trained patch_<k>.l2ge files in {}",
                    self.path(&rel).display(),
                    self.path(EMBED_DIR).display()
                ))
                .into());
            }
            paths.push(self.consume(stage, &rel, "embed")?);
        }
        Ok(import_embeddings(&paths, pg)?)
    }

    fn embed_options(&self) -> EmbedOptions {
        EmbedOptions {
            seed: self.cfg.seed,
            exec: self.exec,
            ..EmbedOptions::default()
        }
    }

    fn align_options(&self) -> AlignOptions {
        AlignOptions {
            tol_eigen: self.cfg.tol_eigen,
            tol_lsq: self.cfg.tol_lsq,
            seed: self.cfg.seed,
            exec: self.exec,
            ..AlignOptions::default()
        }
    }
}

fn patch_rel(k: usize) -> String {
    let name = patch_file(Path::new(""), k);
    format!("{PATCH_DIR}/{}", name.display())
}

fn embed_rel(k: usize) -> String {
    let name = embedding_file(Path::new(""), k);
    format!("{EMBED_DIR}/{}", name.display())
}

fn reset_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).with_context(|| format!("removing {}", dir.display()))?;
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn partition(ctx: &mut Ctx) -> Result<()> {
    const STAGE: &str = "partition";
    let input = ctx
        .cfg
        .input
        .clone()
        .ok_or_else(|| Failure::config("`l2g partition` needs --input <edge list>".into()))?;
    ctx.begin(STAGE);
    ctx.manifest.consume_external(STAGE, &input)?;
    let (raw, raw_map) = load_edge_list(&input)?;
    let (g, lcc_map) = largest_connected_component(&raw)?;
    let mapping = lcc_map.compose(&raw_map);
    let opts = FennelOptions {
        seed: ctx.cfg.seed,
        ..FennelOptions::new(ctx.cfg.num_patches, ctx.cfg.min_size)
    };
    let part = fennel_partition(&g, &opts)?;
    let quality = partition_quality(&g, &part);

    g.write_edge_list(&ctx.path(GRAPH))?;
    mapping.write(&ctx.path(MAPPING))?;
    part.write(&ctx.path(PARTITION))?;
    for rel in [GRAPH, MAPPING, PARTITION] {
        ctx.output(STAGE, rel)?;
    }
    ctx.fact(STAGE, "nodes", g.num_nodes());
    ctx.fact(STAGE, "edges", g.num_edges());
    ctx.fact(STAGE, "cut_edges", quality.cut_edges);
    ctx.finish()?;

    println!("input_nodes={} input_edges={}", raw.num_nodes(), raw.num_edges());
    println!("lcc_nodes={} lcc_edges={}", g.num_nodes(), g.num_edges());
    println!(
        "clusters={} cut_edges={} min_size={} max_size={}",
        part.num_clusters(),
        quality.cut_edges,
        quality.sizes.iter().min().copied().unwrap_or(0),
        quality.sizes.iter().max().copied().unwrap_or(0)
    );
    Ok(())
}

pub fn patches(ctx: &mut Ctx) -> Result<()> {
    const STAGE: &str = "patches";
    ctx.begin(STAGE);
    let g = ctx.load_graph(STAGE)?;
    let part_path = ctx.consume(STAGE, PARTITION, "partition")?;
    let part = Partition::read(&part_path, g.num_nodes())?;
    let clusters = build_patch_graph(&g, &part)?;
    let weights = SparsifierWeights::compute(&g, &clusters)?;
    let sparse = sparsify_patch_graph(&clusters, &weights, ctx.cfg.target_degree, ctx.cfg.seed)?;
    let pg = expand_patches(&g, &sparse, ctx.cfg.min_overlap, ctx.cfg.max_overlap, ctx.cfg.seed, ctx.exec)?;

    let dir = ctx.path(PATCH_DIR);
    reset_dir(&dir)?;
    pg.write_dir(&dir)?;
    ctx.output(STAGE, &format!("{PATCH_DIR}/{PATCH_GRAPH_FILE}"))?;
    for k in 0..pg.num_patches() {
        ctx.output(STAGE, &patch_rel(k))?;
    }
    let min_overlap = pg.min_overlap().unwrap_or(0);
    ctx.fact(STAGE, "patches", pg.num_patches());
    ctx.fact(STAGE, "edges", pg.num_edges());
    ctx.fact(STAGE, "min_overlap", min_overlap);
    ctx.finish()?;

    println!(
        "patches={} candidate_edges={} edges={} min_overlap={}",
        pg.num_patches(),
        clusters.num_edges(),
        pg.num_edges(),
        min_overlap
    );
    Ok(())
}

pub fn embed(ctx: &mut Ctx) -> Result<()> {
    const STAGE: &str = "embed";
    ctx.begin(STAGE);
    let g = ctx.load_graph(STAGE)?;
    let pg = ctx.load_patches(STAGE)?;
    let embs = embed_all_patches(&g, &pg, ctx.cfg.dim, &ctx.embed_options())?;
    let dir = ctx.path(EMBED_DIR);
    reset_dir(&dir)?;
    export_embeddings(&dir, &embs)?;
    for k in 0..embs.len() {
        ctx.output(STAGE, &embed_rel(k))?;
    }
    ctx.fact(STAGE, "dim", ctx.cfg.dim);
    ctx.finish()?;
    println!("patches={} dim={}", embs.len(), ctx.cfg.dim);
    Ok(())
}

fn load_mapping(ctx: &mut Ctx, stage: &str) -> Result<NodeMapping> {
    let path = ctx.consume(stage, MAPPING, "partition")?;
    Ok(NodeMapping::read(&path)?)
}

pub fn align(ctx: &mut Ctx, no_trans: bool) -> Result<()> {
    const STAGE: &str = "align";
    ctx.begin(STAGE);
    let pg = ctx.load_patches(STAGE)?;
    let embs = ctx.load_embeddings(STAGE, &pg)?;
    let mapping = load_mapping(ctx, STAGE)?;
    let n = mapping.len();

    let transforms_path = ctx.path(TRANSFORMS);
    let global = if no_trans {
        if transforms_path.exists() {
            std::fs::remove_file(&transforms_path).with_context(|| format!("removing {}", transforms_path.display()))?;
        }
        ctx.fact(STAGE, "mode", "no-trans");
        println!("mode=no-trans patches={}", pg.num_patches());
        no_trans_baseline(&embs, &pg, n)?
    } else {
        let res = aligner::align(&embs, &pg, n, &ctx.align_options())?;
        write_transforms(&transforms_path, &res.transforms, &res.translations)?;
        ctx.output(STAGE, TRANSFORMS)?;
        let diag = &res.diagnostics;
        ctx.fact(STAGE, "mode", "l2g");
        ctx.fact(STAGE, "eigen_iterations", diag.eigen_iterations);
        ctx.fact(STAGE, "sync_nnz", diag.sync_nnz);
        for w in &diag.warnings {
            eprintln!("warning: {w}");
        }
        let values: Vec<String> = diag.eigenvalues.iter().map(|v| format!("{v:.6}")).collect();
        println!(
            "mode=l2g patches={} eigen_iterations={} lsq_iterations={} sync_nnz={} mean_overlap={:.1}",
            pg.num_patches(),
            diag.eigen_iterations,
            diag.lsq_iterations.iter().max().copied().unwrap_or(0),
            diag.sync_nnz,
            diag.mean_overlap
        );
        println!("eigenvalues={}", values.join(","));
        res.global
    };
    l2ge::write(&ctx.path(GLOBAL), mapping.backward(), &global)?;
    ctx.output(STAGE, GLOBAL)?;

    if ctx.path(GROUND_TRUTH).exists() {
        let truth_path = ctx.consume(STAGE, GROUND_TRUTH, "synth")?;
        let truth = l2ge::read(&truth_path)?;
        let err = procrustes_distance(&global, &truth.coords)?;
        ctx.fact(STAGE, "recovery_error", format!("{err:e}"));
        println!("recovery_error={err:e}");
    }
    ctx.finish()
}

pub fn eval(ctx: &mut Ctx) -> Result<()> {
    const STAGE: &str = "eval";
    ctx.begin(STAGE);
    let g = ctx.load_graph(STAGE)?;
    let pg = ctx.load_patches(STAGE)?;
    let seed = ctx.cfg.seed;
    let table = if ctx.cfg.dims.is_empty() {
        // evaluate the patch embeddings in the workdir, whatever produced them
        let embs = ctx.load_embeddings(STAGE, &pg)?;
        let d = embs[0].dim();
        let n = g.num_nodes();
        let full = spectral_embed(&g, d, &ctx.embed_options())?;
        let aligned = aligner::align(&embs, &pg, n, &ctx.align_options())?;
        let base = no_trans_baseline(&embs, &pg, n)?;
        evaluate_scenarios(
            &g,
            d,
            [
                (Scenario::Full, &full),
                (Scenario::L2g, &aligned.global),
                (Scenario::NoTrans, &base),
            ],
            seed,
            ctx.exec,
        )?
    } else {
        let opts = CompareOptions {
            embed: ctx.embed_options(),
            align: ctx.align_options(),
        };
        let mut table = ScenarioTable { rows: Vec::new() };
        for &d in &ctx.cfg.dims {
            if pg.min_overlap().is_some_and(|o| o <= d) {
                return Err(Failure::config(format!(
                    "dimension {d} needs overlaps above {d}; the patch graph has minimum overlap {}",
                    pg.min_overlap().unwrap_or(0)
                ))
                .into());
            }
            table.extend(compare_scenarios(&g, &pg, d, seed, &opts)?);
        }
        table
    };
    write_report(&ctx.path(REPORT), &table)?;
    write_series(&ctx.path(SERIES), &table)?;
    ctx.output(STAGE, REPORT)?;
    ctx.output(STAGE, SERIES)?;
    ctx.finish()?;
    print!("{}", std::fs::read_to_string(ctx.path(REPORT))?);
    Ok(())
}

pub fn synth(ctx: &mut Ctx) -> Result<()> {
    const STAGE: &str = "synth";
    for stage in ["partition", "patches", "embed", STAGE] {
        ctx.manifest.clear_stage(stage);
    }
    ctx.begin(STAGE);
    let cfg = &ctx.cfg;
    let inst = generate_synthetic(cfg.nodes, cfg.dim, cfg.num_patches, cfg.sigma, cfg.min_overlap, cfg.seed)?;
    let g = dot_product_graph(&inst.x, cfg.synth_degree, ctx.exec)?;
    let n = inst.x.nrows();
    let ids: Vec<u64> = (0..n as u64).collect();

    g.write_edge_list(&ctx.path(GRAPH))?;
    NodeMapping::identity(n).write(&ctx.path(MAPPING))?;
    l2ge::write(&ctx.path(GROUND_TRUTH), &ids, &inst.x)?;
    let pdir = ctx.path(PATCH_DIR);
    reset_dir(&pdir)?;
    inst.pg.write_dir(&pdir)?;
    let edir = ctx.path(EMBED_DIR);
    reset_dir(&edir)?;
    export_embeddings(&edir, &inst.patches)?;
    for stale in [PARTITION, GLOBAL, TRANSFORMS] {
        let path = ctx.path(stale);
        if path.exists() {
            std::fs::remove_file(&path).with_context(|| format!("removing {}", path.display()))?;
        }
    }

    for rel in [GRAPH, MAPPING, GROUND_TRUTH] {
        ctx.output(STAGE, rel)?;
    }
    ctx.output(STAGE, &format!("{PATCH_DIR}/{PATCH_GRAPH_FILE}"))?;
    for k in 0..inst.pg.num_patches() {
        ctx.output(STAGE, &patch_rel(k))?;
        ctx.output(STAGE, &embed_rel(k))?;
    }
    ctx.fact(STAGE, "sigma", format!("{:e}", inst.sigma));
    ctx.finish()?;
    println!(
        "nodes={n} dim={} patches={} min_overlap={} eval_edges={}",
        inst.x.ncols(),
        inst.pg.num_patches(),
        inst.pg.min_overlap().unwrap_or(0),
        g.num_edges()
    );
    Ok(())
}
