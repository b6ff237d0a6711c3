//! Pipeline parameters: defaults, a flat `key = value` file, then flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use sha2::{Digest, Sha256};

/// Every pipeline parameter as an optional command-line flag.
#[derive(Args, Debug, Clone, Default)]
pub struct Flags {
    /// Flat `key = value` configuration file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory holding all stage artifacts.
    #[arg(long, short = 'w', global = true)]
    pub workdir: Option<PathBuf>,
    /// Worker threads; 1 selects the bit-stable sequential mode, 0 all cores.
    #[arg(long, short = 'j', global = true)]
    pub jobs: Option<usize>,
    /// Input edge list (partition stage).
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Embedding dimension d.
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    #[arg(long, global = true)]
    pub num_patches: Option<usize>,
    #[arg(long, global = true)]
    pub target_degree: Option<usize>,
    /// Minimum overlap l between connected patches.
    #[arg(long, global = true)]
    pub min_overlap: Option<usize>,
    /// Maximum overlap u between connected patches.
    #[arg(long, global = true)]
    pub max_overlap: Option<usize>,
    /// Minimum cluster size of the partition.
    #[arg(long, global = true)]
    pub min_size: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub tol_eigen: Option<f64>,
    #[arg(long, global = true)]
    pub tol_lsq: Option<f64>,
    /// Embedding dimensions swept by `eval`, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Number of nodes of a synthetic instance.
    #[arg(long, global = true)]
    pub nodes: Option<usize>,
    /// Noise level of a synthetic instance.
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Neighbours per node in the evaluation graph of a synthetic instance.
    #[arg(long, global = true)]
    pub synth_degree: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub workdir: PathBuf,
    pub jobs: usize,
    pub input: Option<PathBuf>,
    pub dim: usize,
    pub num_patches: usize,
    pub target_degree: usize,
    pub min_overlap: usize,
    pub max_overlap: usize,
    pub min_size: usize,
    pub seed: u64,
    pub tol_eigen: f64,
    pub tol_lsq: f64,
    pub dims: Vec<usize>,
    pub nodes: usize,
    pub sigma: f64,
    pub synth_degree: usize,
}

const KEYS: &[&str] = &[
    "workdir",
    "jobs",
    "input",
    "dim",
    "num_patches",
    "target_degree",
    "min_overlap",
    "max_overlap",
    "min_size",
    "seed",
    "tol_eigen",
    "tol_lsq",
    "dims",
    "nodes",
    "sigma",
    "synth_degree",
];

/// Parse a flat `key = value` file. `#` starts a comment; dashes in keys
/// are read as underscores.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected `key = value`", path.display(), idx + 1);
        };
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            bail!("{}:{}: unknown key `{key}`", path.display(), idx + 1);
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(file: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    file.get(key)
        .map(|v| v.parse::<T>().map_err(|_| anyhow::anyhow!("config key `{key}`: cannot parse {v:?}")))
        .transpose()
}

impl Config {
    pub fn resolve(flags: &Flags) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => parse_config_file(path)?,
            None => BTreeMap::new(),
        };
        let pick = |flag: Option<usize>, key: &str| -> Result<Option<usize>> {
            Ok(flag.or(parse(&file, key)?))
        };
        let dim = pick(flags.dim, "dim")?.unwrap_or(16);
        let min_overlap = pick(flags.min_overlap, "min_overlap")?.unwrap_or(dim + 1);
        let max_overlap = pick(flags.max_overlap, "max_overlap")?.unwrap_or(2 * min_overlap);
        let min_size = pick(flags.min_size, "min_size")?
            .unwrap_or_else(|| (dim + 1).div_ceil(2).max(min_overlap.div_ceil(2)));
        let dims = match &flags.dims {
            Some(d) => d.clone(),
            None => match file.get("dims") {
                Some(v) => v
                    .split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| anyhow::anyhow!("config key `dims`: cannot parse {v:?}"))?,
                None => Vec::new(),
            },
        };
        let cfg = Config {
            workdir: flags
                .workdir
                .clone()
                .or(parse(&file, "workdir")?)
                .unwrap_or_else(|| PathBuf::from("l2g-work")),
            jobs: pick(flags.jobs, "jobs")?.unwrap_or(0),
            input: flags.input.clone().or(parse(&file, "input")?),
            dim,
            num_patches: pick(flags.num_patches, "num_patches")?.unwrap_or(10),
            target_degree: pick(flags.target_degree, "target_degree")?.unwrap_or(4),
            min_overlap,
            max_overlap,
            min_size,
            seed: flags.seed.or(parse(&file, "seed")?).unwrap_or(0),
            tol_eigen: flags.tol_eigen.or(parse(&file, "tol_eigen")?).unwrap_or(1e-10),
            tol_lsq: flags.tol_lsq.or(parse(&file, "tol_lsq")?).unwrap_or(1e-10),
            dims,
            nodes: pick(flags.nodes, "nodes")?.unwrap_or(1000),
            sigma: flags.sigma.or(parse(&file, "sigma")?).unwrap_or(0.0),
            synth_degree: pick(flags.synth_degree, "synth_degree")?.unwrap_or(10),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            bail!("dim must be at least 1");
        }
        if self.num_patches == 0 {
            bail!("num_patches must be at least 1");
        }
        if self.target_degree == 0 {
            bail!("target_degree must be at least 1");
        }
        if self.min_overlap < self.dim + 1 {
            bail!("min_overlap = {} must be at least dim + 1 = {}", self.min_overlap, self.dim + 1);
        }
        if self.max_overlap < self.min_overlap {
            bail!("max_overlap = {} is below min_overlap = {}", self.max_overlap, self.min_overlap);
        }
        if !(self.tol_eigen > 0.0 && self.tol_lsq > 0.0) {
            bail!("tolerances must be positive");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            bail!("sigma must be a finite non-negative number");
        }
        Ok(())
    }

    /// Canonical text of every parameter that can influence an artifact. The
    /// input file enters the manifest through its content hash instead.
    pub fn canonical(&self) -> String {
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        format!(
            "dim = {}\nnum_patches = {}\ntarget_degree = {}\nmin_overlap = {}\nmax_overlap = {}\nmin_size = {}\nseed = {}\ntol_eigen = {:e}\ntol_lsq = {:e}\ndims = {}\nnodes = {}\nsigma = {:e}\nsynth_degree = {}\n",
            self.dim,
            self.num_patches,
            self.target_degree,
            self.min_overlap,
            self.max_overlap,
            self.min_size,
            self.seed,
            self.tol_eigen,
            self.tol_lsq,
            dims.join(","),
            self.nodes,
            self.sigma,
            self.synth_degree
        )
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}
