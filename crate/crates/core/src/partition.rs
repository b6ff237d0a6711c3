//! Streaming FENNEL-style partitioning with a minimum cluster size repair.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Capacity slack over perfectly balanced clusters.
pub const LOAD_FACTOR: f64 = 1.1;
pub const DEFAULT_GAMMA: f64 = 1.5;

/// Disjoint cover of `0..n` by `p` clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    clusters: Vec<Vec<usize>>,
}

impl Partition {
    pub fn from_assignment(assignment: Vec<usize>, p: usize) -> Result<Self> {
        let mut clusters = vec![Vec::new(); p];
        for (v, &c) in assignment.iter().enumerate() {
            if c >= p {
                return Err(Error::InvalidArgument(format!(
                    "node {v} assigned to cluster {c}, only {p} clusters"
                )));
            }
            clusters[c].push(v);
        }
        Ok(Partition {
            assignment,
            clusters,
        })
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster_of(&self, v: usize) -> usize {
        self.assignment[v]
    }

    /// Sorted members of cluster `k`.
    pub fn cluster(&self, k: usize) -> &[usize] {
        &self.clusters[k]
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Vec::len).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (v, c) in self.assignment.iter().enumerate() {
            writeln!(w, "{v} {c}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Read a partition file. The cluster count is one more than the largest
    /// index present; every node in `0..n` must appear exactly once.
    pub fn read(path: &Path, n: usize) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut assignment = vec![usize::MAX; n];
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let err = |m: String| Error::Parse {
                path: path.into(),
                line: idx + 1,
                message: m,
            };
            let fields: Vec<&str> = t.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(err("expected \"node_id cluster_index\"".into()));
            }
            let v: usize = fields[0]
                .parse()
                .map_err(|_| err(format!("invalid node id {:?}", fields[0])))?;
            let c: usize = fields[1]
                .parse()
                .map_err(|_| err(format!("invalid cluster {:?}", fields[1])))?;
            if v >= n {
                return Err(err(format!("node {v} out of range (n = {n})")));
            }
            if assignment[v] != usize::MAX {
                return Err(err(format!("node {v} assigned twice")));
            }
            assignment[v] = c;
        }
        if let Some(v) = assignment.iter().position(|&c| c == usize::MAX) {
            return Err(Error::Format {
                path: path.into(),
                message: format!("node {v} has no cluster"),
            });
        }
        let p = assignment.iter().max().map_or(0, |&m| m + 1);
        Self::from_assignment(assignment, p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FennelOptions {
    pub num_clusters: usize,
    pub min_size: usize,
    pub gamma: f64,
    pub seed: u64,
    /// Stream nodes in a seeded random order instead of id order.
    pub shuffle: bool,
}

impl FennelOptions {
    pub fn new(num_clusters: usize, min_size: usize) -> Self {
        FennelOptions {
            num_clusters,
            min_size,
            gamma: DEFAULT_GAMMA,
            seed: 0,
            shuffle: false,
        }
    }
}

pub fn fennel_partition(g: &Graph, opts: &FennelOptions) -> Result<Partition> {
    let n = g.num_nodes();
    let p = opts.num_clusters;
    if p == 0 {
        return Err(Error::InvalidArgument("need at least one cluster".into()));
    }
    if !(opts.gamma >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "balance exponent must be >= 1, got {}",
            opts.gamma
        )));
    }
    let needed = p.saturating_mul(opts.min_size);
    if needed > n || p > n {
        return Err(Error::InfeasiblePartition {
            p,
            min_size: opts.min_size,
            n,
            needed,
        });
    }

    let gamma = opts.gamma;
    let nf = n as f64;
    let alpha = g.num_edges() as f64 * (p as f64).powf(gamma - 1.0) / nf.powf(gamma);
    let capacity = (LOAD_FACTOR * nf / p as f64).ceil() as usize;

    let mut order: Vec<usize> = (0..n).collect();
    if opts.shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    }

    let mut assignment = vec![usize::MAX; n];
    let mut sizes = vec![0usize; p];
    let mut neighbour_counts = vec![0usize; p];
    for &v in &order {
        for &u in g.neighbors(v) {
            if assignment[u] != usize::MAX {
                neighbour_counts[assignment[u]] += 1;
            }
        }
        let mut best = usize::MAX;
        let mut best_score = f64::NEG_INFINITY;
        for k in 0..p {
            if sizes[k] >= capacity {
                continue;
            }
            let score = neighbour_counts[k] as f64
                - alpha * gamma * (sizes[k] as f64).powf(gamma - 1.0);
            if score > best_score {
                best_score = score;
                best = k;
            }
        }
        assignment[v] = best;
        sizes[best] += 1;
        for &u in g.neighbors(v) {
            if assignment[u] != usize::MAX {
                neighbour_counts[assignment[u]] = 0;
            }
        }
    }

    repair_min_size(g, &mut assignment, &mut sizes, opts.min_size);
    Partition::from_assignment(assignment, p)
}

/// Move boundary nodes out of the largest clusters into undersized ones.
fn repair_min_size(g: &Graph, assignment: &mut [usize], sizes: &mut [usize], min_size: usize) {
    loop {
        let Some(target) = (0..sizes.len())
            .filter(|&k| sizes[k] < min_size)
            .min_by_key(|&k| (sizes[k], k))
        else {
            return;
        };
        // feasibility guarantees a donor above min_size exists
        let donor = (0..sizes.len())
            .filter(|&k| sizes[k] > min_size)
            .max_by_key(|&k| (sizes[k], std::cmp::Reverse(k)))
            .expect("feasible partition always has a donor");

        let mut best: Option<(usize, bool, f64)> = None;
        for v in (0..assignment.len()).filter(|&v| assignment[v] == donor) {
            let mut internal = 0usize;
            let mut external = 0usize;
            let mut touches_target = false;
            for &u in g.neighbors(v) {
                if assignment[u] == donor {
                    internal += 1;
                } else {
                    external += 1;
                    touches_target |= assignment[u] == target;
                }
            }
            let ratio = if internal == 0 {
                f64::INFINITY
            } else {
                external as f64 / internal as f64
            };
            let better = match best {
                None => true,
                Some((_, bt, br)) => (touches_target, ratio) > (bt, br),
            };
            if better {
                best = Some((v, touches_target, ratio));
            }
        }
        let (v, _, _) = best.expect("donor cluster is nonempty");
        assignment[v] = target;
        sizes[donor] -= 1;
        sizes[target] += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionQuality {
    pub cut_edges: usize,
    pub sizes: Vec<usize>,
}

pub fn partition_quality(g: &Graph, part: &Partition) -> PartitionQuality {
    let cut_edges = g
        .edges()
        .filter(|&(u, v)| part.cluster_of(u) != part.cluster_of(v))
        .count();
    PartitionQuality {
        cut_edges,
        sizes: part.sizes(),
    }
}
