//! Immutable undirected graphs in compressed adjacency form.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Undirected simple graph on dense ids `0..n`.
///
/// Neighbour lists are strictly sorted, symmetric and free of self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Option<Vec<f64>>,
}

impl Graph {
    /// Build a graph from an undirected edge list. Self-loops are dropped
    /// and duplicates (in either orientation) merged.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut pairs = Vec::with_capacity(edges.len() * 2);
        for &(u, v) in edges {
            check_node(u, n)?;
            check_node(v, n)?;
            if u != v {
                pairs.push((u, v));
                pairs.push((v, u));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(Self::from_sorted_pairs(n, &pairs, None))
    }

    /// Build a weighted graph. For duplicated edges the first weight wins.
    pub fn from_weighted_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut pairs = Vec::with_capacity(edges.len() * 2);
        for (idx, &(u, v, w)) in edges.iter().enumerate() {
            check_node(u, n)?;
            check_node(v, n)?;
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "edge ({u}, {v}) has invalid weight {w}"
                )));
            }
            if u != v {
                pairs.push((u, v, idx, w));
                pairs.push((v, u, idx, w));
            }
        }
        pairs.sort_unstable_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
        pairs.dedup_by(|b, a| a.0 == b.0 && a.1 == b.1);
        let weights = pairs.iter().map(|p| p.3).collect();
        let plain: Vec<(usize, usize)> = pairs.iter().map(|p| (p.0, p.1)).collect();
        Ok(Self::from_sorted_pairs(n, &plain, Some(weights)))
    }

    fn from_sorted_pairs(n: usize, pairs: &[(usize, usize)], weights: Option<Vec<f64>>) -> Self {
        let mut offsets = vec![0usize; n + 1];
        for &(u, _) in pairs {
            offsets[u + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let targets = pairs.iter().map(|&(_, v)| v).collect();
        Graph {
            offsets,
            targets,
            weights,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.targets[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn edge_weights(&self, u: usize) -> Option<&[f64]> {
        self.weights
            .as_ref()
            .map(|w| &w[self.offsets[u]..self.offsets[u + 1]])
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    /// Full scan of the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        for u in 0..n {
            let nb = self.neighbors(u);
            for w in nb.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::InvalidArgument(format!(
                        "neighbour list of {u} not strictly sorted"
                    )));
                }
            }
            for &v in nb {
                if v >= n {
                    return Err(Error::NodeOutOfRange { id: v, n });
                }
                if v == u {
                    return Err(Error::InvalidArgument(format!("self-loop at {u}")));
                }
                if !self.has_edge(v, u) {
                    return Err(Error::InvalidArgument(format!(
                        "edge ({u}, {v}) has no reverse"
                    )));
                }
            }
        }
        if self.targets.len() % 2 != 0 {
            return Err(Error::InvalidArgument("odd adjacency length".into()));
        }
        Ok(())
    }

    /// Component label per node; labels are assigned in order of the
    /// smallest node id of each component.
    pub fn connected_components(&self) -> (usize, Vec<usize>) {
        let n = self.num_nodes();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = count;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &v in self.neighbors(u) {
                    if label[v] == usize::MAX {
                        label[v] = count;
                        stack.push(v);
                    }
                }
            }
            count += 1;
        }
        (count, label)
    }

    pub fn is_connected(&self) -> bool {
        self.num_nodes() == 0 || self.connected_components().0 == 1
    }

    /// Write `u v` lines (`u < v`) behind a `# nodes n` header, readable by
    /// both [`load_edge_list`] and [`read_indexed_edge_list`].
    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "# nodes {}", self.num_nodes()).map_err(|e| Error::io(path, e))?;
        for (u, v) in self.edges() {
            writeln!(w, "{u} {v}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn check_node(id: usize, n: usize) -> Result<()> {
    if id >= n {
        Err(Error::NodeOutOfRange { id, n })
    } else {
        Ok(())
    }
}

/// Correspondence between the ids of a derived graph and its parent.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeMapping {
    forward: HashMap<u64, usize>,
    backward: Vec<u64>,
}

impl NodeMapping {
    pub fn from_backward(backward: Vec<u64>) -> Self {
        let forward = backward
            .iter()
            .enumerate()
            .map(|(new, &old)| (old, new))
            .collect();
        NodeMapping { forward, backward }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_backward((0..n as u64).collect())
    }

    pub fn len(&self) -> usize {
        self.backward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.backward.is_empty()
    }

    pub fn to_new(&self, old: u64) -> Option<usize> {
        self.forward.get(&old).copied()
    }

    pub fn to_old(&self, new: usize) -> u64 {
        self.backward[new]
    }

    pub fn backward(&self) -> &[u64] {
        &self.backward
    }

    /// `self` maps child → parent, `parent` maps parent → grandparent.
    pub fn compose(&self, parent: &NodeMapping) -> NodeMapping {
        Self::from_backward(
            self.backward
                .iter()
                .map(|&mid| parent.to_old(mid as usize))
                .collect(),
        )
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (new, old) in self.backward.iter().enumerate() {
            writeln!(w, "{old} {new}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut backward = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let (old, new) = parse_pair(path, idx + 1, &line)?.ok_or_else(|| Error::Parse {
                path: path.into(),
                line: idx + 1,
                message: "empty line".into(),
            })?;
            if new as usize != backward.len() {
                return Err(Error::Parse {
                    path: path.into(),
                    line: idx + 1,
                    message: format!("expected new id {}, found {new}", backward.len()),
                });
            }
            backward.push(old);
        }
        Ok(Self::from_backward(backward))
    }
}

fn parse_pair(path: &Path, line_no: usize, line: &str) -> Result<Option<(u64, u64)>> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }
    let err = |message: String| Error::Parse {
        path: path.into(),
        line: line_no,
        message,
    };
    let mut tokens = trimmed.split_whitespace();
    let mut next = || -> Result<u64> {
        let tok = tokens
            .next()
            .ok_or_else(|| err("expected two node ids".into()))?;
        tok.parse::<u64>()
            .map_err(|_| err(format!("invalid node id {tok:?}")))
    };
    let u = next()?;
    let v = next()?;
    if let Some(extra) = tokens.next() {
        return Err(err(format!("unexpected trailing token {extra:?}")));
    }
    Ok(Some((u, v)))
}

/// Read a whitespace separated edge list. Ids are compacted in order of
/// first appearance.
pub fn load_edge_list(path: &Path) -> Result<(Graph, NodeMapping)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ids: HashMap<u64, usize> = HashMap::new();
    let mut backward = Vec::new();
    let mut edges = Vec::new();
    let mut intern = |old: u64| -> usize {
        *ids.entry(old).or_insert_with(|| {
            backward.push(old);
            backward.len() - 1
        })
    };
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Some((u, v)) = parse_pair(path, idx + 1, &line)? {
            let a = intern(u);
            let b = intern(v);
            edges.push((a, b));
        }
    }
    if backward.is_empty() {
        return Err(Error::Empty(format!("{} contains no edges", path.display())));
    }
    let g = Graph::from_edges(backward.len(), &edges)?;
    Ok((g, NodeMapping::from_backward(backward)))
}

/// Read an edge list whose ids already are `0..n`, keeping them as they are.
/// `n` comes from a `# nodes n` header, or else from the largest id.
pub fn read_indexed_edge_list(path: &Path) -> Result<Graph> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut declared: Option<usize> = None;
    let mut edges = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Some(rest) = line.trim().strip_prefix("# nodes ") {
            let n = rest.trim().parse::<usize>().map_err(|_| Error::Parse {
                path: path.into(),
                line: idx + 1,
                message: format!("invalid node count {rest:?}"),
            })?;
            declared = Some(n);
            continue;
        }
        if let Some((u, v)) = parse_pair(path, idx + 1, &line)? {
            edges.push((u as usize, v as usize));
        }
    }
    let n = match declared {
        Some(n) => n,
        None => edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0),
    };
    if n == 0 {
        return Err(Error::Empty(format!("{} contains no nodes", path.display())));
    }
    Graph::from_edges(n, &edges)
}

/// Subgraph induced by `nodes`. Local id `r` corresponds to `nodes[r]`.
pub fn induced_subgraph(g: &Graph, nodes: &[usize]) -> Result<(Graph, NodeMapping)> {
    let n = g.num_nodes();
    if nodes.is_empty() {
        return Err(Error::InvalidArgument("induced subgraph of empty node set".into()));
    }
    let mut local = vec![usize::MAX; n];
    for (r, &u) in nodes.iter().enumerate() {
        check_node(u, n)?;
        if local[u] != usize::MAX {
            return Err(Error::InvalidArgument(format!("node {u} listed twice")));
        }
        local[u] = r;
    }
    let mut pairs = Vec::new();
    let mut weights = g.weights.as_ref().map(|_| Vec::new());
    for (r, &u) in nodes.iter().enumerate() {
        let nb = g.neighbors(u);
        let ws = g.edge_weights(u);
        let mut row: Vec<(usize, f64)> = nb
            .iter()
            .enumerate()
            .filter(|&(_, &v)| local[v] != usize::MAX)
            .map(|(k, &v)| (local[v], ws.map_or(0.0, |w| w[k])))
            .collect();
        row.sort_unstable_by_key(|e| e.0);
        for (t, w) in row {
            pairs.push((r, t));
            if let Some(ws) = weights.as_mut() {
                ws.push(w);
            }
        }
    }
    let sub = Graph::from_sorted_pairs(nodes.len(), &pairs, weights);
    let mapping = NodeMapping::from_backward(nodes.iter().map(|&u| u as u64).collect());
    Ok((sub, mapping))
}

/// Largest connected component; ties go to the component holding the
/// smallest node id.
pub fn largest_connected_component(g: &Graph) -> Result<(Graph, NodeMapping)> {
    let (count, label) = g.connected_components();
    if count == 0 {
        return Err(Error::Empty("graph has no nodes".into()));
    }
    let mut sizes = vec![0usize; count];
    for &l in &label {
        sizes[l] += 1;
    }
    // labels are ordered by smallest member, so the first maximum wins ties
    let best = (0..count).fold(0, |best, c| if sizes[c] > sizes[best] { c } else { best });
    let nodes: Vec<usize> = (0..g.num_nodes()).filter(|&u| label[u] == best).collect();
    induced_subgraph(g, &nodes)
}
