//! Distance-geometric graph construction.
//!
//! Node pairs are classified by bond-graph shortest-path length: order 1 are
//! bonded pairs, order 2 the unconnected ends of a two-bond path (angle
//! pairs), order 3 the ends of a three-bond chain (dihedral pairs). Each
//! retained pair carries its Euclidean distance, encoded through a cosine
//! ramp that falls from 1 at distance zero to 0 at the cutoff. The result
//! depends on distances only, so it is invariant to rigid motions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::molio::Molecule;
use crate::numerics::Tensor;

/// `order` value marking self-loop edges.
pub const SELF_LOOP: u8 = 0;

/// Errors from graph construction.
#[derive(Debug, Clone, PartialEq)]
pub enum DggrError {
    NegativeDistance(f64),
    BadConfig(String),
    FeatureRows { expected: usize, got: usize },
}

impl fmt::Display for DggrError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DggrError::NegativeDistance(d) => write!(f, "distance {d} is negative"),
            DggrError::BadConfig(msg) => write!(f, "bad graph config: {msg}"),
            DggrError::FeatureRows { expected, got } => {
                write!(f, "feature matrix has {got} rows, molecule has {expected} atoms")
            }
        }
    }
}

impl std::error::Error for DggrError {}

/// Neighbor-order cutoff, distance cutoff in angstrom, and edge feature
/// layout (encoded distance alone, or with a neighbor-order one-hot).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DGConfig {
    pub max_order: u8,
    pub d_cutoff: f64,
    pub include_order_onehot: bool,
}

impl Default for DGConfig {
    fn default() -> Self {
        DGConfig { max_order: 3, d_cutoff: 10.0, include_order_onehot: true }
    }
}

impl DGConfig {
    pub fn validate(&self) -> Result<(), DggrError> {
        if !(1..=3).contains(&self.max_order) {
            return Err(DggrError::BadConfig(format!(
                "max_order must be 1, 2 or 3, got {}",
                self.max_order
            )));
        }
        if !(self.d_cutoff > 0.0) {
            return Err(DggrError::BadConfig(format!("d_cutoff must be > 0, got {}", self.d_cutoff)));
        }
        Ok(())
    }

    /// Width of the per-edge feature vector.
    pub fn edge_feature_width(&self) -> usize {
        if self.include_order_onehot {
            4
        } else {
            1
        }
    }
}

/// One directed edge of the distance-geometric graph. `order` is 1..=3 for
/// neighbor pairs and [`SELF_LOOP`] for the per-node self edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DGEdge {
    pub src: usize,
    pub dst: usize,
    pub order: u8,
    pub distance: f64,
    pub feature: Vec<f64>,
}

/// Node features plus the directed edge set: both directions of every
/// neighbor pair and one self-loop per node, sorted by `(src, dst)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DGGraph {
    pub node_features: Tensor,
    pub edges: Vec<DGEdge>,
    pub n_nodes: usize,
}

impl DGGraph {
    /// Unordered pair counts by neighbor order `(order1, order2, order3)`.
    pub fn pair_counts(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for e in &self.edges {
            if e.src < e.dst {
                match e.order {
                    1 => counts.0 += 1,
                    2 => counts.1 += 1,
                    3 => counts.2 += 1,
                    _ => {}
                }
            }
        }
        counts
    }

    pub fn edge_feature_width(&self) -> usize {
        self.edges.first().map_or(0, |e| e.feature.len())
    }

    /// Edge features stacked `[n_edges x width]`, in edge order.
    pub fn edge_feature_matrix(&self) -> Tensor {
        let width = self.edge_feature_width();
        let mut data = Vec::with_capacity(self.edges.len() * width);
        for e in &self.edges {
            data.extend_from_slice(&e.feature);
        }
        Tensor::matrix(self.edges.len(), width, data)
    }

    pub fn src_indices(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.src).collect()
    }

    pub fn dst_indices(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.dst).collect()
    }
}

/// Classifies node pairs by bond-graph shortest-path length, keeping pairs
/// at length `<= max_order`. Breadth-first search from each node, truncated
/// at `max_order`; a pair reachable at several depths lands at the shortest,
/// so ring pairs are never double-classified. Keys are `(i, j)` with `i < j`.
pub fn expand_neighbors(
    bonds: &[(usize, usize)],
    n_atoms: usize,
    max_order: u8,
) -> BTreeMap<(usize, usize), u8> {
    let mut adjacency = vec![Vec::new(); n_atoms];
    for &(i, j) in bonds {
        adjacency[i].push(j);
        adjacency[j].push(i);
    }

    let mut pairs = BTreeMap::new();
    let mut depth = vec![usize::MAX; n_atoms];
    let mut queue = Vec::new();
    for start in 0..n_atoms {
        depth.iter_mut().for_each(|d| *d = usize::MAX);
        depth[start] = 0;
        queue.clear();
        queue.push(start);
        let mut head = 0;
        while head < queue.len() {
            let node = queue[head];
            head += 1;
            if depth[node] == max_order as usize {
                continue;
            }
            for &next in &adjacency[node] {
                if depth[next] == usize::MAX {
                    depth[next] = depth[node] + 1;
                    queue.push(next);
                    if next > start {
                        pairs.insert((start, next), depth[next] as u8);
                    }
                }
            }
        }
    }
    pairs
}

/// Cosine distance encoding: `0.5 * (cos(pi * d / d_cutoff) + 1)`, clamped
/// to 0 for `d >= d_cutoff`. Falls monotonically from 1 at `d = 0`.
pub fn encode_distance(d: f64, d_cutoff: f64) -> Result<f64, DggrError> {
    if d < 0.0 {
        return Err(DggrError::NegativeDistance(d));
    }
    if !(d_cutoff > 0.0) {
        return Err(DggrError::BadConfig(format!("d_cutoff must be > 0, got {d_cutoff}")));
    }
    if d >= d_cutoff {
        return Ok(0.0);
    }
    Ok(0.5 * ((std::f64::consts::PI * d / d_cutoff).cos() + 1.0))
}

fn euclidean(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

fn edge_feature(encoded: f64, order: u8, cfg: &DGConfig) -> Vec<f64> {
    if !cfg.include_order_onehot {
        return vec![encoded];
    }
    let mut feature = vec![encoded, 0.0, 0.0, 0.0];
    if (1..=3).contains(&order) {
        feature[order as usize] = 1.0;
    }
    feature
}

/// Builds the distance-geometric graph for a molecule: expanded neighbor
/// pairs symmetrized into directed edges carrying `encode(distance)` (and
/// the order one-hot), plus one self-loop per node with feature
/// `encode(0) = 1`. Edges are sorted by `(src, dst)`.
pub fn build_dg_graph(
    molecule: &Molecule,
    node_features: Tensor,
    cfg: &DGConfig,
) -> Result<DGGraph, DggrError> {
    cfg.validate()?;
    let n = molecule.n_atoms();
    if node_features.rows() != n {
        return Err(DggrError::FeatureRows { expected: n, got: node_features.rows() });
    }

    let pairs = expand_neighbors(&molecule.bond_pairs(), n, cfg.max_order);
    let mut edges = Vec::with_capacity(2 * pairs.len() + n);
    for (&(i, j), &order) in &pairs {
        let distance = euclidean(molecule.atoms[i].pos, molecule.atoms[j].pos);
        let feature = edge_feature(encode_distance(distance, cfg.d_cutoff)?, order, cfg);
        edges.push(DGEdge { src: i, dst: j, order, distance, feature: feature.clone() });
        edges.push(DGEdge { src: j, dst: i, order, distance, feature });
    }
    for i in 0..n {
        let feature = edge_feature(1.0, SELF_LOOP, cfg);
        edges.push(DGEdge { src: i, dst: i, order: SELF_LOOP, distance: 0.0, feature });
    }
    edges.sort_by_key(|e| (e.src, e.dst));

    Ok(DGGraph { node_features, edges, n_nodes: n })
}
