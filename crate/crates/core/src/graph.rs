//! Dual-graph construction: a radius graph weighted by a Gaussian distance
//! kernel (with an optional feature-disparity penalty) and a symmetrized
//! feature-space kNN graph. Both carry self-loops and per-edge directional
//! annotations computed from standardized coordinates.
//!
//! Edge orientation: `dst` is the node being updated and `src` the neighbor
//! it reads from. The annotation is the bearing and distance from `dst` to
//! `src`.

use std::collections::{BTreeSet, VecDeque};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{euclid_dist, Coordinates, DirectionalAnnotation};
use crate::tensor::{Index, Tensor};

/// Mean non-loop spatial degree targeted when `epsilon` is left unset.
pub const TARGET_MEAN_DEGREE: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
    pub annotation: DirectionalAnnotation,
}

impl Edge {
    pub fn is_loop(&self) -> bool {
        self.src == self.dst
    }

    pub fn self_loop(i: usize) -> Self {
        Self {
            src: i,
            dst: i,
            weight: 1.0,
            annotation: DirectionalAnnotation::COINCIDENT,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    /// Radius threshold in standardized units; `None` tunes it to a mean
    /// non-loop degree of [`TARGET_MEAN_DEGREE`].
    pub epsilon: Option<f64>,
    pub sigma: f64,
    pub lambda_edge: f64,
    pub delta: f64,
    pub k: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            epsilon: None,
            sigma: 1.0,
            lambda_edge: 0.1,
            delta: 1.0,
            k: 8,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0) {
                return Err(Error::Config(format!("epsilon must be > 0, got {}", eps)));
            }
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Config(format!("delta must be > 0, got {}", self.delta)));
        }
        if !(self.lambda_edge >= 0.0) {
            return Err(Error::Config(format!(
                "lambda_edge must be >= 0, got {}",
                self.lambda_edge
            )));
        }
        if self.k < 1 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        Ok(())
    }
}

/// Spatial and feature edge sets over the same nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct DualGraph {
    pub n_nodes: usize,
    pub spatial_edges: Vec<Edge>,
    pub feature_edges: Vec<Edge>,
    /// Configuration with `epsilon` resolved.
    pub config: GraphConfig,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn check_inputs(coords: &[Coordinates], features: &Tensor) -> Result<()> {
    if features.shape().len() != 2 || features.rows() != coords.len() {
        return Err(Error::dim(
            "graph_build",
            format!("{} coordinates vs features {:?}", coords.len(), features.shape()),
        ));
    }
    Ok(())
}

/// Smallest radius giving a mean non-loop degree of about `target_degree`.
pub fn auto_epsilon(coords: &[Coordinates], target_degree: f64) -> Result<f64> {
    let n = coords.len();
    let mut dists: Vec<f64> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d = euclid_dist(coords[i], coords[j]);
            if d > 0.0 {
                dists.push(d);
            }
        }
    }
    if dists.is_empty() {
        return Err(Error::Geometry("all points coincide".into()));
    }
    dists.sort_by(f64::total_cmp);
    // mean degree = 2·pairs/n, so we want n·target/2 unordered pairs
    let want = ((n as f64 * target_degree / 2.0).round() as usize).clamp(1, dists.len());
    // binary search over the sorted candidates for the smallest radius that
    // admits at least `want` pairs
    let (mut lo, mut hi) = (0, dists.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        let eps = dists[mid];
        if dists.partition_point(|&d| d <= eps) >= want {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(dists[lo])
}

/// Radius graph: edge `(i, j)` iff `0 < ‖p_i − p_j‖ ≤ ε`, weighted by
/// `exp(−d²/(2σ²) − λ‖f_i − f_j‖)`. Self-loops are appended.
pub fn build_spatial_graph(
    coords: &[Coordinates],
    features: &Tensor,
    cfg: &GraphConfig,
) -> Result<Vec<Edge>> {
    cfg.validate()?;
    check_inputs(coords, features)?;
    let eps = match cfg.epsilon {
        Some(e) => e,
        None => auto_epsilon(coords, TARGET_MEAN_DEGREE)?,
    };
    let n = coords.len();
    let mut edges = Vec::new();
    for i in 0..n {
        edges.push(Edge::self_loop(i));
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = euclid_dist(coords[i], coords[j]);
            if d > 0.0 && d <= eps {
                let fd = sq_dist(features.row(i), features.row(j)).sqrt();
                let w = (-d * d / (2.0 * cfg.sigma * cfg.sigma) - cfg.lambda_edge * fd).exp();
                edges.push(Edge {
                    src: j,
                    dst: i,
                    weight: w.max(f64::MIN_POSITIVE),
                    annotation: DirectionalAnnotation::between(coords[i], coords[j]),
                });
            }
        }
    }
    if edges.len() == n {
        log::warn!("spatial graph has no edges besides self-loops (epsilon = {})", eps);
    }
    Ok(edges)
}

/// The `k` nearest feature-space neighbors of `i`, ties to the smaller id.
fn knn(features: &Tensor, i: usize, k: usize) -> Vec<usize> {
    let xi = features.row(i);
    let mut cand: Vec<(f64, usize)> = (0..features.rows())
        .filter(|&j| j != i)
        .map(|j| (sq_dist(xi, features.row(j)), j))
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.truncate(k);
    cand.into_iter().map(|(_, j)| j).collect()
}

/// Feature kNN graph symmetrized by union, weighted by
/// `exp(−‖x_i − x_j‖²/(2δ²))`, with spatial directional annotations.
pub fn build_feature_graph(
    coords: &[Coordinates],
    features: &Tensor,
    cfg: &GraphConfig,
) -> Result<Vec<Edge>> {
    cfg.validate()?;
    check_inputs(coords, features)?;
    let n = coords.len();
    if cfg.k >= n {
        return Err(Error::Config(format!(
            "k = {} must be smaller than the node count {}",
            cfg.k, n
        )));
    }
    let mut pairs = BTreeSet::new();
    for i in 0..n {
        for j in knn(features, i, cfg.k) {
            pairs.insert((i, j));
            pairs.insert((j, i));
        }
    }
    let mut edges = Vec::with_capacity(pairs.len() + n);
    let mut it = pairs.into_iter().peekable();
    for i in 0..n {
        edges.push(Edge::self_loop(i));
        while let Some(&(dst, src)) = it.peek() {
            if dst != i {
                break;
            }
            it.next();
            let d2 = sq_dist(features.row(dst), features.row(src));
            edges.push(Edge {
                src,
                dst,
                weight: (-d2 / (2.0 * cfg.delta * cfg.delta)).exp().max(f64::MIN_POSITIVE),
                annotation: DirectionalAnnotation::between(coords[dst], coords[src]),
            });
        }
    }
    Ok(edges)
}

/// Builds both graphs from standardized coordinates and features.
pub fn build_dual_graph(
    coords: &[Coordinates],
    features: &Tensor,
    cfg: &GraphConfig,
) -> Result<DualGraph> {
    cfg.validate()?;
    check_inputs(coords, features)?;
    let mut resolved = *cfg;
    if resolved.epsilon.is_none() {
        resolved.epsilon = Some(auto_epsilon(coords, TARGET_MEAN_DEGREE)?);
    }
    Ok(DualGraph {
        n_nodes: coords.len(),
        spatial_edges: build_spatial_graph(coords, features, &resolved)?,
        feature_edges: build_feature_graph(coords, features, &resolved)?,
        config: resolved,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegreeStats {
    /// Directed non-loop edges.
    pub edges: usize,
    pub min_degree: usize,
    pub mean_degree: f64,
    pub max_degree: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphStats {
    pub n_nodes: usize,
    pub spatial: DegreeStats,
    pub feature: DegreeStats,
    pub spatial_components: usize,
}

fn degree_stats(n: usize, edges: &[Edge]) -> DegreeStats {
    let mut deg = vec![0usize; n];
    for e in edges.iter().filter(|e| !e.is_loop()) {
        deg[e.dst] += 1;
    }
    let total: usize = deg.iter().sum();
    DegreeStats {
        edges: total,
        min_degree: deg.iter().copied().min().unwrap_or(0),
        mean_degree: if n == 0 { 0.0 } else { total as f64 / n as f64 },
        max_degree: deg.iter().copied().max().unwrap_or(0),
    }
}

/// Connected components of an undirected edge list.
pub fn component_count(n: usize, edges: &[Edge]) -> usize {
    let mut adj = vec![Vec::new(); n];
    for e in edges.iter().filter(|e| !e.is_loop()) {
        adj[e.src].push(e.dst);
        adj[e.dst].push(e.src);
    }
    let mut seen = vec![false; n];
    let mut count = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    count
}

pub fn graph_stats(g: &DualGraph) -> GraphStats {
    GraphStats {
        n_nodes: g.n_nodes,
        spatial: degree_stats(g.n_nodes, &g.spatial_edges),
        feature: degree_stats(g.n_nodes, &g.feature_edges),
        spatial_components: component_count(g.n_nodes, &g.spatial_edges),
    }
}

/// Writes both edge sets as CSV:
/// `graph,src,dst,weight,cos_theta,sin_theta,dist`.
pub fn export_edges_csv(g: &DualGraph, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "graph,src,dst,weight,cos_theta,sin_theta,dist").map_err(io)?;
    for (name, edges) in [("spatial", &g.spatial_edges), ("feature", &g.feature_edges)] {
        for e in edges {
            let a = e.annotation;
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                name, e.src, e.dst, e.weight, a.cos_theta, a.sin_theta, a.distance
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Edge list laid out as index arrays for the attention layers.
#[derive(Clone, Debug)]
pub struct EdgeArrays {
    pub n_nodes: usize,
    pub src: Index,
    pub dst: Index,
    pub weight: Arc<[f64]>,
    /// `[E × 3]` rows of `(cos θ, sin θ, distance)`.
    pub annotations: Tensor,
}

impl EdgeArrays {
    pub fn new(n_nodes: usize, edges: &[Edge]) -> Self {
        let ann: Vec<f64> = edges.iter().flat_map(|e| e.annotation.as_array()).collect();
        Self {
            n_nodes,
            src: edges.iter().map(|e| e.src).collect(),
            dst: edges.iter().map(|e| e.dst).collect(),
            weight: edges.iter().map(|e| e.weight).collect(),
            annotations: Tensor::matrix(edges.len(), 3, ann).expect("3 values per edge"),
        }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    /// Keeps the edges for which `keep(src, dst)` holds, in order.
    pub fn filter(&self, keep: impl Fn(usize, usize) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&e| keep(self.src[e], self.dst[e]))
            .collect();
        let ann: Vec<f64> = idx.iter().flat_map(|&e| self.annotations.row(e).to_vec()).collect();
        Self {
            n_nodes: self.n_nodes,
            src: idx.iter().map(|&e| self.src[e]).collect(),
            dst: idx.iter().map(|&e| self.dst[e]).collect(),
            weight: idx.iter().map(|&e| self.weight[e]).collect(),
            annotations: Tensor::matrix(idx.len(), 3, ann).expect("3 values per edge"),
        }
    }
}
