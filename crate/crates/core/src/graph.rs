//! Weighted graphs, point clouds, kNN and grid construction, Laplacians and
//! shortest-path distances.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg::{squared_distance, DenseMatrix};

/// A finite set of points in `R^D`, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    params: Option<Vec<[f64; 2]>>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim * (coords.len() / dim + 1),
                actual: coords.len(),
            });
        }
        if let Some(bad) = coords.iter().position(|c| !c.is_finite()) {
            return Err(invalid("points", format!("non-finite coordinate at {}", bad / dim)));
        }
        Ok(Self {
            dim,
            coords,
            params: None,
        })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().ok_or(Error::EmptyInput("point list"))?.len();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::new(dim, coords)
    }

    /// Attaches intrinsic surface parameters, one pair per point.
    pub fn with_params(mut self, params: Vec<[f64; 2]>) -> Result<Self> {
        if params.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: params.len(),
            });
        }
        self.params = Some(params);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn params(&self) -> Option<&[[f64; 2]]> {
        self.params.as_deref()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        squared_distance(self.point(i), self.point(j)).sqrt()
    }

    /// Keeps the listed points in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        Self {
            dim: self.dim,
            coords,
            params: self
                .params
                .as_ref()
                .map(|p| indices.iter().map(|&i| p[i]).collect()),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record((0..self.dim).map(|j| format!("x{j}")))?;
        for p in self.iter() {
            w.write_record(p.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let dim = r.headers()?.len();
        let mut coords = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: rec.len(),
                });
            }
            for field in rec.iter() {
                coords.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("{field:?}: {e}")))?,
                );
            }
        }
        if coords.is_empty() {
            return Err(Error::EmptyInput("point csv"));
        }
        Self::new(dim, coords)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Undirected graph stored as symmetric adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl WeightedGraph {
    /// Builds a graph from undirected edges. Each edge is stored in both
    /// directions; repeated edges keep the last weight.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        Self::build(num_nodes, edges, false)
    }

    /// Like [`WeightedGraph::from_edges`] but accepts `i == j` entries.
    pub fn from_edges_with_loops(num_nodes: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        Self::build(num_nodes, edges, true)
    }

    fn build(num_nodes: usize, edges: &[(usize, usize, f64)], loops: bool) -> Result<Self> {
        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_nodes];
        for &(i, j, w) in edges {
            for idx in [i, j] {
                if idx >= num_nodes {
                    return Err(Error::NodeOutOfRange {
                        index: idx,
                        len: num_nodes,
                    });
                }
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(invalid("weight", format!("edge ({i},{j}) has weight {w}")));
            }
            if w == 0.0 {
                continue;
            }
            if i == j && !loops {
                return Err(invalid("edges", format!("self-loop at node {i}")));
            }
            adjacency[i].push((j, w));
            if i != j {
                adjacency[j].push((i, w));
            }
        }
        for row in &mut adjacency {
            row.sort_by_key(|&(j, _)| j);
            // last write wins for repeated edges
            let mut dedup: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, w) in row.iter() {
                match dedup.last_mut() {
                    Some(last) if last.0 == j => last.1 = w,
                    _ => dedup.push((j, w)),
                }
            }
            *row = dedup;
        }
        Ok(Self { adjacency })
    }

    /// Reads the non-zero pattern of a symmetric dense matrix.
    pub fn from_dense(w: &DenseMatrix) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::DimensionMismatch {
                expected: w.rows(),
                actual: w.cols(),
            });
        }
        let asym = w.max_asymmetry();
        if asym > 1e-12 * w.max_abs().max(1.0) {
            return Err(Error::NotSymmetric(asym));
        }
        let n = w.rows();
        let mut adjacency = vec![Vec::new(); n];
        for (i, row) in adjacency.iter_mut().enumerate() {
            for j in 0..n {
                let v = w[(i, j)];
                if v < 0.0 || !v.is_finite() {
                    return Err(invalid("weight", format!("entry ({i},{j}) = {v}")));
                }
                if v > 0.0 {
                    row.push((j, v));
                }
            }
        }
        Ok(Self { adjacency })
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_edges(&self) -> usize {
        let loops = (0..self.num_nodes())
            .filter(|&i| self.adjacency[i].iter().any(|&(j, _)| j == i))
            .count();
        (self.adjacency.iter().map(Vec::len).sum::<usize>() + loops) / 2
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn unweighted_degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn unweighted_degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn weighted_degrees(&self) -> Vec<f64> {
        self.adjacency
            .iter()
            .map(|row| row.iter().map(|&(_, w)| w).sum())
            .collect()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .map_or(0.0, |pos| self.adjacency[i][pos].1)
    }

    /// Undirected edges with `i <= j`, in row order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, row) in self.adjacency.iter().enumerate() {
            for &(j, w) in row {
                if i <= j {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    /// Checks that every stored edge has a mirror with identical weight.
    pub fn is_symmetric(&self) -> bool {
        self.adjacency.iter().enumerate().all(|(i, row)| {
            row.iter()
                .all(|&(j, w)| w > 0.0 && self.weight(j, i) == w)
        })
    }

    /// Connected-component label per node, numbered from 0 in order of
    /// first appearance.
    pub fn components(&self) -> Vec<usize> {
        let n = self.num_nodes();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adjacency[u] {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn num_components(&self) -> usize {
        self.components().into_iter().max().map_or(0, |m| m + 1)
    }

    pub fn is_connected(&self) -> bool {
        self.num_components() <= 1
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.num_nodes();
        let mut m = DenseMatrix::zeros(n, n);
        for (i, row) in self.adjacency.iter().enumerate() {
            for &(j, w) in row {
                m[(i, j)] = w;
            }
        }
        m
    }

    /// Same topology with weights `w_ij / sqrt(d_i d_j)`.
    pub fn symmetric_normalized(&self) -> Result<Self> {
        let deg = self.weighted_degrees();
        if let Some(i) = deg.iter().position(|&d| d <= 0.0) {
            return Err(Error::IsolatedNode(i));
        }
        let inv: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
        let adjacency = self
            .adjacency
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().map(|&(j, w)| (j, w * inv[i] * inv[j])).collect())
            .collect();
        Ok(Self { adjacency })
    }

    /// Same topology with every weight multiplied by `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(invalid("scale", format!("{s}")));
        }
        let adjacency = self
            .adjacency
            .iter()
            .map(|row| row.iter().map(|&(j, w)| (j, w * s)).collect())
            .collect();
        Ok(Self { adjacency })
    }

    /// Text format: a header `N M`, then one `i j w` line per undirected edge
    /// with `i <= j`.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let edges = self.edges();
        writeln!(w, "{} {}", self.num_nodes(), edges.len())?;
        for (i, j, wt) in edges {
            writeln!(w, "{i} {j} {wt:e}")?;
        }
        Ok(())
    }

    pub fn read_text<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines.next().ok_or(Error::EmptyInput("graph file"))??;
        let mut it = header.split_whitespace();
        let parse_usize = |s: Option<&str>| -> Result<usize> {
            s.ok_or_else(|| Error::Parse("truncated line".into()))?
                .parse::<usize>()
                .map_err(|e| Error::Parse(e.to_string()))
        };
        let n = parse_usize(it.next())?;
        let m = parse_usize(it.next())?;
        let mut edges = Vec::with_capacity(m);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let i = parse_usize(it.next())?;
            let j = parse_usize(it.next())?;
            let w = it
                .next()
                .ok_or_else(|| Error::Parse("missing weight".into()))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(e.to_string()))?;
            edges.push((i, j, w));
        }
        if edges.len() != m {
            return Err(Error::Parse(format!("header declares {m} edges, found {}", edges.len())));
        }
        Self::from_edges_with_loops(n, &edges)
    }
}

/// Wrap-around grid on `{0, 1/n, ..., (n-1)/n}^d` with unit weights.
#[derive(Debug, Clone)]
pub struct GridGraph {
    n: usize,
    d: u32,
    graph: WeightedGraph,
}

impl GridGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Node id of a multi-index; coordinate 0 varies slowest.
    pub fn index_of(&self, multi: &[usize]) -> Result<usize> {
        if multi.len() != self.d as usize {
            return Err(Error::DimensionMismatch {
                expected: self.d as usize,
                actual: multi.len(),
            });
        }
        let mut idx = 0;
        for &k in multi {
            if k >= self.n {
                return Err(Error::NodeOutOfRange { index: k, len: self.n });
            }
            idx = idx * self.n + k;
        }
        Ok(idx)
    }

    pub fn multi_index(&self, mut node: usize) -> Vec<usize> {
        let mut out = vec![0; self.d as usize];
        for slot in out.iter_mut().rev() {
            *slot = node % self.n;
            node /= self.n;
        }
        out
    }

    /// Position of a node in the unit torus.
    pub fn coords(&self, node: usize) -> Vec<f64> {
        let h = self.spacing();
        self.multi_index(node).into_iter().map(|k| k as f64 * h).collect()
    }

    /// The node closest to the torus centre, `(n/2, ..., n/2)`.
    pub fn center(&self) -> usize {
        let c = vec![self.n / 2; self.d as usize];
        self.index_of(&c).expect("centre index is in range")
    }
}

pub fn grid_size(n: usize, d: u32) -> Result<usize> {
    n.checked_pow(d)
        .filter(|&s| s <= u32::MAX as usize)
        .ok_or(Error::GridTooLarge { n, d })
}

pub fn build_grid_graph(n: usize, d: u32) -> Result<GridGraph> {
    if n < 3 {
        return Err(invalid("n", format!("grid side must be at least 3, got {n}")));
    }
    if d == 0 {
        return Err(invalid("d", "dimension must be at least 1"));
    }
    let size = grid_size(n, d)?;
    let mut adjacency = Vec::with_capacity(size);
    let strides: Vec<usize> = (0..d).map(|j| n.pow(d - 1 - j)).collect();
    for node in 0..size {
        let mut row = Vec::with_capacity(2 * d as usize);
        for &s in &strides {
            let k = (node / s) % n;
            let up = if k + 1 == n { node + s - n * s } else { node + s };
            let down = if k == 0 { node + (n - 1) * s } else { node - s };
            row.push((up, 1.0));
            row.push((down, 1.0));
        }
        row.sort_by_key(|&(j, _)| j);
        adjacency.push(row);
    }
    Ok(GridGraph {
        n,
        d,
        graph: WeightedGraph { adjacency },
    })
}

/// `L_n = (2d/h^2)(I - T_n)` with `T_n` the neighbour average and `h = 1/n`.
/// The graph must be exactly the wrap-around grid of side `n` in dimension `d`.
pub fn rescaled_random_walk_laplacian(graph: &WeightedGraph, n: usize, d: u32) -> Result<DenseMatrix> {
    let reference = build_grid_graph(n, d)?;
    if graph.num_nodes() != reference.num_nodes() {
        return Err(Error::NotAGrid(format!(
            "{} nodes, expected {}",
            graph.num_nodes(),
            reference.num_nodes()
        )));
    }
    for i in 0..graph.num_nodes() {
        let same = graph
            .neighbors(i)
            .iter()
            .map(|&(j, _)| j)
            .eq(reference.graph.neighbors(i).iter().map(|&(j, _)| j));
        if !same {
            return Err(Error::NotAGrid(format!("node {i} has non-grid neighbours")));
        }
    }
    let size = graph.num_nodes();
    let h = 1.0 / n as f64;
    let scale = 2.0 * d as f64 / (h * h);
    let off = -scale / (2.0 * d as f64);
    let mut l = DenseMatrix::zeros(size, size);
    for i in 0..size {
        l[(i, i)] = scale;
        for &(j, _) in graph.neighbors(i) {
            l[(i, j)] += off;
        }
    }
    Ok(l)
}

/// Applies `L_n` to a vector without forming the matrix.
pub fn apply_rescaled_laplacian(grid: &GridGraph, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != grid.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: grid.num_nodes(),
            actual: f.len(),
        });
    }
    let d = grid.d as f64;
    let h = grid.spacing();
    let scale = 2.0 * d / (h * h);
    // summing differences keeps constants exactly in the kernel
    Ok((0..f.len())
        .map(|i| {
            let diff: f64 = grid.graph.neighbors(i).iter().map(|&(j, _)| f[i] - f[j]).sum();
            scale * diff / (2.0 * d)
        })
        .collect())
}

/// `D^{-1/2} W D^{-1/2}` for a dense symmetric non-negative `W`.
pub fn symmetric_normalized_affinity(w: &DenseMatrix) -> Result<DenseMatrix> {
    if !w.is_square() {
        return Err(Error::DimensionMismatch {
            expected: w.rows(),
            actual: w.cols(),
        });
    }
    let asym = w.max_asymmetry();
    if asym > 1e-10 * w.max_abs().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    if let Some(v) = w.as_slice().iter().find(|v| **v < 0.0) {
        return Err(invalid("W", format!("negative entry {v}")));
    }
    let deg = w.row_sums();
    if let Some(i) = deg.iter().position(|&d| d <= 0.0) {
        return Err(Error::IsolatedNode(i));
    }
    let inv: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    Ok(DenseMatrix::from_fn(w.rows(), w.cols(), |i, j| {
        w[(i, j)] * inv[i] * inv[j]
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// `sigma^2` is the median squared edge length of the final edge set.
    MedianEdge,
    /// A fixed `sigma^2 > 0`.
    Fixed(f64),
}

/// Result of kNN construction.
#[derive(Debug, Clone)]
pub struct KnnGraph {
    pub graph: WeightedGraph,
    pub sigma2: f64,
    /// Set when the union graph has more than one component.
    pub disconnected: bool,
}

/// Symmetrized kNN graph with Gaussian weights `exp(-|x_i - x_j|^2 / sigma^2)`.
///
/// Ties at equal distance go to the lower index. An edge exists when either
/// endpoint lists the other.
pub fn build_knn_graph(points: &PointCloud, k: usize, bandwidth: Bandwidth) -> Result<KnnGraph> {
    let n = points.len();
    if n == 0 {
        return Err(Error::EmptyInput("point cloud"));
    }
    if k == 0 || k >= n {
        return Err(invalid("k", format!("need 1 <= k < N = {n}, got {k}")));
    }
    if let Bandwidth::Fixed(s) = bandwidth {
        if !(s > 0.0 && s.is_finite()) {
            return Err(invalid("sigma2", format!("{s}")));
        }
    }
    let lists: Vec<Result<Vec<(usize, f64)>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let pi = points.point(i);
            let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d2 = squared_distance(pi, points.point(j));
                if d2 == 0.0 {
                    return Err(Error::DuplicatePoint(i.min(j), i.max(j)));
                }
                cand.push((d2, j));
            }
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, cmp);
                cand.truncate(k);
            }
            cand.sort_by(cmp);
            Ok(cand.into_iter().map(|(d2, j)| (j, d2)).collect())
        })
        .collect();

    let mut pairs: Vec<(usize, usize, f64)> = Vec::with_capacity(n * k);
    for (i, list) in lists.into_iter().enumerate() {
        for (j, d2) in list? {
            pairs.push((i.min(j), i.max(j), d2));
        }
    }
    pairs.sort_by_key(|a| (a.0, a.1));
    pairs.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);

    let sigma2 = match bandwidth {
        Bandwidth::Fixed(s) => s,
        Bandwidth::MedianEdge => {
            let mut lens: Vec<f64> = pairs.iter().map(|p| p.2).collect();
            lens.sort_by(f64::total_cmp);
            let m = lens.len();
            if m % 2 == 1 {
                lens[m / 2]
            } else {
                0.5 * (lens[m / 2 - 1] + lens[m / 2])
            }
        }
    };
    let edges: Vec<(usize, usize, f64)> = pairs
        .into_iter()
        .map(|(i, j, d2)| (i, j, (-d2 / sigma2).exp()))
        .collect();
    if let Some(e) = edges.iter().find(|e| e.2 == 0.0) {
        return Err(invalid(
            "sigma2",
            format!("weight of edge ({}, {}) underflows to zero", e.0, e.1),
        ));
    }
    let graph = WeightedGraph::from_edges(n, &edges)?;
    let disconnected = !graph.is_connected();
    Ok(KnnGraph {
        graph,
        sigma2,
        disconnected,
    })
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry(f64, usize);

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra from `source` with Euclidean edge lengths taken from `points`.
/// Unreachable nodes get `f64::INFINITY`.
pub fn geodesic_distances(graph: &WeightedGraph, points: &PointCloud, source: usize) -> Result<Vec<f64>> {
    let n = graph.num_nodes();
    if source >= n {
        return Err(Error::NodeOutOfRange { index: source, len: n });
    }
    if points.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: points.len(),
        });
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapEntry(0.0, source));
    while let Some(HeapEntry(du, u)) = heap.pop() {
        if du > dist[u] {
            continue;
        }
        for &(v, _) in graph.neighbors(u) {
            let nd = du + points.distance(u, v);
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapEntry(nd, v));
            }
        }
    }
    Ok(dist)
}

/// Geodesic rows for several sources, computed in parallel.
pub fn geodesic_rows(graph: &WeightedGraph, points: &PointCloud, sources: &[usize]) -> Result<Vec<Vec<f64>>> {
    sources
        .par_iter()
        .map(|&s| geodesic_distances(graph, points, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_points(xs: &[f64]) -> PointCloud {
        PointCloud::from_points(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn collinear_knn() {
        let pc = line_points(&[0.0, 1.0, 3.0]);
        let g = build_knn_graph(&pc, 1, Bandwidth::Fixed(1.0)).unwrap();
        assert_eq!(g.graph.num_edges(), 2);
        assert!((g.graph.weight(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((g.graph.weight(1, 2) - (-4.0f64).exp()).abs() < 1e-15);
        assert_eq!(g.graph.weight(0, 2), 0.0);
        assert!(!g.disconnected);
    }

    #[test]
    fn knn_ties_prefer_lower_index() {
        // node 1 is equidistant from 0 and 2
        let pc = line_points(&[0.0, 1.0, 2.0, 10.0]);
        let g = build_knn_graph(&pc, 1, Bandwidth::Fixed(1.0)).unwrap();
        assert!(g.graph.weight(1, 0) > 0.0);
        assert_eq!(g.graph.weight(1, 2), g.graph.weight(2, 1));
    }

    #[test]
    fn knn_complete_graph() {
        let pc = line_points(&[0.0, 0.5, 1.7, 2.0, 4.0]);
        let g = build_knn_graph(&pc, 4, Bandwidth::Fixed(2.0)).unwrap();
        assert!(g.graph.unweighted_degrees().iter().all(|&d| d == 4));
    }

    #[test]
    fn knn_rejects_duplicates_and_bad_k() {
        let pc = line_points(&[0.0, 1.0, 1.0]);
        assert!(matches!(
            build_knn_graph(&pc, 1, Bandwidth::MedianEdge),
            Err(Error::DuplicatePoint(1, 2))
        ));
        let pc = line_points(&[0.0, 1.0, 2.0]);
        assert!(build_knn_graph(&pc, 3, Bandwidth::MedianEdge).is_err());
        assert!(build_knn_graph(&pc, 0, Bandwidth::MedianEdge).is_err());
        assert!(build_knn_graph(&pc, 1, Bandwidth::Fixed(0.0)).is_err());
    }

    #[test]
    fn knn_flags_disconnected() {
        let pc = line_points(&[0.0, 1.0, 100.0, 101.0]);
        let g = build_knn_graph(&pc, 1, Bandwidth::MedianEdge).unwrap();
        assert!(g.disconnected);
        assert_eq!(g.sigma2, 1.0);
    }

    #[test]
    fn grid_shapes() {
        for (n, d, nodes, deg) in [(3, 1, 3, 2), (5, 2, 25, 4), (4, 3, 64, 6)] {
            let g = build_grid_graph(n, d).unwrap();
            assert_eq!(g.num_nodes(), nodes);
            assert!(g.graph().unweighted_degrees().iter().all(|&x| x == deg));
            assert!(g.graph().is_symmetric());
        }
        assert!(build_grid_graph(2, 1).is_err());
        assert!(matches!(build_grid_graph(1 << 20, 4), Err(Error::GridTooLarge { .. })));
    }

    #[test]
    fn grid_bijection() {
        let g = build_grid_graph(5, 3).unwrap();
        for node in 0..g.num_nodes() {
            assert_eq!(g.index_of(&g.multi_index(node)).unwrap(), node);
        }
        assert_eq!(g.center(), g.index_of(&[2, 2, 2]).unwrap());
    }

    #[test]
    fn ring_laplacian_pattern() {
        let g = build_grid_graph(3, 1).unwrap();
        let l = rescaled_random_walk_laplacian(g.graph(), 3, 1).unwrap();
        let h2 = 1.0 / 9.0;
        for i in 0..3 {
            assert!((l[(i, i)] - 2.0 / h2).abs() < 1e-9);
            assert!((l[(i, (i + 1) % 3)] + 1.0 / h2).abs() < 1e-9);
        }
        assert!(l.row_sums().iter().all(|s| s.abs() < 1e-9));
    }

    #[test]
    fn laplacian_rejects_non_grid() {
        let g = WeightedGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert!(matches!(
            rescaled_random_walk_laplacian(&g, 3, 1),
            Err(Error::NotAGrid(_))
        ));
    }

    #[test]
    fn normalized_affinity_examples() {
        let w = DenseMatrix::from_rows(&[vec![0.0, 4.0], vec![4.0, 0.0]]).unwrap();
        let wf = symmetric_normalized_affinity(&w).unwrap();
        assert!((wf[(0, 1)] - 1.0).abs() < 1e-15);
        let w = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(symmetric_normalized_affinity(&w), Err(Error::IsolatedNode(0))));
    }

    #[test]
    fn geodesics() {
        let pc = line_points(&[0.0, 1.0, 2.0]);
        let g = WeightedGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert_eq!(geodesic_distances(&g, &pc, 0).unwrap(), vec![0.0, 1.0, 2.0]);
        let g = WeightedGraph::from_edges(3, &[(0, 1, 1.0)]).unwrap();
        assert!(geodesic_distances(&g, &pc, 0).unwrap()[2].is_infinite());
        assert!(geodesic_distances(&g, &pc, 3).is_err());
    }

    #[test]
    fn text_roundtrip() {
        let g = WeightedGraph::from_edges(4, &[(0, 1, 0.5), (2, 1, 2.0), (3, 0, 1.25)]).unwrap();
        let mut buf = Vec::new();
        g.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("4 3\n"));
        assert_eq!(WeightedGraph::read_text(&buf[..]).unwrap(), g);
    }

    #[test]
    fn graph_rejects_bad_edges() {
        assert!(WeightedGraph::from_edges(2, &[(0, 0, 1.0)]).is_err());
        assert!(WeightedGraph::from_edges(2, &[(0, 2, 1.0)]).is_err());
        assert!(WeightedGraph::from_edges(2, &[(0, 1, -1.0)]).is_err());
        let g = WeightedGraph::from_edges(2, &[(0, 1, 0.0)]).unwrap();
        assert_eq!(g.num_edges(), 0);
        assert!(WeightedGraph::from_edges_with_loops(2, &[(0, 0, 1.0)]).is_ok());
    }

    #[test]
    fn csv_roundtrip() {
        let pc = PointCloud::from_points(&[vec![0.1, 2.0, -3.5], vec![1e-9, 4.0, 5.0]]).unwrap();
        let mut buf = Vec::new();
        pc.write_csv(&mut buf).unwrap();
        assert_eq!(PointCloud::read_csv(&buf[..]).unwrap(), pc);
    }
}
