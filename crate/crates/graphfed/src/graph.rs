//! Undirected CSR graph plus the per-vertex containers (features, labels,
//! train/val/test split) and the sparse kernels the models build on.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::{DenseMatrix, Real};
use crate::error::{Error, Result};

/// Per-vertex feature rows, `N x F`.
pub type FeatureMatrix = DenseMatrix<f32>;

/// Undirected graph over dense vertex ids `0..N`, stored as CSR with every
/// edge present in both directions. Neighbor lists are sorted ascending and
/// hold no duplicates or self-loops.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    num_vertices: usize,
    csr_offsets: Vec<usize>,
    csr_neighbors: Vec<u32>,
    num_edges: usize,
}

impl Graph {
    /// Build from an edge list. Duplicate pairs (in either orientation) and
    /// self-loops are silently dropped; directed input is symmetrized.
    pub fn from_edge_list(edges: &[(u32, u32)], n: usize) -> Result<Self> {
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u as usize >= n || v as usize >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({u}, {v}) out of range for {n} vertices"
                )));
            }
            if u == v {
                continue;
            }
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        let mut csr_offsets = Vec::with_capacity(n + 1);
        let mut csr_neighbors = Vec::new();
        csr_offsets.push(0);
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            csr_neighbors.extend_from_slice(list);
            csr_offsets.push(csr_neighbors.len());
        }
        let num_edges = csr_neighbors.len() / 2;
        Ok(Self {
            num_vertices: n,
            csr_offsets,
            csr_neighbors,
            num_edges,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    /// Number of undirected edges (each counted once).
    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        let v = v as usize;
        &self.csr_neighbors[self.csr_offsets[v]..self.csr_offsets[v + 1]]
    }

    pub fn degree(&self, v: u32) -> usize {
        self.neighbors(v).len()
    }

    /// Average vertex degree, `2E / N`.
    pub fn avg_degree(&self) -> f64 {
        if self.num_vertices == 0 {
            0.0
        } else {
            2.0 * self.num_edges as f64 / self.num_vertices as f64
        }
    }

    /// Iterate each undirected edge once, as `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.num_vertices as u32).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }
}

/// Class id per vertex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    values: Vec<u32>,
    num_classes: usize,
}

impl Labels {
    pub fn new(values: Vec<u32>, num_classes: usize) -> Result<Self> {
        if let Some(&bad) = values.iter().find(|&&v| v as usize >= num_classes) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            values,
            num_classes,
        })
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn gather(&self, indices: &[u32]) -> Self {
        Self {
            values: indices.iter().map(|&i| self.values[i as usize]).collect(),
            num_classes: self.num_classes,
        }
    }
}

/// Train/val/test role of a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Val,
    Test,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Val => "val",
            Role::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Role::Train),
            "val" => Ok(Role::Val),
            "test" => Ok(Role::Test),
            other => Err(Error::Format(format!("unknown split role `{other}`"))),
        }
    }
}

/// Role per vertex; the three roles partition the vertex set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMask {
    roles: Vec<Role>,
}

impl SplitMask {
    pub fn new(roles: Vec<Role>) -> Self {
        Self { roles }
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn role(&self, v: u32) -> Role {
        self.roles[v as usize]
    }

    /// Vertex ids with the given role, ascending.
    pub fn indices(&self, role: Role) -> Vec<u32> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, &r)| r == role)
            .map(|(i, _)| i as u32)
            .collect()
    }

    pub fn count(&self, role: Role) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }

    pub fn gather(&self, indices: &[u32]) -> Self {
        Self {
            roles: indices.iter().map(|&i| self.roles[i as usize]).collect(),
        }
    }
}

/// Symmetric normalization of `A + I`: entry `(u, v)` is
/// `1 / sqrt((deg(u)+1)(deg(v)+1))`, with a diagonal entry for every vertex.
/// Same CSR layout as [`Graph`] plus the self-loops, rows sorted by column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedAdjacency<T> {
    num_vertices: usize,
    offsets: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<T>,
}

impl<T: Real> NormalizedAdjacency<T> {
    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Row `u` as parallel (column, weight) slices.
    pub fn row(&self, u: u32) -> (&[u32], &[T]) {
        let u = u as usize;
        let range = self.offsets[u]..self.offsets[u + 1];
        (&self.cols[range.clone()], &self.weights[range])
    }

    pub fn entry(&self, u: u32, v: u32) -> Option<T> {
        let (cols, weights) = self.row(u);
        cols.binary_search(&v).ok().map(|i| weights[i])
    }
}

/// `A_hat = D^{-1/2} (A + I) D^{-1/2}` with `D` the degree matrix of `A + I`.
/// Weights are evaluated in f64 and rounded once, so the matrix is exactly
/// symmetric at any precision.
pub fn normalize_adjacency<T: Real>(g: &Graph) -> NormalizedAdjacency<T> {
    let n = g.num_vertices();
    // Single rounding per entry; the integer degree product is symmetric,
    // so (u, v) and (v, u) get bit-identical weights.
    let weight = |u: u32, v: u32| {
        let prod = ((g.degree(u) + 1) * (g.degree(v) + 1)) as f64;
        T::from_f64(1.0 / prod.sqrt())
    };
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(g.num_edges() * 2 + n);
    let mut weights = Vec::with_capacity(g.num_edges() * 2 + n);
    offsets.push(0);
    for u in 0..n as u32 {
        let mut self_loop_pending = true;
        for &v in g.neighbors(u) {
            if self_loop_pending && v > u {
                cols.push(u);
                weights.push(weight(u, u));
                self_loop_pending = false;
            }
            cols.push(v);
            weights.push(weight(u, v));
        }
        if self_loop_pending {
            cols.push(u);
            weights.push(weight(u, u));
        }
        offsets.push(cols.len());
    }
    NormalizedAdjacency {
        num_vertices: n,
        offsets,
        cols,
        weights,
    }
}

/// Sparse-dense product `A_hat * X`. Row-parallel; each output row is a
/// fixed sequential accumulation, so the result does not depend on the
/// degree of parallelism.
pub fn spmm<T: Real>(a: &NormalizedAdjacency<T>, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if a.num_vertices != x.rows() {
        return Err(Error::Shape(format!(
            "spmm: adjacency is {0}x{0} but features have {1} rows",
            a.num_vertices,
            x.rows()
        )));
    }
    let cols = x.cols();
    let mut out = DenseMatrix::zeros(a.num_vertices, cols);
    let body = |(u, out_row): (usize, &mut [T])| {
        let (nbr_cols, nbr_weights) = a.row(u as u32);
        for (&c, &w) in nbr_cols.iter().zip(nbr_weights) {
            for (o, &xv) in out_row.iter_mut().zip(x.row(c as usize)) {
                *o = *o + w * xv;
            }
        }
    };
    if a.nnz() * cols >= 1 << 16 {
        out.data_mut()
            .par_chunks_mut(cols.max(1))
            .enumerate()
            .for_each(body);
    } else {
        out.data_mut()
            .chunks_mut(cols.max(1))
            .enumerate()
            .for_each(body);
    }
    Ok(out)
}

/// Local-to-global bookkeeping for an induced subgraph. `global_to_local`
/// is kept as a sorted pair list so serialized bytes are deterministic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgraphMap {
    local_to_global: Vec<u32>,
    global_to_local: Vec<(u32, u32)>,
}

impl SubgraphMap {
    fn new(local_to_global: Vec<u32>) -> Self {
        let mut global_to_local: Vec<(u32, u32)> = local_to_global
            .iter()
            .enumerate()
            .map(|(local, &global)| (global, local as u32))
            .collect();
        global_to_local.sort_unstable();
        Self {
            local_to_global,
            global_to_local,
        }
    }

    pub fn len(&self) -> usize {
        self.local_to_global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local_to_global.is_empty()
    }

    pub fn local_to_global(&self) -> &[u32] {
        &self.local_to_global
    }

    pub fn to_local(&self, global: u32) -> Option<u32> {
        self.global_to_local
            .binary_search_by_key(&global, |&(g, _)| g)
            .ok()
            .map(|i| self.global_to_local[i].1)
    }

    pub fn to_global(&self, local: u32) -> u32 {
        self.local_to_global[local as usize]
    }

    /// Fast lookup table for repeated translation.
    pub fn lookup(&self) -> HashMap<u32, u32> {
        self.global_to_local.iter().copied().collect()
    }
}

/// Subgraph induced on `vertex_ids`: exactly the edges of `g` with both
/// endpoints in the set survive. Local id `i` corresponds to
/// `vertex_ids[i]`, preserving the caller's ordering.
pub fn induced_subgraph(g: &Graph, vertex_ids: &[u32]) -> Result<(Graph, SubgraphMap)> {
    let mut to_local: HashMap<u32, u32> = HashMap::with_capacity(vertex_ids.len());
    for (local, &global) in vertex_ids.iter().enumerate() {
        if global as usize >= g.num_vertices() {
            return Err(Error::InvalidInput(format!(
                "vertex {global} out of range for {} vertices",
                g.num_vertices()
            )));
        }
        if to_local.insert(global, local as u32).is_some() {
            return Err(Error::InvalidInput(format!(
                "duplicate vertex {global} in subgraph set"
            )));
        }
    }
    let mut csr_offsets = Vec::with_capacity(vertex_ids.len() + 1);
    let mut csr_neighbors = Vec::new();
    csr_offsets.push(0);
    for &global in vertex_ids {
        let start = csr_neighbors.len();
        for &nbr in g.neighbors(global) {
            if let Some(&local_nbr) = to_local.get(&nbr) {
                csr_neighbors.push(local_nbr);
            }
        }
        // Neighbor lists are sorted by *global* id; local ids may reorder.
        csr_neighbors[start..].sort_unstable();
        csr_offsets.push(csr_neighbors.len());
    }
    let num_edges = csr_neighbors.len() / 2;
    let sub = Graph {
        num_vertices: vertex_ids.len(),
        csr_offsets,
        csr_neighbors,
        num_edges,
    };
    Ok((sub, SubgraphMap::new(vertex_ids.to_vec())))
}
