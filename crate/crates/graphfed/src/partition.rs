//! Balanced edge-cut partitioning: BFS region growth from random seed
//! vertices followed by a single boundary-refinement pass, plus
//! interoperability with externally produced partition files.

use std::collections::VecDeque;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{stream, tag};

/// Partition id per vertex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionAssignment {
    assignment: Vec<u32>,
    num_partitions: usize,
}

impl PartitionAssignment {
    pub fn new(assignment: Vec<u32>, num_partitions: usize) -> Result<Self> {
        let mut sizes = vec![0usize; num_partitions];
        for (v, &p) in assignment.iter().enumerate() {
            if p as usize >= num_partitions {
                return Err(Error::InvalidInput(format!(
                    "vertex {v} assigned to partition {p}, but only {num_partitions} declared"
                )));
            }
            sizes[p as usize] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidInput(format!("partition {empty} is empty")));
        }
        Ok(Self {
            assignment,
            num_partitions,
        })
    }

    pub fn num_partitions(&self) -> usize {
        self.num_partitions
    }

    pub fn num_vertices(&self) -> usize {
        self.assignment.len()
    }

    pub fn partition_of(&self, v: u32) -> u32 {
        self.assignment[v as usize]
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    /// Vertices of partition `p`, ascending.
    pub fn members(&self, p: u32) -> Vec<u32> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &q)| q == p)
            .map(|(v, _)| v as u32)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.num_partitions];
        for &p in &self.assignment {
            sizes[p as usize] += 1;
        }
        sizes
    }
}

/// Cut statistics for a partitioned graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionStats {
    /// Undirected edges whose endpoints lie in different partitions.
    pub cut_edges: usize,
    pub partition_sizes: Vec<usize>,
    /// `2E / N`.
    pub avg_vertex_degree: f64,
    /// Mean number of direct inter-partition edges per unordered
    /// partition pair; 0 for a single partition.
    pub avg_cross_edges: f64,
}

/// Allowed size spread (max - min) between partitions.
pub fn balance_slack(n: usize, m: usize) -> usize {
    ((0.02 * n as f64 / m as f64).ceil() as usize).max(1)
}

/// Grow `m` balanced regions breadth-first, always extending the currently
/// smallest region (ties to the lowest id), then run one refinement pass
/// that moves boundary vertices whose move strictly reduces the cut
/// without violating balance.
///
/// The first seed vertex is drawn uniformly; each further seed is the
/// vertex at maximum BFS distance from the seeds so far (unreachable
/// counts as infinite, ties to the lowest id). Uniform seeds can collide
/// inside one dense region and force an avoidable cut; farthest-point
/// placement keeps the disjoint-components case exactly cut-free.
pub fn partition_bfs_balanced(g: &Graph, m: usize, seed: u64) -> Result<PartitionAssignment> {
    let n = g.num_vertices();
    if m == 0 {
        return Err(Error::Config("partition count must be >= 1".into()));
    }
    if m > n {
        return Err(Error::Config(format!(
            "cannot split {n} vertices into {m} partitions"
        )));
    }

    let mut rng = stream(seed, &[tag::PARTITION]);
    let mut seeds: Vec<u32> = vec![rng.random_range(0..n) as u32];
    while seeds.len() < m {
        seeds.push(farthest_vertex(g, &seeds));
    }

    const UNASSIGNED: u32 = u32::MAX;
    let mut assignment = vec![UNASSIGNED; n];
    let mut sizes = vec![0usize; m];
    let mut queues: Vec<VecDeque<u32>> = vec![VecDeque::new(); m];
    for (p, &s) in seeds.iter().enumerate() {
        assignment[s as usize] = p as u32;
        sizes[p] += 1;
        for &nbr in g.neighbors(s) {
            queues[p].push_back(nbr);
        }
    }

    let mut remaining = n - m;
    let mut scan_cursor = 0u32; // for jumps into unreached components
    while remaining > 0 {
        // smallest region, lowest id on ties
        let p = (0..m).min_by_key(|&p| (sizes[p], p)).unwrap();
        let mut v = None;
        while let Some(c) = queues[p].pop_front() {
            if assignment[c as usize] == UNASSIGNED {
                v = Some(c);
                break;
            }
        }
        let v = v.unwrap_or_else(|| {
            while assignment[scan_cursor as usize] != UNASSIGNED {
                scan_cursor += 1;
            }
            scan_cursor
        });
        assignment[v as usize] = p as u32;
        sizes[p] += 1;
        remaining -= 1;
        for &nbr in g.neighbors(v) {
            if assignment[nbr as usize] == UNASSIGNED {
                queues[p].push_back(nbr);
            }
        }
    }

    refine_once(g, &mut assignment, &mut sizes, balance_slack(n, m));
    PartitionAssignment::new(assignment, m)
}

/// Vertex at maximum multi-source BFS distance from `sources`; vertices
/// unreachable from every source rank highest, ties go to the lowest id.
fn farthest_vertex(g: &Graph, sources: &[u32]) -> u32 {
    let n = g.num_vertices();
    let mut dist = vec![u32::MAX; n];
    let mut queue: VecDeque<u32> = VecDeque::new();
    for &s in sources {
        dist[s as usize] = 0;
        queue.push_back(s);
    }
    while let Some(v) = queue.pop_front() {
        for &u in g.neighbors(v) {
            if dist[u as usize] == u32::MAX {
                dist[u as usize] = dist[v as usize] + 1;
                queue.push_back(u);
            }
        }
    }
    (0..n as u32)
        .max_by_key(|&v| (dist[v as usize], std::cmp::Reverse(v)))
        .unwrap()
}

/// One pass over all vertices in id order; move a vertex to the neighboring
/// partition with the largest strictly positive cut gain, if the move keeps
/// every partition non-empty and the size spread within `slack`.
fn refine_once(g: &Graph, assignment: &mut [u32], sizes: &mut [usize], slack: usize) {
    let m = sizes.len();
    let mut nbr_counts = vec![0usize; m];
    for v in 0..g.num_vertices() as u32 {
        let from = assignment[v as usize] as usize;
        if sizes[from] <= 1 {
            continue;
        }
        nbr_counts.iter_mut().for_each(|c| *c = 0);
        for &u in g.neighbors(v) {
            nbr_counts[assignment[u as usize] as usize] += 1;
        }
        let mut best: Option<(usize, usize)> = None; // (gain, target)
        for to in 0..m {
            if to == from || nbr_counts[to] <= nbr_counts[from] {
                continue;
            }
            let gain = nbr_counts[to] - nbr_counts[from];
            if best.map_or(true, |(bg, bt)| gain > bg || (gain == bg && to < bt)) {
                best = Some((gain, to));
            }
        }
        if let Some((_, to)) = best {
            sizes[from] -= 1;
            sizes[to] += 1;
            let max = *sizes.iter().max().unwrap();
            let min = *sizes.iter().min().unwrap();
            if max - min <= slack {
                assignment[v as usize] = to as u32;
            } else {
                sizes[from] += 1;
                sizes[to] -= 1;
            }
        }
    }
}

/// Exact cut statistics.
pub fn cut_stats(g: &Graph, p: &PartitionAssignment) -> Result<PartitionStats> {
    if p.num_vertices() != g.num_vertices() {
        return Err(Error::Shape(format!(
            "assignment covers {} vertices, graph has {}",
            p.num_vertices(),
            g.num_vertices()
        )));
    }
    let m = p.num_partitions();
    let mut cut_edges = 0usize;
    let mut pair_counts = vec![0usize; m * m];
    for (u, v) in g.edges() {
        let (a, b) = (p.partition_of(u), p.partition_of(v));
        if a != b {
            cut_edges += 1;
            let (lo, hi) = (a.min(b) as usize, a.max(b) as usize);
            pair_counts[lo * m + hi] += 1;
        }
    }
    let num_pairs = m * (m - 1) / 2;
    let avg_cross_edges = if num_pairs == 0 {
        0.0
    } else {
        pair_counts.iter().sum::<usize>() as f64 / num_pairs as f64
    };
    Ok(PartitionStats {
        cut_edges,
        partition_sizes: p.sizes(),
        avg_vertex_degree: g.avg_degree(),
        avg_cross_edges,
    })
}

/// Read a partition file: one decimal integer per line, line `i` holding
/// the partition of vertex `i`. Validates the line count, the id range,
/// and that no partition is empty.
pub fn load_partition_file(
    path: &Path,
    num_vertices: usize,
    num_partitions: usize,
) -> Result<PartitionAssignment> {
    let text = fs::read_to_string(path)?;
    let mut assignment = Vec::with_capacity(num_vertices);
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let p: u32 = trimmed.parse().map_err(|_| {
            Error::Format(format!(
                "{}:{}: expected a partition id, got `{trimmed}`",
                path.display(),
                lineno + 1
            ))
        })?;
        assignment.push(p);
    }
    if assignment.len() != num_vertices {
        return Err(Error::Format(format!(
            "{}: {} lines for {} vertices",
            path.display(),
            assignment.len(),
            num_vertices
        )));
    }
    PartitionAssignment::new(assignment, num_partitions)
}

/// Write the assignment in the same one-id-per-line format.
pub fn save_partition_file(path: &Path, p: &PartitionAssignment) -> Result<()> {
    let mut out = fs::File::create(path)?;
    for &a in p.assignment() {
        writeln!(out, "{a}")?;
    }
    Ok(())
}
