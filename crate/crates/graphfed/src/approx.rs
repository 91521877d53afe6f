//! Extended partitions: each partition keeps its own vertices and gains a
//! small, breadth-first random sample of vertices from every other
//! partition, giving the local model an approximate view of the rest of
//! the graph.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::graph::{induced_subgraph, FeatureMatrix, Graph, Labels, SplitMask, SubgraphMap};
use crate::partition::PartitionAssignment;
use crate::rng::{stream, tag};

/// Overlap budget `O`: fraction of a partition's own vertex count that may
/// be added as approximated vertices, split evenly across the other
/// partitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapConfig {
    pub overlap: f64,
    pub seed: u64,
}

impl OverlapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(Error::Config(format!(
                "overlap {} outside [0, 1]",
                self.overlap
            )));
        }
        Ok(())
    }
}

/// Per-other-partition sampling quota: `floor(O * n_p / (m - 1))`.
pub fn nts(overlap: f64, partition_size: usize, num_partitions: usize) -> Result<usize> {
    if num_partitions < 2 {
        return Err(Error::Config(
            "overlap sampling needs at least 2 partitions".into(),
        ));
    }
    Ok((overlap * partition_size as f64 / (num_partitions - 1) as f64).floor() as usize)
}

/// Added vertices per partition expressed as a fraction of the total
/// vertex count: `O / m`.
pub fn overhead_of(overlap: f64, num_partitions: usize) -> f64 {
    overlap / num_partitions as f64
}

/// Instrumentation counters for one full sampling run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingWork {
    /// Number of per-vertex neighbor-list scans.
    pub neighbor_inspections: u64,
    /// Number of frontier expansions past the first hop (zero when every
    /// quota is met by one-hop neighbors).
    pub recursive_expansions: u64,
}

/// A partition extended with approximated vertices. Local vertex ids are
/// laid out core-first: locals `0..core_count` are the partition's own
/// vertices (ascending global id), the rest are the sampled vertices
/// (ascending global id).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedPartition {
    pub partition_id: u32,
    /// The partition's own vertices, ascending global ids.
    pub core_vertices: Vec<u32>,
    /// Sampled vertex sets keyed by source partition, ascending by key.
    pub approx_vertices: Vec<(u32, Vec<u32>)>,
    /// Graph induced on core + approximated vertices; no other cross
    /// edges survive.
    pub local_graph: Graph,
    pub map: SubgraphMap,
    pub local_features: FeatureMatrix,
    pub local_labels: Labels,
    pub local_split: SplitMask,
}

impl ExtendedPartition {
    pub fn core_count(&self) -> usize {
        self.core_vertices.len()
    }

    pub fn num_local(&self) -> usize {
        self.map.len()
    }

    pub fn is_core_local(&self, local: u32) -> bool {
        (local as usize) < self.core_vertices.len()
    }

    pub fn approx_count(&self) -> usize {
        self.approx_vertices.iter().map(|(_, s)| s.len()).sum()
    }
}

/// Breadth-first random sampling of up to `quota` vertices of partition
/// `op`, reachable from partition `p` through vertices of `op` only.
///
/// Level 1 holds the one-hop neighbors of `p` inside `op`; level `j+1`
/// holds the unvisited `op`-neighbors of level `j`. Whole levels are taken
/// while they fit in the remaining quota; the first level that exceeds it
/// is sampled uniformly without replacement. Returns a sorted vertex list,
/// possibly shorter than `quota` when too few vertices are reachable.
pub fn sample_from_partition(
    g: &Graph,
    assign: &PartitionAssignment,
    p: u32,
    op: u32,
    quota: usize,
    rng: &mut impl Rng,
) -> Vec<u32> {
    let (set, _) = sample_with_work(g, assign, p, op, quota, rng);
    set
}

fn sample_with_work(
    g: &Graph,
    assign: &PartitionAssignment,
    p: u32,
    op: u32,
    quota: usize,
    rng: &mut impl Rng,
) -> (Vec<u32>, SamplingWork) {
    let mut work = SamplingWork::default();
    if quota == 0 || p == op {
        return (Vec::new(), work);
    }
    let mut visited = vec![false; g.num_vertices()];
    let mut taken: Vec<u32> = Vec::with_capacity(quota);
    let mut remaining = quota;

    // level 1: one-hop neighbors of the whole core partition inside op
    let mut level: Vec<u32> = Vec::new();
    for v in 0..g.num_vertices() as u32 {
        if assign.partition_of(v) != p {
            continue;
        }
        work.neighbor_inspections += 1;
        for &u in g.neighbors(v) {
            if assign.partition_of(u) == op && !visited[u as usize] {
                visited[u as usize] = true;
                level.push(u);
            }
        }
    }
    level.sort_unstable();

    while remaining > 0 && !level.is_empty() {
        if level.len() >= remaining {
            let mut chosen: Vec<u32> = rand::seq::index::sample(rng, level.len(), remaining)
                .into_iter()
                .map(|i| level[i])
                .collect();
            chosen.sort_unstable();
            taken.extend_from_slice(&chosen);
            break;
        }
        taken.extend_from_slice(&level);
        remaining -= level.len();

        work.recursive_expansions += 1;
        let mut next: Vec<u32> = Vec::new();
        for &v in &level {
            work.neighbor_inspections += 1;
            for &u in g.neighbors(v) {
                if assign.partition_of(u) == op && !visited[u as usize] {
                    visited[u as usize] = true;
                    next.push(u);
                }
            }
        }
        next.sort_unstable();
        level = next;
    }
    taken.sort_unstable();
    (taken, work)
}

fn build_inner(
    g: &Graph,
    assign: &PartitionAssignment,
    cfg: &OverlapConfig,
) -> Result<(Vec<(Vec<u32>, Vec<(u32, Vec<u32>)>)>, SamplingWork)> {
    cfg.validate()?;
    if assign.num_vertices() != g.num_vertices() {
        return Err(Error::Shape(format!(
            "assignment covers {} vertices, graph has {}",
            assign.num_vertices(),
            g.num_vertices()
        )));
    }
    let m = assign.num_partitions();
    let mut work = SamplingWork::default();
    let mut out = Vec::with_capacity(m);
    for p in 0..m as u32 {
        let core = assign.members(p);
        let quota = if m >= 2 && cfg.overlap > 0.0 {
            nts(cfg.overlap, core.len(), m)?
        } else {
            0
        };
        let mut approx: Vec<(u32, Vec<u32>)> = Vec::with_capacity(m.saturating_sub(1));
        for op in 0..m as u32 {
            if op == p {
                continue;
            }
            if quota == 0 {
                approx.push((op, Vec::new()));
                continue;
            }
            // independent stream per (p, op) pair
            let mut rng = stream(cfg.seed, &[tag::OVERLAP_SAMPLE, p as u64, op as u64]);
            let (set, w) = sample_with_work(g, assign, p, op, quota, &mut rng);
            work.neighbor_inspections += w.neighbor_inspections;
            work.recursive_expansions += w.recursive_expansions;
            approx.push((op, set));
        }
        out.push((core, approx));
    }
    Ok((out, work))
}

/// Build one [`ExtendedPartition`] per partition: sample from every other
/// partition, induce the local graph on core + approximated vertices, and
/// slice features, labels, and split down to the local vertex set.
pub fn build_extended_partitions(
    d: &Dataset,
    assign: &PartitionAssignment,
    cfg: &OverlapConfig,
) -> Result<Vec<ExtendedPartition>> {
    d.validate()?;
    let (sampled, _) = build_inner(&d.graph, assign, cfg)?;
    let mut parts = Vec::with_capacity(sampled.len());
    for (p, (core, approx)) in sampled.into_iter().enumerate() {
        let mut added: Vec<u32> = approx.iter().flat_map(|(_, s)| s.iter().copied()).collect();
        added.sort_unstable();
        let mut locals = core.clone();
        locals.extend_from_slice(&added);
        let (local_graph, map) = induced_subgraph(&d.graph, &locals)?;
        let local_features = d.features.gather_rows(map.local_to_global());
        let local_labels = d.labels.gather(map.local_to_global());
        let local_split = d.split.gather(map.local_to_global());
        parts.push(ExtendedPartition {
            partition_id: p as u32,
            core_vertices: core,
            approx_vertices: approx,
            local_graph,
            map,
            local_features,
            local_labels,
            local_split,
        });
    }
    Ok(parts)
}

/// Run the full sampling pass and report only its instrumentation
/// counters.
pub fn sampling_work(
    g: &Graph,
    assign: &PartitionAssignment,
    cfg: &OverlapConfig,
) -> Result<SamplingWork> {
    Ok(build_inner(g, assign, cfg)?.1)
}
