//! Synthetic dataset generation: a stochastic block model with noisy
//! one-hot community features, plus uniform deletion of training vertices.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, Graph, Labels, Role, SplitMask};
use crate::rng::{stream, tag};

/// Stochastic block model configuration. Vertices are split into `k`
/// near-equal contiguous communities; intra-community pairs become edges
/// with probability `p_in`, inter-community pairs with `p_out`. The label
/// is the community id, and the feature row is a one-hot community
/// indicator (at index `community mod feature_dim`) plus Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub n: usize,
    pub k: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub noise_sigma: f64,
    /// (train, val, test), summing to 1.
    pub split_fractions: (f64, f64, f64),
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            k: 8,
            p_in: 0.05,
            p_out: 0.002,
            feature_dim: 16,
            noise_sigma: 1.0,
            split_fractions: (0.7, 0.2, 0.1),
            seed: 0,
        }
    }
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 {
            return Err(Error::Config("n and k must be positive".into()));
        }
        if self.k > self.n {
            return Err(Error::Config(format!(
                "k={} exceeds vertex count n={}",
                self.k, self.n
            )));
        }
        if !(0.0..=1.0).contains(&self.p_out)
            || !(0.0..=1.0).contains(&self.p_in)
            || self.p_out > self.p_in
        {
            return Err(Error::Config("need 0 <= p_out <= p_in <= 1".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Config("noise_sigma must be >= 0".into()));
        }
        let (tr, va, te) = self.split_fractions;
        for f in [tr, va, te] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config("split fractions must lie in [0, 1]".into()));
            }
        }
        if (tr + va + te - 1.0).abs() > 1e-9 {
            return Err(Error::Config("split fractions must sum to 1".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        Ok(())
    }

    /// Community of vertex `v`: contiguous blocks, the first `n % k` blocks
    /// one vertex larger.
    pub fn community_of(&self, v: usize) -> usize {
        let base = self.n / self.k;
        let extra = self.n % self.k;
        let boundary = extra * (base + 1);
        if v < boundary {
            v / (base + 1)
        } else {
            extra + (v - boundary) / base
        }
    }
}

/// A complete training input: graph, features, labels, split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub graph: Graph,
    pub features: FeatureMatrix,
    pub labels: Labels,
    pub split: SplitMask,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let n = self.graph.num_vertices();
        if self.features.rows() != n || self.labels.len() != n || self.split.len() != n {
            return Err(Error::Shape(format!(
                "dataset sizes disagree: graph={n}, features={}, labels={}, split={}",
                self.features.rows(),
                self.labels.len(),
                self.split.len()
            )));
        }
        if !self.features.is_finite() {
            return Err(Error::InvalidInput("non-finite feature values".into()));
        }
        Ok(())
    }
}

/// Generate a dataset from the block model. Fully determined by
/// `cfg.seed`: edges, features, and split each draw from their own
/// derived stream in a fixed order.
pub fn generate_sbm(cfg: &SbmConfig) -> Result<Dataset> {
    cfg.validate()?;
    let n = cfg.n;
    let communities: Vec<usize> = (0..n).map(|v| cfg.community_of(v)).collect();

    let mut edge_rng = stream(cfg.seed, &[tag::SBM_EDGES]);
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if communities[u] == communities[v] {
                cfg.p_in
            } else {
                cfg.p_out
            };
            if p > 0.0 && edge_rng.random::<f64>() < p {
                edges.push((u as u32, v as u32));
            }
        }
    }
    let graph = Graph::from_edge_list(&edges, n)?;

    let mut feat_rng = stream(cfg.seed, &[tag::SBM_FEATURES]);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(format!("bad noise sigma: {e}")))?;
    let mut features = DenseMatrix::zeros(n, cfg.feature_dim);
    for v in 0..n {
        let hot = communities[v] % cfg.feature_dim;
        let row = features.row_mut(v);
        for (j, x) in row.iter_mut().enumerate() {
            let base = if j == hot { 1.0 } else { 0.0 };
            let eps = if cfg.noise_sigma > 0.0 {
                noise.sample(&mut feat_rng)
            } else {
                0.0
            };
            *x = (base + eps) as f32;
        }
    }

    let labels = Labels::new(communities.iter().map(|&c| c as u32).collect(), cfg.k)?;

    let mut split_rng = stream(cfg.seed, &[tag::SBM_SPLIT]);
    let (f_train, f_val, _) = cfg.split_fractions;
    let roles = (0..n)
        .map(|_| {
            let u = split_rng.random::<f64>();
            if u < f_train {
                Role::Train
            } else if u < f_train + f_val {
                Role::Val
            } else {
                Role::Test
            }
        })
        .collect();

    Ok(Dataset {
        graph,
        features,
        labels,
        split: SplitMask::new(roles),
    })
}

/// Remove `round(fraction * |train|)` uniformly chosen training vertices
/// together with their incident edges; val/test vertices are untouched.
/// The surviving vertices are re-indexed densely in their original order.
pub fn delete_training_vertices(d: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidInput(format!(
            "deletion fraction {fraction} outside [0, 1]"
        )));
    }
    let train: Vec<u32> = d.split.indices(Role::Train);
    let delete_count = (fraction * train.len() as f64).round() as usize;
    let mut rng = stream(seed, &[tag::DELETE]);
    let mut chosen = rand::seq::index::sample(&mut rng, train.len(), delete_count)
        .into_iter()
        .map(|i| train[i])
        .collect::<Vec<u32>>();
    chosen.sort_unstable();

    let n = d.graph.num_vertices();
    let mut deleted = vec![false; n];
    for &v in &chosen {
        deleted[v as usize] = true;
    }
    let kept: Vec<u32> = (0..n as u32).filter(|&v| !deleted[v as usize]).collect();

    let (graph, map) = crate::graph::induced_subgraph(&d.graph, &kept)?;
    let features = d.features.gather_rows(map.local_to_global());
    let labels = d.labels.gather(map.local_to_global());
    let split = d.split.gather(map.local_to_global());
    Ok(Dataset {
        graph,
        features,
        labels,
        split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n: usize, k: usize, p_in: f64, p_out: f64, seed: u64) -> SbmConfig {
        SbmConfig {
            n,
            k,
            p_in,
            p_out,
            feature_dim: 4,
            noise_sigma: 0.1,
            split_fractions: (0.6, 0.2, 0.2),
            seed,
        }
    }

    #[test]
    fn two_disjoint_cliques() {
        let d = generate_sbm(&tiny(4, 2, 1.0, 0.0, 7)).unwrap();
        assert_eq!(d.labels.values(), &[0, 0, 1, 1]);
        assert_eq!(d.graph.num_edges(), 2);
        assert_eq!(d.graph.neighbors(0), &[1]);
        assert_eq!(d.graph.neighbors(2), &[3]);
    }

    #[test]
    fn zero_p_out_gives_at_least_k_components() {
        let d = generate_sbm(&tiny(60, 4, 0.3, 0.0, 11)).unwrap();
        // count connected components by BFS
        let n = d.graph.num_vertices();
        let mut seen = vec![false; n];
        let mut components = 0;
        for s in 0..n as u32 {
            if seen[s as usize] {
                continue;
            }
            components += 1;
            let mut queue = vec![s];
            seen[s as usize] = true;
            while let Some(v) = queue.pop() {
                for &w in d.graph.neighbors(v) {
                    if !seen[w as usize] {
                        seen[w as usize] = true;
                        queue.push(w);
                    }
                }
            }
        }
        assert!(components >= 4, "found {components} components");
    }

    #[test]
    fn edge_count_near_binomial_expectation() {
        let cfg = tiny(1000, 8, 0.02, 0.001, 3);
        let d = generate_sbm(&cfg).unwrap();
        // intra pairs: 8 communities of 125 -> 8 * C(125,2); the rest inter
        let intra_pairs = 8.0 * (125.0 * 124.0 / 2.0);
        let total_pairs = 1000.0 * 999.0 / 2.0;
        let inter_pairs = total_pairs - intra_pairs;
        let mean = intra_pairs * cfg.p_in + inter_pairs * cfg.p_out;
        let var = intra_pairs * cfg.p_in * (1.0 - cfg.p_in)
            + inter_pairs * cfg.p_out * (1.0 - cfg.p_out);
        let sd = var.sqrt();
        let got = d.graph.num_edges() as f64;
        assert!(
            (got - mean).abs() <= 4.0 * sd,
            "edges {got} not within 4 sd of {mean} (sd {sd})"
        );
    }

    #[test]
    fn same_seed_bit_identical() {
        let cfg = tiny(200, 4, 0.1, 0.01, 99);
        let a = generate_sbm(&cfg).unwrap();
        let b = generate_sbm(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn labels_balanced_within_one() {
        let cfg = tiny(103, 4, 0.0, 0.0, 1);
        let d = generate_sbm(&cfg).unwrap();
        let mut counts = [0usize; 4];
        for &l in d.labels.values() {
            counts[l as usize] += 1;
        }
        let max = *counts.iter().max().unwrap();
        let min = *counts.iter().min().unwrap();
        assert!(max - min <= 1, "sizes {counts:?}");
    }

    #[test]
    fn degenerate_config_rejected() {
        assert!(generate_sbm(&tiny(0, 1, 0.5, 0.1, 0)).is_err());
        assert!(generate_sbm(&tiny(5, 0, 0.5, 0.1, 0)).is_err());
        assert!(generate_sbm(&tiny(5, 2, 0.1, 0.5, 0)).is_err());
    }

    #[test]
    fn delete_zero_fraction_is_identity() {
        let d = generate_sbm(&tiny(100, 4, 0.1, 0.01, 5)).unwrap();
        let e = delete_training_vertices(&d, 0.0, 1).unwrap();
        assert_eq!(d, e);
    }

    #[test]
    fn delete_full_fraction_keeps_val_test() {
        let d = generate_sbm(&tiny(120, 4, 0.1, 0.01, 5)).unwrap();
        let val = d.split.count(Role::Val);
        let test = d.split.count(Role::Test);
        let e = delete_training_vertices(&d, 1.0, 1).unwrap();
        assert_eq!(e.split.count(Role::Train), 0);
        assert_eq!(e.split.count(Role::Val), val);
        assert_eq!(e.split.count(Role::Test), test);
        e.validate().unwrap();
    }

    #[test]
    fn delete_half_is_exact() {
        let mut cfg = tiny(200, 4, 0.05, 0.01, 5);
        cfg.split_fractions = (0.5, 0.25, 0.25);
        let d = generate_sbm(&cfg).unwrap();
        let train = d.split.count(Role::Train);
        let e = delete_training_vertices(&d, 0.5, 9).unwrap();
        let expect_deleted = (0.5 * train as f64).round() as usize;
        assert_eq!(e.split.count(Role::Train), train - expect_deleted);
    }

    #[test]
    fn delete_is_deterministic() {
        let d = generate_sbm(&tiny(150, 4, 0.08, 0.01, 5)).unwrap();
        let a = delete_training_vertices(&d, 0.3, 42).unwrap();
        let b = delete_training_vertices(&d, 0.3, 42).unwrap();
        assert_eq!(a, b);
        let c = delete_training_vertices(&d, 0.3, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn community_blocks_are_contiguous_and_near_equal() {
        let cfg = tiny(10, 3, 0.0, 0.0, 0);
        let comms: Vec<usize> = (0..10).map(|v| cfg.community_of(v)).collect();
        assert_eq!(comms, vec![0, 0, 0, 0, 1, 1, 1, 2, 2, 2]);
    }
}
