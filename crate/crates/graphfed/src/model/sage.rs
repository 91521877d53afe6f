//! Minibatched spatial GCN: per layer, a vertex embedding is the ReLU of a
//! linear map applied to the element-wise mean of the vertex itself and a
//! fixed number of neighbors sampled uniformly with replacement. The final
//! layer omits the ReLU.
//!
//! Sampling is separated from computation: [`build_sage_plan`] draws all
//! neighbor samples up front, and [`sage_apply`] / [`sage_backward`] are
//! pure functions of the plan. Freezing a plan makes the analytic
//! gradients finite-difference-checkable.

use std::collections::HashMap;

use rand::Rng;

use crate::dense::{DenseMatrix, Real};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{ModelConfig, ModelParams};

/// All sampling decisions for one minibatch.
///
/// `supports[l]` lists the vertices whose layer-`l` activations are
/// needed; `supports[num_layers]` is the batch itself (caller order) and
/// lower levels grow by the sampled neighbors, sorted ascending.
/// `samples[l-1][i]` holds the sampled neighbors of `supports[l][i]`,
/// empty for vertices with no neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct SagePlan {
    pub supports: Vec<Vec<u32>>,
    pub samples: Vec<Vec<Vec<u32>>>,
}

impl SagePlan {
    pub fn num_layers(&self) -> usize {
        self.samples.len()
    }

    pub fn batch(&self) -> &[u32] {
        self.supports.last().expect("plan has at least one level")
    }
}

/// Intermediate values recorded by [`sage_apply`] for the backward pass:
/// per layer the aggregated (pre-linear) inputs and the (post-activation)
/// outputs. The last output holds the batch logits.
#[derive(Debug, Clone, PartialEq)]
pub struct SageTrace<T> {
    pub aggregated: Vec<DenseMatrix<T>>,
    pub outputs: Vec<DenseMatrix<T>>,
}

impl<T: Real> SageTrace<T> {
    pub fn logits(&self) -> &DenseMatrix<T> {
        self.outputs.last().expect("at least one layer")
    }
}

/// Draw every neighbor sample for one batch. Deterministic given the RNG
/// state; vertices with no neighbors get an empty sample list and will
/// aggregate only themselves.
pub fn build_sage_plan(
    g: &Graph,
    cfg: &ModelConfig,
    rng: &mut impl Rng,
    batch: &[u32],
) -> Result<SagePlan> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let mut seen = HashMap::new();
    for &v in batch {
        if v as usize >= g.num_vertices() {
            return Err(Error::InvalidInput(format!("batch vertex {v} out of range")));
        }
        if seen.insert(v, ()).is_some() {
            return Err(Error::InvalidInput(format!("duplicate batch vertex {v}")));
        }
    }

    let depth = cfg.num_layers;
    let mut supports = vec![Vec::new(); depth + 1];
    let mut samples = vec![Vec::new(); depth];
    supports[depth] = batch.to_vec();
    for l in (1..=depth).rev() {
        let k = cfg.neighbor_samples[l - 1];
        let mut lower: Vec<u32> = supports[l].clone();
        let mut level_samples = Vec::with_capacity(supports[l].len());
        for &v in &supports[l] {
            let nbrs = g.neighbors(v);
            let drawn: Vec<u32> = if nbrs.is_empty() {
                Vec::new()
            } else {
                (0..k).map(|_| nbrs[rng.random_range(0..nbrs.len())]).collect()
            };
            lower.extend_from_slice(&drawn);
            level_samples.push(drawn);
        }
        lower.sort_unstable();
        lower.dedup();
        samples[l - 1] = level_samples;
        supports[l - 1] = lower;
    }
    Ok(SagePlan { supports, samples })
}

fn position_map(ids: &[u32]) -> HashMap<u32, usize> {
    ids.iter().enumerate().map(|(i, &v)| (v, i)).collect()
}

/// Forward pass for a frozen plan. Row `i` of the returned logits belongs
/// to `plan.batch()[i]`.
pub fn sage_apply<T: Real>(
    plan: &SagePlan,
    x: &DenseMatrix<T>,
    params: &ModelParams<T>,
) -> Result<SageTrace<T>> {
    let depth = plan.num_layers();
    if params.layers.len() != depth {
        return Err(Error::Shape(format!(
            "plan has {depth} layers, params have {}",
            params.layers.len()
        )));
    }
    if x.cols() != params.layers[0].rows() {
        return Err(Error::Shape(format!(
            "features have {} columns but layer 0 expects {}",
            x.cols(),
            params.layers[0].rows()
        )));
    }
    let mut h = x.gather_rows(&plan.supports[0]);
    let mut trace = SageTrace {
        aggregated: Vec::with_capacity(depth),
        outputs: Vec::with_capacity(depth),
    };
    for l in 1..=depth {
        let pos = position_map(&plan.supports[l - 1]);
        let dim = h.cols();
        let mut agg = DenseMatrix::<T>::zeros(plan.supports[l].len(), dim);
        for (i, &v) in plan.supports[l].iter().enumerate() {
            let drawn = &plan.samples[l - 1][i];
            let inv = T::from_f64(1.0 / (1 + drawn.len()) as f64);
            let own = pos[&v];
            let row = agg.row_mut(i);
            row.copy_from_slice(h.row(own));
            for &u in drawn {
                for (acc, &hv) in row.iter_mut().zip(h.row(pos[&u])) {
                    *acc = *acc + hv;
                }
            }
            for acc in row.iter_mut() {
                *acc = *acc * inv;
            }
        }
        let z = agg.matmul(&params.layers[l - 1])?;
        let out = if l < depth { z.relu() } else { z };
        trace.aggregated.push(agg);
        trace.outputs.push(out.clone());
        h = out;
    }
    Ok(trace)
}

/// Reverse-mode gradients for a frozen plan.
pub fn sage_backward<T: Real>(
    plan: &SagePlan,
    trace: &SageTrace<T>,
    params: &ModelParams<T>,
    grad_logits: &DenseMatrix<T>,
) -> Result<Vec<DenseMatrix<T>>> {
    let depth = plan.num_layers();
    if trace.outputs.len() != depth {
        return Err(Error::Shape("trace does not match plan".into()));
    }
    let mut grads = vec![DenseMatrix::<T>::zeros(0, 0); depth];
    let mut grad_h = grad_logits.clone();
    for l in (1..=depth).rev() {
        let grad_z = if l == depth {
            grad_h
        } else {
            grad_h.relu_backward(&trace.outputs[l - 1])?
        };
        grads[l - 1] = trace.aggregated[l - 1].transposed_matmul(&grad_z)?;
        if l > 1 {
            let grad_agg = grad_z.matmul_transposed(&params.layers[l - 1])?;
            let pos = position_map(&plan.supports[l - 1]);
            let mut lower =
                DenseMatrix::<T>::zeros(plan.supports[l - 1].len(), grad_agg.cols());
            for (i, &v) in plan.supports[l].iter().enumerate() {
                let drawn = &plan.samples[l - 1][i];
                let inv = T::from_f64(1.0 / (1 + drawn.len()) as f64);
                let src: Vec<T> = grad_agg.row(i).iter().map(|&g| g * inv).collect();
                let add_to = |lower: &mut DenseMatrix<T>, row: usize| {
                    for (acc, &s) in lower.row_mut(row).iter_mut().zip(&src) {
                        *acc = *acc + s;
                    }
                };
                add_to(&mut lower, pos[&v]);
                for &u in drawn {
                    add_to(&mut lower, pos[&u]);
                }
            }
            grad_h = lower;
        } else {
            grad_h = DenseMatrix::zeros(0, 0);
        }
    }
    Ok(grads)
}

/// Sample-then-forward in one call; returns logits aligned with `batch`.
pub fn sage_forward<T: Real>(
    g: &Graph,
    x: &DenseMatrix<T>,
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    rng: &mut impl Rng,
    batch: &[u32],
) -> Result<DenseMatrix<T>> {
    let plan = build_sage_plan(g, cfg, rng, batch)?;
    let trace = sage_apply(&plan, x, params)?;
    Ok(trace.logits().clone())
}

/// Deterministic full-neighborhood forward over every vertex (used for
/// evaluation): the mean runs over the vertex and *all* of its neighbors,
/// no sampling.
pub fn sage_full_forward<T: Real>(
    g: &Graph,
    x: &DenseMatrix<T>,
    params: &ModelParams<T>,
) -> Result<DenseMatrix<T>> {
    if x.rows() != g.num_vertices() {
        return Err(Error::Shape(format!(
            "features have {} rows for {} vertices",
            x.rows(),
            g.num_vertices()
        )));
    }
    let depth = params.layers.len();
    let mut h = x.clone();
    for (l, w) in params.layers.iter().enumerate() {
        let mut agg = DenseMatrix::<T>::zeros(h.rows(), h.cols());
        for v in 0..g.num_vertices() {
            let nbrs = g.neighbors(v as u32);
            let inv = T::from_f64(1.0 / (1 + nbrs.len()) as f64);
            let row = agg.row_mut(v);
            row.copy_from_slice(h.row(v));
            for &u in nbrs {
                for (acc, &hv) in row.iter_mut().zip(h.row(u as usize)) {
                    *acc = *acc + hv;
                }
            }
            for acc in row.iter_mut() {
                *acc = *acc * inv;
            }
        }
        let z = agg.matmul(w)?;
        h = if l + 1 < depth { z.relu() } else { z };
    }
    Ok(h)
}
