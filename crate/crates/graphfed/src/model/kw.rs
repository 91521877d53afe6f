//! Full-batch spectral-approximation GCN. Propagation rule per layer `l`:
//! `H^l = sigma(A_hat H^{l-1} W^l)` with `H^0 = X`, ReLU on hidden layers,
//! raw logits out of the last layer (softmax lives inside the loss).

use serde::{Deserialize, Serialize};

use crate::dense::{DenseMatrix, Real};
use crate::error::{Error, Result};
use crate::graph::{spmm, NormalizedAdjacency};
use crate::model::ModelParams;

/// Layer outputs `H^0..H^L` recorded during the forward pass; `H^0` is the
/// input feature matrix, `H^L` the logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activations<T> {
    pub layers: Vec<DenseMatrix<T>>,
}

impl<T: Real> Activations<T> {
    pub fn logits(&self) -> &DenseMatrix<T> {
        self.layers.last().expect("at least one layer")
    }
}

/// Forward pass over the whole graph.
pub fn kw_forward<T: Real>(
    a_hat: &NormalizedAdjacency<T>,
    x: &DenseMatrix<T>,
    params: &ModelParams<T>,
) -> Result<Activations<T>> {
    if params.layers.is_empty() {
        return Err(Error::Config("model has no layers".into()));
    }
    if x.cols() != params.layers[0].rows() {
        return Err(Error::Shape(format!(
            "features have {} columns but layer 0 expects {}",
            x.cols(),
            params.layers[0].rows()
        )));
    }
    let depth = params.layers.len();
    let mut layers = Vec::with_capacity(depth + 1);
    layers.push(x.clone());
    for (l, w) in params.layers.iter().enumerate() {
        let propagated = spmm(a_hat, &layers[l])?;
        let z = propagated.matmul(w)?;
        layers.push(if l + 1 < depth { z.relu() } else { z });
    }
    Ok(Activations { layers })
}

/// Exact reverse-mode gradients of the forward pass with respect to every
/// weight matrix, given the loss gradient at the logits. Uses the symmetry
/// of `A_hat` (its transpose is itself).
pub fn kw_backward<T: Real>(
    activations: &Activations<T>,
    a_hat: &NormalizedAdjacency<T>,
    params: &ModelParams<T>,
    grad_logits: &DenseMatrix<T>,
) -> Result<Vec<DenseMatrix<T>>> {
    let depth = params.layers.len();
    if activations.layers.len() != depth + 1 {
        return Err(Error::Shape(format!(
            "{} recorded activations for {depth} layers",
            activations.layers.len()
        )));
    }
    let mut grads = vec![DenseMatrix::<T>::zeros(0, 0); depth];
    let mut grad_z = grad_logits.clone();
    for l in (0..depth).rev() {
        // z^{l+1} = (A_hat h^l) w^{l+1}
        let propagated = spmm(a_hat, &activations.layers[l])?;
        grads[l] = propagated.transposed_matmul(&grad_z)?;
        if l > 0 {
            let grad_h = spmm(a_hat, &grad_z)?.matmul_transposed(&params.layers[l])?;
            grad_z = grad_h.relu_backward(&activations.layers[l])?;
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalize_adjacency, Graph};
    use crate::model::{cross_entropy_loss, init_params, ModelConfig, ModelKind};
    use rand::Rng;

    fn kw_cfg(layers: usize, hidden: usize) -> ModelConfig {
        ModelConfig {
            kind: ModelKind::KwGcn,
            num_layers: layers,
            hidden_dim: hidden,
            ..ModelConfig::kw_gcn()
        }
    }

    /// Dense reference: materialize A_hat, then chain plain matrix products.
    fn dense_forward(
        g: &Graph,
        x: &DenseMatrix<f64>,
        params: &ModelParams<f64>,
    ) -> DenseMatrix<f64> {
        let n = g.num_vertices();
        let mut a = DenseMatrix::<f64>::zeros(n, n);
        for u in 0..n as u32 {
            let du = (g.degree(u) + 1) as f64;
            a.set(u as usize, u as usize, 1.0 / du);
            for &v in g.neighbors(u) {
                let dv = (g.degree(v) + 1) as f64;
                a.set(u as usize, v as usize, 1.0 / (du * dv).sqrt());
            }
        }
        let mut h = x.clone();
        for (l, w) in params.layers.iter().enumerate() {
            let z = a.matmul(&h).unwrap().matmul(w).unwrap();
            h = if l + 1 < params.layers.len() { z.relu() } else { z };
        }
        h
    }

    #[test]
    fn isolated_vertex_single_layer_is_plain_linear_map() {
        let g = Graph::from_edge_list(&[], 1).unwrap();
        let a = normalize_adjacency::<f64>(&g);
        let x = DenseMatrix::from_vec(1, 2, vec![0.5, 2.0]).unwrap();
        let w = DenseMatrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let params = ModelParams { layers: vec![w] };
        let acts = kw_forward(&a, &x, &params).unwrap();
        assert_eq!(acts.logits().data(), x.data());
    }

    #[test]
    fn identity_hidden_layer_passes_nonnegative_features_through() {
        let g = Graph::from_edge_list(&[], 1).unwrap();
        let a = normalize_adjacency::<f64>(&g);
        let x = DenseMatrix::from_vec(1, 2, vec![0.5, 2.0]).unwrap();
        let eye = DenseMatrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let w2 = DenseMatrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let params = ModelParams {
            layers: vec![eye, w2.clone()],
        };
        let acts = kw_forward(&a, &x, &params).unwrap();
        assert_eq!(acts.logits().data(), x.matmul(&w2).unwrap().data());
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let g = Graph::from_edge_list(&[(0, 1), (1, 2)], 3).unwrap();
        let a = normalize_adjacency::<f64>(&g);
        let x = DenseMatrix::from_vec(3, 2, vec![1.0; 6]).unwrap();
        let params = ModelParams::<f64> {
            layers: vec![DenseMatrix::zeros(2, 4), DenseMatrix::zeros(4, 3)],
        };
        let acts = kw_forward(&a, &x, &params).unwrap();
        assert!(acts.logits().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_matches_dense_reference() {
        let mut rng = crate::rng::stream(5, &[1]);
        let edges: Vec<(u32, u32)> = (0..6u32)
            .flat_map(|u| ((u + 1)..6).map(move |v| (u, v)))
            .filter(|_| true)
            .collect::<Vec<_>>()
            .into_iter()
            .filter(|_| rng.random::<f64>() < 0.5)
            .collect();
        let g = Graph::from_edge_list(&edges, 6).unwrap();
        let a = normalize_adjacency::<f64>(&g);
        let x = DenseMatrix::from_vec(6, 4, (0..24).map(|_| rng.random::<f64>() - 0.5).collect())
            .unwrap();
        let params: ModelParams<f64> = init_params(&kw_cfg(2, 5), 4, 3, 7).unwrap();
        let acts = kw_forward(&a, &x, &params).unwrap();
        let reference = dense_forward(&g, &x, &params);
        assert!(acts.logits().max_abs_diff(&reference) < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let g = Graph::from_edge_list(&[(0, 1)], 2).unwrap();
        let a = normalize_adjacency::<f64>(&g);
        let x = DenseMatrix::<f64>::zeros(2, 3);
        let params: ModelParams<f64> = init_params(&kw_cfg(1, 4), 4, 2, 0).unwrap();
        assert!(kw_forward(&a, &x, &params).is_err());
    }

    #[test]
    fn zero_loss_gradient_gives_zero_weight_gradients() {
        let g = Graph::from_edge_list(&[(0, 1), (1, 2)], 3).unwrap();
        let a = normalize_adjacency::<f64>(&g);
        let x = DenseMatrix::from_vec(3, 2, vec![0.5; 6]).unwrap();
        let params: ModelParams<f64> = init_params(&kw_cfg(2, 4), 2, 3, 1).unwrap();
        let acts = kw_forward(&a, &x, &params).unwrap();
        let grads = kw_backward(&acts, &a, &params, &DenseMatrix::zeros(3, 3)).unwrap();
        for grad in &grads {
            assert!(grad.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn backward_is_linear_in_logit_gradient() {
        let g = Graph::from_edge_list(&[(0, 1), (1, 2), (0, 2)], 3).unwrap();
        let a = normalize_adjacency::<f64>(&g);
        let mut rng = crate::rng::stream(9, &[2]);
        let x =
            DenseMatrix::from_vec(3, 2, (0..6).map(|_| rng.random::<f64>()).collect()).unwrap();
        let params: ModelParams<f64> = init_params(&kw_cfg(2, 4), 2, 3, 2).unwrap();
        let acts = kw_forward(&a, &x, &params).unwrap();
        let gl =
            DenseMatrix::from_vec(3, 3, (0..9).map(|_| rng.random::<f64>() - 0.5).collect())
                .unwrap();
        let g1 = kw_backward(&acts, &a, &params, &gl).unwrap();
        let g2 = kw_backward(&acts, &a, &params, &gl.scale(2.0)).unwrap();
        for (a1, a2) in g1.iter().zip(&g2) {
            assert!(a1.scale(2.0).max_abs_diff(a2) < 1e-12);
        }
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let g = Graph::from_edge_list(&[(0, 1), (1, 2), (2, 3), (0, 3), (1, 3)], 4).unwrap();
        let a = normalize_adjacency::<f64>(&g);
        let mut rng = crate::rng::stream(3, &[4]);
        let x =
            DenseMatrix::from_vec(4, 3, (0..12).map(|_| rng.random::<f64>() - 0.5).collect())
                .unwrap();
        let labels = vec![0u32, 1, 2, 0];
        let mask: Vec<u32> = vec![0, 2, 3];
        let params: ModelParams<f64> = init_params(&kw_cfg(2, 5), 3, 3, 8).unwrap();

        let acts = kw_forward(&a, &x, &params).unwrap();
        let (_, grad_logits) = cross_entropy_loss(acts.logits(), &labels, &mask).unwrap();
        let analytic = kw_backward(&acts, &a, &params, &grad_logits).unwrap();

        let loss_at = |p: &ModelParams<f64>| -> f64 {
            let acts = kw_forward(&a, &x, p).unwrap();
            cross_entropy_loss(acts.logits(), &labels, &mask).unwrap().0
        };
        let h = 1e-4;
        for l in 0..params.layers.len() {
            for idx in 0..params.layers[l].data().len() {
                let mut plus = params.clone();
                plus.layers[l].data_mut()[idx] += h;
                let mut minus = params.clone();
                minus.layers[l].data_mut()[idx] -= h;
                let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
                let an = analytic[l].data()[idx];
                let denom = an.abs().max(fd.abs()).max(1e-8);
                assert!(
                    (an - fd).abs() / denom < 1e-4,
                    "layer {l} idx {idx}: analytic {an} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn logits_commute_with_vertex_relabeling() {
        let edges = [(0u32, 1u32), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)];
        let g = Graph::from_edge_list(&edges, 5).unwrap();
        let mut rng = crate::rng::stream(12, &[5]);
        let x =
            DenseMatrix::from_vec(5, 3, (0..15).map(|_| rng.random::<f64>()).collect()).unwrap();
        let params: ModelParams<f64> = init_params(&kw_cfg(2, 4), 3, 2, 4).unwrap();

        // permutation pi: new id -> old id
        let pi: Vec<u32> = vec![3, 0, 4, 1, 2];
        let mut inverse = vec![0u32; 5];
        for (new, &old) in pi.iter().enumerate() {
            inverse[old as usize] = new as u32;
        }
        let permuted_edges: Vec<(u32, u32)> = edges
            .iter()
            .map(|&(u, v)| (inverse[u as usize], inverse[v as usize]))
            .collect();
        let gp = Graph::from_edge_list(&permuted_edges, 5).unwrap();
        let xp = x.gather_rows(&pi);

        let logits = kw_forward(&normalize_adjacency(&g), &x, &params).unwrap();
        let logits_p = kw_forward(&normalize_adjacency(&gp), &xp, &params).unwrap();
        let expected = logits.logits().gather_rows(&pi);
        assert!(logits_p.logits().max_abs_diff(&expected) < 1e-12);
    }
}
