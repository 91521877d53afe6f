//! The two GCN variants plus everything training needs around them:
//! parameter containers, Glorot initialization, Adam, cross-entropy loss,
//! and micro-F1.
//!
//! All math is generic over [`Real`] so gradient checks can run the exact
//! same code path in f64 while training and serialization stay in f32.

mod kw;
mod loss;
mod sage;

pub use kw::{kw_backward, kw_forward, Activations};
pub use loss::{cross_entropy_loss, micro_f1};
pub use sage::{
    build_sage_plan, sage_apply, sage_backward, sage_forward, sage_full_forward, SagePlan,
    SageTrace,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{DenseMatrix, Real};
use crate::error::{Error, Result};
use crate::rng::{stream, tag};

/// Which propagation rule a model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Full-batch spectral-approximation GCN: `H^l = relu(A_hat H^{l-1} W^l)`.
    KwGcn,
    /// Minibatched spatial GCN with uniform neighbor sampling and mean
    /// aggregation over self plus sampled neighbors.
    GraphSage,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::KwGcn => "kw-gcn",
            ModelKind::GraphSage => "graphsage",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "kw-gcn" | "kw_gcn" | "kw" => Ok(ModelKind::KwGcn),
            "graphsage" | "sage" => Ok(ModelKind::GraphSage),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Model hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// 1 or 2.
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    /// GraphSAGE minibatch size.
    pub batch_size: usize,
    /// GraphSAGE per-layer neighbor sample counts, input layer first.
    pub neighbor_samples: Vec<usize>,
}

impl ModelConfig {
    pub fn kw_gcn() -> Self {
        Self {
            kind: ModelKind::KwGcn,
            num_layers: 2,
            hidden_dim: 128,
            learning_rate: 0.02,
            batch_size: 256,
            neighbor_samples: vec![10, 10],
        }
    }

    pub fn graphsage() -> Self {
        Self {
            kind: ModelKind::GraphSage,
            num_layers: 2,
            hidden_dim: 128,
            learning_rate: 0.01,
            batch_size: 256,
            neighbor_samples: vec![10, 10],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.num_layers == 1 || self.num_layers == 2) {
            return Err(Error::Config(format!(
                "num_layers must be 1 or 2, got {}",
                self.num_layers
            )));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.kind == ModelKind::GraphSage {
            if self.batch_size == 0 {
                return Err(Error::Config("batch_size must be positive".into()));
            }
            if self.neighbor_samples.len() < self.num_layers {
                return Err(Error::Config(format!(
                    "need {} neighbor_samples entries, got {}",
                    self.num_layers,
                    self.neighbor_samples.len()
                )));
            }
            if self.neighbor_samples.iter().any(|&s| s == 0) {
                return Err(Error::Config("neighbor_samples must be positive".into()));
            }
        }
        Ok(())
    }

    /// Weight shapes `(rows, cols)` per layer for the given data dims.
    pub fn layer_shapes(&self, feature_dim: usize, num_classes: usize) -> Vec<(usize, usize)> {
        match self.num_layers {
            1 => vec![(feature_dim, num_classes)],
            _ => vec![
                (feature_dim, self.hidden_dim),
                (self.hidden_dim, num_classes),
            ],
        }
    }
}

/// Per-layer weight matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub layers: Vec<DenseMatrix<T>>,
}

impl<T: Real> ModelParams<T> {
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|w| (w.rows(), w.cols())).collect()
    }

    pub fn num_values(&self) -> usize {
        self.layers.iter().map(|w| w.data().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|w| w.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.layers.len(), other.layers.len());
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            layers: self.layers.iter().map(|w| w.cast()).collect(),
        }
    }
}

/// Glorot-uniform initialization, bounds `+-sqrt(6 / (fan_in + fan_out))`.
/// Values are drawn in f64 and rounded once, so f32 and f64 instantiations
/// of the same seed start from the same point.
pub fn init_params<T: Real>(
    cfg: &ModelConfig,
    feature_dim: usize,
    num_classes: usize,
    seed: u64,
) -> Result<ModelParams<T>> {
    cfg.validate()?;
    if feature_dim == 0 || num_classes == 0 {
        return Err(Error::Config("data dimensions must be positive".into()));
    }
    let mut layers = Vec::new();
    for (l, (rows, cols)) in cfg.layer_shapes(feature_dim, num_classes).iter().enumerate() {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let mut rng = stream(seed, &[tag::PARAM_INIT, l as u64]);
        let data: Vec<T> = (0..rows * cols)
            .map(|_| T::from_f64((rng.random::<f64>() * 2.0 - 1.0) * bound))
            .collect();
        layers.push(DenseMatrix::from_vec(*rows, *cols, data)?);
    }
    Ok(ModelParams { layers })
}

/// Adam moment estimates; `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub first_moment: Vec<DenseMatrix<T>>,
    pub second_moment: Vec<DenseMatrix<T>>,
    pub step: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl<T: Real> AdamState<T> {
    pub fn zeros_like(params: &ModelParams<T>) -> Self {
        let zeros: Vec<DenseMatrix<T>> = params
            .layers
            .iter()
            .map(|w| DenseMatrix::zeros(w.rows(), w.cols()))
            .collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Pure: returns the new parameters and
/// state without touching the inputs.
pub fn adam_step<T: Real>(
    params: &ModelParams<T>,
    grads: &[DenseMatrix<T>],
    state: &AdamState<T>,
    learning_rate: f64,
) -> Result<(ModelParams<T>, AdamState<T>)> {
    if grads.len() != params.layers.len() {
        return Err(Error::Shape(format!(
            "{} gradient tensors for {} parameter tensors",
            grads.len(),
            params.layers.len()
        )));
    }
    let t = state.step + 1;
    let beta1 = T::from_f64(ADAM_BETA1);
    let beta2 = T::from_f64(ADAM_BETA2);
    let eps = T::from_f64(ADAM_EPS);
    let one = T::one();
    let corr1 = T::from_f64(1.0 - ADAM_BETA1.powi(t as i32));
    let corr2 = T::from_f64(1.0 - ADAM_BETA2.powi(t as i32));
    let lr = T::from_f64(learning_rate);

    let mut new_params = params.clone();
    let mut new_state = state.clone();
    new_state.step = t;
    for (l, grad) in grads.iter().enumerate() {
        let w = &mut new_params.layers[l];
        if grad.rows() != w.rows() || grad.cols() != w.cols() {
            return Err(Error::Shape(format!("gradient shape mismatch at layer {l}")));
        }
        let m = new_state.first_moment[l].data_mut();
        let v = new_state.second_moment[l].data_mut();
        let wd = w.data_mut();
        for (((wi, mi), vi), &gi) in wd.iter_mut().zip(m).zip(v).zip(grad.data()) {
            *mi = beta1 * *mi + (one - beta1) * gi;
            *vi = beta2 * *vi + (one - beta2) * gi * gi;
            let m_hat = *mi / corr1;
            let v_hat = *vi / corr2;
            *wi = *wi - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok((new_params, new_state))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = ModelConfig {
            hidden_dim: 8,
            ..ModelConfig::kw_gcn()
        };
        let a: ModelParams<f64> = init_params(&cfg, 4, 3, 11).unwrap();
        let b: ModelParams<f64> = init_params(&cfg, 4, 3, 11).unwrap();
        assert_eq!(a, b);
        let c: ModelParams<f64> = init_params(&cfg, 4, 3, 12).unwrap();
        assert_ne!(a, c);

        let bound = (6.0f64 / 12.0).sqrt();
        for &w in a.layers[0].data() {
            assert!(w.abs() <= bound, "{w} exceeds Glorot bound {bound}");
        }
        assert_eq!(a.shapes(), vec![(4, 8), (8, 3)]);
    }

    #[test]
    fn f32_and_f64_init_agree() {
        let cfg = ModelConfig::kw_gcn();
        let a: ModelParams<f32> = init_params(&cfg, 5, 4, 3).unwrap();
        let b: ModelParams<f64> = init_params(&cfg, 5, 4, 3).unwrap();
        assert!(a.cast::<f64>().max_abs_diff(&b) < 1e-7);
    }

    #[test]
    fn one_layer_shape() {
        let cfg = ModelConfig {
            num_layers: 1,
            ..ModelConfig::kw_gcn()
        };
        let p: ModelParams<f64> = init_params(&cfg, 6, 3, 0).unwrap();
        assert_eq!(p.shapes(), vec![(6, 3)]);
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let params = ModelParams::<f64> {
            layers: vec![DenseMatrix::from_vec(1, 2, vec![1.5, -0.5]).unwrap()],
        };
        let state = AdamState::zeros_like(&params);
        let grads = vec![DenseMatrix::<f64>::zeros(1, 2)];
        let (p2, s2) = adam_step(&params, &grads, &state, 0.1).unwrap();
        assert_eq!(p2, params);
        assert_eq!(s2.step, 1);
    }

    #[test]
    fn adam_matches_hand_evaluated_first_step() {
        // w = 1, g = 1, lr = 0.1, fresh state:
        //   m_hat = v_hat = 1, so w' = 1 - 0.1 / (1 + eps)
        let params = ModelParams::<f64> {
            layers: vec![DenseMatrix::from_vec(1, 1, vec![1.0]).unwrap()],
        };
        let state = AdamState::zeros_like(&params);
        let grads = vec![DenseMatrix::from_vec(1, 1, vec![1.0]).unwrap()];
        let (p2, _) = adam_step(&params, &grads, &state, 0.1).unwrap();
        let expected = 1.0 - 0.1 * (1.0 / (1.0 + ADAM_EPS));
        assert!((p2.layers[0].get(0, 0) - expected).abs() < 1e-12);
        assert!((p2.layers[0].get(0, 0) - 0.9).abs() < 1e-8);
    }

    #[test]
    fn adam_is_pure() {
        let params = ModelParams::<f64> {
            layers: vec![DenseMatrix::from_vec(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap()],
        };
        let state = AdamState::zeros_like(&params);
        let grads = vec![DenseMatrix::from_vec(2, 2, vec![0.5, -0.5, 0.25, 1.0]).unwrap()];
        let a = adam_step(&params, &grads, &state, 0.05).unwrap();
        let b = adam_step(&params, &grads, &state, 0.05).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let params = ModelParams::<f64> {
            layers: vec![DenseMatrix::<f64>::zeros(2, 2)],
        };
        let state = AdamState::zeros_like(&params);
        let grads = vec![DenseMatrix::<f64>::zeros(2, 3)];
        assert!(adam_step(&params, &grads, &state, 0.1).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = ModelConfig::kw_gcn();
        cfg.num_layers = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::graphsage();
        cfg.neighbor_samples = vec![10];
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::graphsage();
        cfg.num_layers = 1;
        cfg.neighbor_samples = vec![10];
        assert!(cfg.validate().is_ok());
    }
}
