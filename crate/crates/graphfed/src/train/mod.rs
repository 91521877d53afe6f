//! Training loops: the single-machine baseline, per-worker local epochs,
//! parameter averaging, and full-graph evaluation. The distributed
//! master loop lives in [`dist`].

mod dist;

pub use dist::{train_distributed, train_distributed_with_partition};

use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approx::ExtendedPartition;
use crate::datagen::Dataset;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, NormalizedAdjacency, Role};
use crate::model::{
    adam_step, build_sage_plan, cross_entropy_loss, init_params, kw_backward, kw_forward,
    micro_f1, sage_apply, sage_backward, sage_full_forward, AdamState, ModelConfig, ModelKind,
    ModelParams,
};
use crate::rng::{stream, tag};

/// Training-run configuration shared by the single and distributed loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub max_epochs: usize,
    /// Early stop after this many evaluations without val-F1 improvement.
    pub patience: usize,
    /// Evaluate every this many epochs.
    pub eval_every: usize,
    pub seed: u64,
    /// Count approximated vertices into the local training loss.
    #[serde(default)]
    pub include_approx_in_loss: bool,
    /// Keep a copy of the (aggregated) parameters after every epoch.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub record_param_history: bool,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        Self {
            model,
            max_epochs: 200,
            patience: 20,
            eval_every: 1,
            seed: 0,
            include_approx_in_loss: false,
            record_param_history: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// One row of a run's epoch log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// Absent when no training vertex was available.
    pub train_loss: Option<f64>,
    /// Absent on epochs without an evaluation.
    pub val_f1: Option<f64>,
    pub test_f1: Option<f64>,
    pub wall_time_s: f64,
    pub bytes_exchanged: u64,
}

/// What a worker reports back after one local epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalReport {
    pub epoch: u64,
    pub train_loss: Option<f64>,
    pub wall_time_s: f64,
}

/// Everything a worker needs to start training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerAssignment {
    pub worker_id: u32,
    pub model: ModelConfig,
    pub seed: u64,
    pub include_approx_in_loss: bool,
    pub part: ExtendedPartition,
}

/// Result of a training run. `params` holds the best-val checkpoint (the
/// final parameters if no evaluation ever ran).
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub reports: Vec<EpochReport>,
    pub best_epoch: Option<usize>,
    pub best_val_f1: Option<f64>,
    pub best_test_f1: Option<f64>,
    /// Parameters after each epoch, when requested.
    pub param_history: Vec<ModelParams<f32>>,
    /// Partitioning + approximation time for distributed runs, reported
    /// separately from per-epoch training time.
    pub preprocessing_s: f64,
}

/// Elementwise unweighted mean of parameter sets. Per element the values
/// are put in a canonical (sorted) order before summing in f64, so the
/// result is exactly invariant under permutations of the input list.
pub fn aggregate(params_list: &[ModelParams<f32>]) -> Result<ModelParams<f32>> {
    let first = params_list
        .first()
        .ok_or_else(|| Error::InvalidInput("aggregate of empty list".into()))?;
    let shapes = first.shapes();
    for (i, p) in params_list.iter().enumerate() {
        if p.shapes() != shapes {
            return Err(Error::Shape(format!(
                "worker {i} params shaped {:?}, expected {shapes:?}",
                p.shapes()
            )));
        }
    }
    let m = params_list.len();
    let mut out = first.clone();
    let mut column: Vec<f32> = Vec::with_capacity(m);
    for (l, w) in out.layers.iter_mut().enumerate() {
        for idx in 0..w.data().len() {
            column.clear();
            column.extend(params_list.iter().map(|p| p.layers[l].data()[idx]));
            column.sort_by(|a, b| a.total_cmp(b));
            let sum: f64 = column.iter().map(|&v| v as f64).sum();
            w.data_mut()[idx] = (sum / m as f64) as f32;
        }
    }
    Ok(out)
}

/// Full-graph evaluation context; caches the normalized adjacency for the
/// spectral model.
pub struct GlobalEvaluator {
    kind: ModelKind,
    a_hat: Option<NormalizedAdjacency<f32>>,
}

impl GlobalEvaluator {
    pub fn new(cfg: &ModelConfig, d: &Dataset) -> Self {
        let a_hat = match cfg.kind {
            ModelKind::KwGcn => Some(normalize_adjacency(&d.graph)),
            ModelKind::GraphSage => None,
        };
        Self {
            kind: cfg.kind,
            a_hat,
        }
    }

    /// Deterministic logits over every vertex; GraphSAGE aggregates all
    /// neighbors, no sampling.
    pub fn logits(&self, d: &Dataset, params: &ModelParams<f32>) -> Result<DenseMatrix<f32>> {
        match self.kind {
            ModelKind::KwGcn => {
                let a = self.a_hat.as_ref().expect("built in new()");
                Ok(kw_forward(a, &d.features, params)?.logits().clone())
            }
            ModelKind::GraphSage => sage_full_forward(&d.graph, &d.features, params),
        }
    }

    /// `(val_f1, test_f1)` of the argmax predictions.
    pub fn evaluate(&self, d: &Dataset, params: &ModelParams<f32>) -> Result<(f64, f64)> {
        let preds = self.logits(d, params)?.argmax_rows();
        let val = micro_f1(&preds, d.labels.values(), &d.split.indices(Role::Val))?;
        let test = micro_f1(&preds, d.labels.values(), &d.split.indices(Role::Test))?;
        Ok((val, test))
    }
}

/// One-off full-graph evaluation.
pub fn evaluate_global(
    params: &ModelParams<f32>,
    d: &Dataset,
    cfg: &ModelConfig,
) -> Result<(f64, f64)> {
    GlobalEvaluator::new(cfg, d).evaluate(d, params)
}

/// Early-stopping bookkeeping on validation F1.
struct EarlyStopper {
    patience: usize,
    stale_evals: usize,
    best_val: Option<f64>,
}

impl EarlyStopper {
    fn new(patience: usize) -> Self {
        Self {
            patience,
            stale_evals: 0,
            best_val: None,
        }
    }

    /// Returns `(improved, stop)`.
    fn observe(&mut self, val_f1: f64) -> (bool, bool) {
        let improved = self.best_val.map_or(true, |b| val_f1 > b);
        if improved {
            self.best_val = Some(val_f1);
            self.stale_evals = 0;
        } else {
            self.stale_evals += 1;
        }
        (improved, self.stale_evals >= self.patience)
    }
}

/// One model/optimizer step pass over the training vertices. For the
/// spectral model this is one full-batch step; for GraphSAGE one pass of
/// shuffled minibatches. Returns the mean training loss per vertex.
fn run_train_epoch(
    graph: &crate::graph::Graph,
    a_hat: Option<&NormalizedAdjacency<f32>>,
    features: &DenseMatrix<f32>,
    labels: &[u32],
    train_idx: &[u32],
    model_cfg: &ModelConfig,
    params: &mut ModelParams<f32>,
    adam: &mut AdamState<f32>,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    match model_cfg.kind {
        ModelKind::KwGcn => {
            let a = a_hat.expect("spectral model needs a normalized adjacency");
            let acts = kw_forward(a, features, params)?;
            let (loss, grad_logits) = cross_entropy_loss(acts.logits(), labels, train_idx)?;
            let grads = kw_backward(&acts, a, params, &grad_logits)?;
            let (new_params, new_adam) = adam_step(params, &grads, adam, model_cfg.learning_rate)?;
            *params = new_params;
            *adam = new_adam;
            Ok(loss)
        }
        ModelKind::GraphSage => {
            let mut order = train_idx.to_vec();
            // Fisher-Yates via index sampling keeps the draw order stable
            let perm = rand::seq::index::sample(rng, order.len(), order.len());
            order = perm.into_iter().map(|i| train_idx[i]).collect();
            let mut total_loss = 0.0;
            for batch in order.chunks(model_cfg.batch_size) {
                let plan = build_sage_plan(graph, model_cfg, rng, batch)?;
                let trace = sage_apply(&plan, features, params)?;
                let batch_labels: Vec<u32> = batch.iter().map(|&v| labels[v as usize]).collect();
                let mask: Vec<u32> = (0..batch.len() as u32).collect();
                let (loss, grad_logits) =
                    cross_entropy_loss(trace.logits(), &batch_labels, &mask)?;
                let grads = sage_backward(&plan, &trace, params, &grad_logits)?;
                let (new_params, new_adam) =
                    adam_step(params, &grads, adam, model_cfg.learning_rate)?;
                *params = new_params;
                *adam = new_adam;
                total_loss += loss * batch.len() as f64;
            }
            Ok(total_loss / train_idx.len() as f64)
        }
    }
}

/// Train on the full graph on one machine. Early-stops when validation F1
/// fails to improve for `patience` evaluations and returns the best-val
/// parameters.
pub fn train_single(d: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    d.validate()?;
    let feature_dim = d.features.cols();
    let num_classes = d.labels.num_classes();
    let mut params: ModelParams<f32> =
        init_params(&cfg.model, feature_dim, num_classes, cfg.seed)?;
    let mut adam = AdamState::zeros_like(&params);
    let mut rng = stream(cfg.seed, &[tag::TRAIN, 0]);
    let train_idx = d.split.indices(Role::Train);
    let a_hat = match cfg.model.kind {
        ModelKind::KwGcn => Some(normalize_adjacency::<f32>(&d.graph)),
        ModelKind::GraphSage => None,
    };
    let evaluator = GlobalEvaluator::new(&cfg.model, d);

    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut best: Option<(usize, f64, f64, ModelParams<f32>)> = None;
    let mut reports = Vec::new();
    let mut history = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let t0 = Instant::now();
        let loss = if train_idx.is_empty() {
            None
        } else {
            Some(run_train_epoch(
                &d.graph,
                a_hat.as_ref(),
                &d.features,
                d.labels.values(),
                &train_idx,
                &cfg.model,
                &mut params,
                &mut adam,
                &mut rng,
            )?)
        };
        if cfg.record_param_history {
            history.push(params.clone());
        }
        let mut report = EpochReport {
            epoch,
            train_loss: loss,
            val_f1: None,
            test_f1: None,
            wall_time_s: 0.0,
            bytes_exchanged: 0,
        };
        let mut stop = false;
        if epoch % cfg.eval_every == 0 {
            let (val, test) = evaluator.evaluate(d, &params)?;
            report.val_f1 = Some(val);
            report.test_f1 = Some(test);
            let (improved, should_stop) = stopper.observe(val);
            if improved {
                best = Some((epoch, val, test, params.clone()));
            }
            stop = should_stop;
        }
        report.wall_time_s = t0.elapsed().as_secs_f64();
        reports.push(report);
        if stop {
            break;
        }
    }

    let (best_epoch, best_val_f1, best_test_f1, final_params) = match best {
        Some((e, v, t, p)) => (Some(e), Some(v), Some(t), p),
        None => (None, None, None, params),
    };
    Ok(TrainOutcome {
        params: final_params,
        reports,
        best_epoch,
        best_val_f1,
        best_test_f1,
        param_history: history,
        preprocessing_s: 0.0,
    })
}

/// A worker's live training state. The Adam moments persist across epochs
/// and are never averaged or reset by a parameter broadcast.
pub struct WorkerState {
    pub worker_id: usize,
    pub part: ExtendedPartition,
    pub params: ModelParams<f32>,
    pub adam: AdamState<f32>,
    model: ModelConfig,
    rng: ChaCha8Rng,
    a_hat_local: Option<NormalizedAdjacency<f32>>,
    /// Local ids contributing to the loss: training vertices, core-only
    /// unless approximated vertices are explicitly included.
    local_train: Vec<u32>,
    epochs_run: u64,
}

impl WorkerState {
    pub fn new(assignment: &WorkerAssignment, initial_params: ModelParams<f32>) -> Result<Self> {
        assignment.model.validate()?;
        let part = assignment.part.clone();
        let local_train: Vec<u32> = (0..part.num_local() as u32)
            .filter(|&l| {
                part.local_split.role(l) == Role::Train
                    && (assignment.include_approx_in_loss || part.is_core_local(l))
            })
            .collect();
        let a_hat_local = match assignment.model.kind {
            ModelKind::KwGcn => Some(normalize_adjacency::<f32>(&part.local_graph)),
            ModelKind::GraphSage => None,
        };
        let rng = stream(assignment.seed, &[tag::TRAIN, assignment.worker_id as u64]);
        let adam = AdamState::zeros_like(&initial_params);
        Ok(Self {
            worker_id: assignment.worker_id as usize,
            part,
            params: initial_params,
            adam,
            model: assignment.model.clone(),
            rng,
            a_hat_local,
            local_train,
            epochs_run: 0,
        })
    }

    /// Replace the parameters (epoch broadcast); optimizer state is kept.
    pub fn set_params(&mut self, params: ModelParams<f32>) -> Result<()> {
        if !self.adam.first_moment.is_empty()
            && self.adam.first_moment.len() != params.layers.len()
        {
            return Err(Error::Shape("broadcast params shape changed".into()));
        }
        self.params = params;
        Ok(())
    }

    pub fn epochs_run(&self) -> u64 {
        self.epochs_run
    }
}

/// One epoch of local training on the worker's extended partition.
/// Returns the updated parameters; with no local training vertices the
/// parameters pass through unchanged and the loss is absent.
pub fn worker_epoch(w: &mut WorkerState) -> Result<(ModelParams<f32>, LocalReport)> {
    let t0 = Instant::now();
    w.epochs_run += 1;
    let loss = if w.local_train.is_empty() {
        None
    } else {
        Some(run_train_epoch(
            &w.part.local_graph,
            w.a_hat_local.as_ref(),
            &w.part.local_features,
            w.part.local_labels.values(),
            &w.local_train,
            &w.model,
            &mut w.params,
            &mut w.adam,
            &mut w.rng,
        )?)
    };
    Ok((
        w.params.clone(),
        LocalReport {
            epoch: w.epochs_run,
            train_loss: loss,
            wall_time_s: t0.elapsed().as_secs_f64(),
        },
    ))
}
