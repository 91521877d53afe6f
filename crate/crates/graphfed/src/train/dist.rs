//! Synchronous master loop: partition, approximate, assign, then per
//! epoch broadcast parameters, let every worker train one local epoch,
//! average what comes back, and evaluate the averaged model on the full
//! graph.

use std::time::Instant;

use crate::approx::{build_extended_partitions, OverlapConfig};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::model::init_params;
use crate::partition::{partition_bfs_balanced, PartitionAssignment};
use super::{
    aggregate, EarlyStopper, EpochReport, GlobalEvaluator, TrainConfig, TrainOutcome,
    WorkerAssignment,
};
use crate::transport::{serialize_params, WorkerPool};

/// Distributed training with the built-in partitioner.
pub fn train_distributed(
    d: &Dataset,
    num_workers: usize,
    overlap: f64,
    cfg: &TrainConfig,
    pool: &mut dyn WorkerPool,
) -> Result<TrainOutcome> {
    if num_workers < 2 {
        return Err(Error::Config(format!(
            "distributed training needs >= 2 workers, got {num_workers}"
        )));
    }
    let assign = partition_bfs_balanced(&d.graph, num_workers, cfg.seed)?;
    train_distributed_with_partition(d, &assign, overlap, cfg, pool)
}

/// Distributed training with a caller-provided partition (e.g. loaded
/// from an external partitioner's file).
pub fn train_distributed_with_partition(
    d: &Dataset,
    assign: &PartitionAssignment,
    overlap: f64,
    cfg: &TrainConfig,
    pool: &mut dyn WorkerPool,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    d.validate()?;
    let m = assign.num_partitions();
    if m < 2 {
        return Err(Error::Config(format!(
            "distributed training needs >= 2 partitions, got {m}"
        )));
    }
    if pool.num_workers() != m {
        return Err(Error::Config(format!(
            "pool has {} workers for {m} partitions",
            pool.num_workers()
        )));
    }

    let preprocess_start = Instant::now();
    let parts = build_extended_partitions(
        d,
        assign,
        &OverlapConfig {
            overlap,
            seed: cfg.seed,
        },
    )?;
    let preprocessing_s = preprocess_start.elapsed().as_secs_f64();

    for part in parts {
        let worker = part.partition_id as usize;
        pool.assign(
            worker,
            &WorkerAssignment {
                worker_id: part.partition_id,
                model: cfg.model.clone(),
                seed: cfg.seed,
                include_approx_in_loss: cfg.include_approx_in_loss,
                part,
            },
        )?;
    }

    let mut params =
        init_params::<f32>(&cfg.model, d.features.cols(), d.labels.num_classes(), cfg.seed)?;
    // Shapes never change, so the per-epoch exchange volume is constant:
    // one upload plus one broadcast per worker.
    let params_wire_bytes = serialize_params(&params).len() as u64;
    let bytes_per_epoch = 2 * m as u64 * params_wire_bytes;

    let evaluator = GlobalEvaluator::new(&cfg.model, d);
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut best: Option<(usize, f64, f64, crate::model::ModelParams<f32>)> = None;
    let mut reports = Vec::new();
    let mut history = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let t0 = Instant::now();
        for worker in 0..m {
            pool.start_epoch(worker, epoch as u64, &params)?;
        }
        let mut worker_params = Vec::with_capacity(m);
        let mut losses = Vec::new();
        for worker in 0..m {
            let (p, report) = pool.collect(worker)?;
            if report.epoch != epoch as u64 {
                return Err(Error::Protocol(format!(
                    "worker {worker} reported epoch {}, expected {epoch}",
                    report.epoch
                )));
            }
            if let Some(loss) = report.train_loss {
                losses.push(loss);
            }
            worker_params.push(p);
        }
        params = aggregate(&worker_params)?;
        if cfg.record_param_history {
            history.push(params.clone());
        }

        let mut report = EpochReport {
            epoch,
            train_loss: if losses.is_empty() {
                None
            } else {
                Some(losses.iter().sum::<f64>() / losses.len() as f64)
            },
            val_f1: None,
            test_f1: None,
            wall_time_s: 0.0,
            bytes_exchanged: bytes_per_epoch,
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
    pool.shutdown()?;

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
        preprocessing_s,
    })
}
