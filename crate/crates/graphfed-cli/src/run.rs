//! Execution of one configured training run and its output directory.

use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use graphfed::{
    io, load_partition_file, run_worker_with_retry, train_distributed,
    train_distributed_with_partition, train_single, Dataset, LocalPool, TcpMaster, TrainOutcome,
    WorkerPool,
};

use crate::config::{Mode, RunConfig};

pub const WORKER_CONNECT_TIMEOUT: Duration = Duration::from_secs(60);

/// Run the configured training job on an already loaded dataset.
pub fn execute(cfg: &RunConfig, dataset: &Dataset) -> Result<TrainOutcome> {
    let train_cfg = cfg.to_train_config();
    let partition = match &cfg.partition_file {
        Some(path) => Some(
            load_partition_file(path, dataset.graph.num_vertices(), cfg.workers)
                .with_context(|| format!("loading partition {}", path.display()))?,
        ),
        None => None,
    };
    let outcome = match cfg.mode {
        Mode::Single => train_single(dataset, &train_cfg)?,
        Mode::DistInproc => {
            let mut pool = if cfg.sequential {
                LocalPool::sequential(cfg.workers)
            } else {
                LocalPool::threaded(cfg.workers)
            };
            run_with_pool(dataset, cfg, &train_cfg, partition.as_ref(), &mut pool)?
        }
        Mode::DistTcp => {
            let master = TcpMaster::bind(&cfg.bind)
                .with_context(|| format!("binding {}", cfg.bind))?;
            let addr = master.local_addr();
            eprintln!("master listening on {addr} for {} workers", cfg.workers);
            let mut handles = Vec::new();
            if !cfg.external_workers {
                for id in 0..cfg.workers as u32 {
                    let addr = addr.to_string();
                    handles.push(std::thread::spawn(move || {
                        run_worker_with_retry(&addr, id, WORKER_CONNECT_TIMEOUT)
                    }));
                }
            }
            let mut pool = master.accept_workers(cfg.workers, WORKER_CONNECT_TIMEOUT)?;
            let outcome =
                run_with_pool(dataset, cfg, &train_cfg, partition.as_ref(), &mut pool)?;
            for (id, handle) in handles.into_iter().enumerate() {
                match handle.join() {
                    Ok(Ok(())) => {}
                    Ok(Err(e)) => bail!("worker {id} failed: {e}"),
                    Err(_) => bail!("worker {id} panicked"),
                }
            }
            outcome
        }
    };
    Ok(outcome)
}

fn run_with_pool(
    dataset: &Dataset,
    cfg: &RunConfig,
    train_cfg: &graphfed::TrainConfig,
    partition: Option<&graphfed::PartitionAssignment>,
    pool: &mut dyn WorkerPool,
) -> Result<TrainOutcome> {
    let outcome = match partition {
        Some(assign) => {
            train_distributed_with_partition(dataset, assign, cfg.overlap, train_cfg, pool)?
        }
        None => train_distributed(dataset, cfg.workers, cfg.overlap, train_cfg, pool)?,
    };
    Ok(outcome)
}

/// Write the self-describing run directory: resolved `config.json`, the
/// epoch log, and the best-val checkpoint.
pub fn write_run_dir(dir: &Path, cfg: &RunConfig, outcome: &TrainOutcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    cfg.save(&dir.join("config.json"))?;
    io::write_epochs_csv(&dir.join("epochs.csv"), &outcome.reports)?;
    io::save_checkpoint(&dir.join("checkpoint.gfpm"), &outcome.params)?;
    Ok(())
}

/// One line a human can read off a finished run.
pub fn summarize(outcome: &TrainOutcome) -> String {
    match (outcome.best_epoch, outcome.best_val_f1, outcome.best_test_f1) {
        (Some(e), Some(v), Some(t)) => format!(
            "converged at epoch {e}: val_f1={v:.4} test_f1={t:.4} ({} epochs run, {:.2}s preprocessing)",
            outcome.reports.len(),
            outcome.preprocessing_s
        ),
        _ => format!("{} epochs run, never evaluated", outcome.reports.len()),
    }
}
