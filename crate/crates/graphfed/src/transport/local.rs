//! In-process worker pools.
//!
//! The sequential flavor runs every worker inline, in id order, and is
//! the determinism reference. The threaded flavor runs each worker on
//! its own thread behind an in-memory frame channel, exercising the same
//! worker loop as the TCP transport. Worker RNG streams are keyed by
//! `(seed, worker_id)`, so both flavors produce bit-identical results.

use std::sync::mpsc::{channel, Receiver, Sender};
use std::thread::JoinHandle;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::train::{worker_epoch, LocalReport, WorkerAssignment, WorkerState};
use crate::transport::{
    decode_frame, decode_report, deserialize_params, encode_frame, serialize_params, worker_loop,
    FrameConn, Message, PoolStats, WorkerPool,
};

/// Frame connection over a pair of byte channels.
struct ChannelConn {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    sent: u64,
    received: u64,
}

impl ChannelConn {
    fn pair() -> (ChannelConn, ChannelConn) {
        let (tx_a, rx_b) = channel();
        let (tx_b, rx_a) = channel();
        (
            ChannelConn {
                tx: tx_a,
                rx: rx_a,
                sent: 0,
                received: 0,
            },
            ChannelConn {
                tx: tx_b,
                rx: rx_b,
                sent: 0,
                received: 0,
            },
        )
    }
}

impl FrameConn for ChannelConn {
    fn send(&mut self, msg: &Message) -> Result<()> {
        let bytes = encode_frame(msg.kind(), &msg.payload())?;
        self.sent += bytes.len() as u64;
        self.tx
            .send(bytes)
            .map_err(|_| Error::Protocol("peer hung up".into()))
    }

    fn recv(&mut self) -> Result<Message> {
        let bytes = self
            .rx
            .recv()
            .map_err(|_| Error::Protocol("peer hung up".into()))?;
        self.received += bytes.len() as u64;
        let (kind, payload) = decode_frame(&bytes)?;
        Message::from_frame(kind, payload)
    }

    fn bytes_sent(&self) -> u64 {
        self.sent
    }

    fn bytes_received(&self) -> u64 {
        self.received
    }
}

enum SequentialWorker {
    Empty,
    Assigned(WorkerAssignment),
    Running {
        state: Box<WorkerState>,
        pending: Option<(ModelParams<f32>, LocalReport)>,
    },
}

struct ThreadedWorker {
    conn: ChannelConn,
    handle: Option<JoinHandle<Result<()>>>,
}

enum Backend {
    Sequential(Vec<SequentialWorker>),
    Threaded(Vec<ThreadedWorker>),
}

/// In-process [`WorkerPool`].
pub struct LocalPool {
    backend: Backend,
    stats: PoolStats,
}

impl LocalPool {
    /// Workers execute inline, in the order the master drives them.
    pub fn sequential(num_workers: usize) -> Self {
        Self {
            backend: Backend::Sequential(
                (0..num_workers).map(|_| SequentialWorker::Empty).collect(),
            ),
            stats: PoolStats::default(),
        }
    }

    /// One thread per worker, talking frames over in-memory channels.
    pub fn threaded(num_workers: usize) -> Self {
        let mut workers = Vec::with_capacity(num_workers);
        for _ in 0..num_workers {
            let (master_side, mut worker_side) = ChannelConn::pair();
            let handle = std::thread::spawn(move || worker_loop(&mut worker_side));
            workers.push(ThreadedWorker {
                conn: master_side,
                handle: Some(handle),
            });
        }
        Self {
            backend: Backend::Threaded(workers),
            stats: PoolStats::default(),
        }
    }

    fn check_index(&self, worker: usize) -> Result<()> {
        if worker >= self.num_workers() {
            return Err(Error::InvalidInput(format!(
                "worker index {worker} out of range"
            )));
        }
        Ok(())
    }
}

impl WorkerPool for LocalPool {
    fn num_workers(&self) -> usize {
        match &self.backend {
            Backend::Sequential(w) => w.len(),
            Backend::Threaded(w) => w.len(),
        }
    }

    fn assign(&mut self, worker: usize, assignment: &WorkerAssignment) -> Result<()> {
        self.check_index(worker)?;
        self.stats.assigns_sent += 1;
        match &mut self.backend {
            Backend::Sequential(workers) => {
                let blob = super::encode_assignment(assignment)?;
                self.stats.bytes_sent += (blob.len() + super::FRAME_HEADER_LEN) as u64;
                workers[worker] = SequentialWorker::Assigned(assignment.clone());
                Ok(())
            }
            Backend::Threaded(workers) => {
                let blob = super::encode_assignment(assignment)?;
                workers[worker].conn.send(&Message::Assign { blob })?;
                Ok(())
            }
        }
    }

    fn start_epoch(
        &mut self,
        worker: usize,
        epoch: u64,
        params: &ModelParams<f32>,
    ) -> Result<()> {
        self.check_index(worker)?;
        self.stats.epochs_started += 1;
        match &mut self.backend {
            Backend::Sequential(workers) => {
                // Run the epoch right here: the caller drives workers in
                // id order, which makes this the deterministic reference.
                let wire = serialize_params(params);
                self.stats.bytes_sent += (wire.len() + super::FRAME_HEADER_LEN + 8) as u64;
                let broadcast = deserialize_params(&wire)?;
                let slot = &mut workers[worker];
                match std::mem::replace(slot, SequentialWorker::Empty) {
                    SequentialWorker::Empty => {
                        Err(Error::Protocol(format!("worker {worker} never assigned")))
                    }
                    SequentialWorker::Assigned(assignment) => {
                        let mut state = Box::new(WorkerState::new(&assignment, broadcast)?);
                        let result = worker_epoch(&mut state)?;
                        *slot = SequentialWorker::Running {
                            state,
                            pending: Some(result),
                        };
                        Ok(())
                    }
                    SequentialWorker::Running { mut state, pending } => {
                        if pending.is_some() {
                            return Err(Error::Protocol(format!(
                                "worker {worker} has an uncollected epoch"
                            )));
                        }
                        state.set_params(broadcast)?;
                        let result = worker_epoch(&mut state)?;
                        let _ = epoch;
                        *slot = SequentialWorker::Running {
                            state,
                            pending: Some(result),
                        };
                        Ok(())
                    }
                }
            }
            Backend::Threaded(workers) => workers[worker].conn.send(&Message::StartEpoch {
                epoch,
                params: serialize_params(params),
            }),
        }
    }

    fn collect(&mut self, worker: usize) -> Result<(ModelParams<f32>, LocalReport)> {
        self.check_index(worker)?;
        match &mut self.backend {
            Backend::Sequential(workers) => match &mut workers[worker] {
                SequentialWorker::Running { state, pending } => {
                    let (params, report) = pending
                        .take()
                        .ok_or_else(|| Error::Protocol(format!("worker {worker} idle")))?;
                    let _ = state;
                    let wire = serialize_params(&params);
                    self.stats.bytes_received +=
                        (wire.len() + super::FRAME_HEADER_LEN + 16) as u64;
                    self.stats.params_collected += 1;
                    // round-trip through the codec like the other pools
                    Ok((deserialize_params(&wire)?, report))
                }
                _ => Err(Error::Protocol(format!("worker {worker} idle"))),
            },
            Backend::Threaded(workers) => {
                let msg = workers[worker].conn.recv().map_err(|e| Error::Worker {
                    worker_id: worker,
                    message: e.to_string(),
                })?;
                match msg {
                    Message::Params {
                        params, report, ..
                    } => {
                        self.stats.params_collected += 1;
                        Ok((deserialize_params(&params)?, decode_report(&report)?))
                    }
                    other => Err(Error::Protocol(format!(
                        "expected Params, got {:?}",
                        other.kind()
                    ))),
                }
            }
        }
    }

    fn shutdown(&mut self) -> Result<()> {
        if let Backend::Threaded(workers) = &mut self.backend {
            for (id, w) in workers.iter_mut().enumerate() {
                if w.handle.is_none() {
                    continue;
                }
                w.conn.send(&Message::Shutdown)?;
                match w.handle.take().expect("checked").join() {
                    Ok(Ok(())) => {}
                    Ok(Err(e)) => {
                        return Err(Error::Worker {
                            worker_id: id,
                            message: e.to_string(),
                        })
                    }
                    Err(_) => {
                        return Err(Error::Worker {
                            worker_id: id,
                            message: "worker thread panicked".into(),
                        })
                    }
                }
            }
        }
        Ok(())
    }

    fn stats(&self) -> PoolStats {
        let mut stats = self.stats;
        if let Backend::Threaded(workers) = &self.backend {
            stats.bytes_sent = workers.iter().map(|w| w.conn.bytes_sent()).sum();
            stats.bytes_received = workers.iter().map(|w| w.conn.bytes_received()).sum();
        }
        stats
    }
}

impl Drop for LocalPool {
    fn drop(&mut self) {
        if let Backend::Threaded(workers) = &mut self.backend {
            // Best-effort shutdown so threads are reaped even on abort.
            for w in workers.iter_mut() {
                if let Ok(frame) = encode_frame(super::FrameKind::Shutdown, &[]) {
                    let _ = w.conn.tx.send(frame);
                }
                if let Some(handle) = w.handle.take() {
                    let _ = handle.join();
                }
            }
        }
    }
}
