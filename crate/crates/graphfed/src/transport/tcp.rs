//! TCP transport: the master binds a listener and waits for `m` workers
//! to connect and introduce themselves; workers run as separate threads
//! or processes and connect over loopback or LAN.

use std::io::Write;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::train::{LocalReport, WorkerAssignment};
use crate::transport::{
    decode_report, deserialize_params, encode_frame, read_frame, serialize_params, worker_loop,
    FrameConn, Message, PoolStats, WorkerPool,
};

/// Frame connection over a TCP stream.
struct TcpConn {
    stream: TcpStream,
    sent: u64,
    received: u64,
}

impl TcpConn {
    fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        Ok(Self {
            stream,
            sent: 0,
            received: 0,
        })
    }
}

impl FrameConn for TcpConn {
    fn send(&mut self, msg: &Message) -> Result<()> {
        let bytes = encode_frame(msg.kind(), &msg.payload())?;
        self.stream.write_all(&bytes)?;
        self.sent += bytes.len() as u64;
        Ok(())
    }

    fn recv(&mut self) -> Result<Message> {
        let (kind, payload) = read_frame(&mut self.stream)?;
        self.received += (super::FRAME_HEADER_LEN + payload.len()) as u64;
        Message::from_frame(kind, payload)
    }

    fn bytes_sent(&self) -> u64 {
        self.sent
    }

    fn bytes_received(&self) -> u64 {
        self.received
    }
}

/// A bound listener waiting for workers; lets the caller learn the
/// address (and hand it to the workers) before accepting starts.
pub struct TcpMaster {
    listener: TcpListener,
    addr: SocketAddr,
}

impl TcpMaster {
    /// Bind; port 0 picks an ephemeral port.
    pub fn bind(bind_addr: &str) -> Result<TcpMaster> {
        let listener = TcpListener::bind(bind_addr)?;
        let addr = listener.local_addr()?;
        Ok(TcpMaster { listener, addr })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Accept exactly `num_workers` distinct `Hello`s within the timeout.
    /// Connections with a duplicate or out-of-range worker id are dropped
    /// and the slot stays open for a proper `Hello`.
    pub fn accept_workers(self, num_workers: usize, timeout: Duration) -> Result<TcpPool> {
        self.listener.set_nonblocking(true)?;
        let deadline = Instant::now() + timeout;
        let mut slots: Vec<Option<TcpConn>> = (0..num_workers).map(|_| None).collect();
        let mut connected = 0usize;
        while connected < num_workers {
            match self.listener.accept() {
                Ok((stream, _peer)) => {
                    stream.set_nonblocking(false)?;
                    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
                    let mut conn = TcpConn::new(stream)?;
                    match conn.recv() {
                        Ok(Message::Hello { worker_id }) => {
                            let id = worker_id as usize;
                            if id >= num_workers || slots[id].is_some() {
                                // reject: drop the connection
                                continue;
                            }
                            conn.stream.set_read_timeout(None)?;
                            slots[id] = Some(conn);
                            connected += 1;
                        }
                        _ => continue,
                    }
                }
                Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Err(Error::Protocol(format!(
                            "timed out waiting for workers: {connected}/{num_workers} connected"
                        )));
                    }
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(e.into()),
            }
        }
        let conns = slots.into_iter().map(|s| s.expect("all filled")).collect();
        Ok(TcpPool {
            conns,
            stats: PoolStats::default(),
        })
    }
}

/// Master side of the TCP transport.
pub struct TcpPool {
    conns: Vec<TcpConn>,
    stats: PoolStats,
}

impl TcpPool {
    fn worker_err(&self, worker: usize, e: Error) -> Error {
        Error::Worker {
            worker_id: worker,
            message: e.to_string(),
        }
    }
}

impl WorkerPool for TcpPool {
    fn num_workers(&self) -> usize {
        self.conns.len()
    }

    fn assign(&mut self, worker: usize, assignment: &WorkerAssignment) -> Result<()> {
        let blob = super::encode_assignment(assignment)?;
        self.stats.assigns_sent += 1;
        self.conns[worker]
            .send(&Message::Assign { blob })
            .map_err(|e| self.worker_err(worker, e))
    }

    fn start_epoch(
        &mut self,
        worker: usize,
        epoch: u64,
        params: &ModelParams<f32>,
    ) -> Result<()> {
        self.stats.epochs_started += 1;
        self.conns[worker]
            .send(&Message::StartEpoch {
                epoch,
                params: serialize_params(params),
            })
            .map_err(|e| self.worker_err(worker, e))
    }

    fn collect(&mut self, worker: usize) -> Result<(ModelParams<f32>, LocalReport)> {
        let msg = self.conns[worker]
            .recv()
            .map_err(|e| self.worker_err(worker, e))?;
        match msg {
            Message::Params { params, report, .. } => {
                self.stats.params_collected += 1;
                Ok((deserialize_params(&params)?, decode_report(&report)?))
            }
            other => Err(Error::Protocol(format!(
                "worker {worker}: expected Params, got {:?}",
                other.kind()
            ))),
        }
    }

    fn shutdown(&mut self) -> Result<()> {
        for conn in self.conns.iter_mut() {
            conn.send(&Message::Shutdown)?;
        }
        Ok(())
    }

    fn stats(&self) -> PoolStats {
        let mut stats = self.stats;
        stats.bytes_sent = self.conns.iter().map(|c| c.sent).sum();
        stats.bytes_received = self.conns.iter().map(|c| c.received).sum();
        stats
    }
}

/// Worker process entry point: connect, introduce, then train as driven
/// by the master. Returns `Ok(())` on a clean `Shutdown`; a dropped
/// connection aborts with a diagnostic.
pub fn run_worker(connect_addr: impl ToSocketAddrs, worker_id: u32) -> Result<()> {
    let stream = TcpStream::connect(connect_addr)?;
    let mut conn = TcpConn::new(stream)?;
    conn.send(&Message::Hello { worker_id })?;
    worker_loop(&mut conn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_sbm, SbmConfig};
    use crate::model::{init_params, ModelConfig};
    use crate::partition::partition_bfs_balanced;
    use crate::train::TrainConfig;
    use crate::transport::{encode_assignment, encode_report, FRAME_HEADER_LEN};

    /// Reconcile the pool's byte counters against the exact frame sizes:
    /// per worker one Assign, per epoch one StartEpoch out and one Params
    /// back, and a closing Shutdown.
    #[test]
    fn byte_counters_match_frames_written() {
        let d = generate_sbm(&SbmConfig {
            n: 40,
            k: 2,
            p_in: 0.3,
            p_out: 0.05,
            feature_dim: 4,
            noise_sigma: 0.2,
            split_fractions: (0.6, 0.2, 0.2),
            seed: 1,
        })
        .unwrap();
        let model = ModelConfig {
            hidden_dim: 6,
            ..ModelConfig::kw_gcn()
        };
        let cfg = TrainConfig::new(model.clone());
        let assign = partition_bfs_balanced(&d.graph, 2, 0).unwrap();
        let parts = crate::approx::build_extended_partitions(
            &d,
            &assign,
            &crate::approx::OverlapConfig {
                overlap: 0.2,
                seed: 0,
            },
        )
        .unwrap();

        let master = TcpMaster::bind("127.0.0.1:0").unwrap();
        let addr = master.local_addr();
        let handles: Vec<_> = (0..2u32)
            .map(|id| {
                std::thread::spawn(move || {
                    super::run_worker_with_retry(
                        &addr.to_string(),
                        id,
                        Duration::from_secs(5),
                    )
                })
            })
            .collect();
        let mut pool = master.accept_workers(2, Duration::from_secs(10)).unwrap();

        let mut expected_sent = 0u64;
        let mut expected_received = 2 * (FRAME_HEADER_LEN + 4) as u64; // two Hellos
        for part in parts {
            let wa = crate::train::WorkerAssignment {
                worker_id: part.partition_id,
                model: model.clone(),
                seed: cfg.seed,
                include_approx_in_loss: false,
                part,
            };
            expected_sent +=
                (FRAME_HEADER_LEN + encode_assignment(&wa).unwrap().len()) as u64;
            pool.assign(wa.worker_id as usize, &wa).unwrap();
        }
        let mut params = init_params::<f32>(&model, 4, 2, 0).unwrap();
        let wire_len = serialize_params(&params).len();
        let epochs = 2u64;
        for epoch in 1..=epochs {
            for w in 0..2 {
                pool.start_epoch(w, epoch, &params).unwrap();
                expected_sent += (FRAME_HEADER_LEN + 8 + wire_len) as u64;
            }
            let mut collected = Vec::new();
            for w in 0..2 {
                let (p, report) = pool.collect(w).unwrap();
                expected_received += (FRAME_HEADER_LEN
                    + 16
                    + wire_len
                    + encode_report(&report).unwrap().len())
                    as u64;
                collected.push(p);
            }
            params = crate::train::aggregate(&collected).unwrap();
        }
        pool.shutdown().unwrap();
        expected_sent += 2 * FRAME_HEADER_LEN as u64;

        let stats = pool.stats();
        assert_eq!(stats.bytes_sent, expected_sent);
        assert_eq!(stats.bytes_received, expected_received);
        assert_eq!(stats.epochs_started, 2 * epochs);
        assert_eq!(stats.params_collected, 2 * epochs);
        for h in handles {
            h.join().unwrap().unwrap();
        }
    }
}

/// Connect with retries while the master is still binding.
pub fn run_worker_with_retry(
    connect_addr: &str,
    worker_id: u32,
    timeout: Duration,
) -> Result<()> {
    let deadline = Instant::now() + timeout;
    let stream = loop {
        match TcpStream::connect(connect_addr) {
            Ok(s) => break s,
            Err(e) => {
                if Instant::now() >= deadline {
                    return Err(e.into());
                }
                std::thread::sleep(Duration::from_millis(20));
            }
        }
    };
    let mut conn = TcpConn::new(stream)?;
    conn.send(&Message::Hello { worker_id })?;
    worker_loop(&mut conn)
}
