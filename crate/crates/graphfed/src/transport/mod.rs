//! Master/worker communication: a length-prefixed frame format, the typed
//! messages of the synchronous training protocol, and worker pools over
//! in-process channels or TCP.
//!
//! Frame layout, bit-exact: magic `GFED`, version u8 = 1, kind u8,
//! payload length u64 little-endian, payload bytes.

mod local;
mod tcp;
mod worker;

pub use local::LocalPool;
pub use tcp::{run_worker, run_worker_with_retry, TcpMaster, TcpPool};
pub use worker::worker_loop;

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::train::{LocalReport, WorkerAssignment};

pub const FRAME_MAGIC: &[u8; 4] = b"GFED";
pub const FRAME_VERSION: u8 = 1;
pub const FRAME_HEADER_LEN: usize = 14;
/// Sanity cap on payload size.
pub const MAX_PAYLOAD: u64 = (1 << 32) - 1;

/// Wire identifier of each message type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameKind {
    Hello = 1,
    Assign = 2,
    StartEpoch = 3,
    Params = 4,
    Shutdown = 5,
}

impl FrameKind {
    fn from_u8(b: u8) -> Result<Self> {
        match b {
            1 => Ok(FrameKind::Hello),
            2 => Ok(FrameKind::Assign),
            3 => Ok(FrameKind::StartEpoch),
            4 => Ok(FrameKind::Params),
            5 => Ok(FrameKind::Shutdown),
            other => Err(Error::Protocol(format!("unknown frame kind {other}"))),
        }
    }
}

/// Frame a payload.
pub fn encode_frame(kind: FrameKind, payload: &[u8]) -> Result<Vec<u8>> {
    if payload.len() as u64 > MAX_PAYLOAD {
        return Err(Error::Protocol(format!(
            "payload of {} bytes exceeds cap",
            payload.len()
        )));
    }
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + payload.len());
    out.extend_from_slice(FRAME_MAGIC);
    out.push(FRAME_VERSION);
    out.push(kind as u8);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

/// Parse one complete frame; the buffer must contain exactly one frame.
pub fn decode_frame(bytes: &[u8]) -> Result<(FrameKind, Vec<u8>)> {
    if bytes.len() < FRAME_HEADER_LEN {
        return Err(Error::Protocol("truncated frame header".into()));
    }
    if &bytes[0..4] != FRAME_MAGIC {
        return Err(Error::Protocol("bad frame magic".into()));
    }
    if bytes[4] != FRAME_VERSION {
        return Err(Error::Protocol(format!("bad frame version {}", bytes[4])));
    }
    let kind = FrameKind::from_u8(bytes[5])?;
    let len = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(Error::Protocol(format!("payload length {len} exceeds cap")));
    }
    if bytes.len() as u64 - FRAME_HEADER_LEN as u64 != len {
        return Err(Error::Protocol(format!(
            "frame declares {len} payload bytes, buffer holds {}",
            bytes.len() - FRAME_HEADER_LEN
        )));
    }
    Ok((kind, bytes[FRAME_HEADER_LEN..].to_vec()))
}

/// Read one frame from a byte stream.
pub fn read_frame(r: &mut impl Read) -> Result<(FrameKind, Vec<u8>)> {
    let mut header = [0u8; FRAME_HEADER_LEN];
    r.read_exact(&mut header)?;
    if &header[0..4] != FRAME_MAGIC {
        return Err(Error::Protocol("bad frame magic".into()));
    }
    if header[4] != FRAME_VERSION {
        return Err(Error::Protocol(format!("bad frame version {}", header[4])));
    }
    let kind = FrameKind::from_u8(header[5])?;
    let len = u64::from_le_bytes(header[6..14].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(Error::Protocol(format!("payload length {len} exceeds cap")));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok((kind, payload))
}

/// Write one frame; returns the byte count put on the wire.
pub fn write_frame(w: &mut impl Write, kind: FrameKind, payload: &[u8]) -> Result<usize> {
    let bytes = encode_frame(kind, payload)?;
    w.write_all(&bytes)?;
    Ok(bytes.len())
}

/// Typed protocol messages.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello { worker_id: u32 },
    Assign { blob: Vec<u8> },
    StartEpoch { epoch: u64, params: Vec<u8> },
    Params { epoch: u64, params: Vec<u8>, report: Vec<u8> },
    Shutdown,
}

impl Message {
    pub fn kind(&self) -> FrameKind {
        match self {
            Message::Hello { .. } => FrameKind::Hello,
            Message::Assign { .. } => FrameKind::Assign,
            Message::StartEpoch { .. } => FrameKind::StartEpoch,
            Message::Params { .. } => FrameKind::Params,
            Message::Shutdown => FrameKind::Shutdown,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        match self {
            Message::Hello { worker_id } => worker_id.to_le_bytes().to_vec(),
            Message::Assign { blob } => blob.clone(),
            Message::StartEpoch { epoch, params } => {
                let mut p = Vec::with_capacity(8 + params.len());
                p.extend_from_slice(&epoch.to_le_bytes());
                p.extend_from_slice(params);
                p
            }
            Message::Params {
                epoch,
                params,
                report,
            } => {
                let mut p = Vec::with_capacity(16 + params.len() + report.len());
                p.extend_from_slice(&epoch.to_le_bytes());
                p.extend_from_slice(&(params.len() as u64).to_le_bytes());
                p.extend_from_slice(params);
                p.extend_from_slice(report);
                p
            }
            Message::Shutdown => Vec::new(),
        }
    }

    pub fn from_frame(kind: FrameKind, payload: Vec<u8>) -> Result<Self> {
        let need = |n: usize| {
            if payload.len() < n {
                Err(Error::Protocol(format!(
                    "{kind:?} payload too short: {} < {n}",
                    payload.len()
                )))
            } else {
                Ok(())
            }
        };
        match kind {
            FrameKind::Hello => {
                if payload.len() != 4 {
                    return Err(Error::Protocol("Hello payload must be 4 bytes".into()));
                }
                Ok(Message::Hello {
                    worker_id: u32::from_le_bytes(payload[..4].try_into().unwrap()),
                })
            }
            FrameKind::Assign => Ok(Message::Assign { blob: payload }),
            FrameKind::StartEpoch => {
                need(8)?;
                Ok(Message::StartEpoch {
                    epoch: u64::from_le_bytes(payload[..8].try_into().unwrap()),
                    params: payload[8..].to_vec(),
                })
            }
            FrameKind::Params => {
                need(16)?;
                let epoch = u64::from_le_bytes(payload[..8].try_into().unwrap());
                let plen = u64::from_le_bytes(payload[8..16].try_into().unwrap()) as usize;
                need(16 + plen)?;
                Ok(Message::Params {
                    epoch,
                    params: payload[16..16 + plen].to_vec(),
                    report: payload[16 + plen..].to_vec(),
                })
            }
            FrameKind::Shutdown => {
                if !payload.is_empty() {
                    return Err(Error::Protocol("Shutdown carries no payload".into()));
                }
                Ok(Message::Shutdown)
            }
        }
    }
}

/// Parameter bytes on the wire use the checkpoint layout (`GFPM`,
/// little-endian f32); the f32 round trip is lossless.
pub fn serialize_params(params: &ModelParams<f32>) -> Vec<u8> {
    crate::io::params_to_bytes(params)
}

pub fn deserialize_params(bytes: &[u8]) -> Result<ModelParams<f32>> {
    crate::io::params_from_bytes(bytes)
}

pub(crate) fn encode_assignment(a: &WorkerAssignment) -> Result<Vec<u8>> {
    bincode::serialize(a).map_err(|e| Error::Format(format!("assignment encode: {e}")))
}

pub(crate) fn decode_assignment(bytes: &[u8]) -> Result<WorkerAssignment> {
    bincode::deserialize(bytes).map_err(|e| Error::Format(format!("assignment decode: {e}")))
}

pub(crate) fn encode_report(r: &LocalReport) -> Result<Vec<u8>> {
    bincode::serialize(r).map_err(|e| Error::Format(format!("report encode: {e}")))
}

pub(crate) fn decode_report(bytes: &[u8]) -> Result<LocalReport> {
    bincode::deserialize(bytes).map_err(|e| Error::Format(format!("report decode: {e}")))
}

/// A bidirectional frame connection.
pub trait FrameConn: Send {
    fn send(&mut self, msg: &Message) -> Result<()>;
    fn recv(&mut self) -> Result<Message>;
    fn bytes_sent(&self) -> u64;
    fn bytes_received(&self) -> u64;
}

/// Message counters maintained by every pool.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PoolStats {
    pub assigns_sent: u64,
    pub epochs_started: u64,
    pub params_collected: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
}

/// Master-side handle on `m` workers running the synchronous protocol:
/// one `Assign` per worker up front, then per epoch one `StartEpoch` to
/// and one `Params` from every worker.
pub trait WorkerPool {
    fn num_workers(&self) -> usize;

    /// Ship a worker its extended partition and training configuration.
    fn assign(&mut self, worker: usize, assignment: &WorkerAssignment) -> Result<()>;

    /// Broadcast the epoch's starting parameters to one worker.
    fn start_epoch(&mut self, worker: usize, epoch: u64, params: &ModelParams<f32>)
        -> Result<()>;

    /// Block until the worker's trained parameters for the current epoch
    /// arrive.
    fn collect(&mut self, worker: usize) -> Result<(ModelParams<f32>, LocalReport)>;

    /// Tell every worker to exit cleanly.
    fn shutdown(&mut self) -> Result<()>;

    fn stats(&self) -> PoolStats;
}
