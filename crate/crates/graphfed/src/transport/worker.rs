//! Worker side of the protocol, shared by the in-process and TCP
//! transports: wait for an assignment, then answer every `StartEpoch`
//! with one locally trained `Params` until `Shutdown`.

use crate::error::{Error, Result};
use crate::train::{worker_epoch, WorkerState};
use crate::transport::{
    decode_assignment, deserialize_params, encode_report, serialize_params, FrameConn, Message,
};

/// Run the worker protocol over an established connection (the `Hello` is
/// the caller's job). Returns `Ok(())` on a clean `Shutdown`.
pub fn worker_loop(conn: &mut dyn FrameConn) -> Result<()> {
    let assignment = match conn.recv()? {
        Message::Assign { blob } => decode_assignment(&blob)?,
        other => {
            return Err(Error::Protocol(format!(
                "expected Assign, got {:?}",
                other.kind()
            )))
        }
    };
    let mut state: Option<WorkerState> = None;
    let mut last_epoch = 0u64;
    loop {
        match conn.recv()? {
            Message::StartEpoch { epoch, params } => {
                if epoch <= last_epoch {
                    return Err(Error::Protocol(format!(
                        "epoch {epoch} after {last_epoch}: epochs must strictly increase"
                    )));
                }
                last_epoch = epoch;
                let params = deserialize_params(&params)?;
                match state.as_mut() {
                    None => state = Some(WorkerState::new(&assignment, params)?),
                    Some(s) => s.set_params(params)?,
                }
                let s = state.as_mut().expect("just initialized");
                let (trained, mut report) = worker_epoch(s)?;
                report.epoch = epoch;
                conn.send(&Message::Params {
                    epoch,
                    params: serialize_params(&trained),
                    report: encode_report(&report)?,
                })?;
            }
            Message::Shutdown => return Ok(()),
            other => {
                return Err(Error::Protocol(format!(
                    "unexpected {:?} during training",
                    other.kind()
                )))
            }
        }
    }
}
