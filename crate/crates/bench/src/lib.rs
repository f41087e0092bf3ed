//! Harness behind the `kpbench` binary: synthetic trajectories, table
//! calibration, loopback streaming simulations and round-trip checks.

pub mod commands;
pub mod recording;
pub mod report;
pub mod trajectory;

use kpcodec::codec::CodecError;
use kpcodec::protocol::ProtocolError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{0}")]
    Invalid(String),
    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        #[source]
        source: ProtocolError,
    },
    #[error("recording: {0}")]
    Recording(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
