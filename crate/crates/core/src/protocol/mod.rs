//! Packet framing and the sender/receiver session state machines.
//!
//! Every packet on the wire is `[type u8][length u32 LE][payload]`. The
//! transport underneath only has to deliver octets in order; loss and
//! retransmission are somebody else's problem.
//!
//! | type | name          | payload                                        |
//! |------|---------------|------------------------------------------------|
//! | 1    | SESSION_INIT  | see [`SessionInit`]                            |
//! | 2    | MOTION_FRAME  | `[raw<<7 \| K_eff][bitstream]`                 |
//! | 3    | RESIDUAL      | `[mode u8][bitstream]` of a packed latent      |
//! | 4    | TABLE_SYNC    | `[frame crc u32][residual crc u32][K_max u16]` |

mod packet;
mod session;
mod state;
mod transport;

use thiserror::Error;

use crate::codec::CodecError;
use crate::geometry::GeometryError;

pub use packet::{Packet, PacketType, MAX_PAYLOAD_LEN, PACKET_HEADER_LEN};
pub use session::{SessionInit, TableSync, PROTOCOL_VERSION};
pub use state::{
    BandwidthReport, ByteCounters, FrameOutput, MotionOutput, ReceiverState, SenderState, SentFrame, SessionPhase,
    SessionTables, MAX_SESSION_KEYPOINTS,
};
pub use transport::{LoopbackTransport, StreamTransport, Transport};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("{packet:?} not valid in phase {phase:?}")]
    Phase { packet: PacketType, phase: SessionPhase },
    #[error("session setup: {0}")]
    Setup(String),
    #[error("framing: {0}")]
    Framing(String),
    #[error("decode: {0}")]
    Decode(#[source] CodecError),
    #[error("encode: {0}")]
    Encode(#[source] CodecError),
    #[error("calibration tables differ between endpoints (local {local:08x}, remote {remote:08x})")]
    TableMismatch { local: u32, remote: u32 },
    #[error("session aborted")]
    Aborted,
    #[error("bandwidth report: {0}")]
    Report(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
