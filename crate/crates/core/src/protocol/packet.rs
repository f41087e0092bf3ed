use std::io::{ErrorKind, Read, Write};

use super::ProtocolError;

/// Type octet plus little-endian u32 length.
pub const PACKET_HEADER_LEN: usize = 5;

/// Largest accepted payload; anything bigger is treated as a framing error.
pub const MAX_PAYLOAD_LEN: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum PacketType {
    SessionInit = 1,
    MotionFrame = 2,
    Residual = 3,
    TableSync = 4,
}

impl TryFrom<u8> for PacketType {
    type Error = ProtocolError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Ok(match v {
            1 => Self::SessionInit,
            2 => Self::MotionFrame,
            3 => Self::Residual,
            4 => Self::TableSync,
            other => return Err(ProtocolError::Framing(format!("unknown packet type {other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub kind: PacketType,
    pub payload: Vec<u8>,
}

impl Packet {
    pub fn new(kind: PacketType, payload: Vec<u8>) -> Self {
        Self { kind, payload }
    }

    /// Octets on the wire including the header.
    pub fn wire_len(&self) -> usize {
        PACKET_HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses one packet from the front of `buf`.
    ///
    /// `Ok(None)` means more octets are needed; on success the number of
    /// octets consumed is returned alongside the packet.
    pub fn decode(buf: &[u8]) -> Result<Option<(Packet, usize)>, ProtocolError> {
        if buf.len() < PACKET_HEADER_LEN {
            return Ok(None);
        }
        let kind = PacketType::try_from(buf[0])?;
        let len = u32::from_le_bytes([buf[1], buf[2], buf[3], buf[4]]) as usize;
        if len > MAX_PAYLOAD_LEN {
            return Err(ProtocolError::Framing(format!("payload length {len} exceeds {MAX_PAYLOAD_LEN}")));
        }
        let end = PACKET_HEADER_LEN + len;
        if buf.len() < end {
            return Ok(None);
        }
        Ok(Some((Packet::new(kind, buf[PACKET_HEADER_LEN..end].to_vec()), end)))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), ProtocolError> {
        w.write_all(&self.encode())?;
        Ok(())
    }

    /// Reads one packet. Returns `Ok(None)` on a clean end of stream at a
    /// packet boundary; a stream that ends mid-packet is a framing error.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Option<Packet>, ProtocolError> {
        let mut header = [0u8; PACKET_HEADER_LEN];
        let mut got = 0;
        while got < header.len() {
            match r.read(&mut header[got..]) {
                Ok(0) if got == 0 => return Ok(None),
                Ok(0) => return Err(ProtocolError::Framing("stream ended inside a packet header".into())),
                Ok(n) => got += n,
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let kind = PacketType::try_from(header[0])?;
        let len = u32::from_le_bytes([header[1], header[2], header[3], header[4]]) as usize;
        if len > MAX_PAYLOAD_LEN {
            return Err(ProtocolError::Framing(format!("payload length {len} exceeds {MAX_PAYLOAD_LEN}")));
        }
        let mut payload = vec![0u8; len];
        r.read_exact(&mut payload).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => ProtocolError::Framing("stream ended inside a packet payload".into()),
            _ => e.into(),
        })?;
        Ok(Some(Packet::new(kind, payload)))
    }
}
