use std::collections::VecDeque;
use std::io::{Read, Write};

use super::packet::Packet;
use super::ProtocolError;

/// Ordered, reliable packet delivery.
pub trait Transport {
    fn send(&mut self, packet: &Packet) -> Result<(), ProtocolError>;
    /// `Ok(None)` when nothing further is available.
    fn recv(&mut self) -> Result<Option<Packet>, ProtocolError>;
}

/// In-memory octet pipe carrying the exact wire framing.
#[derive(Debug, Default)]
pub struct LoopbackTransport {
    wire: VecDeque<u8>,
    octets_sent: u64,
}

impl LoopbackTransport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Total octets written, headers included.
    pub fn octets_sent(&self) -> u64 {
        self.octets_sent
    }

    pub fn pending(&self) -> usize {
        self.wire.len()
    }

    /// Flips one bit of the octets currently in flight, counting from the
    /// oldest undelivered octet.
    pub fn flip_bit(&mut self, offset: usize, bit: u8) -> bool {
        match self.wire.get_mut(offset) {
            Some(b) => {
                *b ^= 1 << (bit & 7);
                true
            }
            None => false,
        }
    }
}

impl Transport for LoopbackTransport {
    fn send(&mut self, packet: &Packet) -> Result<(), ProtocolError> {
        let bytes = packet.encode();
        self.octets_sent += bytes.len() as u64;
        self.wire.extend(bytes);
        Ok(())
    }

    fn recv(&mut self) -> Result<Option<Packet>, ProtocolError> {
        let parsed = Packet::decode(self.wire.make_contiguous())?;
        Ok(parsed.map(|(packet, used)| {
            self.wire.drain(..used);
            packet
        }))
    }
}

/// Packet framing over any ordered byte stream, e.g. a `TcpStream`.
#[derive(Debug)]
pub struct StreamTransport<S> {
    stream: S,
}

impl<S: Read + Write> StreamTransport<S> {
    pub fn new(stream: S) -> Self {
        Self { stream }
    }

    pub fn into_inner(self) -> S {
        self.stream
    }
}

impl<S: Read + Write> Transport for StreamTransport<S> {
    fn send(&mut self, packet: &Packet) -> Result<(), ProtocolError> {
        packet.write_to(&mut self.stream)?;
        self.stream.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Option<Packet>, ProtocolError> {
        Packet::read_from(&mut self.stream)
    }
}
