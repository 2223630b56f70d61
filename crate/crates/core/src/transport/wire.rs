//! Datagram layout.
//!
//! ```text
//! data: 53 32 | 00 | ai | lbl (u16 BE) | dat_len (u16 BE) | dat (MSB first)
//! ack:  53 32 | 01 | ldai | lbl (u16 BE)
//! ```

use thiserror::Error;

use crate::bits::Bits;
use crate::protocol::{AckPacket, Packet};

pub const MAGIC: [u8; 2] = [0x53, 0x32];
pub const KIND_DATA: u8 = 0;
pub const KIND_ACK: u8 = 1;
pub const DATA_HEADER_LEN: usize = 8;
pub const ACK_LEN: usize = 6;

/// Index carried by packets that stand in for unparsable datagrams. It lies
/// outside `[0, 2]`, so both endpoints discard such packets.
pub const INVALID_INDEX: u8 = u8::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("label {0} does not fit in 16 bits")]
    LabelOverflow(u32),
    #[error("payload of {0} bytes does not fit in 16 bits")]
    PayloadOverflow(usize),
}

/// A parsed datagram. Nothing is dropped silently: garbage becomes
/// [`WireRecord::Invalid`], which maps to packets the state machines refuse.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WireRecord {
    Data(Packet),
    Ack(AckPacket),
    Invalid,
}

impl WireRecord {
    /// The data packet, with garbage mapped to an always-rejected packet.
    pub fn into_packet(self) -> Packet {
        match self {
            WireRecord::Data(p) => p,
            _ => Packet::new(INVALID_INDEX, 0, Bits::default()),
        }
    }

    /// The ack, with garbage mapped to an always-rejected ack.
    pub fn into_ack(self) -> AckPacket {
        match self {
            WireRecord::Ack(a) => a,
            _ => AckPacket::new(INVALID_INDEX, 0),
        }
    }
}

fn label(lbl: u32) -> Result<[u8; 2], WireError> {
    u16::try_from(lbl)
        .map(u16::to_be_bytes)
        .map_err(|_| WireError::LabelOverflow(lbl))
}

pub fn serialize_packet(p: &Packet) -> Result<Vec<u8>, WireError> {
    let dat = p.dat.to_bytes();
    let len = u16::try_from(dat.len()).map_err(|_| WireError::PayloadOverflow(dat.len()))?;
    let mut out = Vec::with_capacity(DATA_HEADER_LEN + dat.len());
    out.extend_from_slice(&MAGIC);
    out.push(KIND_DATA);
    out.push(p.ai);
    out.extend_from_slice(&label(p.lbl)?);
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&dat);
    Ok(out)
}

pub fn serialize_ack(a: &AckPacket) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(ACK_LEN);
    out.extend_from_slice(&MAGIC);
    out.push(KIND_ACK);
    out.push(a.ldai);
    out.extend_from_slice(&label(a.lbl)?);
    Ok(out)
}

/// Parses a datagram. `pl` tells how many payload bits a well-sized payload
/// carries; any other payload size keeps all of its bits, giving a packet of
/// the wrong width.
pub fn deserialize(bytes: &[u8], pl: usize) -> WireRecord {
    if bytes.len() < ACK_LEN || bytes[..2] != MAGIC {
        return WireRecord::Invalid;
    }
    let index = bytes[3];
    let lbl = u32::from(u16::from_be_bytes([bytes[4], bytes[5]]));
    match bytes[2] {
        KIND_ACK if bytes.len() == ACK_LEN => WireRecord::Ack(AckPacket::new(index, lbl)),
        KIND_DATA if bytes.len() >= DATA_HEADER_LEN => {
            let len = usize::from(u16::from_be_bytes([bytes[6], bytes[7]]));
            let dat = &bytes[DATA_HEADER_LEN..];
            if dat.len() != len {
                return WireRecord::Invalid;
            }
            let width = if len == pl.div_ceil(8) { pl } else { len * 8 };
            WireRecord::Data(Packet::new(index, lbl, Bits::from_bytes(dat, width)))
        }
        _ => WireRecord::Invalid,
    }
}
