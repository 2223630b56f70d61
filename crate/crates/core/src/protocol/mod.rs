//! Sender and receiver state machines.
//!
//! Every operation here is total: it accepts any value of the state and
//! packet types, including values no correct execution could produce,
//! because a self-stabilizing start may hand them over.

mod first_attempt;
mod receiver;
mod sender;
mod source;

use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::codec::CodecParams;

pub use first_attempt::{
    FirstAttemptParams, FirstAttemptReceiverState, FirstAttemptSenderState, MajorityOutcome,
};
pub use receiver::{Delivery, ReceiverOutput, ReceiverState, SanityClause};
pub use sender::{SenderOutput, SenderState};
pub use source::{CountingSource, FetchSource, ScriptedSource, SeededSource};

/// Number of alternating index values.
pub const INDEX_MODULUS: u8 = 3;

/// Next alternating index, `(index + 1) mod 3`.
pub fn next_index(index: u8) -> u8 {
    ((u16::from(index) + 1) % u16::from(INDEX_MODULUS)) as u8
}

/// A data packet `⟨ai, lbl, dat⟩`.
///
/// The fields accept any value; [`Packet::is_well_formed`] tells whether the
/// packet could have been produced by a correct sender.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Packet {
    pub ai: u8,
    pub lbl: u32,
    pub dat: Bits,
}

impl Packet {
    pub fn new(ai: u8, lbl: u32, dat: Bits) -> Self {
        Packet { ai, lbl, dat }
    }

    pub fn is_well_formed(&self, params: &CodecParams) -> bool {
        self.ai < INDEX_MODULUS
            && (1..=params.n() as u32).contains(&self.lbl)
            && self.dat.len() == params.pl()
    }

    pub fn key(&self) -> (u8, u32) {
        (self.ai, self.lbl)
    }
}

/// An acknowledgment `⟨ldai, lbl⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AckPacket {
    pub ldai: u8,
    pub lbl: u32,
}

impl AckPacket {
    pub fn new(ldai: u8, lbl: u32) -> Self {
        AckPacket { ldai, lbl }
    }

    pub fn is_well_formed(&self, params: &CodecParams) -> bool {
        self.ldai < INDEX_MODULUS && (1..=params.ack_labels()).contains(&self.lbl)
    }
}
