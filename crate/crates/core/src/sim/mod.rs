//! Interleaving executor, safe-configuration detector and trace analysis.
//!
//! Both protocol variants run behind [`Protocol`], so the scheduler, the
//! detectors and the exhaustive explorer are shared.

mod analysis;
mod engine;
mod explore;
mod safety;
mod trace;

use std::collections::BTreeSet;
use std::fmt::Debug;
use std::hash::Hash;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::codec::{CodecParams, MessageBatch};
use crate::protocol::{
    AckPacket, FetchSource, FirstAttemptParams, FirstAttemptReceiverState, FirstAttemptSenderState,
    MajorityOutcome, Packet, ReceiverState, SanityClause, SenderState, INDEX_MODULUS,
};

pub use analysis::{
    check_index_progression, check_legal_suffix, count_alpha_beta, freshness_observables,
    hb_chain_weight, message_chain_weight, FreshnessReport, LegalVerdict, ProgressionViolation,
};
pub use engine::{
    digest_of, run, Action, ActionWeights, Recording, RunOptions, Simulation, Stamp, StopWhen,
};
pub use explore::{explore, ExploreLimits, ExploreReport, ExploreState, Observation};

pub use safety::{assess, AisVector, SafeConfigReport, SafetyClause, SafetyInputs};
pub use trace::{
    Actor, BatchId, DeliverEvent, ExecutionTrace, FetchEvent, GuardFire, StepKind, StepRecord,
    TraceError,
};

/// What a sender iteration produced.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SenderStep {
    pub packets: Vec<Packet>,
    pub fetched: Option<MessageBatch>,
    pub exhausted: bool,
}

/// What a receiver iteration produced.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReceiverStep {
    pub acks: Vec<AckPacket>,
    pub delivered: Option<(u8, MessageBatch)>,
    /// The stored packets were discarded (sanity reset or failed vote).
    pub cleared: bool,
    pub reset: Option<SanityClause>,
}

/// Outcome of handing one packet to the receiver.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PacketReceipt {
    pub stored: bool,
    pub acks: Vec<AckPacket>,
}

/// A sender/receiver pair the engine can drive.
pub trait Protocol: Sync {
    type Sender: Clone + Debug + Eq + Hash + Ord + Serialize + DeserializeOwned + Send + Sync;
    type Receiver: Clone + Debug + Eq + Hash + Ord + Serialize + DeserializeOwned + Send + Sync;

    fn name(&self) -> &'static str;
    /// Channel capacity bound the protocol was configured for.
    fn capacity(&self) -> usize;
    /// Labels a data packet may carry, `1..=packet_labels()`.
    fn packet_labels(&self) -> u32;
    /// Labels an acknowledgment may carry, `1..=ack_labels()`.
    fn ack_labels(&self) -> u32;
    /// Payload width of a data packet.
    fn payload_width(&self) -> usize;

    fn sender_guard(&self, s: &Self::Sender) -> bool;
    fn sender_tick(&self, s: &mut Self::Sender, app: &mut dyn FetchSource) -> SenderStep;
    fn sender_on_ack(&self, s: &mut Self::Sender, ack: &AckPacket) -> bool;
    fn receiver_tick(&self, r: &mut Self::Receiver) -> ReceiverStep;
    fn receiver_on_packet(&self, r: &mut Self::Receiver, p: Packet) -> PacketReceipt;

    fn alt_index(&self, s: &Self::Sender) -> u8;
    fn last_delivered_index(&self, r: &Self::Receiver) -> u8;
    fn ack_set<'a>(&self, s: &'a Self::Sender) -> &'a BTreeSet<AckPacket>;
    fn packet_set<'a>(&self, r: &'a Self::Receiver) -> &'a BTreeSet<Packet>;

    fn well_formed(&self, p: &Packet) -> bool {
        p.ai < INDEX_MODULUS
            && (1..=self.packet_labels()).contains(&p.lbl)
            && p.dat.len() == self.payload_width()
    }

    /// Checks the safe pattern on a configuration given as parts.
    fn assess<'a>(
        &self,
        s: &Self::Sender,
        r: &Self::Receiver,
        chan_sr: impl IntoIterator<Item = &'a Packet>,
        chan_rs: impl IntoIterator<Item = &'a AckPacket>,
    ) -> SafeConfigReport
    where
        Self: Sized,
    {
        assess(SafetyInputs {
            alt_index: self.alt_index(s),
            guard_holds: self.sender_guard(s),
            ack_set: self.ack_set(s),
            ack_labels: self.ack_labels(),
            last_delivered_index: self.last_delivered_index(r),
            packet_set: self.packet_set(r),
            chan_sr: chan_sr.into_iter().collect(),
            chan_rs: chan_rs.into_iter().collect(),
            capacity: self.capacity(),
            well_formed: &|p| self.well_formed(p),
        })
    }
}

/// The coded-batch protocol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Efficient {
    pub params: CodecParams,
}

impl Efficient {
    pub fn new(params: CodecParams) -> Self {
        Efficient { params }
    }
}

impl Protocol for Efficient {
    type Sender = SenderState;
    type Receiver = ReceiverState;

    fn name(&self) -> &'static str {
        "efficient"
    }

    fn capacity(&self) -> usize {
        self.params.capacity()
    }

    fn packet_labels(&self) -> u32 {
        self.params.n() as u32
    }

    fn ack_labels(&self) -> u32 {
        self.params.ack_labels()
    }

    fn payload_width(&self) -> usize {
        self.params.pl()
    }

    fn sender_guard(&self, s: &SenderState) -> bool {
        s.guard_holds(&self.params)
    }

    fn sender_tick(&self, s: &mut SenderState, app: &mut dyn FetchSource) -> SenderStep {
        let out = s.tick(&self.params, app);
        SenderStep {
            packets: out.packets,
            fetched: out.fetched,
            exhausted: out.exhausted,
        }
    }

    fn sender_on_ack(&self, s: &mut SenderState, ack: &AckPacket) -> bool {
        s.on_ack(ack, &self.params)
    }

    fn receiver_tick(&self, r: &mut ReceiverState) -> ReceiverStep {
        let out = r.tick(&self.params);
        ReceiverStep {
            acks: out.acks,
            cleared: out.reset.is_some() || out.delivered.is_some(),
            delivered: out.delivered.map(|d| (d.index, d.batch)),
            reset: out.reset,
        }
    }

    fn receiver_on_packet(&self, r: &mut ReceiverState, p: Packet) -> PacketReceipt {
        PacketReceipt {
            stored: r.on_packet(p, &self.params),
            acks: Vec::new(),
        }
    }

    fn alt_index(&self, s: &SenderState) -> u8 {
        s.alt_index
    }

    fn last_delivered_index(&self, r: &ReceiverState) -> u8 {
        r.last_delivered_index
    }

    fn ack_set<'a>(&self, s: &'a SenderState) -> &'a BTreeSet<AckPacket> {
        &s.ack_set
    }

    fn packet_set<'a>(&self, r: &'a ReceiverState) -> &'a BTreeSet<Packet> {
        &r.packet_set
    }
}

/// The majority-vote protocol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FirstAttempt {
    pub params: FirstAttemptParams,
}

impl FirstAttempt {
    pub fn new(params: FirstAttemptParams) -> Self {
        FirstAttempt { params }
    }
}

impl Protocol for FirstAttempt {
    type Sender = FirstAttemptSenderState;
    type Receiver = FirstAttemptReceiverState;

    fn name(&self) -> &'static str {
        "first-attempt"
    }

    fn capacity(&self) -> usize {
        self.params.capacity
    }

    fn packet_labels(&self) -> u32 {
        self.params.copies()
    }

    fn ack_labels(&self) -> u32 {
        self.params.copies()
    }

    fn payload_width(&self) -> usize {
        self.params.ml
    }

    fn sender_guard(&self, s: &FirstAttemptSenderState) -> bool {
        s.guard_holds(&self.params)
    }

    fn sender_tick(
        &self,
        s: &mut FirstAttemptSenderState,
        app: &mut dyn FetchSource,
    ) -> SenderStep {
        let (packets, fetched, exhausted) = s.tick(&self.params, app);
        SenderStep {
            packets,
            fetched: fetched.map(|m| MessageBatch::from_messages(vec![m])),
            exhausted,
        }
    }

    fn sender_on_ack(&self, s: &mut FirstAttemptSenderState, ack: &AckPacket) -> bool {
        s.on_ack(ack, &self.params)
    }

    fn receiver_tick(&self, r: &mut FirstAttemptReceiverState) -> ReceiverStep {
        let had_packets = !r.received.is_empty();
        let outcome = r.tick(&self.params);
        let delivered = match outcome {
            Some(MajorityOutcome::Deliver { index, message }) => {
                Some((index, MessageBatch::from_messages(vec![message])))
            }
            _ => None,
        };
        ReceiverStep {
            acks: Vec::new(),
            cleared: had_packets && r.received.is_empty(),
            delivered,
            reset: None,
        }
    }

    fn receiver_on_packet(&self, r: &mut FirstAttemptReceiverState, p: Packet) -> PacketReceipt {
        let (stored, ack) = r.on_packet(p, &self.params);
        PacketReceipt {
            stored,
            acks: ack.into_iter().collect(),
        }
    }

    fn alt_index(&self, s: &FirstAttemptSenderState) -> u8 {
        s.alt_index
    }

    fn last_delivered_index(&self, r: &FirstAttemptReceiverState) -> u8 {
        r.last_delivered_index
    }

    fn ack_set<'a>(&self, s: &'a FirstAttemptSenderState) -> &'a BTreeSet<AckPacket> {
        &s.ack_set
    }

    fn packet_set<'a>(&self, r: &'a FirstAttemptReceiverState) -> &'a BTreeSet<Packet> {
        &r.received
    }
}
