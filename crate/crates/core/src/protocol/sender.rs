use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{next_index, AckPacket, FetchSource, Packet};
use crate::bits::Bits;
use crate::codec::{encode_batch, CodecParams, MessageBatch};

/// Local state of the sending endpoint.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SenderState {
    pub alt_index: u8,
    pub ack_set: BTreeSet<AckPacket>,
    /// Payload columns of the current encoded batch, `n` entries of `pl` bits.
    pub messages: Option<Vec<Bits>>,
}

/// What one iteration of the sender loop produced.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SenderOutput {
    pub packets: Vec<Packet>,
    /// The batch fetched in this iteration, if the guard fired.
    pub fetched: Option<MessageBatch>,
    /// The guard fired but the application had nothing left.
    pub exhausted: bool,
}

impl SenderState {
    /// A sender with no batch yet and an empty ack set.
    pub fn new(alt_index: u8) -> Self {
        SenderState {
            alt_index,
            ack_set: BTreeSet::new(),
            messages: None,
        }
    }

    /// A sender that holds the full ack set for `alt_index`, so its next
    /// iteration fetches.
    pub fn acknowledged(alt_index: u8, params: &CodecParams) -> Self {
        SenderState {
            alt_index,
            ack_set: (1..=params.ack_labels())
                .map(|lbl| AckPacket::new(alt_index, lbl))
                .collect(),
            messages: None,
        }
    }

    /// `{alt_index} × [1, capacity+1] ⊆ ack_set`
    pub fn guard_holds(&self, params: &CodecParams) -> bool {
        (1..=params.ack_labels())
            .all(|lbl| self.ack_set.contains(&AckPacket::new(self.alt_index, lbl)))
    }

    /// The packets `⟨alt_index, i, data[i]⟩` for the current batch.
    pub fn packet_set(&self) -> Vec<Packet> {
        self.messages
            .iter()
            .flatten()
            .zip(1u32..)
            .map(|(data, lbl)| Packet::new(self.alt_index, lbl, data.clone()))
            .collect()
    }

    /// One iteration of the do-forever loop: fetch a new batch if every ack
    /// label for the current index has arrived, then emit the packet set.
    pub fn tick(&mut self, params: &CodecParams, app: &mut dyn FetchSource) -> SenderOutput {
        let mut out = SenderOutput::default();
        if self.guard_holds(params) {
            let batch = app
                .fetch(params.pl(), params.ml())
                .and_then(|messages| MessageBatch::new(messages, params).ok());
            match batch {
                Some(batch) => {
                    let columns =
                        encode_batch(&batch, params).expect("validated batch always encodes");
                    self.alt_index = next_index(self.alt_index);
                    self.ack_set.clear();
                    self.messages = Some(columns.into_iter().map(|c| c.data).collect());
                    out.fetched = Some(batch);
                }
                None => out.exhausted = true,
            }
        }
        out.packets = self.packet_set();
        out
    }

    /// Stores `ack` iff it carries the current index and an in-range label.
    /// Returns whether the ack was accepted.
    pub fn on_ack(&mut self, ack: &AckPacket, params: &CodecParams) -> bool {
        if ack.ldai == self.alt_index && (1..=params.ack_labels()).contains(&ack.lbl) {
            self.ack_set.insert(*ack);
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{CountingSource, ScriptedSource};

    fn params() -> CodecParams {
        CodecParams::new(2, 2, 1).unwrap()
    }

    #[test]
    fn full_ack_set_wraps_index_and_fetches() {
        let p = params();
        let mut s = SenderState::acknowledged(2, &p);
        let out = s.tick(&p, &mut CountingSource::new());
        assert_eq!(s.alt_index, 0);
        assert!(s.ack_set.is_empty());
        assert!(out.fetched.is_some());
        assert_eq!(out.packets.len(), p.n());
        assert!(out.packets.iter().all(|pk| pk.ai == 0));
        let labels: Vec<u32> = out.packets.iter().map(|pk| pk.lbl).collect();
        assert_eq!(labels, (1..=6).collect::<Vec<_>>());
    }

    #[test]
    fn missing_label_only_re_emits() {
        let p = params();
        let mut s = SenderState::acknowledged(1, &p);
        s.tick(&p, &mut CountingSource::new());
        s.on_ack(&AckPacket::new(2, 1), &p);
        let before = s.clone();
        let first = s.tick(&p, &mut CountingSource::new());
        assert_eq!(s, before);
        assert!(first.fetched.is_none());
        let second = s.tick(&p, &mut CountingSource::new());
        assert_eq!(first.packets, second.packets);
    }

    #[test]
    fn foreign_ack_never_satisfies_guard_and_is_dropped_at_reset() {
        let p = params();
        let mut s = SenderState {
            alt_index: 1,
            ack_set: [AckPacket::new(0, 5), AckPacket::new(1, 1)]
                .into_iter()
                .collect(),
            messages: Some(vec![Bits::zeros(2); 6]),
        };
        assert!(!s.guard_holds(&p));
        s.tick(&p, &mut CountingSource::new());
        assert!(s.ack_set.contains(&AckPacket::new(0, 5)));
        assert!(s.on_ack(&AckPacket::new(1, 2), &p));
        s.tick(&p, &mut CountingSource::new());
        assert_eq!(s.alt_index, 2);
        assert!(s.ack_set.is_empty());
    }

    #[test]
    fn ack_filter() {
        let p = params();
        let mut s = SenderState::new(1);
        assert!(s.on_ack(&AckPacket::new(1, 1), &p));
        assert!(s.ack_set.contains(&AckPacket::new(1, 1)));
        assert!(!s.on_ack(&AckPacket::new(0, 1), &p));
        assert!(!s.on_ack(&AckPacket::new(1, 3), &p));
        assert!(!s.on_ack(&AckPacket::new(1, 0), &p));
        assert_eq!(s.ack_set.len(), 1);
    }

    #[test]
    fn exhausted_source_leaves_state_alone() {
        let p = params();
        let mut s = SenderState::acknowledged(0, &p);
        let out = s.tick(&p, &mut ScriptedSource::default());
        assert!(out.exhausted);
        assert!(out.packets.is_empty());
        assert_eq!(s, SenderState::acknowledged(0, &p));
    }

    #[test]
    fn no_batch_emits_nothing() {
        let p = params();
        let mut s = SenderState::new(0);
        assert!(s.tick(&p, &mut CountingSource::new()).packets.is_empty());
    }
}
