use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{AckPacket, Packet, INDEX_MODULUS};
use crate::codec::{decode_batch, CodecParams, MessageBatch, PayloadColumn};

/// Local state of the receiving endpoint.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReceiverState {
    pub last_delivered_index: u8,
    pub packet_set: BTreeSet<Packet>,
}

/// The packet-set conditions checked at the top of every receiver iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SanityClause {
    /// A packet carries the last delivered index or an index outside `[0, 2]`.
    ForbiddenIndex,
    /// A packet label lies outside `[1, n]`.
    LabelRange,
    /// Two packets share `(ai, lbl)`.
    DuplicateLabel,
    /// A payload is not `pl` bits wide.
    DataWidth,
    /// More than one index owns at least `n` packets.
    MultipleComplete,
}

impl SanityClause {
    pub const ALL: [SanityClause; 5] = [
        SanityClause::ForbiddenIndex,
        SanityClause::LabelRange,
        SanityClause::DuplicateLabel,
        SanityClause::DataWidth,
        SanityClause::MultipleComplete,
    ];
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub index: u8,
    pub batch: MessageBatch,
}

/// What one iteration of the receiver loop produced.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReceiverOutput {
    pub acks: Vec<AckPacket>,
    pub delivered: Option<Delivery>,
    /// Set when the packet set was discarded by the sanity check.
    pub reset: Option<SanityClause>,
}

impl ReceiverState {
    pub fn new(last_delivered_index: u8) -> Self {
        ReceiverState {
            last_delivered_index,
            packet_set: BTreeSet::new(),
        }
    }

    /// Number of packets per index value.
    pub fn index_counts(&self) -> BTreeMap<u8, usize> {
        let mut counts = BTreeMap::new();
        for p in &self.packet_set {
            *counts.entry(p.ai).or_insert(0) += 1;
        }
        counts
    }

    /// The first sanity condition the packet set violates, if any.
    pub fn sanity_violation(&self, params: &CodecParams) -> Option<SanityClause> {
        let n = params.n();
        let ldi = self.last_delivered_index;
        if self
            .packet_set
            .iter()
            .any(|p| p.ai >= INDEX_MODULUS || p.ai == ldi)
        {
            return Some(SanityClause::ForbiddenIndex);
        }
        if self
            .packet_set
            .iter()
            .any(|p| !(1..=n as u32).contains(&p.lbl))
        {
            return Some(SanityClause::LabelRange);
        }
        // The set is ordered by (ai, lbl, dat), so equal keys are adjacent.
        let keys: Vec<_> = self.packet_set.iter().map(Packet::key).collect();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Some(SanityClause::DuplicateLabel);
        }
        if self.packet_set.iter().any(|p| p.dat.len() != params.pl()) {
            return Some(SanityClause::DataWidth);
        }
        if self.index_counts().values().filter(|&&c| c >= n).count() > 1 {
            return Some(SanityClause::MultipleComplete);
        }
        None
    }

    /// One iteration of the do-forever loop: sanity reset, delivery when one
    /// index other than the last delivered owns `n` packets, then the ack
    /// burst `⟨last_delivered_index, 1..=capacity+1⟩`.
    pub fn tick(&mut self, params: &CodecParams) -> ReceiverOutput {
        let mut out = ReceiverOutput::default();
        if let Some(clause) = self.sanity_violation(params) {
            self.packet_set.clear();
            out.reset = Some(clause);
        }
        let complete: Vec<u8> = self
            .index_counts()
            .into_iter()
            .filter(|&(ai, count)| ai != self.last_delivered_index && count >= params.n())
            .map(|(ai, _)| ai)
            .collect();
        if let [index] = complete[..] {
            let columns: Vec<PayloadColumn> = self
                .packet_set
                .iter()
                .filter(|p| p.ai == index)
                .map(|p| PayloadColumn {
                    label: p.lbl,
                    data: p.dat.clone(),
                })
                .collect();
            let batch =
                decode_batch(&columns, params).expect("sanity check guarantees n distinct labels");
            self.packet_set.clear();
            self.last_delivered_index = index;
            out.delivered = Some(Delivery { index, batch });
        }
        out.acks = (1..=params.ack_labels())
            .map(|lbl| AckPacket::new(self.last_delivered_index, lbl))
            .collect();
        out
    }

    /// Stores `p` iff its `(ai, lbl)` is new, its index differs from the last
    /// delivered one, its label is in `[1, n]` and its payload is `pl` bits.
    pub fn on_packet(&mut self, p: Packet, params: &CodecParams) -> bool {
        let key_present = self
            .packet_set
            .range(Packet::new(p.ai, p.lbl, Default::default())..)
            .next()
            .is_some_and(|q| q.key() == p.key());
        let acceptable = !key_present
            && p.ai < INDEX_MODULUS
            && p.ai != self.last_delivered_index
            && (1..=params.n() as u32).contains(&p.lbl)
            && p.dat.len() == params.pl();
        if acceptable {
            self.packet_set.insert(p);
        }
        acceptable
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::Bits;
    use crate::codec::encode_batch;

    fn params() -> CodecParams {
        CodecParams::new(2, 2, 1).unwrap()
    }

    fn bits(s: &str) -> Bits {
        s.parse().unwrap()
    }

    fn acks(ldi: u8) -> Vec<AckPacket> {
        vec![AckPacket::new(ldi, 1), AckPacket::new(ldi, 2)]
    }

    #[test]
    fn packet_with_last_delivered_index_triggers_reset() {
        let p = params();
        let mut r = ReceiverState::new(0);
        r.packet_set.insert(Packet::new(0, 3, bits("01")));
        let out = r.tick(&p);
        assert_eq!(out.reset, Some(SanityClause::ForbiddenIndex));
        assert!(r.packet_set.is_empty());
        assert!(out.delivered.is_none());
        assert_eq!(out.acks, acks(0));
    }

    #[test]
    fn complete_batch_is_delivered() {
        let p = params();
        let batch = MessageBatch::new(vec![bits("01"), bits("10")], &p).unwrap();
        let mut r = ReceiverState::new(0);
        for c in encode_batch(&batch, &p).unwrap() {
            assert!(r.on_packet(Packet::new(1, c.label, c.data), &p));
        }
        let out = r.tick(&p);
        assert_eq!(out.delivered, Some(Delivery { index: 1, batch }));
        assert_eq!(r.last_delivered_index, 1);
        assert!(r.packet_set.is_empty());
        assert_eq!(out.acks, acks(1));
    }

    #[test]
    fn idle_receiver_re_acknowledges() {
        let p = params();
        let mut r = ReceiverState::new(2);
        let out = r.tick(&p);
        assert_eq!(out.acks, acks(2));
        assert!(out.delivered.is_none() && out.reset.is_none());
    }

    #[test]
    fn fewer_than_n_packets_do_not_deliver() {
        let p = params();
        let mut r = ReceiverState::new(0);
        for lbl in 1..=5 {
            r.on_packet(Packet::new(1, lbl, bits("00")), &p);
        }
        assert!(r.tick(&p).delivered.is_none());
        assert_eq!(r.packet_set.len(), 5);
    }

    #[test]
    fn on_packet_guard() {
        let p = params();
        let mut r = ReceiverState::new(0);
        assert!(r.on_packet(Packet::new(1, 1, bits("01")), &p));
        assert!(
            !r.on_packet(Packet::new(1, 1, bits("10")), &p),
            "duplicate key"
        );
        assert!(!r.on_packet(Packet::new(1, 2, bits("011")), &p), "width");
        assert!(
            !r.on_packet(Packet::new(0, 2, bits("01")), &p),
            "last delivered index"
        );
        assert!(
            !r.on_packet(Packet::new(3, 2, bits("01")), &p),
            "index range"
        );
        assert!(
            !r.on_packet(Packet::new(2, 7, bits("01")), &p),
            "label range"
        );
        assert!(
            !r.on_packet(Packet::new(2, 0, bits("01")), &p),
            "label zero"
        );
        assert!(r.on_packet(Packet::new(2, 1, bits("01")), &p));
        assert_eq!(r.packet_set.len(), 2);
    }

    #[test]
    fn each_sanity_clause_is_detected() {
        let p = params();
        let base = ReceiverState::new(0);
        let with = |packets: Vec<Packet>| {
            let mut r = base.clone();
            r.packet_set.extend(packets);
            r.sanity_violation(&p)
        };
        assert_eq!(with(vec![]), None);
        assert_eq!(
            with(vec![Packet::new(3, 1, bits("00"))]),
            Some(SanityClause::ForbiddenIndex)
        );
        assert_eq!(
            with(vec![Packet::new(1, 9, bits("00"))]),
            Some(SanityClause::LabelRange)
        );
        assert_eq!(
            with(vec![
                Packet::new(1, 1, bits("00")),
                Packet::new(1, 1, bits("01"))
            ]),
            Some(SanityClause::DuplicateLabel)
        );
        assert_eq!(
            with(vec![Packet::new(1, 1, bits("0"))]),
            Some(SanityClause::DataWidth)
        );
        let two_complete: Vec<Packet> = (1..=6)
            .flat_map(|l| [Packet::new(1, l, bits("00")), Packet::new(2, l, bits("00"))])
            .collect();
        assert_eq!(with(two_complete), Some(SanityClause::MultipleComplete));
    }
}
