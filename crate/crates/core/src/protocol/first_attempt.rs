//! The majority-vote ARQ: every message travels as `2·capacity + 1`
//! distinctly labeled copies and the receiver delivers the payload held by a
//! strict majority of them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{next_index, AckPacket, FetchSource, Packet, INDEX_MODULUS};
use crate::bits::Bits;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FirstAttemptParams {
    pub ml: usize,
    pub capacity: usize,
}

impl FirstAttemptParams {
    pub fn new(ml: usize, capacity: usize) -> Self {
        FirstAttemptParams { ml, capacity }
    }

    pub fn copies(&self) -> u32 {
        2 * self.capacity as u32 + 1
    }

    pub fn acks_needed(&self) -> usize {
        self.capacity + 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FirstAttemptSenderState {
    pub alt_index: u8,
    pub ack_set: BTreeSet<AckPacket>,
    pub message: Option<Bits>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FirstAttemptReceiverState {
    pub last_delivered_index: u8,
    pub received: BTreeSet<Packet>,
}

/// Result of voting over one complete label set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MajorityOutcome {
    Deliver { index: u8, message: Bits },
    NoMajority { index: u8 },
}

impl FirstAttemptSenderState {
    pub fn new(alt_index: u8) -> Self {
        FirstAttemptSenderState {
            alt_index,
            ack_set: BTreeSet::new(),
            message: None,
        }
    }

    pub fn acknowledged(alt_index: u8, params: &FirstAttemptParams) -> Self {
        FirstAttemptSenderState {
            alt_index,
            ack_set: (1..=params.acks_needed() as u32)
                .map(|lbl| AckPacket::new(alt_index, lbl))
                .collect(),
            message: None,
        }
    }

    pub fn guard_holds(&self, params: &FirstAttemptParams) -> bool {
        self.ack_set
            .iter()
            .filter(|a| a.ldai == self.alt_index && (1..=params.copies()).contains(&a.lbl))
            .count()
            >= params.acks_needed()
    }

    pub fn packets(&self, params: &FirstAttemptParams) -> Vec<Packet> {
        self.message
            .iter()
            .flat_map(|m| {
                (1..=params.copies()).map(move |lbl| Packet::new(self.alt_index, lbl, m.clone()))
            })
            .collect()
    }

    /// Fetches the next message once `capacity + 1` distinct labels were
    /// acknowledged, then emits the copies of the current message.
    /// Returns the emitted copies, the fetched message (if any) and whether
    /// the application ran dry.
    pub fn tick(
        &mut self,
        params: &FirstAttemptParams,
        app: &mut dyn FetchSource,
    ) -> (Vec<Packet>, Option<Bits>, bool) {
        let mut fetched = None;
        let mut exhausted = false;
        if self.guard_holds(params) {
            match app.fetch(1, params.ml).and_then(|mut v| v.pop()) {
                Some(message) if message.len() == params.ml => {
                    self.alt_index = next_index(self.alt_index);
                    self.ack_set.clear();
                    self.message = Some(message.clone());
                    fetched = Some(message);
                }
                _ => exhausted = true,
            }
        }
        (self.packets(params), fetched, exhausted)
    }

    pub fn on_ack(&mut self, ack: &AckPacket, params: &FirstAttemptParams) -> bool {
        if ack.ldai == self.alt_index && (1..=params.copies()).contains(&ack.lbl) {
            self.ack_set.insert(*ack);
            true
        } else {
            false
        }
    }
}

impl FirstAttemptReceiverState {
    pub fn new(last_delivered_index: u8) -> Self {
        FirstAttemptReceiverState {
            last_delivered_index,
            received: BTreeSet::new(),
        }
    }

    fn acceptable(&self, p: &Packet, params: &FirstAttemptParams) -> bool {
        p.ai < INDEX_MODULUS
            && p.ai != self.last_delivered_index
            && (1..=params.copies()).contains(&p.lbl)
            && p.dat.len() == params.ml
    }

    /// Stores `p`, replacing any packet with the same `(ai, lbl)`, and
    /// acknowledges it with `⟨last_delivered_index, lbl⟩`.
    pub fn on_packet(
        &mut self,
        p: Packet,
        params: &FirstAttemptParams,
    ) -> (bool, Option<AckPacket>) {
        let ack = (1..=params.copies())
            .contains(&p.lbl)
            .then(|| AckPacket::new(self.last_delivered_index, p.lbl));
        if !self.acceptable(&p, params) {
            return (false, ack);
        }
        self.received.retain(|q| q.key() != p.key());
        self.received.insert(p);
        (true, ack)
    }

    /// Votes once some index other than the last delivered one holds every
    /// label. A strict majority delivers; otherwise the set is discarded.
    pub fn tick(&mut self, params: &FirstAttemptParams) -> Option<MajorityOutcome> {
        if self.received.iter().any(|p| !self.acceptable(p, params)) {
            self.received.clear();
            return None;
        }
        let mut by_index: BTreeMap<u8, Vec<&Bits>> = BTreeMap::new();
        for p in &self.received {
            by_index.entry(p.ai).or_default().push(&p.dat);
        }
        let complete: Vec<u8> = by_index
            .iter()
            .filter(|(_, v)| v.len() >= params.copies() as usize)
            .map(|(&ai, _)| ai)
            .collect();
        let index = match complete[..] {
            [] => return None,
            [index] => index,
            _ => {
                self.received.clear();
                return None;
            }
        };
        let mut votes: BTreeMap<&Bits, usize> = BTreeMap::new();
        for dat in &by_index[&index] {
            *votes.entry(*dat).or_insert(0) += 1;
        }
        let winner = votes
            .into_iter()
            .find(|&(_, count)| count > params.capacity)
            .map(|(dat, _)| dat.clone());
        self.received.clear();
        Some(match winner {
            Some(message) => {
                self.last_delivered_index = index;
                MajorityOutcome::Deliver { index, message }
            }
            None => MajorityOutcome::NoMajority { index },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::CountingSource;

    fn bits(s: &str) -> Bits {
        s.parse().unwrap()
    }

    const P: FirstAttemptParams = FirstAttemptParams { ml: 2, capacity: 1 };

    #[test]
    fn sender_emits_two_c_plus_one_copies() {
        let mut s = FirstAttemptSenderState::acknowledged(0, &P);
        let (packets, fetched, _) = s.tick(&P, &mut CountingSource::new());
        assert_eq!(packets.len(), 3);
        assert_eq!(s.alt_index, 1);
        let m = fetched.unwrap();
        assert!(packets.iter().all(|p| p.dat == m && p.ai == 1));
    }

    #[test]
    fn sender_needs_capacity_plus_one_distinct_labels() {
        let mut s = FirstAttemptSenderState::new(1);
        s.message = Some(bits("01"));
        assert!(s.on_ack(&AckPacket::new(1, 3), &P));
        assert!(!s.guard_holds(&P));
        assert!(!s.on_ack(&AckPacket::new(0, 1), &P));
        assert!(!s.on_ack(&AckPacket::new(1, 4), &P));
        assert!(s.on_ack(&AckPacket::new(1, 1), &P));
        assert!(s.guard_holds(&P));
    }

    #[test]
    fn majority_of_genuine_copies_wins() {
        let mut r = FirstAttemptReceiverState::new(0);
        r.on_packet(Packet::new(1, 1, bits("10")), &P);
        r.on_packet(Packet::new(1, 2, bits("01")), &P);
        r.on_packet(Packet::new(1, 3, bits("10")), &P);
        assert_eq!(
            r.tick(&P),
            Some(MajorityOutcome::Deliver {
                index: 1,
                message: bits("10")
            })
        );
        assert_eq!(r.last_delivered_index, 1);
        assert!(r.received.is_empty());
    }

    #[test]
    fn unanimous_set_delivers() {
        let mut r = FirstAttemptReceiverState::new(2);
        for lbl in 1..=3 {
            r.on_packet(Packet::new(0, lbl, bits("11")), &P);
        }
        assert_eq!(
            r.tick(&P),
            Some(MajorityOutcome::Deliver {
                index: 0,
                message: bits("11")
            })
        );
    }

    #[test]
    fn no_majority_resets_without_delivery() {
        let wide = FirstAttemptParams::new(2, 1);
        let mut r = FirstAttemptReceiverState::new(0);
        r.on_packet(Packet::new(1, 1, bits("00")), &wide);
        r.on_packet(Packet::new(1, 2, bits("01")), &wide);
        r.on_packet(Packet::new(1, 3, bits("10")), &wide);
        assert_eq!(
            r.tick(&wide),
            Some(MajorityOutcome::NoMajority { index: 1 })
        );
        assert_eq!(r.last_delivered_index, 0);
        assert!(r.received.is_empty());
    }

    #[test]
    fn arrival_replaces_same_label() {
        let mut r = FirstAttemptReceiverState::new(0);
        r.on_packet(Packet::new(1, 1, bits("00")), &P);
        let (stored, ack) = r.on_packet(Packet::new(1, 1, bits("11")), &P);
        assert!(stored);
        assert_eq!(ack, Some(AckPacket::new(0, 1)));
        assert_eq!(r.received.len(), 1);
        assert_eq!(r.received.iter().next().unwrap().dat, bits("11"));
    }

    #[test]
    fn packets_of_delivered_index_are_acked_not_stored() {
        let mut r = FirstAttemptReceiverState::new(1);
        let (stored, ack) = r.on_packet(Packet::new(1, 2, bits("00")), &P);
        assert!(!stored);
        assert_eq!(ack, Some(AckPacket::new(1, 2)));
    }
}
