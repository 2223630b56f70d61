//! Exhaustive search over adversary choices at tiny parameters.
//!
//! From a start configuration, every interleaving of sender ticks, receiver
//! ticks and channel deliveries (with and without duplication) is tried,
//! and after every emission the channel may keep any sub-multiset of its
//! old contents plus the new packets that fits the capacity. Optionally the
//! adversary may inject one debris packet per receiver round.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::Protocol;
use crate::codec::MessageBatch;
use crate::fault::Configuration;
use crate::protocol::{AckPacket, CountingSource, Packet, INDEX_MODULUS};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Tracker {
    safe: bool,
    fetches: u8,
    deliveries: u8,
    latest: [Option<MessageBatch>; INDEX_MODULUS as usize],
    debris: Option<Packet>,
    debris_used: bool,
}

/// One node of the search: a configuration plus the bookkeeping the
/// checks need.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExploreState<S, R> {
    pub sender: S,
    pub receiver: R,
    pub chan_sr: Vec<Packet>,
    pub chan_rs: Vec<AckPacket>,
    pub source: CountingSource,
    tracker: Tracker,
}

#[derive(Clone, Debug)]
pub struct ExploreLimits {
    /// Maximum schedule length.
    pub depth: u32,
    /// Stop expanding a branch once it reaches a safe configuration.
    pub stop_at_safe: bool,
    /// Largest admissible number of fetches, and of deliveries, before the
    /// first safe configuration.
    pub max_before_safe: u8,
    /// Packets the adversary may inject, at most one per receiver round.
    pub debris: Vec<Packet>,
    /// The application cycles through this many distinct batches.
    pub source_period: u64,
}

impl Default for ExploreLimits {
    fn default() -> Self {
        ExploreLimits {
            depth: 14,
            stop_at_safe: true,
            max_before_safe: 4,
            debris: Vec::new(),
            source_period: 4,
        }
    }
}

/// A finding of the search.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observation {
    /// A delivery after safety that differs from the latest batch fetched
    /// for its index.
    UnsoundDelivery { depth: u32, index: u8 },
    /// More fetches or deliveries before safety than admitted.
    BoundExceeded {
        depth: u32,
        fetches: u8,
        deliveries: u8,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreReport {
    pub states: u64,
    pub transitions: u64,
    pub safe_reached: u64,
    pub max_fetches_before_safe: u8,
    pub max_deliveries_before_safe: u8,
    pub violations: u64,
    /// The first few findings.
    pub examples: Vec<Observation>,
}

impl ExploreReport {
    pub fn merge(&mut self, other: &ExploreReport) {
        self.states += other.states;
        self.transitions += other.transitions;
        self.safe_reached += other.safe_reached;
        self.max_fetches_before_safe = self
            .max_fetches_before_safe
            .max(other.max_fetches_before_safe);
        self.max_deliveries_before_safe = self
            .max_deliveries_before_safe
            .max(other.max_deliveries_before_safe);
        self.violations += other.violations;
        for e in &other.examples {
            if self.examples.len() < 8 {
                self.examples.push(e.clone());
            }
        }
    }
}

/// Every sub-multiset of `items` with at most `cap` elements, each sorted
/// and listed once.
fn submultisets<T: Clone + Ord>(items: &[T], cap: usize) -> Vec<Vec<T>> {
    let mut sorted = items.to_vec();
    sorted.sort();
    let mut out = vec![Vec::new()];
    fn rec<T: Clone + Ord>(items: &[T], cap: usize, cur: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        if cur.len() == cap {
            return;
        }
        let mut i = 0;
        while i < items.len() {
            cur.push(items[i].clone());
            out.push(cur.clone());
            rec(&items[i + 1..], cap, cur, out);
            cur.pop();
            let mut j = i + 1;
            while j < items.len() && items[j] == items[i] {
                j += 1;
            }
            i = j;
        }
    }
    rec(&sorted, cap, &mut Vec::new(), &mut out);
    out
}

fn distinct<T: Clone + Ord>(items: &[T]) -> Vec<T> {
    let mut v = items.to_vec();
    v.sort();
    v.dedup();
    v
}

fn remove_one<T: PartialEq>(items: &mut Vec<T>, item: &T) {
    if let Some(i) = items.iter().position(|x| x == item) {
        items.remove(i);
    }
}

struct Explorer<'a, P: Protocol> {
    protocol: &'a P,
    limits: &'a ExploreLimits,
    memo: HashMap<ExploreState<P::Sender, P::Receiver>, u32>,
    report: ExploreReport,
}

impl<'a, P: Protocol> Explorer<'a, P> {
    fn flag(&mut self, o: Observation) {
        self.report.violations += 1;
        if self.report.examples.len() < 8 {
            self.report.examples.push(o);
        }
    }

    fn on_fetch(&mut self, t: &mut Tracker, index: u8, batch: MessageBatch, depth: u32) {
        if t.safe {
            t.latest[usize::from(index)] = Some(batch);
        } else {
            t.fetches += 1;
            self.check_bound(t, depth);
        }
    }

    fn on_delivery(
        &mut self,
        t: &mut Tracker,
        chan_sr: &[Packet],
        index: u8,
        batch: &MessageBatch,
        depth: u32,
    ) {
        if t.safe {
            if t.latest[usize::from(index)].as_ref() != Some(batch) {
                self.flag(Observation::UnsoundDelivery { depth, index });
            }
        } else {
            t.deliveries += 1;
            self.check_bound(t, depth);
        }
        // A new receiver round: injected debris still in flight counts
        // against the round it will be received in.
        t.debris_used = t.debris.as_ref().is_some_and(|d| chan_sr.contains(d));
        if !t.debris_used {
            t.debris = None;
        }
    }

    fn check_bound(&mut self, t: &Tracker, depth: u32) {
        self.report.max_fetches_before_safe = self.report.max_fetches_before_safe.max(t.fetches);
        self.report.max_deliveries_before_safe =
            self.report.max_deliveries_before_safe.max(t.deliveries);
        let m = self.limits.max_before_safe;
        if t.fetches > m || t.deliveries > m {
            self.flag(Observation::BoundExceeded {
                depth,
                fetches: t.fetches,
                deliveries: t.deliveries,
            });
        }
    }

    fn successors(
        &mut self,
        st: &ExploreState<P::Sender, P::Receiver>,
        depth: u32,
    ) -> Vec<ExploreState<P::Sender, P::Receiver>> {
        let p = self.protocol;
        let cap = p.capacity();
        let mut next = Vec::new();

        let mut s = st.clone();
        let out = p.sender_tick(&mut s.sender, &mut s.source);
        if let Some(batch) = out.fetched {
            let index = p.alt_index(&s.sender);
            self.on_fetch(&mut s.tracker, index, batch, depth);
        }
        let pool: Vec<Packet> = st.chan_sr.iter().cloned().chain(out.packets).collect();
        for kept in submultisets(&pool, cap) {
            let mut n = s.clone();
            n.chan_sr = kept;
            next.push(n);
        }

        let mut s = st.clone();
        let out = p.receiver_tick(&mut s.receiver);
        if let Some((index, batch)) = &out.delivered {
            let chan_sr = s.chan_sr.clone();
            self.on_delivery(&mut s.tracker, &chan_sr, *index, batch, depth);
        }
        let pool: Vec<AckPacket> = st.chan_rs.iter().copied().chain(out.acks).collect();
        for kept in submultisets(&pool, cap) {
            let mut n = s.clone();
            n.chan_rs = kept;
            next.push(n);
        }

        for packet in distinct(&st.chan_sr) {
            for duplicate in [false, true] {
                let mut s = st.clone();
                if !duplicate {
                    remove_one(&mut s.chan_sr, &packet);
                }
                let receipt = p.receiver_on_packet(&mut s.receiver, packet.clone());
                if receipt.acks.is_empty() {
                    next.push(s);
                    continue;
                }
                let pool: Vec<AckPacket> = s.chan_rs.iter().copied().chain(receipt.acks).collect();
                for kept in submultisets(&pool, cap) {
                    let mut n = s.clone();
                    n.chan_rs = kept;
                    next.push(n);
                }
            }
        }

        for ack in distinct(&st.chan_rs) {
            for duplicate in [false, true] {
                let mut s = st.clone();
                if !duplicate {
                    remove_one(&mut s.chan_rs, &ack);
                }
                p.sender_on_ack(&mut s.sender, &ack);
                next.push(s);
            }
        }

        if !st.tracker.debris_used && cap > 0 {
            for d in &self.limits.debris {
                let mut options = Vec::new();
                if st.chan_sr.len() < cap {
                    let mut c = st.chan_sr.clone();
                    c.push(d.clone());
                    options.push(c);
                } else {
                    for victim in distinct(&st.chan_sr) {
                        let mut c = st.chan_sr.clone();
                        remove_one(&mut c, &victim);
                        c.push(d.clone());
                        options.push(c);
                    }
                }
                for mut c in options {
                    c.sort();
                    let mut s = st.clone();
                    s.chan_sr = c;
                    s.tracker.debris = Some(d.clone());
                    s.tracker.debris_used = true;
                    next.push(s);
                }
            }
        }

        for n in &mut next {
            n.chan_sr.sort();
            n.chan_rs.sort();
        }
        next
    }

    fn visit(&mut self, st: ExploreState<P::Sender, P::Receiver>, remaining: u32) {
        if self.memo.get(&st).is_some_and(|&r| r >= remaining) {
            return;
        }
        if !self.memo.contains_key(&st) {
            self.report.states += 1;
        }
        self.memo.insert(st.clone(), remaining);
        if remaining == 0 {
            return;
        }
        let depth = self.limits.depth - remaining + 1;
        for mut n in self.successors(&st, depth) {
            self.report.transitions += 1;
            if !n.tracker.safe {
                let safe = self
                    .protocol
                    .assess(&n.sender, &n.receiver, &n.chan_sr, &n.chan_rs)
                    .is_safe;
                if safe {
                    n.tracker.safe = true;
                    self.report.safe_reached += 1;
                    if self.limits.stop_at_safe {
                        continue;
                    }
                }
            }
            self.visit(n, remaining - 1);
        }
    }
}

/// Explores every adversary schedule of at most `limits.depth` steps from
/// `start`. The channels of `start` are truncated to the capacity; a single
/// packet left in the sender-to-receiver channel counts as the first
/// round's debris.
pub fn explore<P: Protocol>(
    protocol: &P,
    start: Configuration<P::Sender, P::Receiver>,
    limits: &ExploreLimits,
) -> ExploreReport {
    let cap = protocol.capacity();
    let mut chan_sr = start.chan_sr;
    chan_sr.truncate(cap);
    chan_sr.sort();
    let mut chan_rs = start.chan_rs;
    chan_rs.truncate(cap);
    chan_rs.sort();
    let safe = protocol
        .assess(&start.sender, &start.receiver, &chan_sr, &chan_rs)
        .is_safe;
    let debris = chan_sr.first().cloned();
    let state = ExploreState {
        sender: start.sender,
        receiver: start.receiver,
        chan_sr,
        chan_rs,
        source: CountingSource::with_period(limits.source_period),
        tracker: Tracker {
            safe,
            fetches: 0,
            deliveries: 0,
            latest: Default::default(),
            debris_used: debris.is_some(),
            debris,
        },
    };
    let mut explorer = Explorer {
        protocol,
        limits,
        memo: HashMap::new(),
        report: ExploreReport::default(),
    };
    if safe {
        explorer.report.safe_reached += 1;
        if limits.stop_at_safe {
            explorer.report.states = 1;
            return explorer.report;
        }
    }
    explorer.visit(state, limits.depth);
    explorer.report
}
