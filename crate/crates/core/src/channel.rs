//! Bounded-capacity unidirectional channel driven by a seeded adversary.
//!
//! The channel is a multiset: delivery draws uniformly at random, sends may
//! be omitted, a full channel evicts per [`DropOnFull`], and a delivery may
//! leave a copy behind (duplication). Fair communication is realized by
//! counting consecutive sends of each value: once a value has been sent `K`
//! times without being delivered it is "due", the adversary may no longer
//! omit it, and it is delivered ahead of non-due packets.

use std::collections::HashMap;
use std::hash::Hash;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropOnFull {
    /// Ignore the send.
    DropNew,
    /// Evict a uniformly chosen in-flight packet to make room.
    #[default]
    DropRandomExisting,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversaryPolicy {
    pub drop_on_full: DropOnFull,
    pub omission: f64,
    pub duplication: f64,
    pub seed: u64,
}

impl Default for AdversaryPolicy {
    fn default() -> Self {
        AdversaryPolicy {
            drop_on_full: DropOnFull::default(),
            omission: 0.0,
            duplication: 0.0,
            seed: 0,
        }
    }
}

impl AdversaryPolicy {
    pub fn validate(&self) -> Result<(), String> {
        for (name, rate) in [
            ("omission", self.omission),
            ("duplication", self.duplication),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(format!("{name} rate {rate} is outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Default number of undelivered sends after which a value becomes due.
pub fn default_fairness_threshold(capacity: usize) -> u32 {
    3 * (capacity as u32 + 1)
}

/// An in-flight packet plus the causal stamp of the step that sent it.
/// Debris present before the run starts has no stamp.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Envelope<T, S = ()> {
    pub item: T,
    pub stamp: Option<S>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SendOutcome<T> {
    Inserted,
    Omitted,
    DroppedFull,
    Evicted(T),
}

#[derive(Clone, Copy, Debug)]
struct SendCount {
    count: u32,
    last_send: u64,
}

#[derive(Clone, Debug)]
pub struct Channel<T, S = ()> {
    in_flight: Vec<Envelope<T, S>>,
    capacity: usize,
    policy: AdversaryPolicy,
    rng: ChaCha8Rng,
    fairness_threshold: u32,
    pending: HashMap<T, SendCount>,
    sends: u64,
}

impl<T: Clone + Eq + Hash, S: Clone> Channel<T, S> {
    pub fn new(capacity: usize, policy: AdversaryPolicy) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(policy.seed);
        Channel {
            in_flight: Vec::new(),
            capacity,
            policy,
            rng,
            fairness_threshold: default_fairness_threshold(capacity),
            pending: HashMap::new(),
            sends: 0,
        }
    }

    /// Starts from arbitrary contents, truncated to the capacity bound.
    pub fn with_contents(
        capacity: usize,
        policy: AdversaryPolicy,
        contents: impl IntoIterator<Item = T>,
    ) -> Self {
        let mut ch = Self::new(capacity, policy);
        ch.in_flight = contents
            .into_iter()
            .take(capacity)
            .map(|item| Envelope { item, stamp: None })
            .collect();
        ch
    }

    pub fn set_fairness_threshold(&mut self, k: u32) {
        self.fairness_threshold = k.max(1);
    }

    pub fn fairness_threshold(&self) -> u32 {
        self.fairness_threshold
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.in_flight.len()
    }

    pub fn is_empty(&self) -> bool {
        self.in_flight.is_empty()
    }

    pub fn in_flight(&self) -> &[Envelope<T, S>] {
        &self.in_flight
    }

    pub fn items(&self) -> impl Iterator<Item = &T> {
        self.in_flight.iter().map(|e| &e.item)
    }

    fn is_due(&self, item: &T) -> bool {
        self.pending
            .get(item)
            .is_some_and(|c| c.count >= self.fairness_threshold)
    }

    /// Values sent at least `K` times since their last delivery.
    pub fn fairness_due(&self) -> Vec<T> {
        self.pending
            .iter()
            .filter(|(_, c)| c.count >= self.fairness_threshold)
            .map(|(item, _)| item.clone())
            .collect()
    }

    pub fn send(&mut self, item: T, stamp: Option<S>) -> SendOutcome<T> {
        self.sends += 1;
        let entry = self.pending.entry(item.clone()).or_insert(SendCount {
            count: 0,
            last_send: 0,
        });
        entry.count = entry.count.saturating_add(1);
        entry.last_send = self.sends;
        self.prune();
        let due = self.is_due(&item);

        if self.capacity == 0 {
            return SendOutcome::DroppedFull;
        }
        if !due && self.rng.gen_bool(self.policy.omission) {
            return SendOutcome::Omitted;
        }
        let envelope = Envelope { item, stamp };
        if self.in_flight.len() < self.capacity {
            self.in_flight.push(envelope);
            return SendOutcome::Inserted;
        }
        let victims: Vec<usize> = if due {
            (0..self.in_flight.len())
                .filter(|&i| !self.is_due(&self.in_flight[i].item))
                .collect()
        } else {
            match self.policy.drop_on_full {
                DropOnFull::DropNew => Vec::new(),
                DropOnFull::DropRandomExisting => (0..self.in_flight.len()).collect(),
            }
        };
        match victims.choose(&mut self.rng) {
            Some(&i) => {
                let evicted = std::mem::replace(&mut self.in_flight[i], envelope);
                SendOutcome::Evicted(evicted.item)
            }
            None => SendOutcome::DroppedFull,
        }
    }

    /// Removes and returns one packet, due packets first, otherwise uniformly
    /// at random. With the duplication rate the original stays in flight.
    pub fn deliver(&mut self) -> Option<Envelope<T, S>> {
        if self.in_flight.is_empty() {
            return None;
        }
        let due: Vec<usize> = (0..self.in_flight.len())
            .filter(|&i| self.is_due(&self.in_flight[i].item))
            .collect();
        let i = match due.choose(&mut self.rng) {
            Some(&i) => i,
            None => self.rng.gen_range(0..self.in_flight.len()),
        };
        let duplicate = self.rng.gen_bool(self.policy.duplication);
        self.deliver_at(i, duplicate)
    }

    /// Delivers the packet in slot `i`; used by scripted adversaries.
    pub fn deliver_at(&mut self, i: usize, duplicate: bool) -> Option<Envelope<T, S>> {
        if i >= self.in_flight.len() {
            return None;
        }
        let envelope = if duplicate {
            self.in_flight[i].clone()
        } else {
            self.in_flight.swap_remove(i)
        };
        self.pending.remove(&envelope.item);
        Some(envelope)
    }

    /// Drops the packet in slot `i` without delivering it.
    pub fn omit_at(&mut self, i: usize) -> Option<T> {
        (i < self.in_flight.len()).then(|| self.in_flight.swap_remove(i).item)
    }

    // Sends of a value stop counting as consecutive once it has not been
    // resent for a long stretch; this keeps the map from growing with every
    // batch ever sent.
    fn prune(&mut self) {
        const EVERY: u64 = 1024;
        if !self.sends.is_multiple_of(EVERY) {
            return;
        }
        let window = 64 * u64::from(self.fairness_threshold) * (self.capacity as u64 + 1) + EVERY;
        let now = self.sends;
        self.pending
            .retain(|_, c| now.saturating_sub(c.last_send) <= window);
    }
}
