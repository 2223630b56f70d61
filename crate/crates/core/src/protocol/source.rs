use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::Bits;

/// The application layer the sender fetches from.
pub trait FetchSource {
    /// Returns the next `count` messages of `width` bits, or `None` once the
    /// application has nothing more to send.
    fn fetch(&mut self, count: usize, width: usize) -> Option<Vec<Bits>>;
}

/// Unbounded pseudo-random messages, reproducible from the seed.
#[derive(Clone, Debug)]
pub struct SeededSource {
    rng: ChaCha8Rng,
}

impl SeededSource {
    pub fn new(seed: u64) -> Self {
        SeededSource {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl FetchSource for SeededSource {
    fn fetch(&mut self, count: usize, width: usize) -> Option<Vec<Bits>> {
        Some(
            (0..count)
                .map(|_| (0..width).map(|_| self.rng.gen::<bool>()).collect())
                .collect(),
        )
    }
}

/// A finite list of batches, handed out in order.
#[derive(Clone, Debug, Default)]
pub struct ScriptedSource {
    batches: VecDeque<Vec<Bits>>,
}

impl ScriptedSource {
    pub fn new(batches: impl IntoIterator<Item = Vec<Bits>>) -> Self {
        ScriptedSource {
            batches: batches.into_iter().collect(),
        }
    }

    pub fn remaining(&self) -> usize {
        self.batches.len()
    }
}

impl FetchSource for ScriptedSource {
    fn fetch(&mut self, count: usize, width: usize) -> Option<Vec<Bits>> {
        let batch = self.batches.pop_front()?;
        debug_assert!(batch.len() == count && batch.iter().all(|m| m.len() == width));
        Some(batch)
    }
}

/// Message `j` of fetch `k` is `k·count + j` written in `width` bits.
///
/// Cheap to clone and compare, which the exhaustive explorer relies on.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CountingSource {
    next: u64,
    period: Option<u64>,
}

impl CountingSource {
    pub fn new() -> Self {
        CountingSource::default()
    }

    /// Wraps the fetch counter every `period` fetches.
    pub fn with_period(period: u64) -> Self {
        CountingSource {
            next: 0,
            period: Some(period.max(1)),
        }
    }

    pub fn fetched(&self) -> u64 {
        self.next
    }
}

impl FetchSource for CountingSource {
    fn fetch(&mut self, count: usize, width: usize) -> Option<Vec<Bits>> {
        let k = self.next;
        self.next = match self.period {
            Some(p) => (k + 1) % p,
            None => k + 1,
        };
        Some(
            (0..count as u64)
                .map(|j| Bits::from_u64(k * count as u64 + j, width))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_source_is_reproducible() {
        let mut a = SeededSource::new(9);
        let mut b = SeededSource::new(9);
        for _ in 0..5 {
            assert_eq!(a.fetch(2, 3), b.fetch(2, 3));
        }
    }

    #[test]
    fn scripted_source_runs_dry() {
        let mut s = ScriptedSource::new(vec![vec![Bits::zeros(2)]]);
        assert!(s.fetch(1, 2).is_some());
        assert!(s.fetch(1, 2).is_none());
    }

    #[test]
    fn counting_source_wraps() {
        let mut s = CountingSource::with_period(2);
        assert_eq!(s.fetch(1, 1).unwrap()[0].to_string(), "0");
        assert_eq!(s.fetch(1, 1).unwrap()[0].to_string(), "1");
        assert_eq!(s.fetch(1, 1).unwrap()[0].to_string(), "0");
    }
}
