//! Fixed-length bit strings.
//!
//! Bit `j` of a message is its `j`-th most significant bit; the textual form
//! (`"0110"`) and the packed byte form both follow that order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid bit character {0:?} (expected '0' or '1')")]
pub struct ParseBitsError(pub char);

/// An owned, ordered sequence of bits.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bits(Vec<bool>);

impl Bits {
    pub fn new(bits: Vec<bool>) -> Self {
        Bits(bits)
    }

    pub fn zeros(len: usize) -> Self {
        Bits(vec![false; len])
    }

    /// The low `width` bits of `value`, most significant first.
    pub fn from_u64(value: u64, width: usize) -> Self {
        Bits(
            (0..width)
                .rev()
                .map(|shift| shift < 64 && (value >> shift) & 1 == 1)
                .collect(),
        )
    }

    /// Interprets the bits as an unsigned integer (most significant first).
    /// Only the last 64 bits contribute.
    pub fn to_u64(&self) -> u64 {
        self.0
            .iter()
            .fold(0u64, |acc, &b| (acc << 1) | u64::from(b))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<bool> {
        self.0.get(index).copied()
    }

    pub fn set(&mut self, index: usize, value: bool) {
        self.0[index] = value;
    }

    pub fn push(&mut self, value: bool) {
        self.0.push(value);
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn hamming_distance(&self, other: &Bits) -> usize {
        self.0
            .iter()
            .zip(other.0.iter())
            .filter(|(a, b)| a != b)
            .count()
            + self.len().abs_diff(other.len())
    }

    /// Packs the bits MSB-first into `ceil(len / 8)` bytes, zero padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0
            .chunks(8)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << (7 - i)))
            })
            .collect()
    }

    /// Unpacks the first `len` bits of `bytes` (MSB-first).
    ///
    /// Missing trailing bytes read as zero.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Self {
        Bits(
            (0..len)
                .map(|i| {
                    bytes
                        .get(i / 8)
                        .is_some_and(|byte| (byte >> (7 - i % 8)) & 1 == 1)
                })
                .collect(),
        )
    }
}

impl From<Vec<bool>> for Bits {
    fn from(bits: Vec<bool>) -> Self {
        Bits(bits)
    }
}

impl FromIterator<bool> for Bits {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Bits(iter.into_iter().collect())
    }
}

impl FromStr for Bits {
    type Err = ParseBitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(ParseBitsError(other)),
            })
            .collect()
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits({self})")
    }
}

impl Serialize for Bits {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Bits {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let bits: Bits = "0110".parse().unwrap();
        assert_eq!(bits.len(), 4);
        assert_eq!(bits.to_string(), "0110");
        assert_eq!(bits.to_u64(), 6);
        assert!("01x".parse::<Bits>().is_err());
    }

    #[test]
    fn msb_first_integer_encoding() {
        assert_eq!(Bits::from_u64(5, 4).to_string(), "0101");
        assert_eq!(Bits::from_u64(0b11, 1).to_string(), "1");
    }

    #[test]
    fn byte_packing_is_msb_first() {
        let bits: Bits = "101".parse().unwrap();
        assert_eq!(bits.to_bytes(), vec![0b1010_0000]);
        assert_eq!(Bits::from_bytes(&[0b1010_0000], 3), bits);
        let long: Bits = "111100001".parse().unwrap();
        assert_eq!(long.to_bytes(), vec![0xF0, 0x80]);
        assert_eq!(Bits::from_bytes(&long.to_bytes(), 9), long);
    }

    #[test]
    fn hamming() {
        let a: Bits = "0000".parse().unwrap();
        let b: Bits = "0110".parse().unwrap();
        assert_eq!(a.hamming_distance(&b), 2);
    }
}
