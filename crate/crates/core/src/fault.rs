//! Arbitrary and safe starting configurations.
//!
//! A transient fault may leave any value in any variable and any
//! capacity-bounded junk in the channels. The generator draws from domains
//! wider than the protocol's declared ones (index 3, label 0 and `n+1..n+2`,
//! payload widths `pl ± 1`) so that every sanity branch gets exercised.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;
use crate::codec::{encode_batch, CodecParams, MessageBatch};
use crate::protocol::{
    AckPacket, FirstAttemptParams, FirstAttemptReceiverState, FirstAttemptSenderState, Packet,
    ReceiverState, SenderState, INDEX_MODULUS,
};

/// Full system snapshot: both endpoint states and both channel contents.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration<S = SenderState, R = ReceiverState> {
    pub sender: S,
    pub receiver: R,
    /// Packets in flight from sender to receiver.
    pub chan_sr: Vec<Packet>,
    /// Acknowledgments in flight from receiver to sender.
    pub chan_rs: Vec<AckPacket>,
}

pub type FirstAttemptConfiguration =
    Configuration<FirstAttemptSenderState, FirstAttemptReceiverState>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FaultError {
    #[error("alternating index {0} is outside [0, 2]")]
    IndexRange(u8),
    #[error("channel packet {0:?} carries the safe index {1}")]
    ChannelIndex(Packet, u8),
    #[error("{channel} holds {len} packets, more than capacity {capacity}")]
    OverCapacity {
        channel: &'static str,
        len: usize,
        capacity: usize,
    },
}

fn random_bits(rng: &mut ChaCha8Rng, len: usize) -> Bits {
    (0..len).map(|_| rng.gen::<bool>()).collect()
}

fn random_width(rng: &mut ChaCha8Rng, pl: usize) -> usize {
    match rng.gen_range(0..6) {
        0 => pl.saturating_sub(1),
        1 => pl + 1,
        _ => pl,
    }
}

fn wild_packet(rng: &mut ChaCha8Rng, params: &CodecParams) -> Packet {
    let width = random_width(rng, params.pl());
    Packet::new(
        rng.gen_range(0..=INDEX_MODULUS),
        rng.gen_range(0..=params.n() as u32 + 2),
        random_bits(rng, width),
    )
}

fn plausible_packet(rng: &mut ChaCha8Rng, params: &CodecParams) -> Packet {
    Packet::new(
        rng.gen_range(0..INDEX_MODULUS),
        rng.gen_range(1..=params.n() as u32),
        random_bits(rng, params.pl()),
    )
}

/// A (possibly complete) set of genuinely encoded packets for index `ai`.
fn encoded_group(rng: &mut ChaCha8Rng, params: &CodecParams, ai: u8, size: usize) -> Vec<Packet> {
    let batch = MessageBatch::new(
        (0..params.pl())
            .map(|_| random_bits(rng, params.ml()))
            .collect(),
        params,
    )
    .expect("generated batch has the declared shape");
    let mut packets: Vec<Packet> = encode_batch(&batch, params)
        .expect("valid batch")
        .into_iter()
        .map(|c| Packet::new(ai, c.label, c.data))
        .collect();
    packets.shuffle(rng);
    packets.truncate(size);
    packets
}

fn arbitrary_packet_set(rng: &mut ChaCha8Rng, params: &CodecParams, ldi: u8) -> BTreeSet<Packet> {
    let n = params.n();
    let cap = 2 * n;
    let mut set = BTreeSet::new();
    match rng.gen_range(0..6) {
        0 => {}
        1 | 2 => {
            let others: Vec<u8> = (0..INDEX_MODULUS).filter(|&i| i != ldi).collect();
            let ai = *others.choose(rng).expect("two candidates");
            let size = rng.gen_range(0..=n);
            set.extend(encoded_group(rng, params, ai, size));
            for _ in 0..rng.gen_range(0..=1) {
                set.insert(plausible_packet(rng, params));
            }
        }
        3 => {
            for ai in (0..INDEX_MODULUS).filter(|&i| i != ldi) {
                set.extend(encoded_group(rng, params, ai, n));
            }
        }
        _ => {
            for _ in 0..rng.gen_range(0..=cap) {
                set.insert(wild_packet(rng, params));
            }
        }
    }
    while set.len() > cap {
        let victim = set.iter().next().cloned().expect("non-empty");
        set.remove(&victim);
    }
    set
}

fn arbitrary_ack_set(rng: &mut ChaCha8Rng, params: &CodecParams, alt: u8) -> BTreeSet<AckPacket> {
    let labels = params.ack_labels();
    if rng.gen_bool(0.25) {
        let mut set: BTreeSet<AckPacket> = (1..=labels).map(|l| AckPacket::new(alt, l)).collect();
        if rng.gen_bool(0.5) {
            set.insert(AckPacket::new(
                rng.gen_range(0..INDEX_MODULUS),
                rng.gen_range(1..=labels),
            ));
        }
        return set;
    }
    let mut all: Vec<AckPacket> = (0..INDEX_MODULUS)
        .flat_map(|i| (1..=labels).map(move |l| AckPacket::new(i, l)))
        .collect();
    all.shuffle(rng);
    let size = rng.gen_range(0..=2 * labels as usize);
    all.into_iter().take(size).collect()
}

fn arbitrary_ack(rng: &mut ChaCha8Rng, params: &CodecParams) -> AckPacket {
    AckPacket::new(
        rng.gen_range(0..=INDEX_MODULUS),
        rng.gen_range(0..=params.ack_labels() + 1),
    )
}

/// Draws a configuration from the whole (widened) state space.
pub fn arbitrary_configuration(seed: u64, params: &CodecParams) -> Configuration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alt_index = rng.gen_range(0..INDEX_MODULUS);
    let ack_set = arbitrary_ack_set(&mut rng, params, alt_index);
    let messages = Some(
        (0..params.n())
            .map(|_| random_bits(&mut rng, params.pl()))
            .collect(),
    );
    let last_delivered_index = rng.gen_range(0..INDEX_MODULUS);
    let packet_set = arbitrary_packet_set(&mut rng, params, last_delivered_index);
    let capacity = params.capacity();
    let chan_sr = (0..rng.gen_range(0..=capacity))
        .map(|_| {
            if rng.gen_bool(0.5) {
                plausible_packet(&mut rng, params)
            } else {
                wild_packet(&mut rng, params)
            }
        })
        .collect();
    let chan_rs = (0..rng.gen_range(0..=capacity))
        .map(|_| arbitrary_ack(&mut rng, params))
        .collect();
    Configuration {
        sender: SenderState {
            alt_index,
            ack_set,
            messages,
        },
        receiver: ReceiverState {
            last_delivered_index,
            packet_set,
        },
        chan_sr,
        chan_rs,
    }
}

/// Draws an arbitrary configuration for the majority-vote variant.
pub fn arbitrary_first_attempt_configuration(
    seed: u64,
    params: &FirstAttemptParams,
) -> FirstAttemptConfiguration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let copies = params.copies();
    let alt_index = rng.gen_range(0..INDEX_MODULUS);
    let ack_set = (0..rng.gen_range(0..=2 * copies))
        .map(|_| AckPacket::new(rng.gen_range(0..INDEX_MODULUS), rng.gen_range(1..=copies)))
        .collect();
    let message = Some(random_bits(&mut rng, params.ml));
    let last_delivered_index = rng.gen_range(0..INDEX_MODULUS);
    let wild = |rng: &mut ChaCha8Rng| {
        let width = random_width(rng, params.ml);
        Packet::new(
            rng.gen_range(0..=INDEX_MODULUS),
            rng.gen_range(0..=copies + 1),
            random_bits(rng, width),
        )
    };
    let received = (0..rng.gen_range(0..=2 * copies))
        .map(|_| wild(&mut rng))
        .collect();
    let chan_sr = (0..rng.gen_range(0..=params.capacity))
        .map(|_| wild(&mut rng))
        .collect();
    let chan_rs = (0..rng.gen_range(0..=params.capacity))
        .map(|_| {
            AckPacket::new(
                rng.gen_range(0..=INDEX_MODULUS),
                rng.gen_range(0..=copies + 1),
            )
        })
        .collect();
    Configuration {
        sender: FirstAttemptSenderState {
            alt_index,
            ack_set,
            message,
        },
        receiver: FirstAttemptReceiverState {
            last_delivered_index,
            received,
        },
        chan_sr,
        chan_rs,
    }
}

/// A receiver packet set that breaks every sanity condition at once.
pub fn all_clauses_debris(params: &CodecParams, ldi: u8) -> BTreeSet<Packet> {
    let pl = params.pl();
    let n = params.n() as u32;
    let others: Vec<u8> = (0..INDEX_MODULUS).filter(|&i| i != ldi).collect();
    let mut set = BTreeSet::new();
    set.insert(Packet::new(ldi, 1, Bits::zeros(pl)));
    set.insert(Packet::new(INDEX_MODULUS, 1, Bits::zeros(pl)));
    set.insert(Packet::new(others[0], n + 2, Bits::zeros(pl)));
    set.insert(Packet::new(others[0], 1, Bits::zeros(pl + 1)));
    for &ai in &others {
        for lbl in 1..=n {
            set.insert(Packet::new(ai, lbl, Bits::zeros(pl)));
        }
    }
    let mut flipped = Bits::zeros(pl);
    flipped.set(0, true);
    set.insert(Packet::new(others[1], 1, flipped));
    set
}

/// Builds the safe shape for index `y`: the sender holds every ack label for
/// `y`, the receiver last delivered `y` and holds nothing, and the channel
/// debris toward the receiver avoids index `y`.
pub fn safe_configuration(
    y: u8,
    params: &CodecParams,
    chan_sr: Vec<Packet>,
    chan_rs: Vec<AckPacket>,
) -> Result<Configuration, FaultError> {
    if y >= INDEX_MODULUS {
        return Err(FaultError::IndexRange(y));
    }
    if let Some(p) = chan_sr.iter().find(|p| p.ai == y) {
        return Err(FaultError::ChannelIndex(p.clone(), y));
    }
    let capacity = params.capacity();
    for (channel, len) in [("chan_sr", chan_sr.len()), ("chan_rs", chan_rs.len())] {
        if len > capacity {
            return Err(FaultError::OverCapacity {
                channel,
                len,
                capacity,
            });
        }
    }
    let mut sender = SenderState::acknowledged(y, params);
    sender.messages = Some(
        encode_batch(&MessageBatch::zeros(params), params)
            .expect("zero batch encodes")
            .into_iter()
            .map(|c| c.data)
            .collect(),
    );
    Ok(Configuration {
        sender,
        receiver: ReceiverState::new(y),
        chan_sr,
        chan_rs,
    })
}

/// A safe configuration with a random index and random capacity-bounded
/// debris (sender-to-receiver debris avoids the safe index).
pub fn random_safe_configuration(seed: u64, params: &CodecParams) -> Configuration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = rng.gen_range(0..INDEX_MODULUS);
    let capacity = params.capacity();
    let chan_sr = (0..rng.gen_range(0..=capacity))
        .map(|_| {
            let mut p = if rng.gen_bool(0.7) {
                plausible_packet(&mut rng, params)
            } else {
                wild_packet(&mut rng, params)
            };
            if p.ai == y {
                p.ai = (y + rng.gen_range(1..INDEX_MODULUS)) % INDEX_MODULUS;
            }
            p
        })
        .collect();
    let chan_rs = (0..rng.gen_range(0..=capacity))
        .map(|_| arbitrary_ack(&mut rng, params))
        .collect();
    safe_configuration(y, params, chan_sr, chan_rs).expect("generated within bounds")
}

/// Clean start for the majority variant, with optional debris toward the
/// receiver.
pub fn first_attempt_start(
    y: u8,
    params: &FirstAttemptParams,
    chan_sr: Vec<Packet>,
) -> FirstAttemptConfiguration {
    let mut sender = FirstAttemptSenderState::acknowledged(y, params);
    sender.message = Some(Bits::zeros(params.ml));
    Configuration {
        sender,
        receiver: FirstAttemptReceiverState::new(y),
        chan_sr,
        chan_rs: Vec::new(),
    }
}
