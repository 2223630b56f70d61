use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::protocol::{AckPacket, Packet, INDEX_MODULUS};

/// Alternating-index summary of a configuration. Histograms count entries
/// per index value; slot 3 collects out-of-range indices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AisVector {
    pub alt_index: u8,
    pub chan_sr: [u32; 4],
    pub packet_set: [u32; 4],
    pub last_delivered_index: u8,
    pub chan_rs: [u32; 4],
    pub ack_set: [u32; 4],
}

fn histogram(indices: impl Iterator<Item = u8>) -> [u32; 4] {
    let mut h = [0u32; 4];
    for i in indices {
        h[usize::from(i.min(INDEX_MODULUS))] += 1;
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SafetyClause {
    /// The sender's index differs from the receiver's last delivered index.
    IndexMismatch,
    /// The ack set is not exactly the complete acknowledgment of that index.
    AckSet,
    /// The receiver holds a packet of the safe index or a malformed packet.
    PacketSet,
    /// More distinct stale packets than the channel capacity could carry.
    Debris,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafeConfigReport {
    pub is_safe: bool,
    pub ais: AisVector,
    pub violated: Option<SafetyClause>,
}

/// Borrowed view of the parts of a configuration the detector inspects.
pub struct SafetyInputs<'a> {
    pub alt_index: u8,
    pub guard_holds: bool,
    pub ack_set: &'a BTreeSet<AckPacket>,
    pub ack_labels: u32,
    pub last_delivered_index: u8,
    pub packet_set: &'a BTreeSet<Packet>,
    pub chan_sr: Vec<&'a Packet>,
    pub chan_rs: Vec<&'a AckPacket>,
    pub capacity: usize,
    pub well_formed: &'a dyn Fn(&Packet) -> bool,
}

/// Safe-configuration detector.
///
/// With `y` the common index, a configuration is safe when the sender's
/// guard is about to fire for `y` with nothing but `y` acks stored, the
/// receiver last delivered `y` and holds only well-formed packets of other
/// indices, and the distinct well-formed packets of other indices found in
/// the receiver and in the sender-to-receiver channel number at most
/// `capacity`. Packets of index `y` still in flight are harmless: the
/// receiver refuses them while its last delivered index is `y`, and the
/// sender stops producing them once it moves on.
pub fn assess(inputs: SafetyInputs<'_>) -> SafeConfigReport {
    let y = inputs.alt_index;
    let ais = AisVector {
        alt_index: y,
        chan_sr: histogram(inputs.chan_sr.iter().map(|p| p.ai)),
        packet_set: histogram(inputs.packet_set.iter().map(|p| p.ai)),
        last_delivered_index: inputs.last_delivered_index,
        chan_rs: histogram(inputs.chan_rs.iter().map(|a| a.ldai)),
        ack_set: histogram(inputs.ack_set.iter().map(|a| a.ldai)),
    };
    let violated = if y >= INDEX_MODULUS || y != inputs.last_delivered_index {
        Some(SafetyClause::IndexMismatch)
    } else if !inputs.guard_holds
        || inputs
            .ack_set
            .iter()
            .any(|a| a.ldai != y || !(1..=inputs.ack_labels).contains(&a.lbl))
    {
        Some(SafetyClause::AckSet)
    } else if inputs
        .packet_set
        .iter()
        .any(|p| p.ai == y || !(inputs.well_formed)(p))
    {
        Some(SafetyClause::PacketSet)
    } else {
        let stale: BTreeSet<&Packet> = inputs
            .packet_set
            .iter()
            .chain(inputs.chan_sr.iter().copied())
            .filter(|p| p.ai != y && (inputs.well_formed)(p))
            .collect();
        (stale.len() > inputs.capacity).then_some(SafetyClause::Debris)
    };
    SafeConfigReport {
        is_safe: violated.is_none(),
        ais,
        violated,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::Bits;
    use crate::codec::CodecParams;
    use crate::fault::{random_safe_configuration, safe_configuration};
    use crate::sim::{Efficient, Protocol};

    fn proto() -> Efficient {
        Efficient::new(CodecParams::new(2, 2, 1).unwrap())
    }

    fn check(c: &crate::fault::Configuration) -> SafeConfigReport {
        proto().assess(&c.sender, &c.receiver, &c.chan_sr, &c.chan_rs)
    }

    #[test]
    fn constructed_safe_configurations_are_detected() {
        let p = proto();
        for y in 0..3 {
            let c = safe_configuration(y, &p.params, vec![], vec![]).unwrap();
            let r = check(&c);
            assert!(r.is_safe, "{r:?}");
            assert_eq!(r.ais.alt_index, y);
            assert_eq!(r.ais.ack_set[usize::from(y)], 2);
        }
        for seed in 0..200 {
            let c = random_safe_configuration(seed, &p.params);
            assert!(check(&c).is_safe, "seed {seed}");
        }
    }

    #[test]
    fn single_clause_violations() {
        let p = proto();
        let base = safe_configuration(1, &p.params, vec![], vec![]).unwrap();

        let mut c = base.clone();
        c.receiver.last_delivered_index = 2;
        assert_eq!(check(&c).violated, Some(SafetyClause::IndexMismatch));

        let mut c = base.clone();
        c.sender.ack_set.insert(AckPacket::new(0, 1));
        assert_eq!(check(&c).violated, Some(SafetyClause::AckSet));

        let mut c = base.clone();
        c.sender.ack_set.remove(&AckPacket::new(1, 2));
        assert_eq!(check(&c).violated, Some(SafetyClause::AckSet));

        let mut c = base.clone();
        c.receiver
            .packet_set
            .insert(Packet::new(1, 1, Bits::zeros(2)));
        assert_eq!(check(&c).violated, Some(SafetyClause::PacketSet));

        let mut c = base.clone();
        c.receiver
            .packet_set
            .insert(Packet::new(2, 1, Bits::zeros(2)));
        c.chan_sr.push(Packet::new(0, 4, Bits::zeros(2)));
        let r = check(&c);
        assert_eq!(r.violated, Some(SafetyClause::Debris));
        assert_eq!(r.ais.packet_set, [0, 0, 1, 0]);
        assert_eq!(r.ais.chan_sr, [1, 0, 0, 0]);
    }

    #[test]
    fn in_flight_packets_of_the_safe_index_are_tolerated() {
        let p = proto();
        let mut c = safe_configuration(0, &p.params, vec![], vec![]).unwrap();
        c.chan_sr.push(Packet::new(0, 1, Bits::zeros(2)));
        assert!(check(&c).is_safe);
        // Malformed debris can never be stored, so it does not count.
        c.receiver
            .packet_set
            .insert(Packet::new(2, 1, Bits::zeros(2)));
        c.chan_sr.push(Packet::new(1, 9, Bits::zeros(2)));
        assert!(check(&c).is_safe);
    }
}
