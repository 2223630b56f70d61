use std::time::Duration;

use proptest::prelude::*;
use s2arq::bits::Bits;
use s2arq::channel::AdversaryPolicy;
use s2arq::codec::CodecParams;
use s2arq::protocol::{AckPacket, Packet};
use s2arq::transport::{
    deserialize, replay, run_session, serialize_ack, serialize_packet, SessionSpec, WireRecord,
};

fn script(count: u64) -> Vec<Vec<Bits>> {
    (0..count)
        .map(|k| vec![Bits::from_u64(k % 4, 2), Bits::from_u64((k >> 2) % 4, 2)])
        .collect()
}

fn session(batches: u64, tick_ms: u64, policy: AdversaryPolicy) {
    let batches = script(batches);
    let mut spec = SessionSpec::clean(CodecParams::new(2, 2, 1).unwrap(), batches.clone());
    spec.tick = Duration::from_millis(tick_ms);
    spec.proxy_capacity = 2;
    spec.policy = policy;
    let out = run_session(&spec).unwrap();
    let delivered: Vec<Vec<Bits>> = out
        .receiver
        .delivered
        .iter()
        .map(|b| b.messages().to_vec())
        .collect();
    assert_eq!(delivered, batches);
    replay(&out.sender.log).unwrap();
    replay(&out.receiver.log).unwrap();
}

#[test]
fn hundred_batches_through_impaired_proxy() {
    session(
        100,
        1,
        AdversaryPolicy {
            omission: 0.15,
            duplication: 0.15,
            seed: 3,
            ..AdversaryPolicy::default()
        },
    );
}

#[test]
fn slow_tick_still_delivers() {
    session(3, 100, AdversaryPolicy::default());
}

proptest! {
    #[test]
    fn arbitrary_datagrams_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..64),
                                       pl in 1usize..16) {
        let _ = deserialize(&bytes, pl);
    }

    #[test]
    fn every_prefix_of_a_packet_is_invalid(ai in 0u8..3, lbl in 1u32..50,
                                           dat in proptest::collection::vec(any::<bool>(), 1..20)) {
        let p = Packet::new(ai, lbl, Bits::new(dat));
        let wire = serialize_packet(&p).unwrap();
        prop_assert_eq!(deserialize(&wire, p.dat.len()), WireRecord::Data(p.clone()));
        for cut in 0..wire.len() {
            prop_assert_eq!(deserialize(&wire[..cut], p.dat.len()), WireRecord::Invalid);
        }
    }

    #[test]
    fn ack_round_trip(ldai in 0u8..3, lbl in 1u32..1000) {
        let a = AckPacket::new(ldai, lbl);
        let wire = serialize_ack(&a).unwrap();
        prop_assert_eq!(deserialize(&wire, 2), WireRecord::Ack(a));
    }
}
