use proptest::prelude::*;
use s2arq::channel::{AdversaryPolicy, Channel, DropOnFull, SendOutcome};

#[derive(Clone, Debug)]
enum Op {
    Send(u8),
    Deliver,
    DeliverAt(usize, bool),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0u8..6).prop_map(Op::Send),
        Just(Op::Deliver),
        (any::<usize>(), any::<bool>()).prop_map(|(i, d)| Op::DeliverAt(i, d)),
    ]
}

fn policy() -> impl Strategy<Value = AdversaryPolicy> {
    (0.0f64..0.9, 0.0f64..0.9, any::<bool>(), any::<u64>()).prop_map(|(o, d, drop_new, seed)| {
        AdversaryPolicy {
            drop_on_full: if drop_new {
                DropOnFull::DropNew
            } else {
                DropOnFull::DropRandomExisting
            },
            omission: o,
            duplication: d,
            seed,
        }
    })
}

fn apply(ch: &mut Channel<u8>, op: &Op) -> Option<u8> {
    match *op {
        Op::Send(x) => {
            ch.send(x, None);
            None
        }
        Op::Deliver => ch.deliver().map(|e| e.item),
        Op::DeliverAt(i, dup) => {
            let len = ch.len().max(1);
            ch.deliver_at(i % len, dup).map(|e| e.item)
        }
    }
}

proptest! {
    #[test]
    fn never_exceeds_capacity(cap in 0usize..4, policy in policy(),
                              ops in proptest::collection::vec(op(), 0..200)) {
        let mut ch = Channel::<u8>::new(cap, policy);
        for o in &ops {
            apply(&mut ch, o);
            prop_assert!(ch.len() <= cap);
        }
    }

    #[test]
    fn same_seed_same_history(cap in 1usize..4, policy in policy(),
                              ops in proptest::collection::vec(op(), 0..200)) {
        let mut a = Channel::<u8>::new(cap, policy.clone());
        let mut b = Channel::<u8>::new(cap, policy);
        for o in &ops {
            prop_assert_eq!(apply(&mut a, o), apply(&mut b, o));
        }
        prop_assert_eq!(a.items().collect::<Vec<_>>(), b.items().collect::<Vec<_>>());
    }

    #[test]
    fn only_sent_items_come_out(cap in 1usize..4, policy in policy(),
                                ops in proptest::collection::vec(op(), 0..200)) {
        let mut ch = Channel::<u8>::new(cap, policy);
        let mut sent = std::collections::HashSet::new();
        for o in &ops {
            if let Op::Send(x) = o {
                sent.insert(*x);
            }
            if let Some(x) = apply(&mut ch, o) {
                prop_assert!(sent.contains(&x));
            }
        }
    }
}

#[test]
fn fair_channel_eventually_inserts_repeated_send() {
    let policy = AdversaryPolicy {
        omission: 1.0,
        ..AdversaryPolicy::default()
    };
    let mut ch = Channel::<u8>::new(1, policy);
    let k = ch.fairness_threshold();
    let inserted = (0..k + 1).any(|_| matches!(ch.send(7, None), SendOutcome::Inserted));
    assert!(inserted, "a packet sent {k} times must get through");
}

#[test]
fn capacity_zero_holds_nothing() {
    let mut ch = Channel::<u8>::new(0, AdversaryPolicy::default());
    assert_ne!(ch.send(1, None), SendOutcome::Inserted);
    assert!(ch.deliver().is_none());
}
