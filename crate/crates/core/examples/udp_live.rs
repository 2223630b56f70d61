// Sender and receiver on loopback UDP through an impairment proxy, then a
// replay of both logs through the state machines.

use std::time::Duration;

use s2arq::bits::Bits;
use s2arq::channel::AdversaryPolicy;
use s2arq::codec::CodecParams;
use s2arq::transport::{replay, run_session, SessionSpec};

pub fn run_example() -> anyhow::Result<()> {
    let params = CodecParams::new(2, 2, 1)?;
    let batches: Vec<Vec<Bits>> = (0..10u64)
        .map(|k| vec![Bits::from_u64(k % 4, 2), Bits::from_u64((k + 1) % 4, 2)])
        .collect();
    let mut spec = SessionSpec::clean(params, batches.clone());
    spec.tick = Duration::from_millis(1);
    spec.proxy_capacity = 2;
    spec.policy = AdversaryPolicy {
        omission: 0.1,
        duplication: 0.1,
        seed: 7,
        ..AdversaryPolicy::default()
    };
    let out = run_session(&spec)?;
    println!("proxy: {:?}", out.proxy);
    println!(
        "delivered {} of {} batches",
        out.receiver.delivered.len(),
        batches.len()
    );
    let delivered: Vec<Vec<Bits>> = out
        .receiver
        .delivered
        .iter()
        .map(|b| b.messages().to_vec())
        .collect();
    anyhow::ensure!(delivered == batches, "delivery log differs from the script");
    let events = replay(&out.sender.log)? + replay(&out.receiver.log)?;
    println!("replayed {events} logged events with identical state digests");
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
