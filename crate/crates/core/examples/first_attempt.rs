// The majority-vote variant: a simulated run, then an exhaustive check that
// one debris packet per round cannot outvote the genuine copies.

use s2arq::bits::Bits;
use s2arq::fault::first_attempt_start;
use s2arq::protocol::{FirstAttemptParams, Packet, SeededSource};
use s2arq::sim::{
    check_legal_suffix, explore, run, ExploreLimits, FirstAttempt, RunOptions, StopWhen,
};

pub fn run_example() -> anyhow::Result<()> {
    let protocol = FirstAttempt::new(FirstAttemptParams::new(4, 1));
    let opts = RunOptions {
        seed: 3,
        stop: StopWhen::Deliveries(5),
        ..RunOptions::default()
    };
    let trace = run(
        &protocol,
        first_attempt_start(0, &protocol.params, vec![]),
        &mut SeededSource::new(3),
        &opts,
    );
    for d in &trace.deliveries {
        println!("delivered {} (index {})", d.batch, d.index);
    }
    println!("legal: {:?}", check_legal_suffix(&trace));

    let small = FirstAttempt::new(FirstAttemptParams::new(1, 1));
    let debris: Vec<Packet> = (0..3u8)
        .flat_map(|ai| (1..=3).map(move |lbl| Packet::new(ai, lbl, Bits::from_u64(1, 1))))
        .collect();
    let limits = ExploreLimits {
        depth: 12,
        stop_at_safe: false,
        debris,
        ..ExploreLimits::default()
    };
    let report = explore(
        &small,
        first_attempt_start(0, &small.params, vec![]),
        &limits,
    );
    println!(
        "explored {} states, {} transitions, {} unsound deliveries",
        report.states, report.transitions, report.violations
    );
    anyhow::ensure!(report.violations == 0);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
