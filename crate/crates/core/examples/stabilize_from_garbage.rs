// Start from random garbage in every variable and channel and watch the
// system reach a safe configuration.

use s2arq::codec::CodecParams;
use s2arq::fault::arbitrary_configuration;
use s2arq::protocol::SeededSource;
use s2arq::sim::{
    check_legal_suffix, count_alpha_beta, hb_chain_weight, run, Efficient, Recording, RunOptions,
    StopWhen,
};

pub fn run_example() -> anyhow::Result<()> {
    let protocol = Efficient::new(CodecParams::new(2, 2, 1)?);
    for seed in 0..5 {
        let start = arbitrary_configuration(seed, &protocol.params);
        let opts = RunOptions {
            seed,
            stop: StopWhen::Deliveries(6),
            recording: Recording::Full,
            ..RunOptions::default()
        };
        let trace = run(&protocol, start, &mut SeededSource::new(seed), &opts);
        let at = trace
            .first_safe
            .ok_or_else(|| anyhow::anyhow!("seed {seed} never became safe"))?;
        let (fetches, deliveries) = count_alpha_beta(&trace).unwrap_or_default();
        println!(
            "seed {seed}: start {:?}, safe at step {at} after {fetches} fetches / {deliveries} deliveries, chain {}, {:?}",
            trace.initial.violated,
            hb_chain_weight(&trace, 0, at),
            check_legal_suffix(&trace),
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
