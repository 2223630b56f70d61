// Every adversary schedule up to a bounded depth, from a handful of
// arbitrary starts at the smallest parameters.

use s2arq::codec::CodecParams;
use s2arq::fault::arbitrary_configuration;
use s2arq::sim::{explore, Efficient, ExploreLimits, ExploreReport};

pub fn run_example() -> anyhow::Result<()> {
    let protocol = Efficient::new(CodecParams::new(1, 1, 1)?);
    let limits = ExploreLimits {
        depth: 10,
        ..ExploreLimits::default()
    };
    let mut total = ExploreReport::default();
    for seed in 0..8 {
        let report = explore(
            &protocol,
            arbitrary_configuration(seed, &protocol.params),
            &limits,
        );
        println!(
            "start {seed}: {} states, safe reached {} times, worst {} fetches / {} deliveries before safety",
            report.states, report.safe_reached, report.max_fetches_before_safe, report.max_deliveries_before_safe
        );
        total.merge(&report);
    }
    anyhow::ensure!(total.violations == 0, "{:?}", total.examples);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
