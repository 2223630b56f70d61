// From a safe configuration with channel debris, every later point where
// the sender is about to fetch is safe again with the next index.

use s2arq::bits::Bits;
use s2arq::codec::CodecParams;
use s2arq::fault::safe_configuration;
use s2arq::protocol::{AckPacket, Packet, SeededSource};
use s2arq::sim::{run, Efficient, RunOptions, StopWhen};

pub fn run_example() -> anyhow::Result<()> {
    let protocol = Efficient::new(CodecParams::new(2, 2, 1)?);
    let start = safe_configuration(
        1,
        &protocol.params,
        vec![Packet::new(2, 4, Bits::from_u64(3, 2))],
        vec![AckPacket::new(0, 2)],
    )?;
    let opts = RunOptions {
        seed: 5,
        stop: StopWhen::Deliveries(7),
        ..RunOptions::default()
    };
    let trace = run(&protocol, start, &mut SeededSource::new(5), &opts);
    for fire in &trace.guard_fires {
        let ais = &fire.report.ais;
        println!(
            "config {:>6}: safe={} y={} packet_set={:?} chan_sr={:?}",
            fire.config, fire.report.is_safe, ais.alt_index, ais.packet_set, ais.chan_sr
        );
    }
    let indices: Vec<u8> = trace
        .guard_fires
        .iter()
        .map(|g| g.report.ais.alt_index)
        .collect();
    anyhow::ensure!(trace.guard_fires.iter().all(|g| g.report.is_safe));
    anyhow::ensure!(indices.windows(2).all(|w| w[1] == (w[0] + 1) % 3));
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
