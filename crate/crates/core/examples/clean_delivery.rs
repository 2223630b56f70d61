// A clean start delivering a script over lossy, duplicating channels.

use s2arq::channel::AdversaryPolicy;
use s2arq::codec::CodecParams;
use s2arq::fault::safe_configuration;
use s2arq::protocol::ScriptedSource;
use s2arq::sim::{check_legal_suffix, run, Efficient, RunOptions, StopWhen};

pub fn run_example() -> anyhow::Result<()> {
    let protocol = Efficient::new(CodecParams::new(2, 2, 1)?);
    let script = vec![
        vec!["01".parse()?, "10".parse()?],
        vec!["11".parse()?, "11".parse()?],
        vec!["00".parse()?, "01".parse()?],
    ];
    let start = safe_configuration(0, &protocol.params, vec![], vec![])?;
    let opts = RunOptions {
        seed: 42,
        stop: StopWhen::Exhausted,
        policy: AdversaryPolicy {
            omission: 0.2,
            duplication: 0.2,
            ..AdversaryPolicy::default()
        },
        ..RunOptions::default()
    };
    let trace = run(&protocol, start, &mut ScriptedSource::new(script), &opts);
    for d in &trace.deliveries {
        println!(
            "step {:>6}: delivered {} with index {}",
            d.step, d.batch, d.index
        );
    }
    println!(
        "{} steps, {} packets, verdict {:?}",
        trace.steps_taken,
        trace.packets_sent,
        check_legal_suffix(&trace)
    );
    anyhow::ensure!(trace.deliveries.len() == 3 && check_legal_suffix(&trace).passed());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
