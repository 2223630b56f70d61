// A campaign described by a scenario file, run in parallel over seeds.

use s2arq::harness::{run_scenario, Scenario};

const SCENARIO: &str = r#"
name = "garbage-starts"
budget = 1000000
stop = "first-safe"

[codec]
pl = 2
ml = 2
capacity = 1

[adversary]
omission = 0.1
duplication = 0.1

[seeds]
start = 100
count = 40

[start]
mode = "arbitrary"
"#;

pub fn run_example() -> anyhow::Result<()> {
    let summary = run_scenario(&Scenario::from_toml(SCENARIO)?)?;
    print!("{}", summary.table());
    anyhow::ensure!(summary.ok());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
