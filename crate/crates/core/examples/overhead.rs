// Packets and bits per message for both variants as messages grow.

use s2arq::harness::{compare_overhead, OverheadGrid};

pub fn run_example() -> anyhow::Result<()> {
    let rows = compare_overhead(&OverheadGrid {
        pl: 2,
        mls: vec![1, 2, 4, 8, 16, 32],
        capacities: vec![1, 2],
        batches: 0,
        seed: 0,
    });
    println!(
        "{:>3} {:>3} | {:>8} {:>8} {:>8}",
        "c", "ml", "majority", "repeat", "rs"
    );
    for r in &rows {
        println!(
            "{:>3} {:>3} | {:>8.2} {:>8.2} {:>8.2}",
            r.capacity,
            r.ml,
            r.first_attempt_expansion,
            r.repetition_expansion,
            r.reed_solomon_expansion.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
