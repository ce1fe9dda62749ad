//! Throughput of batched environments with and without the semantics layer.
//!
//! `cargo run --release --example batch_bench -- 2000` sets the step count.
//! `LABTWIN_THREADS` caps the worker pool.

use labtwin::scenario::{self, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1000);
    let sc = Scenario::from_path(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/sn1.json"))?;
    for n in [1, 16, 64, 256] {
        println!("{}", scenario::bench(&sc, n, steps)?);
    }
    Ok(())
}
