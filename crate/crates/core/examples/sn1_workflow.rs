//! Runs the bundled SN1 scenario (or a scenario file given as the first
//! argument) and prints the verification report and key trace values.

use labtwin::scenario::{self, RunOptions, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/sn1.json").into());
    let sc = Scenario::from_path(&path)?;
    let out = scenario::run(&sc, RunOptions::default())?;

    let t = out.trace.series("beaker", "T").unwrap_or_default();
    let peak = t.iter().cloned().fold(f64::MIN, f64::max);
    println!("{}: {} steps, {} trace rows", sc.meta.name, out.steps, out.trace.len());
    println!(
        "solution peak {:.2} °C, final {:.2} °C",
        peak - 273.15,
        t.last().unwrap_or(&0.0) - 273.15
    );
    for start in out.built.workflow.leaf_starts() {
        println!("  {:>8.2} s  {}", start.time, start.leaf);
    }
    for target in &out.report.targets {
        println!("{target}");
    }
    println!("verification {}", if out.report.passed() { "passed" } else { "failed" });
    Ok(())
}
