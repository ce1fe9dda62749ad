//! The iodine-clock style redox protocol: two pours onto a scale, color
//! appearing after the first and fading after the second.

use labtwin::scenario::{self, RunOptions, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sc = Scenario::from_path(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/redox.json"))?;
    let out = scenario::run(&sc, RunOptions::default())?;
    let wf = &out.built.workflow;

    for r in wf.readings() {
        println!("scale {:<15} {:.6} kg at {:.2} s", r.label, r.value, r.time);
    }
    let env = &out.built.env;
    let h2o2 = env.layout().species_index("H2O2")?;
    let moved = env.transferred("beaker1", "beaker0")?;
    println!(
        "H2O2 delivered: {:.4} mmol in {:.4} kg",
        moved.moles[h2o2] * 1e3,
        moved.solvent
    );

    let times = &out.trace.times;
    let i2 = out.trace.series("beaker0", "I2_starch").unwrap_or_default();
    for (t, v) in times.iter().zip(&i2).step_by(60) {
        println!("t = {t:6.1} s  I2-starch {v:.3e} mol/kg");
    }
    println!("peak {:.3e} mol/kg", env.peak("beaker0", "I2_starch").unwrap_or(0.0));
    println!("verification {}", if out.report.passed() { "passed" } else { "failed" });
    Ok(())
}
