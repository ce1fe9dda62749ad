//! Model sanity checks for the SN1 setup: lumped-capacitance validity,
//! convection regime, the explicit-Euler step bound and instantaneous rates.

use labtwin::kinetics::kinetics_process;
use labtwin::scenario::{self, Scenario};
use labtwin::thermal::{biot_number, enthalpy, rayleigh_number, stable_dt_limit, thermal_process};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 100 mL of water in a beaker: h ≈ 10 W/(m²·K), k ≈ 0.6 W/(m·K).
    let bi = biot_number(10.0, 0.6, 1e-4, 0.01)?;
    println!("Biot number {bi:.4}");
    // 10 K difference over 5 cm of water.
    let ra = rayleigh_number(9.81, 2.1e-4, 10.0, 0.05, 1.0e-6, 1.43e-7)?;
    println!("Rayleigh {:.3e} ({:?})", ra.ra, ra.regime);

    let sc = Scenario::from_path(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/sn1.json"))?;
    let mut built = scenario::build(&sc)?;
    println!(
        "dt {} s, explicit-Euler bound {:.3} s",
        built.env.dt(),
        stable_dt_limit(&built.env)
    );

    built.env.prime()?;
    for _ in 0..50_000 {
        let (actions, _) = built.workflow.tick(&built.env);
        built.env.step(&actions)?;
    }
    println!(
        "at t = {} s, stored heat {:.1} kJ",
        built.env.time(),
        enthalpy(&built.env) / 1e3
    );
    for (node, rate) in thermal_process(&built.env) {
        println!("  d{node}/dt = {rate:+.4e} K/s");
    }
    for (slot, rate) in kinetics_process(&built.env) {
        println!("  d{slot}/dt = {rate:+.4e}");
    }
    Ok(())
}
