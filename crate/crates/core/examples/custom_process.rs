//! User-defined dynamics: an evaporation process that runs only while a lid
//! is off, and an event that closes the lid once the level drops.

use std::sync::Arc;

use labtwin::action::ActionVector;
use labtwin::engine::{FnEvent, FnProcess};
use labtwin::kinetics::{make_mixture, set_mixture};
use labtwin::state::{EntitySpec, EnvironmentState, SlotRef};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut env = EnvironmentState::new(0.01)?;
    env.register_entity(EntitySpec::container("dish"))?;
    set_mixture(&mut env, "dish", &make_mixture(0.2, &[])?)?;
    let water = env.s_slot("dish", "solvent")?;
    let lid_off = env.add_flag("dish", "lidOff", true)?;

    let evaporation = FnProcess::new("evaporate:dish", vec![SlotRef::S(water)], move |v, ds| {
        ds[water.index()] -= 1e-3 * v.s[water.index()];
    })
    .with_precondition("lidOff", move |v| v.l[lid_off.index()]);
    env.register_process(Arc::new(evaporation))?;

    let close = FnEvent::new(
        "close-lid:dish",
        vec![SlotRef::L(lid_off), SlotRef::S(water)],
        move |v| v.l[lid_off.index()] && v.s[water.index()] < 0.15,
        move |ctx| {
            ctx.l[lid_off.index()] = false;
            Ok(())
        },
    );
    env.register_event(Arc::new(close))?;

    let none = ActionVector::new();
    for _ in 0..60_000 {
        let report = env.step(&none)?;
        if !report.fired.is_empty() || !report.deactivated.is_empty() {
            println!(
                "t = {:7.2} s  fired {:?}  stopped {:?}",
                env.time(),
                report.fired_ids(env.layout()),
                report
                    .deactivated
                    .iter()
                    .map(|&i| env.layout().processes()[i].id())
                    .collect::<Vec<_>>()
            );
        }
    }
    println!("water left: {:.4} kg", env.s()[water.index()]);
    for f in env.failures() {
        println!("{:.2} s  {} needs {}", f.time, f.source, f.precondition);
    }
    Ok(())
}
