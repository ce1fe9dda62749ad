//! A hotplate driven toward its setpoint by heater commands, with a beaker
//! coupled only while it rests on the plate.

use labtwin::action::{ActionVector, Command};
use labtwin::devices::{heater_command, register_heater};
use labtwin::proxy::register_contact;
use labtwin::state::{EntityKind, EntitySpec, EnvironmentState};
use labtwin::thermal::{add_thermal_node, conduction, convection};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut env = EnvironmentState::new(0.01)?;
    env.register_entity(EntitySpec::ambient("air", 298.15))?;
    env.register_entity(EntitySpec::new("robot", EntityKind::RobotProxy))?;
    env.register_entity(EntitySpec::heater("hp", 20.0))?;
    env.register_entity(EntitySpec::container("beaker").on("robot"))?;
    let contact = register_contact(&mut env, "beaker", "hp")?;

    let plate = register_heater(&mut env, "hp", 0.5, 900.0, 298.15)?;
    let liquid = add_thermal_node(&mut env, "beaker", 0.1, 4186.0, 298.15)?;
    let air = env.s_slot("air", "T")?;
    conduction(&mut env, plate, liquid, 1.0, 0.02, 0.002, Some(contact))?;
    convection(&mut env, plate, air, 30.0, 0.1)?;
    convection(&mut env, liquid, air, 10.0, 0.01)?;
    env.prime()?;

    env.step(&heater_command(&env, "hp", true, Some(343.15))?)?;
    let none = ActionVector::new();
    let place = ActionVector::new().with_command("beaker", Command::Place { surface: "hp".into() });
    for k in 1..=60_000 {
        let actions = if k == 30_000 { &place } else { &none };
        let report = env.step(actions)?;
        for id in report.fired_ids(env.layout()) {
            println!("t = {:7.2} s  event {id}", env.time());
        }
        if k % 6000 == 0 {
            println!(
                "t = {:7.2} s  plate {:6.2} °C  beaker {:6.2} °C",
                env.time(),
                env.s()[plate.index()] - 273.15,
                env.s()[liquid.index()] - 273.15
            );
        }
    }
    Ok(())
}
