//! Pipetting between two wells with a liquid handler, including commands
//! that violate preconditions and land in the failure log.

use labtwin::action::LhCommand;
use labtwin::devices::{liquid_handler_command, register_liquid_handler};
use labtwin::kinetics::{make_mixture, mixture_of, set_mixture, Species};
use labtwin::state::{EntityKind, EntitySpec, EnvironmentState, LiquidHandlerParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut env = EnvironmentState::new(0.01)?;
    env.register_species(Species::new("dye"))?;
    env.register_entity(EntitySpec::container("stock"))?;
    env.register_entity(EntitySpec::container("plate_a1"))?;
    env.register_entity(EntitySpec::new(
        "ot2",
        EntityKind::LiquidHandler(LiquidHandlerParams::default()),
    ))?;
    register_liquid_handler(&mut env, "ot2")?;
    set_mixture(&mut env, "stock", &make_mixture(0.05, &[("dye", 0.005)])?)?;
    set_mixture(&mut env, "plate_a1", &make_mixture(0.01, &[])?)?;

    let program = [
        ("aspirate 200 uL", LhCommand::Aspirate(200.0)),
        ("load tip", LhCommand::LoadTip),
        ("move to stock", LhCommand::MoveToWell(Some("stock".into()))),
        ("aspirate 500 uL", LhCommand::Aspirate(500.0)),
        ("move to plate_a1", LhCommand::MoveToWell(Some("plate_a1".into()))),
        ("dispense 500 uL", LhCommand::Dispense(500.0)),
        ("park", LhCommand::MoveToWell(None)),
        ("remove tip", LhCommand::RemoveTip),
    ];
    for (name, cmd) in program {
        let actions = liquid_handler_command(&env, "ot2", cmd)?;
        let report = env.step(&actions)?;
        let status = match report.failures.first() {
            Some(f) => format!("rejected ({}: {})", f.source, f.precondition),
            None => "ok".into(),
        };
        println!("{name:<18} {status}");
    }
    for well in ["stock", "plate_a1"] {
        let mix = mixture_of(&env, well)?;
        println!(
            "{well:<9} {:.4} kg, dye {:.4} mol/kg",
            mix.solvent_mass,
            mix.molality("dye")
        );
    }
    println!("tips used: {}", env.read_slot("ot2", "disposals")?.value);
    Ok(())
}
