//! A faucet diluting brine while its knob is turned open and closed.

use labtwin::action::{ActionVector, ANGLE_CHANNEL};
use labtwin::devices::{faucet_flow, register_faucet};
use labtwin::kinetics::{make_mixture, mixture_of, set_mixture, Species};
use labtwin::state::{EntityKind, EntitySpec, EnvironmentState, FaucetParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut env = EnvironmentState::new(0.01)?;
    env.register_species(Species::new("NaCl").with_molar_mass(58.44))?;
    env.register_entity(EntitySpec::container("sink"))?;
    env.register_entity(EntitySpec::new(
        "tap",
        EntityKind::Faucet(FaucetParams {
            flow_coefficient: 0.01,
            max_angle: 1.5,
            target: "sink".into(),
        }),
    ))?;
    set_mixture(&mut env, "sink", &make_mixture(0.1, &[("NaCl", 0.02)])?)?;
    register_faucet(&mut env, "tap")?;

    let schedule = [(0, 0.5), (1000, 1.5), (2000, 0.0)];
    let none = ActionVector::new();
    for k in 0..3000 {
        let turn = schedule
            .iter()
            .find(|(at, _)| *at == k)
            .map(|(_, angle)| ActionVector::new().with_value("tap", ANGLE_CHANNEL, *angle));
        env.step(turn.as_ref().unwrap_or(&none))?;
        if (k + 1) % 500 == 0 {
            let mix = mixture_of(&env, "sink")?;
            println!(
                "t = {:5.1} s  flow {:.4} kg/s  water {:.4} kg  NaCl {:.4} mol/kg",
                env.time(),
                faucet_flow(&env, "tap")?,
                mix.solvent_mass,
                mix.molality("NaCl")
            );
        }
    }
    Ok(())
}
