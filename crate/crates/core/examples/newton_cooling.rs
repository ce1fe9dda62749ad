//! A hot block cooling in still air, compared against the closed-form
//! exponential.

use labtwin::action::ActionVector;
use labtwin::state::{EntitySpec, EnvironmentState};
use labtwin::thermal::{add_thermal_node, convection};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut env = EnvironmentState::new(0.01)?;
    env.register_entity(EntitySpec::ambient("air", 300.0))?;
    env.register_entity(EntitySpec::container("block"))?;
    let t = add_thermal_node(&mut env, "block", 1.0, 1000.0, 350.0)?;
    let air = env.s_slot("air", "T")?;
    convection(&mut env, t, air, 100.0, 1.0)?;

    let rate = 100.0 * 1.0 / (1.0 * 1000.0);
    println!("{:>6} {:>12} {:>12} {:>10}", "t [s]", "T [K]", "exact [K]", "rel err");
    let none = ActionVector::new();
    for k in 1..=10_000 {
        env.step(&none)?;
        if k % 1000 == 0 {
            let exact = 300.0 + 50.0 * (-rate * env.time()).exp();
            let got = env.s()[t.index()];
            println!(
                "{:>6.0} {got:>12.6} {exact:>12.6} {:>10.2e}",
                env.time(),
                (got - exact).abs() / exact
            );
        }
    }
    Ok(())
}
