//! Device semantics: heater controller, liquid handler, scale and faucet.
//!
//! Commands arrive as discrete actions and are consumed by per-device events
//! in the event phase. Rejected commands leave state untouched and land in
//! the failure log under the source `<device>.<channel>`.

use std::sync::Arc;

use crate::action::{ActionVector, Command, LhCommand};
use crate::engine::{CommandFailure, EffectCtx, Event, Process, View};
use crate::error::StateError;
use crate::kinetics::move_liquid;
use crate::proxy::record_transfer;
use crate::state::{EntityKind, EnvironmentState, LIdx, Layout, SIdx, SlotRef};
use crate::thermal::{add_thermal_node, generation};

/// Failure names reported by liquid-handler commands.
pub mod lh_failure {
    pub const TIP_LOADED: &str = "tipLoaded";
    pub const TIP_IN_SOLUTION: &str = "tipInSolution";
    pub const TIP_AVAILABLE: &str = "tipAvailable";
    pub const NO_TIP_LOADED: &str = "noTipLoaded";
    pub const TIP_EMPTY: &str = "tipEmpty";
    pub const WELL: &str = "well";
    pub const OVERDRAW: &str = "Overdraw";
    pub const CAPACITY_EXCEEDED: &str = "CapacityExceeded";
    pub const INVALID_VOLUME: &str = "volume";
}

fn expect_kind(env: &EnvironmentState, id: &str, expected: &'static str) -> Result<usize, StateError> {
    let e = env.entity_index(id)?;
    let kind = env.layout().entity_kind(e);
    if kind.name() != expected {
        return Err(StateError::WrongKind {
            entity: id.to_string(),
            kind: kind.name(),
            expected,
        });
    }
    Ok(e)
}

fn s_of(layout: &Layout, e: usize, name: &str) -> SIdx {
    match layout.slot(e, name) {
        Some(SlotRef::S(i)) => i,
        _ => unreachable!("device slot `{name}` is created at registration"),
    }
}

fn l_of(layout: &Layout, e: usize, name: &str) -> LIdx {
    match layout.slot(e, name) {
        Some(SlotRef::L(i)) => i,
        _ => unreachable!("device slot `{name}` is created at registration"),
    }
}

struct HeaterEvent {
    id: String,
    entity: String,
    on: LIdx,
    target: SIdx,
}

impl Event for HeaterEvent {
    fn id(&self) -> &str {
        &self.id
    }

    fn slots(&self) -> Vec<SlotRef> {
        vec![SlotRef::L(self.on), SlotRef::S(self.target)]
    }

    fn triggered(&self, view: &View<'_>) -> bool {
        view.actions.get_command(&self.entity, "heater").is_some()
    }

    fn apply(&self, ctx: &mut EffectCtx<'_>) -> Result<(), CommandFailure> {
        if let Some(Command::Heater { on, target }) = ctx.actions.get_command(&self.entity, "heater") {
            if let Some(t) = target {
                if !(*t > 0.0) || !t.is_finite() {
                    return Err(CommandFailure::new(format!("{}.heater", self.entity), "T_target"));
                }
                ctx.s[self.target.0] = *t;
            }
            ctx.l[self.on.0] = *on;
        }
        Ok(())
    }
}

/// Gives a heater entity its thermal node `T`, the gated generation link
/// and the command event.
pub fn register_heater(
    env: &mut EnvironmentState,
    id: &str,
    mass: f64,
    specific_heat: f64,
    t0: f64,
) -> Result<SIdx, StateError> {
    let e = expect_kind(env, id, "heater")?;
    let k_gen = match env.layout().entity_kind(e) {
        EntityKind::Heater(p) => p.k_gen,
        _ => unreachable!(),
    };
    let node = add_thermal_node(env, id, mass, specific_heat, t0)?;
    let on = l_of(env.layout(), e, "heaterOn");
    let target = s_of(env.layout(), e, "T_target");
    generation(env, node, k_gen, target, Some(on))?;
    register_heater_event(env, id)?;
    Ok(node)
}

/// Registers only the command event (no thermal coupling).
pub fn register_heater_event(env: &mut EnvironmentState, id: &str) -> Result<(), StateError> {
    let e = expect_kind(env, id, "heater")?;
    let ev = HeaterEvent {
        id: format!("heater:{id}"),
        entity: id.to_string(),
        on: l_of(env.layout(), e, "heaterOn"),
        target: s_of(env.layout(), e, "T_target"),
    };
    env.register_event(Arc::new(ev))
}

/// Action switching heater `id`; `target` in K, `None` keeps the setpoint.
pub fn heater_command(
    env: &EnvironmentState,
    id: &str,
    on: bool,
    target: Option<f64>,
) -> Result<ActionVector, StateError> {
    expect_kind(env, id, "heater")?;
    Ok(ActionVector::new().with_command(id, Command::Heater { on, target }))
}

struct LiquidHandlerEvent {
    id: String,
    entity: String,
    index: usize,
    capacity_ul: f64,
    well: usize,
    tip_loaded: LIdx,
    in_solution: LIdx,
    tip_volume: SIdx,
    disposals: SIdx,
    tips_left: SIdx,
}

impl LiquidHandlerEvent {
    fn fail(&self, name: &str) -> CommandFailure {
        CommandFailure::new(format!("{}.lh", self.entity), name)
    }
}

impl Event for LiquidHandlerEvent {
    fn id(&self) -> &str {
        &self.id
    }

    fn slots(&self) -> Vec<SlotRef> {
        vec![
            SlotRef::L(self.tip_loaded),
            SlotRef::L(self.in_solution),
            SlotRef::S(self.tip_volume),
            SlotRef::S(self.disposals),
            SlotRef::S(self.tips_left),
        ]
    }

    fn triggered(&self, view: &View<'_>) -> bool {
        view.actions.get_command(&self.entity, "lh").is_some()
    }

    fn apply(&self, ctx: &mut EffectCtx<'_>) -> Result<(), CommandFailure> {
        use lh_failure::*;
        let Some(Command::LiquidHandler(cmd)) = ctx.actions.get_command(&self.entity, "lh") else {
            return Ok(());
        };
        let layout = ctx.layout;
        let well = ctx.x[self.well];
        let loaded = ctx.l[self.tip_loaded.0];
        match cmd {
            LhCommand::LoadTip => {
                if loaded {
                    return Err(self.fail(NO_TIP_LOADED));
                }
                if ctx.s[self.tips_left.0] < 1.0 {
                    return Err(self.fail(TIP_AVAILABLE));
                }
                ctx.s[self.tips_left.0] -= 1.0;
                ctx.l[self.tip_loaded.0] = true;
            }
            LhCommand::RemoveTip => {
                if !loaded {
                    return Err(self.fail(TIP_LOADED));
                }
                if ctx.s[self.tip_volume.0] > 0.0 {
                    return Err(self.fail(TIP_EMPTY));
                }
                ctx.l[self.tip_loaded.0] = false;
                ctx.s[self.disposals.0] += 1.0;
            }
            LhCommand::MoveToWell(_) => {
                // The proxy already moved the tip; mirror immersion.
                let immersed = well
                    .and_then(|w| layout.mixture_slots(w))
                    .is_some_and(|m| ctx.s[m.solvent.0] > 0.0);
                ctx.l[self.in_solution.0] = immersed;
            }
            LhCommand::Aspirate(volume) => {
                if !(*volume >= 0.0) || !volume.is_finite() {
                    return Err(self.fail(INVALID_VOLUME));
                }
                if !loaded {
                    return Err(self.fail(TIP_LOADED));
                }
                if !ctx.l[self.in_solution.0] {
                    return Err(self.fail(TIP_IN_SOLUTION));
                }
                let Some(w) = well else {
                    return Err(self.fail(TIP_IN_SOLUTION));
                };
                let current = ctx.s[self.tip_volume.0];
                if current + volume > self.capacity_ul * (1.0 + 1e-12) {
                    return Err(self.fail(CAPACITY_EXCEEDED));
                }
                let density = match layout.entity_kind(w) {
                    EntityKind::Container(p) => p.density,
                    _ => 1.0,
                };
                let from = layout.mixture_slots(w).expect("wells are containers");
                let to = layout.tip_slots(self.index).expect("liquid handler has tip slots");
                let mass = volume * 1e-6 * density;
                if mass > ctx.s[from.solvent.0] * (1.0 + 1e-9) + 1e-15 {
                    return Err(self.fail(OVERDRAW));
                }
                let moved = move_liquid(ctx.s, from, to, mass).map_err(|_| self.fail(OVERDRAW))?;
                record_transfer(ctx.transfers, layout, w, self.index, &moved);
                ctx.s[self.tip_volume.0] = current + volume;
                if ctx.s[from.solvent.0] == 0.0 {
                    ctx.l[self.in_solution.0] = false;
                }
            }
            LhCommand::Dispense(volume) => {
                if !(*volume >= 0.0) || !volume.is_finite() {
                    return Err(self.fail(INVALID_VOLUME));
                }
                if !loaded {
                    return Err(self.fail(TIP_LOADED));
                }
                let current = ctx.s[self.tip_volume.0];
                if *volume > current * (1.0 + 1e-12) {
                    return Err(self.fail(OVERDRAW));
                }
                let Some(w) = well else { return Err(self.fail(WELL)) };
                let from = layout.tip_slots(self.index).expect("liquid handler has tip slots");
                let to = layout.mixture_slots(w).expect("wells are containers");
                let full = *volume >= current;
                let mass = if full {
                    ctx.s[from.solvent.0]
                } else {
                    ctx.s[from.solvent.0] * (volume / current)
                };
                let moved = move_liquid(ctx.s, from, to, mass).map_err(|_| self.fail(OVERDRAW))?;
                record_transfer(ctx.transfers, layout, self.index, w, &moved);
                ctx.s[self.tip_volume.0] = if full { 0.0 } else { current - volume };
                ctx.l[self.in_solution.0] = ctx.s[to.solvent.0] > 0.0;
            }
        }
        Ok(())
    }
}

/// Registers the command event of liquid handler `id`.
pub fn register_liquid_handler(env: &mut EnvironmentState, id: &str) -> Result<(), StateError> {
    let e = expect_kind(env, id, "liquid-handler")?;
    let layout = env.layout();
    let capacity_ul = match layout.entity_kind(e) {
        EntityKind::LiquidHandler(p) => p.tip_capacity_ul,
        _ => unreachable!(),
    };
    let well = match layout.slot(e, "well") {
        Some(SlotRef::X(i)) => i.index(),
        _ => unreachable!(),
    };
    let ev = LiquidHandlerEvent {
        id: format!("lh:{id}"),
        entity: id.to_string(),
        index: e,
        capacity_ul,
        well,
        tip_loaded: l_of(layout, e, "tipLoaded"),
        in_solution: l_of(layout, e, "tipInSolution"),
        tip_volume: s_of(layout, e, "tip_volume"),
        disposals: s_of(layout, e, "disposals"),
        tips_left: s_of(layout, e, "tips_left"),
    };
    env.register_event(Arc::new(ev))
}

pub fn liquid_handler_command(env: &EnvironmentState, id: &str, cmd: LhCommand) -> Result<ActionVector, StateError> {
    expect_kind(env, id, "liquid-handler")?;
    if let LhCommand::MoveToWell(Some(w)) = &cmd {
        env.entity_index(w.as_str())?;
    }
    Ok(ActionVector::new().with_command(id, Command::LiquidHandler(cmd)))
}

/// Mass resting directly on scale `scale`: container tare, solvent and the
/// solutes that declare a molar mass.
pub(crate) fn scale_mass(env: &EnvironmentState, scale: usize) -> f64 {
    let layout = env.layout();
    let x = env.x();
    let s = env.s();
    let mut total = 0.0;
    for e in 0..layout.entities.len() {
        let on_scale = matches!(layout.slot(e, "support"), Some(SlotRef::X(i)) if x[i.index()] == Some(scale));
        if !on_scale {
            continue;
        }
        if let EntityKind::Container(p) = layout.entity_kind(e) {
            total += p.tare_mass;
        }
        if let Some(m) = layout.mixture_slots(e) {
            total += s[m.solvent.0];
            for (sp, a) in layout.species().iter().zip(&m.amounts) {
                if let Some(mm) = sp.molar_mass {
                    total += s[a.0] * mm * 1e-3;
                }
            }
        }
    }
    total
}

/// Current reading of scale `id` in kg.
pub fn scale_read(env: &EnvironmentState, id: &str) -> Result<f64, StateError> {
    let e = expect_kind(env, id, "scale")?;
    Ok(scale_mass(env, e))
}

struct FaucetProcess {
    id: String,
    angle: SIdx,
    solvent: SIdx,
    coefficient: f64,
}

impl Process for FaucetProcess {
    fn id(&self) -> &str {
        &self.id
    }

    fn slots(&self) -> Vec<SlotRef> {
        vec![SlotRef::S(self.angle), SlotRef::S(self.solvent)]
    }

    fn precondition<'a>(&'a self, _view: &View<'_>) -> Result<(), &'a str> {
        Ok(())
    }

    fn contribute(&self, view: &View<'_>, ds: &mut [f64]) {
        ds[self.solvent.0] += self.coefficient * view.s[self.angle.0].max(0.0);
    }
}

/// Registers the pure-solvent inflow process of faucet `id`.
pub fn register_faucet(env: &mut EnvironmentState, id: &str) -> Result<(), StateError> {
    let e = expect_kind(env, id, "faucet")?;
    let params = match env.layout().entity_kind(e) {
        EntityKind::Faucet(p) => p.clone(),
        _ => unreachable!(),
    };
    let t = expect_kind(env, params.target.as_str(), "container")?;
    let process = FaucetProcess {
        id: format!("faucet:{id}"),
        angle: s_of(env.layout(), e, "angle"),
        solvent: env.layout().mixture_slots(t).expect("containers hold mixtures").solvent,
        coefficient: params.flow_coefficient,
    };
    env.register_process(Arc::new(process))
}

/// Current faucet outflow in kg/s.
pub fn faucet_flow(env: &EnvironmentState, id: &str) -> Result<f64, StateError> {
    let e = expect_kind(env, id, "faucet")?;
    let c = match env.layout().entity_kind(e) {
        EntityKind::Faucet(p) => p.flow_coefficient,
        _ => unreachable!(),
    };
    Ok(c * env.s()[s_of(env.layout(), e, "angle").0])
}

/// Registers the default semantics of every liquid handler and faucet.
/// Heaters need thermal parameters and go through [`register_heater`].
pub fn register_passive_devices(env: &mut EnvironmentState) -> Result<(), StateError> {
    let ids: Vec<(String, &'static str)> = env
        .layout()
        .entity_ids()
        .enumerate()
        .map(|(i, id)| (id.to_string(), env.layout().entity_kind(i).name()))
        .collect();
    for (id, kind) in ids {
        match kind {
            "liquid-handler" => register_liquid_handler(env, &id)?,
            "faucet" => register_faucet(env, &id)?,
            _ => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::ANGLE_CHANNEL;
    use crate::kinetics::{make_mixture, mixture_of, set_mixture, Species};
    use crate::state::{ContainerParams, EntitySpec, FaucetParams, LiquidHandlerParams};

    fn heater_env() -> EnvironmentState {
        let mut env = EnvironmentState::default();
        env.register_entity(EntitySpec::ambient("air", 298.15)).unwrap();
        env.register_entity(EntitySpec::heater("hp", 20.0)).unwrap();
        register_heater(&mut env, "hp", 0.5, 900.0, 298.15).unwrap();
        env
    }

    #[test]
    fn heater_on_heats_toward_target() {
        let mut env = heater_env();
        let a = heater_command(&env, "hp", true, Some(343.15)).unwrap();
        let r = env.step(&a).unwrap();
        assert!(env.read_flag("hp", "heaterOn").unwrap());
        assert_eq!(r.fired_ids(env.layout()), vec!["heater:hp"]);
        // The event fires after the process phase: no heat yet.
        assert_eq!(env.read_slot("hp", "T").unwrap().value, 298.15);
        env.step(&ActionVector::new()).unwrap();
        let t = env.read_slot("hp", "T").unwrap().value;
        let expected = 298.15 + 0.01 * 20.0 * 45.0 / 450.0;
        assert!((t - expected).abs() < 1e-12);
    }

    #[test]
    fn heater_off_and_idempotent_update() {
        let mut env = heater_env();
        env.step(&heater_command(&env, "hp", true, Some(343.15)).unwrap())
            .unwrap();
        env.step(&heater_command(&env, "hp", true, Some(333.15)).unwrap())
            .unwrap();
        assert_eq!(env.read_slot("hp", "T_target").unwrap().value, 333.15);
        assert!(env.read_flag("hp", "heaterOn").unwrap());
        env.step(&heater_command(&env, "hp", false, None).unwrap()).unwrap();
        let t = env.read_slot("hp", "T").unwrap().value;
        env.step(&ActionVector::new()).unwrap();
        assert_eq!(env.read_slot("hp", "T").unwrap().value, t);
        assert!(matches!(
            heater_command(&env, "nope", true, None),
            Err(StateError::UnknownEntity(_))
        ));
    }

    fn lh_env() -> EnvironmentState {
        let mut env = EnvironmentState::default();
        env.register_species(Species::new("KI")).unwrap();
        env.register_entity(EntitySpec::container("src")).unwrap();
        env.register_entity(EntitySpec::container("well")).unwrap();
        env.register_entity(EntitySpec::new(
            "ot2",
            EntityKind::LiquidHandler(LiquidHandlerParams::default()),
        ))
        .unwrap();
        set_mixture(&mut env, "src", &make_mixture(0.1, &[("KI", 0.004)]).unwrap()).unwrap();
        register_liquid_handler(&mut env, "ot2").unwrap();
        env
    }

    fn lh(env: &mut EnvironmentState, cmd: LhCommand) -> Vec<String> {
        let a = liquid_handler_command(env, "ot2", cmd).unwrap();
        let r = env.step(&a).unwrap();
        r.failures.into_iter().map(|f| f.precondition).collect()
    }

    #[test]
    fn aspirate_requires_tip_and_immersion() {
        let mut env = lh_env();
        assert_eq!(lh(&mut env, LhCommand::Aspirate(100.0)), vec!["tipLoaded"]);
        assert!(lh(&mut env, LhCommand::LoadTip).is_empty());
        assert_eq!(lh(&mut env, LhCommand::Aspirate(100.0)), vec!["tipInSolution"]);
        assert_eq!(lh(&mut env, LhCommand::LoadTip), vec!["noTipLoaded"]);
    }

    #[test]
    fn aspirate_dispense_round_trip() {
        let mut env = lh_env();
        lh(&mut env, LhCommand::LoadTip);
        lh(&mut env, LhCommand::MoveToWell(Some("src".into())));
        assert!(env.read_flag("ot2", "tipInSolution").unwrap());
        assert!(lh(&mut env, LhCommand::Aspirate(100.0)).is_empty());
        lh(&mut env, LhCommand::MoveToWell(Some("well".into())));
        assert!(lh(&mut env, LhCommand::Dispense(100.0)).is_empty());
        let well = mixture_of(&env, "well").unwrap();
        assert!((well.solvent_mass - 1e-4).abs() < 1e-18);
        assert!((well.molality("KI") - 0.04).abs() < 1e-12);
        let src = mixture_of(&env, "src").unwrap();
        assert!((src.solvent_mass - (0.1 - 1e-4)).abs() < 1e-15);
        assert!((src.amount("KI") + well.amount("KI") - 0.004).abs() < 1e-18);
        assert_eq!(env.read_slot("ot2", "tip_volume").unwrap().value, 0.0);
    }

    #[test]
    fn capacity_overdraw_and_disposal() {
        let mut env = lh_env();
        lh(&mut env, LhCommand::LoadTip);
        lh(&mut env, LhCommand::MoveToWell(Some("src".into())));
        assert_eq!(lh(&mut env, LhCommand::Aspirate(1500.0)), vec!["CapacityExceeded"]);
        assert!(lh(&mut env, LhCommand::Aspirate(200.0)).is_empty());
        assert_eq!(lh(&mut env, LhCommand::Dispense(300.0)), vec!["Overdraw"]);
        assert_eq!(lh(&mut env, LhCommand::RemoveTip), vec!["tipEmpty"]);
        assert!(lh(&mut env, LhCommand::Dispense(200.0)).is_empty());
        assert!(lh(&mut env, LhCommand::RemoveTip).is_empty());
        assert_eq!(env.read_slot("ot2", "disposals").unwrap().value, 1.0);
        assert_eq!(env.read_slot("ot2", "tips_left").unwrap().value, 95.0);
    }

    #[test]
    fn scale_readings() {
        let mut env = EnvironmentState::default();
        env.register_entity(EntitySpec::new("scale", EntityKind::Scale))
            .unwrap();
        assert_eq!(scale_read(&env, "scale").unwrap(), 0.0);
        env.register_entity(
            EntitySpec::new(
                "beaker",
                EntityKind::Container(ContainerParams {
                    tare_mass: 0.050,
                    density: 1.0,
                }),
            )
            .with_value("solvent", 0.100)
            .on("scale"),
        )
        .unwrap();
        assert!((scale_read(&env, "scale").unwrap() - 0.150).abs() < 1e-15);
        assert_eq!(
            env.read_slot("scale", "reading").unwrap().value,
            scale_read(&env, "scale").unwrap()
        );
    }

    fn faucet_env(c: f64) -> EnvironmentState {
        let mut env = EnvironmentState::default();
        env.register_species(Species::new("NaCl")).unwrap();
        env.register_entity(EntitySpec::container("sink")).unwrap();
        env.register_entity(EntitySpec::new(
            "tap",
            EntityKind::Faucet(FaucetParams {
                flow_coefficient: c,
                max_angle: 1.5,
                target: "sink".into(),
            }),
        ))
        .unwrap();
        set_mixture(&mut env, "sink", &make_mixture(0.1, &[("NaCl", 0.01)]).unwrap()).unwrap();
        register_faucet(&mut env, "tap").unwrap();
        env
    }

    #[test]
    fn faucet_fills_and_dilutes() {
        let mut env = faucet_env(0.01);
        env.step(&ActionVector::new()).unwrap();
        assert_eq!(mixture_of(&env, "sink").unwrap().solvent_mass, 0.1);
        let open = ActionVector::new().with_value("tap", ANGLE_CHANNEL, 1.0);
        env.step(&open).unwrap();
        for _ in 1..1000 {
            env.step(&ActionVector::new()).unwrap();
        }
        let mix = mixture_of(&env, "sink").unwrap();
        assert!((mix.solvent_mass - 0.2).abs() < 1e-12);
        assert!((mix.molality("NaCl") - 0.05).abs() < 1e-12);
    }

    #[test]
    fn faucet_angle_clamped() {
        let mut env = faucet_env(0.01);
        env.step(&ActionVector::new().with_value("tap", ANGLE_CHANNEL, 3.0))
            .unwrap();
        assert_eq!(env.read_slot("tap", "angle").unwrap().value, 1.5);
        assert!((faucet_flow(&env, "tap").unwrap() - 0.015).abs() < 1e-15);
    }
}
