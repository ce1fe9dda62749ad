use super::spec::*;
use super::ScenarioError;
use crate::devices::{register_faucet, register_heater_event, register_liquid_handler};
use crate::kinetics::{register_reaction, set_mixture, Kinetics, Mixture, ReactionTemplate, Species, DEFAULT_CLAMP};
use crate::proxy::register_contact;
use crate::state::{
    ContainerParams, EntityKind, EntitySpec, EnvironmentState, FaucetParams, HeaterParams, InitialValue, LIdx,
    LiquidHandlerParams, SIdx, SlotRef, Unit,
};
use crate::thermal::{add_thermal_node_named, conduction, convection, generation, node};
use crate::units::{from_value, Dimension};
use crate::workflow::{Comparator, Target, Workflow};

/// A scenario turned into a ready-to-step environment.
#[derive(Debug, Clone)]
pub struct Built {
    pub env: EnvironmentState,
    pub workflow: Workflow,
    pub targets: Vec<Target>,
    /// Traced `(entity, slot)` pairs in column order.
    pub columns: Vec<(String, String)>,
}

fn split_ref<'a>(what: &str, r: &'a str) -> Result<(&'a str, &'a str), ScenarioError> {
    r.split_once('.')
        .filter(|(e, s)| !e.is_empty() && !s.is_empty())
        .ok_or_else(|| ScenarioError::Validation(format!("{what}: expected `entity.slot`, got `{r}`")))
}

fn node_ref(env: &EnvironmentState, what: &str, r: &str) -> Result<SIdx, ScenarioError> {
    let (e, s) = split_ref(what, r)?;
    node(env, e, s).map_err(|err| ScenarioError::validation(what, err))
}

fn s_ref(env: &EnvironmentState, what: &str, r: &str) -> Result<SIdx, ScenarioError> {
    let (e, s) = split_ref(what, r)?;
    env.s_slot(e, s).map_err(|err| ScenarioError::validation(what, err))
}

fn gate_ref(env: &EnvironmentState, what: &str, r: &str) -> Result<LIdx, ScenarioError> {
    let (e, s) = split_ref(what, r)?;
    env.l_slot(e, s).map_err(|err| ScenarioError::validation(what, err))
}

fn dimension_of(unit: Unit) -> Dimension {
    match unit {
        Unit::Kelvin => Dimension::Temperature,
        Unit::Kilogram => Dimension::Mass,
        Unit::Mole => Dimension::Amount,
        Unit::MolPerKg => Dimension::Molality,
        Unit::Radian => Dimension::Angle,
        Unit::Microliter => Dimension::Volume,
        Unit::Count | Unit::Flag | Unit::Entity => Dimension::Dimensionless,
    }
}

fn entity_kind(entry: &EntityEntry) -> EntityKind {
    match &entry.kind {
        EntityKindSpec::Container { tare_mass, density } => {
            let d = ContainerParams::default();
            EntityKind::Container(ContainerParams {
                tare_mass: tare_mass.unwrap_or(d.tare_mass),
                density: density.unwrap_or(d.density),
            })
        }
        EntityKindSpec::Heater { k_gen } => EntityKind::Heater(HeaterParams { k_gen: *k_gen }),
        EntityKindSpec::LiquidHandler { tip_capacity, tips } => {
            let d = LiquidHandlerParams::default();
            EntityKind::LiquidHandler(LiquidHandlerParams {
                tip_capacity_ul: tip_capacity.unwrap_or(d.tip_capacity_ul),
                tips: tips.unwrap_or(d.tips),
            })
        }
        EntityKindSpec::Scale {} => EntityKind::Scale,
        EntityKindSpec::Faucet {
            flow_coefficient,
            max_angle,
            target,
        } => EntityKind::Faucet(FaucetParams {
            flow_coefficient: *flow_coefficient,
            max_angle: *max_angle,
            target: target.as_str().into(),
        }),
        EntityKindSpec::RobotProxy {} => EntityKind::RobotProxy,
        EntityKindSpec::Ambient { temperature } => EntityKind::Ambient {
            temperature: *temperature,
        },
    }
}

fn initial_value(
    env: &EnvironmentState,
    id: &str,
    slot: &str,
    v: &serde_json::Value,
) -> Result<InitialValue, ScenarioError> {
    let what = format!("entity `{id}` initial `{slot}`");
    let r = env.slot(id, slot).map_err(|e| ScenarioError::validation(&what, e))?;
    match r {
        SlotRef::L(_) => v
            .as_bool()
            .map(InitialValue::Flag)
            .ok_or_else(|| ScenarioError::Validation(format!("{what}: expected true or false"))),
        SlotRef::S(i) => {
            let unit = env.layout().s_meta()[i.index()].unit;
            from_value(v, dimension_of(unit))
                .map(InitialValue::Real)
                .map_err(|e| ScenarioError::validation(&what, e))
        }
        SlotRef::X(_) => Err(ScenarioError::Validation(format!(
            "{what}: kinematic slots are set with `on`"
        ))),
    }
}

/// Registers everything the scenario declares, in section order, and
/// resolves the workflow, verification targets and trace columns.
pub fn build(sc: &Scenario) -> Result<Built, ScenarioError> {
    let mut env = EnvironmentState::new(sc.meta.dt).map_err(|e| ScenarioError::validation("meta.dt", e))?;
    env.integrator = sc.meta.integrator;
    env.rng_seed = sc.meta.seed;

    for entry in &sc.entities {
        if entry.id.contains('.') || entry.id.is_empty() {
            return Err(ScenarioError::Validation(format!(
                "entity id `{}` must be non-empty and must not contain `.`",
                entry.id
            )));
        }
        let mut spec = EntitySpec::new(entry.id.as_str(), entity_kind(entry));
        if let Some(on) = &entry.on {
            spec = spec.on(on.as_str());
        }
        env.register_entity(spec)
            .map_err(|e| ScenarioError::validation(&format!("entity `{}`", entry.id), e))?;
    }

    let th = &sc.thermal;
    for [a, b] in &th.contacts {
        register_contact(&mut env, a, b).map_err(|e| ScenarioError::validation(&format!("contact {a}/{b}"), e))?;
    }
    for n in &th.nodes {
        add_thermal_node_named(&mut env, &n.entity, &n.slot, n.mass, n.specific_heat, n.initial)
            .map_err(|e| ScenarioError::validation(&format!("thermal node {}.{}", n.entity, n.slot), e))?;
    }
    for (i, link) in th.links.iter().enumerate() {
        let what = format!("thermal link #{i}");
        let res = match link {
            LinkSpec::Conduction {
                a,
                b,
                k,
                area,
                thickness,
                gate,
            } => {
                let a = node_ref(&env, &what, a)?;
                let b = node_ref(&env, &what, b)?;
                let gate = gate.as_deref().map(|g| gate_ref(&env, &what, g)).transpose()?;
                conduction(&mut env, a, b, *k, *area, *thickness, gate)
            }
            LinkSpec::Convection {
                node: n,
                ambient,
                h,
                area,
            } => {
                let a = node_ref(&env, &what, n)?;
                let b = node_ref(&env, &what, ambient)?;
                convection(&mut env, a, b, *h, *area)
            }
            LinkSpec::Generation {
                node: n,
                k_gen,
                target,
                gate,
            } => {
                let a = node_ref(&env, &what, n)?;
                let (owner, _) = split_ref(&what, n)?;
                let k_gen = match k_gen {
                    Some(k) => *k,
                    None => {
                        let e = env
                            .entity_index(owner)
                            .map_err(|e| ScenarioError::validation(&what, e))?;
                        match env.layout().entity_kind(e) {
                            EntityKind::Heater(p) => p.k_gen,
                            other => {
                                return Err(ScenarioError::Validation(format!(
                                    "{what}: `k_gen` is required on a {} node",
                                    other.name()
                                )))
                            }
                        }
                    }
                };
                let target = match target {
                    Some(t) => s_ref(&env, &what, t)?,
                    None => s_ref(&env, &what, &format!("{owner}.T_target"))?,
                };
                let gate = match gate {
                    Some(g) => Some(gate_ref(&env, &what, g)?),
                    None => env.l_slot(owner, "heaterOn").ok(),
                };
                generation(&mut env, a, k_gen, target, gate)
            }
        };
        res.map_err(|e| ScenarioError::validation(&what, e))?;
    }

    for sp in &sc.species {
        let mut s = Species::new(sp.name.as_str());
        if let Some(m) = sp.molar_mass {
            s = s.with_molar_mass(m);
        }
        env.register_species(s)
            .map_err(|e| ScenarioError::validation(&format!("species `{}`", sp.name), e))?;
    }

    for entry in &sc.entities {
        for (slot, v) in &entry.initial {
            let value = initial_value(&env, &entry.id, slot, v)?;
            env.set_initial(&entry.id, slot, value)
                .map_err(|e| ScenarioError::validation(&format!("entity `{}` initial `{slot}`", entry.id), e))?;
        }
    }

    for m in &sc.mixtures {
        let what = format!("mixture in `{}`", m.container);
        let mut mix = Mixture {
            solvent_mass: m.solvent,
            ..Default::default()
        };
        for (sp, v) in &m.amounts {
            let n = from_value(v, Dimension::Amount).map_err(|e| ScenarioError::validation(&what, e))?;
            *mix.moles.entry(sp.clone()).or_insert(0.0) += n;
        }
        for (sp, v) in &m.molalities {
            let b = from_value(v, Dimension::Molality).map_err(|e| ScenarioError::validation(&what, e))?;
            *mix.moles.entry(sp.clone()).or_insert(0.0) += b * m.solvent;
        }
        set_mixture(&mut env, &m.container, &mix).map_err(|e| ScenarioError::validation(&what, e))?;
    }

    for r in &sc.reactions {
        let kinetics = match r.kinetics {
            KineticsSpec::Constant { k } => Kinetics::ConstantK { k },
            KineticsSpec::Arrhenius { a, ea } => Kinetics::Arrhenius { a, ea },
        };
        let tpl = ReactionTemplate {
            id: r.id.clone(),
            reactants: r.reactants.clone(),
            products: r.products.clone(),
            kinetics,
            t_range: r.t_range,
            clamp: r.clamp.unwrap_or(DEFAULT_CLAMP),
            scope: r.containers.clone(),
        };
        register_reaction(&mut env, tpl).map_err(|e| ScenarioError::validation(&format!("reaction `{}`", r.id), e))?;
    }

    for d in &sc.devices {
        let res = match d {
            DeviceSpec::Heater { id } => register_heater_event(&mut env, id),
            DeviceSpec::LiquidHandler { id } => register_liquid_handler(&mut env, id),
            DeviceSpec::Faucet { id } => register_faucet(&mut env, id),
        };
        res.map_err(|e| ScenarioError::validation("devices", e))?;
    }

    let targets = sc.verification.targets.clone();
    let peak_watches = targets
        .iter()
        .filter(|t| matches!(t.comparator, Comparator::BelowFractionOfPeak(_)))
        .map(|t| [t.container.clone(), t.species.clone()])
        .chain(sc.verification.watch_peaks.iter().cloned());
    for [c, sp] in peak_watches.collect::<Vec<_>>() {
        env.watch_peak(&c, &sp)
            .map_err(|e| ScenarioError::validation(&format!("peak watch {c}.{sp}"), e))?;
    }

    let mut columns = Vec::with_capacity(sc.trace.slots.len());
    for name in &sc.trace.slots {
        let (e, s) = split_ref("trace", name)?;
        env.read_slot(e, s)
            .map_err(|err| ScenarioError::validation("trace", err))?;
        columns.push((e.to_string(), s.to_string()));
    }

    let workflow = Workflow::from_spec(&sc.workflow, &env).map_err(|e| ScenarioError::validation("workflow", e))?;
    Ok(Built {
        env,
        workflow,
        targets,
        columns,
    })
}

impl Built {
    /// Human-readable listing of entities, slots, processes, events and
    /// workflow leaves in registration order.
    pub fn describe(&self) -> String {
        use std::fmt::Write as _;
        let layout = self.env.layout();
        let mut out = String::new();
        writeln!(out, "entities:").unwrap();
        for (i, id) in layout.entity_ids().enumerate() {
            writeln!(out, "  {id} ({})", layout.entity_kind(i).name()).unwrap();
            for m in layout.x_meta().iter().chain(layout.s_meta()).chain(layout.l_meta()) {
                if m.owner == i {
                    let tag = if m.fixed { " fixed" } else { "" };
                    writeln!(out, "    {}.{} [{}]{tag}", id, m.name, m.unit).unwrap();
                }
            }
        }
        writeln!(out, "processes:").unwrap();
        for p in layout.processes() {
            writeln!(out, "  {}", p.id()).unwrap();
        }
        writeln!(out, "events:").unwrap();
        for e in layout.events() {
            writeln!(out, "  {}", e.id()).unwrap();
        }
        writeln!(out, "workflow leaves:").unwrap();
        for leaf in self.workflow.root().leaves() {
            let action = leaf.action.as_ref().map_or("", |a| a.name());
            writeln!(out, "  {} ({action})", leaf.id).unwrap();
        }
        out
    }
}
