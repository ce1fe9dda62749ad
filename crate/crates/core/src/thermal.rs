//! Lumped-capacitance thermal network.
//!
//! Each body is a node with uniform temperature `T` and heat capacity `m·C`.
//! Links move heat between nodes:
//!
//! * conduction `Q = (k·A/d)·ΔT` between touching bodies,
//! * convection `Q = h·A·ΔT` to the ambient air,
//! * generation `Q = K_gen·(T_target − T)` for proportional heaters.
//!
//! Each link is registered as its own process, optionally gated by a
//! logical slot (contact, heater on). Per node `m·C·dT/dt = ΣQ`.

use std::sync::Arc;

use crate::engine::{Process, View};
use crate::error::StateError;
use crate::state::{EnvironmentState, LIdx, Layout, SIdx, SlotRef, Unit};

/// Bi above which the uniform-temperature assumption is questionable.
pub const BIOT_WARNING_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalNode {
    pub entity: usize,
    pub slot: SIdx,
    pub mass: f64,
    pub specific_heat: f64,
    /// Ambient nodes have fixed temperature.
    pub is_ambient: bool,
}

impl ThermalNode {
    pub fn capacity(&self) -> f64 {
        self.mass * self.specific_heat
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkKind {
    Conduction {
        conductivity: f64,
        area: f64,
        thickness: f64,
    },
    Convection {
        h: f64,
        area: f64,
    },
    Generation {
        k_gen: f64,
        target: SIdx,
    },
}

impl LinkKind {
    fn name(&self) -> &'static str {
        match self {
            LinkKind::Conduction { .. } => "cond",
            LinkKind::Convection { .. } => "conv",
            LinkKind::Generation { .. } => "gen",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalLink {
    pub id: String,
    pub kind: LinkKind,
    /// Node receiving `heat_flow`.
    pub a: SIdx,
    /// Other endpoint; `None` for generation.
    pub b: Option<SIdx>,
    pub gate: Option<LIdx>,
}

impl ThermalLink {
    /// Heat flow into node `a` in W, evaluated on `s`.
    pub fn heat_flow(&self, s: &[f64]) -> f64 {
        let ta = s[self.a.0];
        match self.kind {
            LinkKind::Conduction {
                conductivity,
                area,
                thickness,
            } => conductivity * area / thickness * (s[self.b.expect("conduction has two ends").0] - ta),
            LinkKind::Convection { h, area } => h * area * (s[self.b.expect("convection has two ends").0] - ta),
            LinkKind::Generation { k_gen, target } => k_gen * (s[target.0] - ta),
        }
    }
}

/// Registered process for one link.
struct LinkProcess {
    link: ThermalLink,
    gate_name: String,
    /// 1/(m·C) of each endpoint, zero for ambient.
    inv_cap_a: f64,
    inv_cap_b: f64,
}

impl Process for LinkProcess {
    fn id(&self) -> &str {
        &self.link.id
    }

    fn slots(&self) -> Vec<SlotRef> {
        let mut v = vec![SlotRef::S(self.link.a)];
        v.extend(self.link.b.map(SlotRef::S));
        if let LinkKind::Generation { target, .. } = self.link.kind {
            v.push(SlotRef::S(target));
        }
        v.extend(self.link.gate.map(SlotRef::L));
        v
    }

    fn precondition<'a>(&'a self, view: &View<'_>) -> Result<(), &'a str> {
        match self.link.gate {
            Some(g) if !view.l[g.0] => Err(&self.gate_name),
            _ => Ok(()),
        }
    }

    fn contribute(&self, view: &View<'_>, ds: &mut [f64]) {
        let q = self.link.heat_flow(view.s);
        ds[self.link.a.0] += q * self.inv_cap_a;
        if let Some(b) = self.link.b {
            ds[b.0] -= q * self.inv_cap_b;
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), StateError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(StateError::NonPositiveParameter(name.to_string()))
    }
}

/// Adds a thermal node with temperature slot `T` on `entity`.
pub fn add_thermal_node(
    env: &mut EnvironmentState,
    entity: &str,
    mass: f64,
    specific_heat: f64,
    t0: f64,
) -> Result<SIdx, StateError> {
    add_thermal_node_named(env, entity, "T", mass, specific_heat, t0)
}

/// Adds a thermal node with a custom temperature slot name, for entities
/// carrying more than one body (a vessel wall and its contents).
pub fn add_thermal_node_named(
    env: &mut EnvironmentState,
    entity: &str,
    slot: &str,
    mass: f64,
    specific_heat: f64,
    t0: f64,
) -> Result<SIdx, StateError> {
    let e = env.entity_index(entity)?;
    env.ensure_not_started(entity)?;
    positive("m", mass)?;
    positive("C", specific_heat)?;
    positive("T0", t0)?;
    let s = env.add_s_slot(e, slot, Unit::Kelvin, false)?;
    env.vectors.s[s.0] = t0;
    env.layout_mut().thermal_nodes.push(ThermalNode {
        entity: e,
        slot: s,
        mass,
        specific_heat,
        is_ambient: false,
    });
    Ok(s)
}

/// Resolves `entity.slot` to a registered thermal node.
pub fn node(env: &EnvironmentState, entity: &str, slot: &str) -> Result<SIdx, StateError> {
    let qualified = format!("{entity}.{slot}");
    let s = env
        .s_slot(entity, slot)
        .map_err(|_| StateError::UnknownNode(qualified.clone()))?;
    if find_node(env.layout(), s).is_none() {
        return Err(StateError::UnknownNode(qualified));
    }
    Ok(s)
}

fn find_node(layout: &Layout, slot: SIdx) -> Option<&ThermalNode> {
    layout.thermal_nodes.iter().find(|n| n.slot == slot)
}

/// Registers a link as a gated process.
pub fn add_link(env: &mut EnvironmentState, link: ThermalLink) -> Result<(), StateError> {
    let layout = env.layout();
    let node_a = find_node(layout, link.a)
        .ok_or_else(|| StateError::UnknownNode(slot_label(layout, link.a)))?
        .clone();
    let node_b = match link.b {
        Some(b) => Some(
            find_node(layout, b)
                .ok_or_else(|| StateError::UnknownNode(slot_label(layout, b)))?
                .clone(),
        ),
        None => None,
    };
    match link.kind {
        LinkKind::Conduction {
            conductivity,
            area,
            thickness,
        } => {
            positive("k", conductivity)?;
            positive("A", area)?;
            positive("d", thickness)?;
            if node_b.is_none() {
                return Err(StateError::UnknownNode(format!("{}: missing second node", link.id)));
            }
        }
        LinkKind::Convection { h, area } => {
            positive("h", h)?;
            positive("A", area)?;
            if node_b.is_none() {
                return Err(StateError::UnknownNode(format!("{}: missing ambient node", link.id)));
            }
        }
        LinkKind::Generation { k_gen, target } => {
            positive("K_gen", k_gen)?;
            if target.0 >= layout.s_meta.len() {
                return Err(StateError::UnknownSlot(format!("{}: target", link.id)));
            }
        }
    }
    if node_a.is_ambient {
        return Err(StateError::UnknownNode(format!(
            "{}: ambient node cannot receive heat",
            link.id
        )));
    }
    if node_b.as_ref().map(|b| b.slot) == Some(link.a) {
        return Err(StateError::UnknownNode(format!("{}: link to itself", link.id)));
    }
    let gate_name = match link.gate {
        Some(g) if g.0 < layout.l_meta.len() => format!("gate:{}", layout.l_name(g)),
        Some(_) => return Err(StateError::UnknownSlot(format!("{}: gate", link.id))),
        None => String::new(),
    };
    let inv = |n: &ThermalNode| if n.is_ambient { 0.0 } else { 1.0 / n.capacity() };
    let process = LinkProcess {
        inv_cap_a: inv(&node_a),
        inv_cap_b: node_b.as_ref().map_or(0.0, inv),
        gate_name,
        link: link.clone(),
    };
    env.register_process(Arc::new(process))?;
    env.layout_mut().thermal_links.push(link);
    Ok(())
}

fn slot_label(layout: &Layout, s: SIdx) -> String {
    if s.0 < layout.s_meta.len() {
        layout.s_name(s)
    } else {
        format!("s[{}]", s.0)
    }
}

fn link_id(env: &EnvironmentState, kind: &LinkKind, a: SIdx, b: Option<SIdx>) -> String {
    let l = env.layout();
    match b {
        Some(b) => format!("{}:{}-{}", kind.name(), l.s_name(a), l.s_name(b)),
        None => format!("{}:{}", kind.name(), l.s_name(a)),
    }
}

/// Conduction between two nodes, `k·A/d` in W/K.
pub fn conduction(
    env: &mut EnvironmentState,
    a: SIdx,
    b: SIdx,
    conductivity: f64,
    area: f64,
    thickness: f64,
    gate: Option<LIdx>,
) -> Result<(), StateError> {
    let kind = LinkKind::Conduction {
        conductivity,
        area,
        thickness,
    };
    let id = link_id(env, &kind, a, Some(b));
    add_link(
        env,
        ThermalLink {
            id,
            kind,
            a,
            b: Some(b),
            gate,
        },
    )
}

/// Convection from `node` to `ambient`.
pub fn convection(env: &mut EnvironmentState, node: SIdx, ambient: SIdx, h: f64, area: f64) -> Result<(), StateError> {
    let kind = LinkKind::Convection { h, area };
    let id = link_id(env, &kind, node, Some(ambient));
    add_link(
        env,
        ThermalLink {
            id,
            kind,
            a: node,
            b: Some(ambient),
            gate: None,
        },
    )
}

/// Proportional heat generation toward the setpoint slot `target`.
pub fn generation(
    env: &mut EnvironmentState,
    node: SIdx,
    k_gen: f64,
    target: SIdx,
    gate: Option<LIdx>,
) -> Result<(), StateError> {
    let kind = LinkKind::Generation { k_gen, target };
    let id = link_id(env, &kind, node, None);
    add_link(
        env,
        ThermalLink {
            id,
            kind,
            a: node,
            b: None,
            gate,
        },
    )
}

/// Per-node `dT/dt` from the current state, gates applied.
pub fn thermal_process(env: &EnvironmentState) -> Vec<(String, f64)> {
    let layout = env.layout();
    let s = env.s();
    let l = env.l();
    let mut out: Vec<(SIdx, f64)> = layout
        .thermal_nodes
        .iter()
        .filter(|n| !n.is_ambient)
        .map(|n| (n.slot, 0.0))
        .collect();
    let cap = |slot: SIdx| find_node(layout, slot).filter(|n| !n.is_ambient).map(|n| n.capacity());
    for link in &layout.thermal_links {
        if link.gate.is_some_and(|g| !l[g.0]) {
            continue;
        }
        let q = link.heat_flow(s);
        for (slot, d) in out.iter_mut() {
            if *slot == link.a {
                *d += q / cap(link.a).unwrap();
            } else if Some(*slot) == link.b {
                *d -= q / cap(*slot).unwrap();
            }
        }
    }
    out.into_iter().map(|(slot, d)| (layout.s_name(slot), d)).collect()
}

/// Σ m·C·T over non-ambient nodes, in J (relative to 0 K).
pub fn enthalpy(env: &EnvironmentState) -> f64 {
    env.layout()
        .thermal_nodes
        .iter()
        .filter(|n| !n.is_ambient)
        .map(|n| n.capacity() * env.s()[n.slot.0])
        .sum()
}

/// Explicit-Euler stability bound `2·min(m·C / ΣG)` over nodes, where ΣG
/// sums the conductances of every link touching the node.
pub fn stable_dt_limit(env: &EnvironmentState) -> f64 {
    let layout = env.layout();
    layout
        .thermal_nodes
        .iter()
        .filter(|n| !n.is_ambient)
        .map(|n| {
            let g: f64 = layout
                .thermal_links
                .iter()
                .filter(|l| l.a == n.slot || l.b == Some(n.slot))
                .map(|l| match l.kind {
                    LinkKind::Conduction {
                        conductivity,
                        area,
                        thickness,
                    } => conductivity * area / thickness,
                    LinkKind::Convection { h, area } => h * area,
                    LinkKind::Generation { k_gen, .. } => k_gen,
                })
                .sum();
            if g > 0.0 {
                2.0 * n.capacity() / g
            } else {
                f64::INFINITY
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// `Bi = h·L_c/k` with `L_c = V/A`. Logs a warning above 0.1.
pub fn biot_number(h: f64, k: f64, volume: f64, area: f64) -> Result<f64, StateError> {
    positive("h", h)?;
    positive("k", k)?;
    positive("volume", volume)?;
    positive("area", area)?;
    let bi = h * (volume / area) / k;
    if bi > BIOT_WARNING_THRESHOLD {
        log::warn!("Biot number {bi:.3} exceeds {BIOT_WARNING_THRESHOLD}; lumped temperature is approximate");
    }
    Ok(bi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvectionRegime {
    ConductionDominated,
    Transition,
    ConvectionDominated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rayleigh {
    pub grashof: f64,
    pub prandtl: f64,
    pub ra: f64,
    pub regime: ConvectionRegime,
}

/// `Ra = Gr·Pr`, `Gr = g·β·ΔT·L³/ν²`, `Pr = ν/α`.
///
/// Regimes: `Ra < 1e3` conduction, `1e3 ≤ Ra ≤ 1e5` transition, above that
/// convection.
pub fn rayleigh_number(g: f64, beta: f64, dt: f64, length: f64, nu: f64, alpha: f64) -> Result<Rayleigh, StateError> {
    positive("nu", nu)?;
    positive("alpha", alpha)?;
    positive("L", length)?;
    let grashof = g * beta * dt * length.powi(3) / (nu * nu);
    let prandtl = nu / alpha;
    let ra = grashof * prandtl;
    let regime = if ra < 1e3 {
        ConvectionRegime::ConductionDominated
    } else if ra <= 1e5 {
        ConvectionRegime::Transition
    } else {
        ConvectionRegime::ConvectionDominated
    };
    Ok(Rayleigh {
        grashof,
        prandtl,
        ra,
        regime,
    })
}
