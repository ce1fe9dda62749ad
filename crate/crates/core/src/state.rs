//! Environment representation: entity registry, the partitioned state
//! vectors and the simulation clock.
//!
//! Every environment carries three vectors:
//!
//! * `x` – the kinematic proxy. One `support` slot per entity (what it rests
//!   on) plus the liquid-handler `well` slot. Values are entity handles.
//! * `s` – continuous semantic state (temperatures, solvent masses, species
//!   amounts, setpoints, counters), each slot with unit metadata.
//! * `l` – logical state (heater on, tip loaded, contact flags).
//!
//! All slots are owned by exactly one entity. The layout (entities, slot
//! metadata, registered processes and events) is immutable once stepping
//! starts and is shared between batch copies.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{Event, Integrator, Process};
use crate::error::StateError;
use crate::kinetics::Species;
use crate::thermal::{ThermalLink, ThermalNode};

/// Default fixed step in seconds.
pub const DEFAULT_DT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EntityId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl From<String> for EntityId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl std::borrow::Borrow<str> for EntityId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    Kelvin,
    Kilogram,
    Mole,
    MolPerKg,
    Radian,
    Microliter,
    Count,
    Flag,
    Entity,
}

impl Unit {
    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Kelvin => "K",
            Unit::Kilogram => "kg",
            Unit::Mole => "mol",
            Unit::MolPerKg => "mol/kg",
            Unit::Radian => "rad",
            Unit::Microliter => "uL",
            Unit::Count => "count",
            Unit::Flag => "bool",
            Unit::Entity => "id",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct XIdx(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SIdx(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LIdx(pub(crate) usize);

impl SIdx {
    pub fn index(self) -> usize {
        self.0
    }
}

impl LIdx {
    pub fn index(self) -> usize {
        self.0
    }
}

impl XIdx {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A reference into one of the three state vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlotRef {
    X(XIdx),
    S(SIdx),
    L(LIdx),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotMeta {
    pub owner: usize,
    pub name: String,
    pub unit: Unit,
    /// Clamped at zero after integration (amounts, masses).
    pub nonneg: bool,
    /// Never integrated (ambient temperature).
    pub fixed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContainerParams {
    /// Empty vessel mass in kg, counted by scales.
    pub tare_mass: f64,
    /// Liquid density in kg/L used for volume conversions.
    pub density: f64,
}

impl Default for ContainerParams {
    fn default() -> Self {
        Self {
            tare_mass: 0.0,
            density: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeaterParams {
    /// Proportional heat-source constant, W/K.
    pub k_gen: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiquidHandlerParams {
    pub tip_capacity_ul: f64,
    pub tips: u32,
}

impl Default for LiquidHandlerParams {
    fn default() -> Self {
        Self {
            tip_capacity_ul: 1000.0,
            tips: 96,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaucetParams {
    /// Outflow per unit knob angle, kg/(s·rad).
    pub flow_coefficient: f64,
    pub max_angle: f64,
    pub target: EntityId,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EntityKind {
    Container(ContainerParams),
    Heater(HeaterParams),
    LiquidHandler(LiquidHandlerParams),
    Scale,
    Faucet(FaucetParams),
    RobotProxy,
    Ambient { temperature: f64 },
}

impl EntityKind {
    pub fn name(&self) -> &'static str {
        match self {
            EntityKind::Container(_) => "container",
            EntityKind::Heater(_) => "heater",
            EntityKind::LiquidHandler(_) => "liquid-handler",
            EntityKind::Scale => "scale",
            EntityKind::Faucet(_) => "faucet",
            EntityKind::RobotProxy => "robot-proxy",
            EntityKind::Ambient { .. } => "ambient",
        }
    }

    pub(crate) fn is_movable(&self) -> bool {
        !matches!(self, EntityKind::Ambient { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialValue {
    Real(f64),
    Flag(bool),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntitySpec {
    pub id: EntityId,
    pub kind: EntityKind,
    /// Initial slot values overriding the zero/false defaults.
    pub initial: Vec<(String, InitialValue)>,
    /// What the entity initially rests on.
    pub support: Option<EntityId>,
}

impl EntitySpec {
    pub fn new(id: impl Into<EntityId>, kind: EntityKind) -> Self {
        Self {
            id: id.into(),
            kind,
            initial: Vec::new(),
            support: None,
        }
    }

    pub fn with_value(mut self, slot: &str, value: f64) -> Self {
        self.initial.push((slot.to_string(), InitialValue::Real(value)));
        self
    }

    pub fn with_flag(mut self, slot: &str, value: bool) -> Self {
        self.initial.push((slot.to_string(), InitialValue::Flag(value)));
        self
    }

    pub fn on(mut self, support: impl Into<EntityId>) -> Self {
        self.support = Some(support.into());
        self
    }

    pub fn container(id: &str) -> Self {
        Self::new(id, EntityKind::Container(ContainerParams::default()))
    }

    pub fn heater(id: &str, k_gen: f64) -> Self {
        Self::new(id, EntityKind::Heater(HeaterParams { k_gen }))
    }

    pub fn ambient(id: &str, temperature: f64) -> Self {
        Self::new(id, EntityKind::Ambient { temperature })
    }
}

/// Solvent and per-species amount slots of anything that holds liquid.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSlots {
    pub solvent: SIdx,
    /// Indexed by species registration order.
    pub amounts: Vec<SIdx>,
}

#[derive(Debug, Clone)]
pub(crate) struct Entity {
    pub spec: EntitySpec,
    pub slots: Vec<SlotRef>,
    pub mixture: Option<MixtureSlots>,
    /// Liquid-handler tip contents.
    pub tip: Option<MixtureSlots>,
}

/// Immutable-after-start description of an environment.
#[derive(Clone, Default)]
pub struct Layout {
    pub(crate) entities: Vec<Entity>,
    pub(crate) by_id: HashMap<EntityId, usize>,
    pub(crate) species: Vec<Species>,
    pub(crate) species_index: HashMap<String, usize>,
    pub(crate) x_meta: Vec<SlotMeta>,
    pub(crate) s_meta: Vec<SlotMeta>,
    pub(crate) l_meta: Vec<SlotMeta>,
    pub(crate) slot_index: HashMap<(usize, String), SlotRef>,
    pub(crate) thermal_nodes: Vec<ThermalNode>,
    pub(crate) thermal_links: Vec<ThermalLink>,
    pub(crate) processes: Vec<Arc<dyn Process>>,
    pub(crate) events: Vec<Arc<dyn Event>>,
}

impl fmt::Debug for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Layout")
            .field("entities", &self.entities.len())
            .field("x", &self.x_meta.len())
            .field("s", &self.s_meta.len())
            .field("l", &self.l_meta.len())
            .field("processes", &self.processes.len())
            .field("events", &self.events.len())
            .finish()
    }
}

impl Layout {
    pub fn entity_index(&self, id: &str) -> Result<usize, StateError> {
        self.by_id
            .get(id)
            .copied()
            .ok_or_else(|| StateError::UnknownEntity(id.to_string()))
    }

    pub fn entity_id(&self, idx: usize) -> &EntityId {
        &self.entities[idx].spec.id
    }

    pub fn entity_kind(&self, idx: usize) -> &EntityKind {
        &self.entities[idx].spec.kind
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = &EntityId> {
        self.entities.iter().map(|e| &e.spec.id)
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    pub fn species_index(&self, name: &str) -> Result<usize, StateError> {
        self.species_index
            .get(name)
            .copied()
            .ok_or_else(|| StateError::UnknownSpecies(name.to_string()))
    }

    pub fn slot(&self, entity: usize, name: &str) -> Option<SlotRef> {
        self.slot_index.get(&(entity, name.to_string())).copied()
    }

    pub fn s_meta(&self) -> &[SlotMeta] {
        &self.s_meta
    }

    pub fn l_meta(&self) -> &[SlotMeta] {
        &self.l_meta
    }

    pub fn x_meta(&self) -> &[SlotMeta] {
        &self.x_meta
    }

    pub fn processes(&self) -> &[Arc<dyn Process>] {
        &self.processes
    }

    pub fn events(&self) -> &[Arc<dyn Event>] {
        &self.events
    }

    pub fn thermal_nodes(&self) -> &[ThermalNode] {
        &self.thermal_nodes
    }

    pub fn thermal_links(&self) -> &[ThermalLink] {
        &self.thermal_links
    }

    pub(crate) fn mixture_slots(&self, entity: usize) -> Option<&MixtureSlots> {
        self.entities[entity].mixture.as_ref()
    }

    pub(crate) fn tip_slots(&self, entity: usize) -> Option<&MixtureSlots> {
        self.entities[entity].tip.as_ref()
    }

    /// Qualified `<entity>.<slot>` name for an s slot.
    pub fn s_name(&self, idx: SIdx) -> String {
        let m = &self.s_meta[idx.0];
        format!("{}.{}", self.entities[m.owner].spec.id, m.name)
    }

    pub fn l_name(&self, idx: LIdx) -> String {
        let m = &self.l_meta[idx.0];
        format!("{}.{}", self.entities[m.owner].spec.id, m.name)
    }

    pub fn slot_count(&self, entity: usize) -> usize {
        self.entities[entity].slots.len()
    }
}

/// The mutable part of an environment: exactly what a step reads and writes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateVectors {
    pub x: Vec<Option<usize>>,
    pub s: Vec<f64>,
    pub l: Vec<bool>,
    /// Per-process enable flags (events may toggle these).
    pub process_enabled: Vec<bool>,
    /// Whether each process was active in the previous step.
    pub process_active: Vec<bool>,
    pub step: u64,
}

impl StateVectors {
    /// Copies `other` into `self`, reusing the existing allocations.
    pub(crate) fn copy_from(&mut self, other: &StateVectors) {
        self.x.clone_from(&other.x);
        self.s.clone_from(&other.s);
        self.l.clone_from(&other.l);
        self.process_enabled.clone_from(&other.process_enabled);
        self.process_active.clone_from(&other.process_active);
        self.step = other.step;
    }
}

/// One entry of the accumulated precondition-failure log.
#[derive(Debug, Clone, PartialEq)]
pub struct PreconditionFailure {
    pub time: f64,
    /// Process or command source (`<entity>.<channel>` for commands).
    pub source: String,
    pub precondition: String,
}

/// Accumulated amounts moved from one holder to another.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransferTotals {
    pub solvent: f64,
    /// Indexed by species.
    pub moles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PeakWatch {
    pub container: usize,
    pub species: usize,
    pub peak: f64,
}

/// The value returned by [`EnvironmentState::read_slot`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reading {
    pub value: f64,
    pub unit: Unit,
}

#[derive(Debug, Clone)]
pub struct EnvironmentState {
    pub(crate) layout: Arc<Layout>,
    pub(crate) vectors: StateVectors,
    pub(crate) dt: f64,
    pub rng_seed: u64,
    pub integrator: Integrator,
    /// When false only the kinematic proxy is stepped.
    pub semantics_enabled: bool,
    pub(crate) failures: Vec<PreconditionFailure>,
    pub(crate) transfers: Transfers,
    pub(crate) peaks: Vec<PeakWatch>,
    pub(crate) scratch: Vec<f64>,
    pub(crate) snapshot: StateVectors,
}

/// Cumulative transfer totals per (source, destination) with a backup that
/// is taken on the first write of a step.
#[derive(Debug, Clone, Default)]
pub(crate) struct Transfers {
    pub(crate) totals: BTreeMap<(usize, usize), TransferTotals>,
    backup: Option<BTreeMap<(usize, usize), TransferTotals>>,
}

impl Transfers {
    pub(crate) fn begin_step(&mut self) {
        self.backup = None;
    }

    pub(crate) fn rollback(&mut self) {
        if let Some(b) = self.backup.take() {
            self.totals = b;
        }
    }

    pub(crate) fn entry(&mut self, src: usize, dst: usize, n_species: usize) -> &mut TransferTotals {
        if self.backup.is_none() {
            self.backup = Some(self.totals.clone());
        }
        self.totals.entry((src, dst)).or_insert_with(|| TransferTotals {
            solvent: 0.0,
            moles: vec![0.0; n_species],
        })
    }
}

impl Default for EnvironmentState {
    fn default() -> Self {
        Self::new(DEFAULT_DT).expect("default dt is positive")
    }
}

impl EnvironmentState {
    pub fn new(dt: f64) -> Result<Self, StateError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(StateError::NonPositiveParameter("dt".into()));
        }
        Ok(Self {
            layout: Arc::new(Layout::default()),
            vectors: StateVectors {
                x: Vec::new(),
                s: Vec::new(),
                l: Vec::new(),
                process_enabled: Vec::new(),
                process_active: Vec::new(),
                step: 0,
            },
            dt,
            rng_seed: 0,
            integrator: Integrator::Euler,
            semantics_enabled: true,
            failures: Vec::new(),
            transfers: Transfers::default(),
            peaks: Vec::new(),
            scratch: Vec::new(),
            snapshot: StateVectors::default(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step_index(&self) -> u64 {
        self.vectors.step
    }

    /// Simulation time. Computed from the step counter so it never drifts.
    pub fn time(&self) -> f64 {
        self.vectors.step as f64 * self.dt
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn vectors(&self) -> &StateVectors {
        &self.vectors
    }

    pub fn s(&self) -> &[f64] {
        &self.vectors.s
    }

    pub fn l(&self) -> &[bool] {
        &self.vectors.l
    }

    pub fn x(&self) -> &[Option<usize>] {
        &self.vectors.x
    }

    pub fn failures(&self) -> &[PreconditionFailure] {
        &self.failures
    }

    pub(crate) fn ensure_not_started(&self, what: &str) -> Result<(), StateError> {
        if self.vectors.step != 0 {
            return Err(StateError::RegistrationAfterStart(what.to_string()));
        }
        Ok(())
    }

    pub(crate) fn layout_mut(&mut self) -> &mut Layout {
        Arc::make_mut(&mut self.layout)
    }

    fn push_slot(&mut self, owner: usize, name: &str, unit: Unit, kind: SlotKind) -> Result<SlotRef, StateError> {
        let key = (owner, name.to_string());
        if self.layout.slot_index.contains_key(&key) {
            let id = self.layout.entities[owner].spec.id.clone();
            return Err(StateError::DuplicateId(format!("{id}.{name}")));
        }
        let meta = SlotMeta {
            owner,
            name: name.to_string(),
            unit,
            nonneg: matches!(kind, SlotKind::Amount),
            fixed: matches!(kind, SlotKind::Fixed),
        };
        let slot = match kind {
            SlotKind::Logical => {
                self.vectors.l.push(false);
                let layout = self.layout_mut();
                layout.l_meta.push(meta);
                SlotRef::L(LIdx(layout.l_meta.len() - 1))
            }
            SlotKind::Kinematic => {
                self.vectors.x.push(None);
                let layout = self.layout_mut();
                layout.x_meta.push(meta);
                SlotRef::X(XIdx(layout.x_meta.len() - 1))
            }
            SlotKind::Real | SlotKind::Amount | SlotKind::Fixed => {
                self.vectors.s.push(0.0);
                let layout = self.layout_mut();
                layout.s_meta.push(meta);
                SlotRef::S(SIdx(layout.s_meta.len() - 1))
            }
        };
        let layout = self.layout_mut();
        layout.slot_index.insert(key, slot);
        layout.entities[owner].slots.push(slot);
        Ok(slot)
    }

    pub(crate) fn add_s_slot(
        &mut self,
        owner: usize,
        name: &str,
        unit: Unit,
        amount: bool,
    ) -> Result<SIdx, StateError> {
        let kind = if amount { SlotKind::Amount } else { SlotKind::Real };
        match self.push_slot(owner, name, unit, kind)? {
            SlotRef::S(i) => Ok(i),
            _ => unreachable!(),
        }
    }

    pub(crate) fn add_fixed_slot(&mut self, owner: usize, name: &str, unit: Unit) -> Result<SIdx, StateError> {
        match self.push_slot(owner, name, unit, SlotKind::Fixed)? {
            SlotRef::S(i) => Ok(i),
            _ => unreachable!(),
        }
    }

    pub(crate) fn add_l_slot(&mut self, owner: usize, name: &str) -> Result<LIdx, StateError> {
        match self.push_slot(owner, name, Unit::Flag, SlotKind::Logical)? {
            SlotRef::L(i) => Ok(i),
            _ => unreachable!(),
        }
    }

    fn add_x_slot(&mut self, owner: usize, name: &str) -> Result<XIdx, StateError> {
        match self.push_slot(owner, name, Unit::Entity, SlotKind::Kinematic)? {
            SlotRef::X(i) => Ok(i),
            _ => unreachable!(),
        }
    }

    fn add_mixture_slots(&mut self, owner: usize, prefix: &str) -> Result<MixtureSlots, StateError> {
        let solvent = self.add_s_slot(owner, &format!("{prefix}solvent"), Unit::Kilogram, true)?;
        let names: Vec<String> = self.layout.species.iter().map(|s| s.name.clone()).collect();
        let mut amounts = Vec::with_capacity(names.len());
        for name in names {
            amounts.push(self.add_s_slot(owner, &format!("{prefix}n.{name}"), Unit::Mole, true)?);
        }
        Ok(MixtureSlots { solvent, amounts })
    }

    /// Adds a user-defined continuous slot to an entity, initialized to
    /// zero. `nonneg` slots are clamped at zero after integration.
    pub fn add_slot(&mut self, entity: &str, name: &str, unit: Unit, nonneg: bool) -> Result<SIdx, StateError> {
        self.ensure_not_started(entity)?;
        let owner = self.entity_index(entity)?;
        self.add_s_slot(owner, name, unit, nonneg)
    }

    /// Adds a user-defined logical slot to an entity.
    pub fn add_flag(&mut self, entity: &str, name: &str, value: bool) -> Result<LIdx, StateError> {
        self.ensure_not_started(entity)?;
        let owner = self.entity_index(entity)?;
        let l = self.add_l_slot(owner, name)?;
        self.vectors.l[l.0] = value;
        Ok(l)
    }

    /// Registers an entity and appends its declared slots.
    pub fn register_entity(&mut self, spec: EntitySpec) -> Result<EntityId, StateError> {
        self.ensure_not_started(spec.id.as_str())?;
        if self.layout.by_id.contains_key(spec.id.as_str()) {
            return Err(StateError::DuplicateId(spec.id.to_string()));
        }
        validate_kind(&spec)?;
        let support = match &spec.support {
            Some(s) => Some(self.layout.entity_index(s.as_str())?),
            None => None,
        };
        let idx = self.layout.entities.len();
        let id = spec.id.clone();
        let kind = spec.kind.clone();
        let initial = spec.initial.clone();
        {
            let layout = self.layout_mut();
            layout.by_id.insert(id.clone(), idx);
            layout.entities.push(Entity {
                spec,
                slots: Vec::new(),
                mixture: None,
                tip: None,
            });
        }

        if kind.is_movable() {
            let x = self.add_x_slot(idx, "support")?;
            self.vectors.x[x.0] = support;
        }
        match &kind {
            EntityKind::Container(_) => {
                let m = self.add_mixture_slots(idx, "")?;
                self.layout_mut().entities[idx].mixture = Some(m);
            }
            EntityKind::Heater(_) => {
                self.add_l_slot(idx, "heaterOn")?;
                self.add_s_slot(idx, "T_target", Unit::Kelvin, false)?;
            }
            EntityKind::LiquidHandler(p) => {
                self.add_x_slot(idx, "well")?;
                self.add_l_slot(idx, "tipLoaded")?;
                self.add_l_slot(idx, "tipInSolution")?;
                self.add_s_slot(idx, "tip_volume", Unit::Microliter, true)?;
                self.add_s_slot(idx, "disposals", Unit::Count, false)?;
                let tips = self.add_s_slot(idx, "tips_left", Unit::Count, true)?;
                self.vectors.s[tips.0] = p.tips as f64;
                let m = self.add_mixture_slots(idx, "tip.")?;
                self.layout_mut().entities[idx].tip = Some(m);
            }
            EntityKind::Scale | EntityKind::RobotProxy => {}
            EntityKind::Faucet(_) => {
                self.add_s_slot(idx, "angle", Unit::Radian, false)?;
            }
            EntityKind::Ambient { temperature } => {
                let t = self.add_fixed_slot(idx, "T", Unit::Kelvin)?;
                self.vectors.s[t.0] = *temperature;
                self.layout_mut().thermal_nodes.push(ThermalNode {
                    entity: idx,
                    slot: t,
                    mass: 0.0,
                    specific_heat: 0.0,
                    is_ambient: true,
                });
            }
        }

        for (slot, value) in initial {
            self.write_initial(idx, &slot, value)?;
        }
        Ok(id)
    }

    fn write_initial(&mut self, entity: usize, slot: &str, value: InitialValue) -> Result<(), StateError> {
        let qualified = || format!("{}.{}", self.layout.entities[entity].spec.id, slot);
        match (self.layout.slot(entity, slot), value) {
            (Some(SlotRef::S(i)), InitialValue::Real(v)) => {
                if !v.is_finite() {
                    return Err(StateError::NonFiniteParameter(qualified()));
                }
                self.vectors.s[i.0] = v;
                Ok(())
            }
            (Some(SlotRef::L(i)), InitialValue::Flag(v)) => {
                self.vectors.l[i.0] = v;
                Ok(())
            }
            _ => Err(StateError::UnknownSlot(qualified())),
        }
    }

    /// Sets a slot before the first step. Used for initial conditions that
    /// are established after registration (thermal nodes, mixtures).
    pub fn set_initial(&mut self, id: &str, slot: &str, value: InitialValue) -> Result<(), StateError> {
        self.ensure_not_started(id)?;
        let e = self.layout.entity_index(id)?;
        self.write_initial(e, slot, value)
    }

    /// Registers a species; every liquid holder gains an amount slot for it.
    pub fn register_species(&mut self, species: Species) -> Result<usize, StateError> {
        self.ensure_not_started(&species.name)?;
        if self.layout.species_index.contains_key(&species.name) {
            return Err(StateError::DuplicateId(species.name.clone()));
        }
        let name = species.name.clone();
        let sp = {
            let layout = self.layout_mut();
            layout.species.push(species);
            let sp = layout.species.len() - 1;
            layout.species_index.insert(name.clone(), sp);
            sp
        };
        for e in 0..self.layout.entities.len() {
            if self.layout.entities[e].mixture.is_some() {
                let slot = self.add_s_slot(e, &format!("n.{name}"), Unit::Mole, true)?;
                self.layout_mut().entities[e]
                    .mixture
                    .as_mut()
                    .unwrap()
                    .amounts
                    .push(slot);
            }
            if self.layout.entities[e].tip.is_some() {
                let slot = self.add_s_slot(e, &format!("tip.n.{name}"), Unit::Mole, true)?;
                self.layout_mut().entities[e].tip.as_mut().unwrap().amounts.push(slot);
            }
        }
        Ok(sp)
    }

    pub fn entity_index(&self, id: &str) -> Result<usize, StateError> {
        self.layout.entity_index(id)
    }

    /// Resolves a stored slot.
    pub fn slot(&self, id: &str, slot: &str) -> Result<SlotRef, StateError> {
        let e = self.layout.entity_index(id)?;
        self.layout
            .slot(e, slot)
            .ok_or_else(|| StateError::UnknownSlot(format!("{id}.{slot}")))
    }

    pub fn s_slot(&self, id: &str, slot: &str) -> Result<SIdx, StateError> {
        match self.slot(id, slot)? {
            SlotRef::S(i) => Ok(i),
            _ => Err(StateError::UnknownSlot(format!("{id}.{slot}"))),
        }
    }

    pub fn l_slot(&self, id: &str, slot: &str) -> Result<LIdx, StateError> {
        match self.slot(id, slot)? {
            SlotRef::L(i) => Ok(i),
            _ => Err(StateError::UnknownSlot(format!("{id}.{slot}"))),
        }
    }

    /// Reads a stored or derived slot without mutation.
    ///
    /// Besides stored slots, containers expose `<species>` as molality in
    /// mol/kg, and scales expose `reading` in kg.
    pub fn read_slot(&self, id: &str, slot: &str) -> Result<Reading, StateError> {
        let e = self.layout.entity_index(id)?;
        if let Some(r) = self.layout.slot(e, slot) {
            return Ok(match r {
                SlotRef::S(i) => Reading {
                    value: self.vectors.s[i.0],
                    unit: self.layout.s_meta[i.0].unit,
                },
                SlotRef::L(i) => Reading {
                    value: if self.vectors.l[i.0] { 1.0 } else { 0.0 },
                    unit: Unit::Flag,
                },
                SlotRef::X(i) => Reading {
                    value: self.vectors.x[i.0].map_or(-1.0, |v| v as f64),
                    unit: Unit::Entity,
                },
            });
        }
        match self.layout.entity_kind(e) {
            EntityKind::Container(_) => {
                if let Some(&sp) = self.layout.species_index.get(slot) {
                    return Ok(Reading {
                        value: self.molality_at(e, sp),
                        unit: Unit::MolPerKg,
                    });
                }
            }
            EntityKind::Scale if slot == "reading" => {
                return Ok(Reading {
                    value: crate::devices::scale_mass(self, e),
                    unit: Unit::Kilogram,
                });
            }
            _ => {}
        }
        Err(StateError::UnknownSlot(format!("{id}.{slot}")))
    }

    pub fn read_flag(&self, id: &str, slot: &str) -> Result<bool, StateError> {
        let l = self.l_slot(id, slot)?;
        Ok(self.vectors.l[l.0])
    }

    pub fn support_of(&self, id: &str) -> Result<Option<&EntityId>, StateError> {
        let e = self.layout.entity_index(id)?;
        Ok(match self.layout.slot(e, "support") {
            Some(SlotRef::X(i)) => self.vectors.x[i.0].map(|s| self.layout.entity_id(s)),
            _ => None,
        })
    }

    pub(crate) fn molality_at(&self, container: usize, species: usize) -> f64 {
        match self.layout.mixture_slots(container) {
            Some(m) => {
                let w = self.vectors.s[m.solvent.0];
                if w > 0.0 {
                    self.vectors.s[m.amounts[species].0] / w
                } else {
                    0.0
                }
            }
            None => 0.0,
        }
    }

    pub fn molality(&self, container: &str, species: &str) -> Result<f64, StateError> {
        let e = self.layout.entity_index(container)?;
        let sp = self.layout.species_index(species)?;
        if self.layout.mixture_slots(e).is_none() {
            return Err(StateError::WrongKind {
                entity: container.to_string(),
                kind: self.layout.entity_kind(e).name(),
                expected: "container",
            });
        }
        Ok(self.molality_at(e, sp))
    }

    /// Sum of amounts moved from `src` to `dst` by pours and pipetting.
    pub fn transferred(&self, src: &str, dst: &str) -> Result<TransferTotals, StateError> {
        let s = self.layout.entity_index(src)?;
        let d = self.layout.entity_index(dst)?;
        Ok(self
            .transfers
            .totals
            .get(&(s, d))
            .cloned()
            .unwrap_or_else(|| TransferTotals {
                solvent: 0.0,
                moles: vec![0.0; self.layout.species.len()],
            }))
    }

    /// Tracks the running maximum molality of a species in a container.
    pub fn watch_peak(&mut self, container: &str, species: &str) -> Result<(), StateError> {
        let e = self.layout.entity_index(container)?;
        let sp = self.layout.species_index(species)?;
        if self.peaks.iter().any(|p| p.container == e && p.species == sp) {
            return Ok(());
        }
        let peak = self.molality_at(e, sp);
        self.peaks.push(PeakWatch {
            container: e,
            species: sp,
            peak,
        });
        Ok(())
    }

    pub fn peak(&self, container: &str, species: &str) -> Option<f64> {
        let e = self.layout.entity_index(container).ok()?;
        let sp = self.layout.species_index(species).ok()?;
        self.peaks
            .iter()
            .find(|p| p.container == e && p.species == sp)
            .map(|p| p.peak)
    }

    pub(crate) fn update_peaks(&mut self) {
        for i in 0..self.peaks.len() {
            let (c, sp) = (self.peaks[i].container, self.peaks[i].species);
            let m = self.molality_at(c, sp);
            if m > self.peaks[i].peak {
                self.peaks[i].peak = m;
            }
        }
    }

    /// Total stored slot count across `x`, `s` and `l`.
    pub fn total_slots(&self) -> usize {
        self.vectors.x.len() + self.vectors.s.len() + self.vectors.l.len()
    }

    /// Deep, independent copies sharing the registered process/event set.
    pub fn clone_batch(&self, n: usize) -> Result<EnvironmentBatch, StateError> {
        if n == 0 {
            return Err(StateError::ZeroCount);
        }
        Ok(EnvironmentBatch {
            environments: (0..n).map(|_| self.clone()).collect(),
        })
    }
}

enum SlotKind {
    Real,
    Amount,
    Fixed,
    Logical,
    Kinematic,
}

fn validate_kind(spec: &EntitySpec) -> Result<(), StateError> {
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(StateError::NonPositiveParameter(format!("{}.{}", spec.id, name)))
        }
    };
    match &spec.kind {
        EntityKind::Container(p) => {
            positive("density", p.density)?;
            if !(p.tare_mass >= 0.0) {
                return Err(StateError::NonPositiveParameter(format!("{}.tare_mass", spec.id)));
            }
        }
        EntityKind::Heater(p) => positive("k_gen", p.k_gen)?,
        EntityKind::LiquidHandler(p) => positive("tip_capacity_ul", p.tip_capacity_ul)?,
        EntityKind::Faucet(p) => {
            positive("flow_coefficient", p.flow_coefficient)?;
            positive("max_angle", p.max_angle)?;
        }
        EntityKind::Ambient { temperature } => positive("temperature", *temperature)?,
        EntityKind::Scale | EntityKind::RobotProxy => {}
    }
    Ok(())
}

/// Independent environments stepped in lockstep.
#[derive(Debug, Clone)]
pub struct EnvironmentBatch {
    pub environments: Vec<EnvironmentState>,
}

impl EnvironmentBatch {
    pub fn len(&self) -> usize {
        self.environments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.environments.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&EnvironmentState> {
        self.environments.get(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beaker_env() -> EnvironmentState {
        let mut env = EnvironmentState::default();
        env.register_entity(EntitySpec::container("beaker")).unwrap();
        env
    }

    #[test]
    fn user_slots() {
        let mut env = beaker_env();
        let level = env.add_slot("beaker", "level", Unit::Kilogram, true).unwrap();
        let lid = env.add_flag("beaker", "lidOff", true).unwrap();
        assert_eq!(env.read_slot("beaker", "level").unwrap().unit, Unit::Kilogram);
        assert!(env.layout().s_meta()[level.index()].nonneg);
        assert!(env.l()[lid.index()]);
        assert!(matches!(
            env.add_flag("beaker", "lidOff", false),
            Err(StateError::DuplicateId(_))
        ));
        env.vectors.step = 1;
        assert!(matches!(
            env.add_slot("beaker", "late", Unit::Count, false),
            Err(StateError::RegistrationAfterStart(_))
        ));
    }

    #[test]
    fn heater_registration_adds_default_false_flag() {
        let mut env = EnvironmentState::default();
        let id = env.register_entity(EntitySpec::heater("hotplate", 20.0)).unwrap();
        assert_eq!(id.as_str(), "hotplate");
        assert!(!env.read_flag("hotplate", "heaterOn").unwrap());
        let r = env.read_slot("hotplate", "heaterOn").unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn duplicate_entity_is_rejected() {
        let mut env = beaker_env();
        assert_eq!(
            env.register_entity(EntitySpec::container("beaker")),
            Err(StateError::DuplicateId("beaker".into()))
        );
    }

    #[test]
    fn initial_value_reads_back_exactly() {
        let mut env = EnvironmentState::default();
        env.register_entity(EntitySpec::heater("h", 20.0).with_value("T_target", 298.15))
            .unwrap();
        let r = env.read_slot("h", "T_target").unwrap();
        assert_eq!(r.value, 298.15);
        assert_eq!(r.unit, Unit::Kelvin);
    }

    #[test]
    fn unknown_slot_and_entity() {
        let env = beaker_env();
        assert!(matches!(
            env.read_slot("beaker", "foo"),
            Err(StateError::UnknownSlot(_))
        ));
        assert!(matches!(env.read_slot("nope", "T"), Err(StateError::UnknownEntity(_))));
    }

    #[test]
    fn registration_after_start_fails() {
        let mut env = beaker_env();
        env.vectors.step = 1;
        assert!(matches!(
            env.register_entity(EntitySpec::container("b2")),
            Err(StateError::RegistrationAfterStart(_))
        ));
    }

    #[test]
    fn species_added_late_reach_every_container() {
        let mut env = beaker_env();
        env.register_species(Species::new("KI")).unwrap();
        env.register_entity(EntitySpec::container("b2")).unwrap();
        assert!(env.s_slot("beaker", "n.KI").is_ok());
        assert!(env.s_slot("b2", "n.KI").is_ok());
    }

    #[test]
    fn slot_ownership_partitions_vectors() {
        let mut env = beaker_env();
        env.register_species(Species::new("A")).unwrap();
        env.register_entity(EntitySpec::heater("h", 5.0)).unwrap();
        env.register_entity(EntitySpec::ambient("air", 298.15)).unwrap();
        env.register_entity(EntitySpec::new(
            "ot2",
            EntityKind::LiquidHandler(LiquidHandlerParams::default()),
        ))
        .unwrap();
        let owned: usize = (0..env.layout().entities.len())
            .map(|e| env.layout().slot_count(e))
            .sum();
        assert_eq!(owned, env.total_slots());
    }

    #[test]
    fn clone_batch_rejects_zero() {
        let env = beaker_env();
        assert_eq!(env.clone_batch(0).unwrap_err(), StateError::ZeroCount);
        assert_eq!(env.clone_batch(3).unwrap().len(), 3);
    }

    #[test]
    fn batch_copies_are_independent() {
        let env = beaker_env();
        let mut batch = env.clone_batch(2).unwrap();
        let w = env.s_slot("beaker", "solvent").unwrap();
        batch.environments[0].vectors.s[w.0] = 1.0;
        assert_eq!(batch.environments[1].vectors.s[w.0], 0.0);
        assert_eq!(env.vectors.s[w.0], 0.0);
    }

    #[test]
    fn non_positive_dt_is_rejected() {
        assert!(EnvironmentState::new(0.0).is_err());
        assert!(EnvironmentState::new(-0.01).is_err());
    }
}
