//! Mixtures, pour mass balance and order-based rate laws.
//!
//! Concentrations are molalities (mol per kg of solvent). Inside an
//! environment each liquid holder stores its solvent mass and the amount of
//! every species in moles; molality is derived on read. Rate laws are
//! evaluated on molality and integrated as `dn/dt = ν·rate·W`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{Process, View};
use crate::error::{KineticsError, StateError};
use crate::state::{EntityKind, EnvironmentState, InitialValue, MixtureSlots, SIdx, SlotRef};

/// Molar gas constant, J/(mol·K).
pub const R: f64 = 8.314462618;

/// Default Arrhenius temperature clamp, K.
pub const DEFAULT_CLAMP: (f64, f64) = (273.15, 473.15);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Species {
    pub name: String,
    /// g/mol. Species without a molar mass contribute no mass to scales.
    #[serde(default)]
    pub molar_mass: Option<f64>,
}

impl Species {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            molar_mass: None,
        }
    }

    pub fn with_molar_mass(mut self, g_per_mol: f64) -> Self {
        self.molar_mass = Some(g_per_mol);
        self
    }
}

/// A well-mixed solution outside any environment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mixture {
    /// kg.
    pub solvent_mass: f64,
    /// mol per species.
    pub moles: BTreeMap<String, f64>,
    pub color: Option<String>,
}

impl Mixture {
    pub fn molality(&self, species: &str) -> f64 {
        let n = self.moles.get(species).copied().unwrap_or(0.0);
        if self.solvent_mass > 0.0 {
            n / self.solvent_mass
        } else {
            0.0
        }
    }

    pub fn amount(&self, species: &str) -> f64 {
        self.moles.get(species).copied().unwrap_or(0.0)
    }
}

pub fn make_mixture(solvent_mass: f64, solutes: &[(&str, f64)]) -> Result<Mixture, KineticsError> {
    if !(solvent_mass > 0.0) || !solvent_mass.is_finite() {
        return Err(KineticsError::NonPositiveSolvent(solvent_mass));
    }
    let mut moles = BTreeMap::new();
    for &(sp, n) in solutes {
        if !(n >= 0.0) || !n.is_finite() {
            return Err(KineticsError::NegativeMoles {
                species: sp.to_string(),
                moles: n,
            });
        }
        *moles.entry(sp.to_string()).or_insert(0.0) += n;
    }
    Ok(Mixture {
        solvent_mass,
        moles,
        color: None,
    })
}

fn draw_fraction(mass: f64, available: f64) -> Result<(f64, f64), KineticsError> {
    if !(mass >= 0.0) || !mass.is_finite() {
        return Err(KineticsError::NegativeMass(mass));
    }
    if mass > available * (1.0 + 1e-9) + 1e-15 {
        return Err(KineticsError::Overdraw {
            requested: mass,
            available,
        });
    }
    if mass >= available {
        return Ok((available, 1.0));
    }
    Ok((mass, if available > 0.0 { mass / available } else { 0.0 }))
}

/// Moves `mass` kg of solvent from `src` to `dst` with proportional solutes.
pub fn pour(src: &Mixture, dst: &Mixture, mass: f64) -> Result<(Mixture, Mixture), KineticsError> {
    let (mass, f) = draw_fraction(mass, src.solvent_mass)?;
    let mut a = src.clone();
    let mut b = dst.clone();
    if f == 1.0 {
        a.solvent_mass = 0.0;
    } else {
        a.solvent_mass -= mass;
    }
    b.solvent_mass += mass;
    for (sp, n) in a.moles.iter_mut() {
        let moved = if f == 1.0 { *n } else { *n * f };
        *n -= moved;
        *b.moles.entry(sp.clone()).or_insert(0.0) += moved;
    }
    Ok((a, b))
}

/// [`pour`] on environment slots. Returns the solvent mass and per-species
/// moles actually moved.
pub(crate) fn move_liquid(
    s: &mut [f64],
    from: &MixtureSlots,
    to: &MixtureSlots,
    mass: f64,
) -> Result<(f64, Vec<f64>), KineticsError> {
    let (mass, f) = draw_fraction(mass, s[from.solvent.0])?;
    if f == 1.0 {
        s[from.solvent.0] = 0.0;
    } else {
        s[from.solvent.0] -= mass;
    }
    s[to.solvent.0] += mass;
    let mut moved = Vec::with_capacity(from.amounts.len());
    for (a, b) in from.amounts.iter().zip(&to.amounts) {
        let n = s[a.0];
        let m = if f == 1.0 { n } else { n * f };
        s[a.0] = n - m;
        s[b.0] += m;
        moved.push(m);
    }
    Ok((mass, moved))
}

pub fn arrhenius_k(a: f64, ea: f64, t: f64) -> Result<f64, KineticsError> {
    arrhenius_k_clamped(a, ea, t, DEFAULT_CLAMP)
}

/// `A·exp(−Ea/(R·T))` with `T` clamped to `clamp`.
pub fn arrhenius_k_clamped(a: f64, ea: f64, t: f64, clamp: (f64, f64)) -> Result<f64, KineticsError> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(KineticsError::NonPositiveA(a));
    }
    if !(ea >= 0.0) || !ea.is_finite() {
        return Err(KineticsError::NegativeEa(ea));
    }
    Ok(arrhenius_unchecked(a, ea, t, clamp))
}

fn arrhenius_unchecked(a: f64, ea: f64, t: f64, clamp: (f64, f64)) -> f64 {
    let t = t.clamp(clamp.0, clamp.1);
    a * (-ea / (R * t)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kinetics {
    ConstantK {
        k: f64,
    },
    /// `a` in units matching the overall order, `ea` in J/mol.
    Arrhenius {
        a: f64,
        ea: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reactant {
    pub species: String,
    pub coefficient: u32,
    pub order: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Product {
    pub species: String,
    pub coefficient: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionTemplate {
    pub id: String,
    pub reactants: Vec<Reactant>,
    pub products: Vec<Product>,
    pub kinetics: Kinetics,
    /// Allowed solution temperature in K, inclusive.
    pub t_range: Option<(f64, f64)>,
    /// Arrhenius evaluation clamp in K.
    pub clamp: (f64, f64),
    /// Containers the template applies in; `None` means all.
    pub scope: Option<Vec<String>>,
}

impl ReactionTemplate {
    pub fn new(id: impl Into<String>, kinetics: Kinetics) -> Self {
        Self {
            id: id.into(),
            reactants: Vec::new(),
            products: Vec::new(),
            kinetics,
            t_range: None,
            clamp: DEFAULT_CLAMP,
            scope: None,
        }
    }

    pub fn reactant(mut self, species: &str, coefficient: u32, order: f64) -> Self {
        self.reactants.push(Reactant {
            species: species.to_string(),
            coefficient,
            order,
        });
        self
    }

    pub fn product(mut self, species: &str, coefficient: u32) -> Self {
        self.products.push(Product {
            species: species.to_string(),
            coefficient,
        });
        self
    }

    pub fn with_t_range(mut self, t_min: f64, t_max: f64) -> Self {
        self.t_range = Some((t_min, t_max));
        self
    }

    pub fn in_containers(mut self, containers: &[&str]) -> Self {
        self.scope = Some(containers.iter().map(|c| c.to_string()).collect());
        self
    }

    pub fn validate(&self) -> Result<(), KineticsError> {
        let bad = |reason: &str| KineticsError::InvalidTemplate {
            template: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.reactants.is_empty() {
            return Err(bad("no reactants"));
        }
        for r in &self.reactants {
            if r.coefficient < 1 {
                return Err(bad("stoichiometric coefficients must be at least 1"));
            }
            if !(r.order >= 0.0) || !r.order.is_finite() {
                return Err(bad("reaction orders must be non-negative"));
            }
        }
        if self.products.iter().any(|p| p.coefficient < 1) {
            return Err(bad("stoichiometric coefficients must be at least 1"));
        }
        match self.kinetics {
            Kinetics::ConstantK { k } if !(k >= 0.0) || !k.is_finite() => {
                return Err(bad("rate constant must be non-negative"));
            }
            Kinetics::Arrhenius { a, ea } => {
                arrhenius_k_clamped(a, ea, self.clamp.0, self.clamp)?;
            }
            _ => {}
        }
        if let Some((lo, hi)) = self.t_range {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(bad("T_range must satisfy min <= max"));
            }
        }
        if !(self.clamp.0 > 0.0 && self.clamp.0 <= self.clamp.1 && self.clamp.1.is_finite()) {
            return Err(bad("clamp range must be positive and ordered"));
        }
        Ok(())
    }

    pub fn rate_constant(&self, t: f64) -> f64 {
        match self.kinetics {
            Kinetics::ConstantK { k } => k,
            Kinetics::Arrhenius { a, ea } => arrhenius_unchecked(a, ea, t, self.clamp),
        }
    }

    fn needs_temperature(&self) -> bool {
        self.t_range.is_some() || matches!(self.kinetics, Kinetics::Arrhenius { .. })
    }

    fn in_range(&self, t: f64) -> bool {
        self.t_range.is_none_or(|(lo, hi)| t >= lo && t <= hi)
    }
}

fn rate_from(tpl: &ReactionTemplate, molality: impl Fn(&str) -> f64, t: f64) -> f64 {
    if !tpl.in_range(t) {
        return 0.0;
    }
    let mut rate = tpl.rate_constant(t);
    for r in &tpl.reactants {
        let c = molality(&r.species);
        if !(c > 0.0) {
            return 0.0;
        }
        rate *= c.powf(r.order);
    }
    rate
}

/// Rate in mol/(kg·s); zero when a reactant is depleted or `t` is outside
/// the template's range.
pub fn reaction_rate(tpl: &ReactionTemplate, mix: &Mixture, t: f64) -> f64 {
    if !(mix.solvent_mass > 0.0) {
        return 0.0;
    }
    rate_from(tpl, |sp| mix.molality(sp), t)
}

/// Per-species `d[X]/dt` for one template: `−ν·rate` for reactants,
/// `+ν·rate` for products.
pub fn species_rates(tpl: &ReactionTemplate, mix: &Mixture, t: f64) -> BTreeMap<String, f64> {
    let rate = reaction_rate(tpl, mix, t);
    let mut out = BTreeMap::new();
    for r in &tpl.reactants {
        *out.entry(r.species.clone()).or_insert(0.0) -= r.coefficient as f64 * rate;
    }
    for p in &tpl.products {
        *out.entry(p.species.clone()).or_insert(0.0) += p.coefficient as f64 * rate;
    }
    out
}

/// Process id prefix for registered reactions.
pub const REACTION_PREFIX: &str = "rxn:";

struct Term {
    amount: SIdx,
    coefficient: f64,
    order: f64,
}

/// One template applied in one container.
struct KineticsProcess {
    id: String,
    template: ReactionTemplate,
    solvent: SIdx,
    temperature: Option<SIdx>,
    reactants: Vec<Term>,
    products: Vec<Term>,
    reactant_names: Vec<String>,
}

impl KineticsProcess {
    fn rate(&self, s: &[f64]) -> f64 {
        let w = s[self.solvent.0];
        let t = self.temperature.map_or(DEFAULT_CLAMP.0, |i| s[i.0]);
        let mut rate = self.template.rate_constant(t);
        for r in &self.reactants {
            rate *= (s[r.amount.0] / w).powf(r.order);
        }
        rate
    }
}

impl Process for KineticsProcess {
    fn id(&self) -> &str {
        &self.id
    }

    fn slots(&self) -> Vec<SlotRef> {
        let mut v = vec![SlotRef::S(self.solvent)];
        v.extend(self.temperature.map(SlotRef::S));
        v.extend(
            self.reactants
                .iter()
                .chain(&self.products)
                .map(|t| SlotRef::S(t.amount)),
        );
        v
    }

    fn precondition<'a>(&'a self, view: &View<'_>) -> Result<(), &'a str> {
        if !(view.s[self.solvent.0] > 0.0) {
            return Err("solvent");
        }
        for (r, name) in self.reactants.iter().zip(&self.reactant_names) {
            if !(view.s[r.amount.0] > 0.0) {
                return Err(name);
            }
        }
        if let Some(t) = self.temperature {
            if !self.template.in_range(view.s[t.0]) {
                return Err("T_range");
            }
        }
        Ok(())
    }

    fn contribute(&self, view: &View<'_>, ds: &mut [f64]) {
        // dn/dt = ν·rate·W keeps molality rates exact under dilution.
        let flux = self.rate(view.s) * view.s[self.solvent.0];
        for r in &self.reactants {
            ds[r.amount.0] -= r.coefficient * flux;
        }
        for p in &self.products {
            ds[p.amount.0] += p.coefficient * flux;
        }
    }
}

/// Registers `tpl` as one process per applicable container, in container
/// registration order. Returns the process ids.
pub fn register_reaction(env: &mut EnvironmentState, tpl: ReactionTemplate) -> Result<Vec<String>, KineticsError> {
    tpl.validate()?;
    let layout = env.layout();
    for name in tpl
        .reactants
        .iter()
        .map(|r| &r.species)
        .chain(tpl.products.iter().map(|p| &p.species))
    {
        layout.species_index(name)?;
    }
    let containers: Vec<usize> = match &tpl.scope {
        Some(ids) => {
            let mut v = Vec::new();
            for id in ids {
                let e = layout.entity_index(id)?;
                if !matches!(layout.entity_kind(e), EntityKind::Container(_)) {
                    return Err(StateError::WrongKind {
                        entity: id.clone(),
                        kind: layout.entity_kind(e).name(),
                        expected: "container",
                    }
                    .into());
                }
                v.push(e);
            }
            v
        }
        None => (0..layout.entities.len())
            .filter(|&e| matches!(layout.entity_kind(e), EntityKind::Container(_)))
            .collect(),
    };

    let mut ids = Vec::new();
    for e in containers {
        let layout = env.layout();
        let mix = layout.mixture_slots(e).expect("containers hold mixtures").clone();
        let temperature = match layout.slot(e, "T") {
            Some(SlotRef::S(t)) => Some(t),
            _ => None,
        };
        let entity = layout.entity_id(e).to_string();
        if temperature.is_none() && tpl.needs_temperature() {
            if tpl.scope.is_some() {
                return Err(KineticsError::InvalidTemplate {
                    template: tpl.id.clone(),
                    reason: format!("container `{entity}` has no temperature node"),
                });
            }
            continue;
        }
        let term = |species: &str, coefficient: u32, order: f64| Term {
            amount: mix.amounts[layout.species_index(species).expect("validated")],
            coefficient: coefficient as f64,
            order,
        };
        let process = KineticsProcess {
            id: format!("{REACTION_PREFIX}{}@{entity}", tpl.id),
            reactants: tpl
                .reactants
                .iter()
                .map(|r| term(&r.species, r.coefficient, r.order))
                .collect(),
            products: tpl
                .products
                .iter()
                .map(|p| term(&p.species, p.coefficient, 0.0))
                .collect(),
            reactant_names: tpl
                .reactants
                .iter()
                .map(|r| format!("reactant:{}", r.species))
                .collect(),
            solvent: mix.solvent,
            temperature,
            template: tpl.clone(),
        };
        ids.push(process.id.clone());
        env.register_process(Arc::new(process))?;
    }
    Ok(ids)
}

/// Writes a mixture into a container before the first step. Species not in
/// the mixture are set to zero.
pub fn set_mixture(env: &mut EnvironmentState, container: &str, mix: &Mixture) -> Result<(), KineticsError> {
    if !(mix.solvent_mass >= 0.0) {
        return Err(KineticsError::NegativeMass(mix.solvent_mass));
    }
    let e = env.entity_index(container)?;
    if env.layout().mixture_slots(e).is_none() || !matches!(env.layout().entity_kind(e), EntityKind::Container(_)) {
        return Err(StateError::WrongKind {
            entity: container.to_string(),
            kind: env.layout().entity_kind(e).name(),
            expected: "container",
        }
        .into());
    }
    for (sp, &n) in &mix.moles {
        env.layout().species_index(sp)?;
        if !(n >= 0.0) {
            return Err(KineticsError::NegativeMoles {
                species: sp.clone(),
                moles: n,
            });
        }
    }
    env.set_initial(container, "solvent", InitialValue::Real(mix.solvent_mass))?;
    let names: Vec<String> = env.layout().species().iter().map(|s| s.name.clone()).collect();
    for sp in names {
        let n = mix.amount(&sp);
        env.set_initial(container, &format!("n.{sp}"), InitialValue::Real(n))?;
    }
    Ok(())
}

/// Snapshot of a container's contents.
pub fn mixture_of(env: &EnvironmentState, container: &str) -> Result<Mixture, StateError> {
    let e = env.entity_index(container)?;
    let layout = env.layout();
    let slots = layout.mixture_slots(e).ok_or_else(|| StateError::WrongKind {
        entity: container.to_string(),
        kind: layout.entity_kind(e).name(),
        expected: "container",
    })?;
    Ok(Mixture {
        solvent_mass: env.s()[slots.solvent.0],
        moles: layout
            .species()
            .iter()
            .zip(&slots.amounts)
            .map(|(sp, i)| (sp.name.clone(), env.s()[i.0]))
            .collect(),
        color: None,
    })
}

/// Current molality rates `(container.species, d[X]/dt)` summed over every
/// active reaction process.
pub fn kinetics_process(env: &EnvironmentState) -> Vec<(String, f64)> {
    let layout = env.layout();
    let mut ds = vec![0.0; env.s().len()];
    let empty = crate::action::ActionVector::new();
    let view = View {
        layout,
        x: env.x(),
        s: env.s(),
        l: env.l(),
        actions: &empty,
        time: env.time(),
    };
    for (i, p) in layout.processes().iter().enumerate() {
        if p.id().starts_with(REACTION_PREFIX) && env.vectors().process_enabled[i] && p.precondition(&view).is_ok() {
            p.contribute(&view, &mut ds);
        }
    }
    let mut out = Vec::new();
    for e in 0..layout.entities.len() {
        if !matches!(layout.entity_kind(e), EntityKind::Container(_)) {
            continue;
        }
        let slots = layout.mixture_slots(e).unwrap();
        let w = env.s()[slots.solvent.0];
        for (sp, a) in layout.species().iter().zip(&slots.amounts) {
            let d = if w > 0.0 { ds[a.0] / w } else { 0.0 };
            if d != 0.0 {
                out.push((format!("{}.{}", layout.entity_id(e), sp.name), d));
            }
        }
    }
    out
}
