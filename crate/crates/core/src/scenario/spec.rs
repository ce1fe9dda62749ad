use std::collections::BTreeMap;

use serde::Deserialize;

use super::ScenarioError;
use crate::engine::Integrator;
use crate::kinetics::{Product, Reactant};
use crate::state::DEFAULT_DT;
use crate::units::{de, UNIT_ERROR_TAG};
use crate::workflow::{Target, WorkflowSpec};

/// Default trace stride: one row per simulated second at the default dt.
pub const DEFAULT_STRIDE: u64 = 100;

fn default_dt() -> f64 {
    DEFAULT_DT
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub meta: Meta,
    pub entities: Vec<EntityEntry>,
    #[serde(default)]
    pub thermal: ThermalSection,
    #[serde(default)]
    pub species: Vec<SpeciesSpec>,
    #[serde(default)]
    pub mixtures: Vec<MixtureSpec>,
    #[serde(default)]
    pub reactions: Vec<ReactionSpec>,
    #[serde(default)]
    pub devices: Vec<DeviceSpec>,
    pub workflow: WorkflowSpec,
    #[serde(default)]
    pub trace: TraceSpec,
    #[serde(default)]
    pub verification: VerificationSpec,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub name: String,
    #[serde(default = "default_dt", deserialize_with = "de::time")]
    pub dt: f64,
    #[serde(deserialize_with = "de::time")]
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub integrator: Integrator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityEntry {
    pub id: String,
    pub kind: EntityKindSpec,
    /// What the entity initially rests on.
    pub on: Option<String>,
    /// Initial slot values; strings carry units matching the slot.
    pub initial: BTreeMap<String, serde_json::Value>,
}

impl<'de> Deserialize<'de> for EntityEntry {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        // `flatten` would disable unknown-field checks on the kind parameters.
        #[derive(Deserialize)]
        struct Raw {
            id: String,
            #[serde(default)]
            on: Option<String>,
            #[serde(default)]
            initial: BTreeMap<String, serde_json::Value>,
            #[serde(flatten)]
            rest: serde_json::Map<String, serde_json::Value>,
        }
        let raw = Raw::deserialize(d)?;
        let kind = EntityKindSpec::deserialize(serde_json::Value::Object(raw.rest))
            .map_err(|e| serde::de::Error::custom(format!("entity `{}`: {e}", raw.id)))?;
        Ok(EntityEntry {
            id: raw.id,
            kind,
            on: raw.on,
            initial: raw.initial,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EntityKindSpec {
    Container {
        #[serde(default, deserialize_with = "de::mass_opt")]
        tare_mass: Option<f64>,
        #[serde(default, deserialize_with = "de::density_opt")]
        density: Option<f64>,
    },
    Heater {
        #[serde(deserialize_with = "de::conductance")]
        k_gen: f64,
    },
    LiquidHandler {
        #[serde(default, deserialize_with = "de::volume_opt")]
        tip_capacity: Option<f64>,
        #[serde(default)]
        tips: Option<u32>,
    },
    Scale {},
    Faucet {
        #[serde(deserialize_with = "de::flow_coefficient")]
        flow_coefficient: f64,
        #[serde(deserialize_with = "de::angle")]
        max_angle: f64,
        target: String,
    },
    RobotProxy {},
    Ambient {
        #[serde(deserialize_with = "de::temperature")]
        temperature: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSection {
    /// Contact sensors `[a, b]`; each creates the gate slot `a.contact.b`.
    #[serde(default)]
    pub contacts: Vec<[String; 2]>,
    #[serde(default)]
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
}

fn default_t_slot() -> String {
    "T".into()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub entity: String,
    #[serde(default = "default_t_slot")]
    pub slot: String,
    #[serde(deserialize_with = "de::mass")]
    pub mass: f64,
    #[serde(deserialize_with = "de::specific_heat")]
    pub specific_heat: f64,
    #[serde(deserialize_with = "de::temperature")]
    pub initial: f64,
}

/// Node references are `entity.slot`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LinkSpec {
    Conduction {
        a: String,
        b: String,
        #[serde(deserialize_with = "de::conductivity")]
        k: f64,
        #[serde(deserialize_with = "de::area")]
        area: f64,
        #[serde(deserialize_with = "de::length")]
        thickness: f64,
        #[serde(default)]
        gate: Option<String>,
    },
    Convection {
        node: String,
        ambient: String,
        #[serde(deserialize_with = "de::heat_transfer")]
        h: f64,
        #[serde(deserialize_with = "de::area")]
        area: f64,
    },
    /// Defaults: `k_gen` from the heater entity, target `<entity>.T_target`,
    /// gate `<entity>.heaterOn`.
    Generation {
        node: String,
        #[serde(default, deserialize_with = "de::conductance_opt")]
        k_gen: Option<f64>,
        #[serde(default)]
        target: Option<String>,
        #[serde(default)]
        gate: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesSpec {
    pub name: String,
    #[serde(default, deserialize_with = "de::molar_mass_opt")]
    pub molar_mass: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub container: String,
    #[serde(deserialize_with = "de::mass")]
    pub solvent: f64,
    /// Species amounts (mol).
    #[serde(default)]
    pub amounts: BTreeMap<String, serde_json::Value>,
    /// Species molalities (mol/kg), converted with the solvent mass.
    #[serde(default)]
    pub molalities: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KineticsSpec {
    Constant {
        k: f64,
    },
    Arrhenius {
        a: f64,
        #[serde(deserialize_with = "de::molar_energy")]
        ea: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionSpec {
    pub id: String,
    pub reactants: Vec<Reactant>,
    #[serde(default)]
    pub products: Vec<Product>,
    pub kinetics: KineticsSpec,
    #[serde(default, deserialize_with = "de::temperature_pair_opt")]
    pub t_range: Option<(f64, f64)>,
    #[serde(default, deserialize_with = "de::temperature_pair_opt")]
    pub clamp: Option<(f64, f64)>,
    #[serde(default)]
    pub containers: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeviceSpec {
    Heater { id: String },
    LiquidHandler { id: String },
    Faucet { id: String },
}

fn default_stride() -> u64 {
    DEFAULT_STRIDE
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    #[serde(default = "default_stride")]
    pub stride: u64,
    /// `entity.slot` names, stored or derived (`beaker.EtI`, `scale.reading`).
    #[serde(default)]
    pub slots: Vec<String>,
    #[serde(default = "default_true")]
    pub events: bool,
}

impl Default for TraceSpec {
    fn default() -> Self {
        Self {
            stride: DEFAULT_STRIDE,
            slots: Vec::new(),
            events: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationSpec {
    #[serde(default)]
    pub targets: Vec<Target>,
    /// Extra `[container, species]` running-peak watches.
    #[serde(default)]
    pub watch_peaks: Vec<[String; 2]>,
}

/// Parses and structurally validates a scenario document. Cross-references
/// are checked by [`super::build`].
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        let (line, column) = (e.line(), e.column());
        match message.find(UNIT_ERROR_TAG) {
            Some(i) => {
                let tail = &message[i..];
                let end = tail.rfind(" at line ").unwrap_or(tail.len());
                ScenarioError::Unit {
                    line,
                    column,
                    message: tail[..end].to_string(),
                }
            }
            None => ScenarioError::Parse { line, column, message },
        }
    })?;
    let m = &scenario.meta;
    if !(m.dt > 0.0) || !m.dt.is_finite() {
        return Err(ScenarioError::Validation(format!(
            "meta.dt must be positive, got {}",
            m.dt
        )));
    }
    if !(m.duration >= m.dt) || !m.duration.is_finite() {
        return Err(ScenarioError::Validation(format!(
            "meta.duration must be at least dt, got {}",
            m.duration
        )));
    }
    if scenario.trace.stride == 0 {
        return Err(ScenarioError::Validation("trace.stride must be at least 1".into()));
    }
    Ok(scenario)
}

impl Scenario {
    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Validation(format!("cannot read {}: {e}", path.display())))?;
        parse_scenario(&text)
    }

    /// Number of engine steps covering `meta.duration`.
    pub fn total_steps(&self) -> u64 {
        crate::workflow::steps_for(self.meta.duration, self.meta.dt)
    }
}
