//! Input actions fed to each step.

use std::collections::BTreeMap;

use crate::error::{EngineError, StateError};
use crate::state::{EntityId, EntityKind, Layout};

/// Prefix of the continuous per-step transfer channel on containers.
pub const POUR_CHANNEL_PREFIX: &str = "pour.";
pub const ANGLE_CHANNEL: &str = "angle";

#[derive(Debug, Clone, PartialEq)]
pub enum LhCommand {
    LoadTip,
    RemoveTip,
    /// Move the tip into a container, or out of any liquid with `None`.
    MoveToWell(Option<EntityId>),
    /// Volume in µL.
    Aspirate(f64),
    /// Volume in µL.
    Dispense(f64),
}

impl LhCommand {
    pub fn name(&self) -> &'static str {
        match self {
            LhCommand::LoadTip => "LoadTip",
            LhCommand::RemoveTip => "RemoveTip",
            LhCommand::MoveToWell(_) => "MoveToWell",
            LhCommand::Aspirate(_) => "Aspirate",
            LhCommand::Dispense(_) => "Dispense",
        }
    }
}

/// A discrete semantic action addressed to one entity.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    /// Put the addressed object on `surface`.
    Place {
        surface: EntityId,
    },
    /// Lift the addressed object off `surface`.
    Pick {
        surface: EntityId,
    },
    /// Heater on/off with an optional new setpoint in K.
    Heater {
        on: bool,
        target: Option<f64>,
    },
    LiquidHandler(LhCommand),
}

impl Command {
    pub fn channel(&self) -> &'static str {
        match self {
            Command::Place { .. } => "place",
            Command::Pick { .. } => "pick",
            Command::Heater { .. } => "heater",
            Command::LiquidHandler(_) => "lh",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActionVector {
    pub continuous: BTreeMap<(EntityId, String), f64>,
    pub discrete: BTreeMap<(EntityId, String), Command>,
}

impl ActionVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.continuous.is_empty() && self.discrete.is_empty()
    }

    pub fn set(&mut self, entity: impl Into<EntityId>, channel: &str, value: f64) -> &mut Self {
        self.continuous.insert((entity.into(), channel.to_string()), value);
        self
    }

    pub fn command(&mut self, entity: impl Into<EntityId>, command: Command) -> &mut Self {
        self.discrete
            .insert((entity.into(), command.channel().to_string()), command);
        self
    }

    pub fn with_command(mut self, entity: impl Into<EntityId>, command: Command) -> Self {
        self.command(entity, command);
        self
    }

    pub fn with_value(mut self, entity: impl Into<EntityId>, channel: &str, value: f64) -> Self {
        self.set(entity, channel, value);
        self
    }

    pub fn get(&self, entity: &str, channel: &str) -> Option<f64> {
        // BTreeMap lookups need an owned key; actions are tiny.
        self.continuous
            .iter()
            .find(|((e, c), _)| e.as_str() == entity && c == channel)
            .map(|(_, v)| *v)
    }

    pub fn get_command(&self, entity: &str, channel: &str) -> Option<&Command> {
        self.discrete
            .iter()
            .find(|((e, c), _)| e.as_str() == entity && c == channel)
            .map(|(_, v)| v)
    }

    pub fn merge(&mut self, other: ActionVector) {
        self.continuous.extend(other.continuous);
        self.discrete.extend(other.discrete);
    }

    /// Checks that every addressed entity exists and declares the channel.
    pub fn validate(&self, layout: &Layout) -> Result<(), EngineError> {
        for (entity, channel) in self.continuous.keys() {
            let e = layout.entity_index(entity.as_str())?;
            let ok = match layout.entity_kind(e) {
                EntityKind::Container(_) => match channel.strip_prefix(POUR_CHANNEL_PREFIX) {
                    Some(dst) => {
                        let d = layout.entity_index(dst)?;
                        matches!(layout.entity_kind(d), EntityKind::Container(_))
                    }
                    None => false,
                },
                EntityKind::Faucet(_) => channel == ANGLE_CHANNEL,
                _ => false,
            };
            if !ok {
                return Err(unknown_channel(entity, channel));
            }
        }
        for ((entity, channel), cmd) in &self.discrete {
            let e = layout.entity_index(entity.as_str())?;
            if channel != cmd.channel() {
                return Err(unknown_channel(entity, channel));
            }
            let kind = layout.entity_kind(e);
            let ok = match cmd {
                Command::Place { surface } | Command::Pick { surface } => {
                    layout.entity_index(surface.as_str())?;
                    kind.is_movable()
                }
                Command::Heater { .. } => matches!(kind, EntityKind::Heater(_)),
                Command::LiquidHandler(c) => {
                    if let LhCommand::MoveToWell(Some(w)) = c {
                        let wi = layout.entity_index(w.as_str())?;
                        if layout.mixture_slots(wi).is_none() {
                            return Err(StateError::WrongKind {
                                entity: w.to_string(),
                                kind: layout.entity_kind(wi).name(),
                                expected: "container",
                            }
                            .into());
                        }
                    }
                    matches!(kind, EntityKind::LiquidHandler(_))
                }
            };
            if !ok {
                return Err(unknown_channel(entity, channel));
            }
        }
        Ok(())
    }
}

fn unknown_channel(entity: &EntityId, channel: &str) -> EngineError {
    EngineError::UnknownChannel {
        entity: entity.to_string(),
        channel: channel.to_string(),
    }
}
