//! Kinematic proxy update `x(t+1) = F(x, a)`.
//!
//! Stands in for rigid-body physics: placements change what an entity rests
//! on, tip moves change the liquid handler's target well, knob commands set
//! the faucet angle, and in-flight pours move their per-step share of liquid.

use std::sync::Arc;

use crate::action::{ActionVector, Command, LhCommand, ANGLE_CHANNEL, POUR_CHANNEL_PREFIX};
use crate::engine::{CommandFailure, EffectCtx, Event, View};
use crate::error::StateError;
use crate::kinetics::move_liquid;
use crate::state::{EntityKind, EnvironmentState, LIdx, Layout, SlotRef, StateVectors, Transfers};

pub(crate) fn apply(
    layout: &Layout,
    vectors: &mut StateVectors,
    transfers: &mut Transfers,
    actions: &ActionVector,
    failures: &mut Vec<CommandFailure>,
) {
    for ((entity, channel), cmd) in &actions.discrete {
        let Ok(e) = layout.entity_index(entity.as_str()) else {
            continue;
        };
        let source = || format!("{entity}.{channel}");
        match cmd {
            Command::Place { surface } => {
                let Ok(s) = layout.entity_index(surface.as_str()) else {
                    continue;
                };
                if s == e {
                    failures.push(CommandFailure::new(source(), "distinct surface"));
                    continue;
                }
                if let Some(SlotRef::X(x)) = layout.slot(e, "support") {
                    vectors.x[x.0] = Some(s);
                }
            }
            Command::Pick { surface } => {
                let Ok(s) = layout.entity_index(surface.as_str()) else {
                    continue;
                };
                if let Some(SlotRef::X(x)) = layout.slot(e, "support") {
                    if vectors.x[x.0] == Some(s) {
                        vectors.x[x.0] = None;
                    } else {
                        failures.push(CommandFailure::new(source(), format!("on:{surface}")));
                    }
                }
            }
            Command::LiquidHandler(LhCommand::MoveToWell(target)) => {
                let well = target.as_ref().and_then(|w| layout.entity_index(w.as_str()).ok());
                if let Some(SlotRef::X(x)) = layout.slot(e, "well") {
                    vectors.x[x.0] = well;
                }
            }
            Command::Heater { .. } | Command::LiquidHandler(_) => {}
        }
    }

    for ((entity, channel), &value) in &actions.continuous {
        let Ok(e) = layout.entity_index(entity.as_str()) else {
            continue;
        };
        if let Some(dst) = channel.strip_prefix(POUR_CHANNEL_PREFIX) {
            let Ok(d) = layout.entity_index(dst) else { continue };
            let (Some(from), Some(to)) = (layout.mixture_slots(e), layout.mixture_slots(d)) else {
                continue;
            };
            match move_liquid(&mut vectors.s, from, to, value) {
                Ok(moved) => record_transfer(transfers, layout, e, d, &moved),
                Err(err) => failures.push(CommandFailure::new(format!("{entity}.{channel}"), err.to_string())),
            }
        } else if channel == ANGLE_CHANNEL {
            if let EntityKind::Faucet(p) = layout.entity_kind(e) {
                if let Some(SlotRef::S(a)) = layout.slot(e, "angle") {
                    vectors.s[a.0] = value.clamp(0.0, p.max_angle);
                }
            }
        }
    }
}

pub(crate) fn record_transfer(
    transfers: &mut Transfers,
    layout: &Layout,
    src: usize,
    dst: usize,
    moved: &(f64, Vec<f64>),
) {
    let t = transfers.entry(src, dst, layout.species.len());
    t.solvent += moved.0;
    for (acc, m) in t.moles.iter_mut().zip(&moved.1) {
        *acc += m;
    }
}

/// Whether `a` rests on `b` or `b` rests on `a`.
pub fn in_contact(layout: &Layout, x: &[Option<usize>], a: usize, b: usize) -> bool {
    let on = |p: usize, q: usize| match layout.slot(p, "support") {
        Some(SlotRef::X(i)) => x[i.0] == Some(q),
        _ => false,
    };
    on(a, b) || on(b, a)
}

struct ContactSensor {
    id: String,
    a: usize,
    b: usize,
    flag: LIdx,
}

impl Event for ContactSensor {
    fn id(&self) -> &str {
        &self.id
    }

    fn slots(&self) -> Vec<SlotRef> {
        vec![SlotRef::L(self.flag)]
    }

    fn triggered(&self, view: &View<'_>) -> bool {
        in_contact(view.layout, view.x, self.a, self.b) != view.l[self.flag.0]
    }

    fn apply(&self, ctx: &mut EffectCtx<'_>) -> Result<(), CommandFailure> {
        ctx.l[self.flag.0] = in_contact(ctx.layout, ctx.x, self.a, self.b);
        Ok(())
    }
}

/// Mirrors contact between `a` and `b` into the logical slot
/// `<a>.contact.<b>` through an event that fires whenever the two disagree.
/// Returns the existing slot when the pair is already sensed.
pub fn register_contact(env: &mut EnvironmentState, a: &str, b: &str) -> Result<LIdx, StateError> {
    let name = format!("contact.{b}");
    if let Ok(l) = env.l_slot(a, &name) {
        return Ok(l);
    }
    let ai = env.entity_index(a)?;
    let bi = env.entity_index(b)?;
    if ai == bi {
        return Err(StateError::DuplicateId(format!("{a}.{name}")));
    }
    env.ensure_not_started(&name)?;
    let flag = env.add_l_slot(ai, &name)?;
    env.register_event(Arc::new(ContactSensor {
        id: format!("contact:{a}:{b}"),
        a: ai,
        b: bi,
        flag,
    }))?;
    Ok(flag)
}
