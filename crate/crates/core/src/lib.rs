//! Semantics engine for chemistry-lab digital twins.
//!
//! An [`EnvironmentState`](state::EnvironmentState) holds a kinematic vector
//! (what rests on what), continuous slots (temperatures, solvent masses,
//! moles) and logical flags. [`step`](state::EnvironmentState::step) advances
//! it by one fixed `dt` in three phases: the kinematic proxy applies commands,
//! [`Process`](engine::Process)es integrate their derivative contributions,
//! then [`Event`](engine::Event)s fire in registration order.
//!
//! - [`thermal`]: lumped nodes with conduction, convection and heater links.
//! - [`kinetics`]: mixtures in molality, pours and mass-action reactions.
//! - [`devices`]: heater, liquid handler, scale and faucet semantics.
//! - [`workflow`]: sequential task trees ticked against an environment, and
//!   verification of final targets.
//! - [`scenario`]: JSON scenario files, runs, traces and benchmarks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod devices;
pub mod engine;
pub mod error;
pub mod kinetics;
pub mod proxy;
pub mod scenario;
pub mod state;
pub mod thermal;
pub mod units;
pub mod workflow;
