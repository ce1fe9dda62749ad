//! The integrated step `y(t+1) = G(y, a)`.
//!
//! Each step runs three strictly ordered phases:
//!
//! 1. kinematic proxy: discrete placement commands, knob turns, tip moves and
//!    the per-step share of in-flight pours are applied to `x` (and the
//!    mixtures they move);
//! 2. processes: every enabled process whose precondition holds on the
//!    start-of-step `s`/`l` adds its derivative contribution, the sum is
//!    integrated once with step `dt`, and amount slots are clamped at zero;
//! 3. events: triggers are evaluated in registration order and fired
//!    effects mutate `l` (and may touch `s`, `x` or process enable flags).
//!
//! Any non-finite continuous slot aborts the step and restores the
//! start-of-step state.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::action::ActionVector;
use crate::error::{EngineError, StateError};
use crate::proxy;
use crate::state::{EnvironmentBatch, EnvironmentState, Layout, PreconditionFailure, SIdx, SlotRef, Transfers};

/// Read-only view handed to preconditions, contributions and triggers.
pub struct View<'a> {
    pub layout: &'a Layout,
    pub x: &'a [Option<usize>],
    pub s: &'a [f64],
    pub l: &'a [bool],
    pub actions: &'a ActionVector,
    pub time: f64,
}

/// A continuous behavior adding derivative contributions to `s` slots.
pub trait Process: Send + Sync {
    fn id(&self) -> &str;

    /// Slots the process reads or writes; validated at registration.
    fn slots(&self) -> Vec<SlotRef>;

    /// `Err(name)` names the first unmet precondition.
    fn precondition<'a>(&'a self, view: &View<'_>) -> Result<(), &'a str>;

    /// Adds `ds/dt` contributions into `ds`.
    fn contribute(&self, view: &View<'_>, ds: &mut [f64]);
}

/// A discrete trigger whose effect mutates logical state.
pub trait Event: Send + Sync {
    fn id(&self) -> &str;

    fn slots(&self) -> Vec<SlotRef>;

    fn triggered(&self, view: &View<'_>) -> bool;

    /// Applies the effect. On `Err` the effect must leave state untouched.
    fn apply(&self, ctx: &mut EffectCtx<'_>) -> Result<(), CommandFailure>;
}

/// Mutable access granted to event effects.
pub struct EffectCtx<'a> {
    pub layout: &'a Layout,
    pub x: &'a mut [Option<usize>],
    pub s: &'a mut [f64],
    pub l: &'a mut [bool],
    pub process_enabled: &'a mut [bool],
    pub actions: &'a ActionVector,
    pub time: f64,
    pub(crate) transfers: &'a mut Transfers,
}

impl EffectCtx<'_> {
    pub fn view(&self) -> View<'_> {
        View {
            layout: self.layout,
            x: self.x,
            s: self.s,
            l: self.l,
            actions: self.actions,
            time: self.time,
        }
    }

    /// Enables or disables a registered process by id.
    pub fn set_process_enabled(&mut self, id: &str, enabled: bool) -> bool {
        match self.layout.processes.iter().position(|p| p.id() == id) {
            Some(i) => {
                self.process_enabled[i] = enabled;
                true
            }
            None => false,
        }
    }
}

/// A rejected command or effect, recorded in the failure log.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandFailure {
    pub source: String,
    pub precondition: String,
}

impl CommandFailure {
    pub fn new(source: impl Into<String>, precondition: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            precondition: precondition.into(),
        }
    }
}

impl fmt::Display for CommandFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.source, self.precondition)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClampReason {
    Negative,
}

/// Observation of one step. Indices refer to the layout's registries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub step: u64,
    /// Time at the end of the step.
    pub time: f64,
    pub fired: Vec<usize>,
    pub active: Vec<usize>,
    pub activated: Vec<usize>,
    pub deactivated: Vec<usize>,
    pub clamps: Vec<(SIdx, ClampReason)>,
    pub failures: Vec<PreconditionFailure>,
}

impl StepReport {
    fn clear(&mut self) {
        self.fired.clear();
        self.active.clear();
        self.activated.clear();
        self.deactivated.clear();
        self.clamps.clear();
        self.failures.clear();
    }

    pub fn fired_ids<'a>(&self, layout: &'a Layout) -> Vec<&'a str> {
        self.fired.iter().map(|&i| layout.events[i].id()).collect()
    }

    pub fn active_ids<'a>(&self, layout: &'a Layout) -> Vec<&'a str> {
        self.active.iter().map(|&i| layout.processes[i].id()).collect()
    }

    pub fn is_active(&self, layout: &Layout, process: &str) -> bool {
        self.active.iter().any(|&i| layout.processes[i].id() == process)
    }
}

const UNKNOWN: u8 = 0;
const ACTIVE: u8 = 1;
const INACTIVE: u8 = 2;

fn check_slots(layout: &Layout, slots: &[SlotRef], owner: &str) -> Result<(), StateError> {
    for slot in slots {
        let ok = match slot {
            SlotRef::S(i) => i.0 < layout.s_meta.len(),
            SlotRef::L(i) => i.0 < layout.l_meta.len(),
            SlotRef::X(i) => i.0 < layout.x_meta.len(),
        };
        if !ok {
            return Err(StateError::UnknownSlot(format!("{owner}: {slot:?}")));
        }
    }
    Ok(())
}

impl EnvironmentState {
    pub fn register_process(&mut self, process: Arc<dyn Process>) -> Result<(), StateError> {
        self.ensure_not_started(process.id())?;
        if self.layout.processes.iter().any(|p| p.id() == process.id()) {
            return Err(StateError::DuplicateId(process.id().to_string()));
        }
        check_slots(&self.layout, &process.slots(), process.id())?;
        self.layout_mut().processes.push(process);
        self.vectors.process_enabled.push(true);
        self.vectors.process_active.push(false);
        Ok(())
    }

    pub fn register_event(&mut self, event: Arc<dyn Event>) -> Result<(), StateError> {
        self.ensure_not_started(event.id())?;
        if self.layout.events.iter().any(|e| e.id() == event.id()) {
            return Err(StateError::DuplicateId(event.id().to_string()));
        }
        check_slots(&self.layout, &event.slots(), event.id())?;
        self.layout_mut().events.push(event);
        Ok(())
    }

    pub fn set_process_enabled(&mut self, id: &str, enabled: bool) -> Result<(), StateError> {
        let i = self
            .layout
            .processes
            .iter()
            .position(|p| p.id() == id)
            .ok_or_else(|| StateError::UnknownEntity(id.to_string()))?;
        self.vectors.process_enabled[i] = enabled;
        Ok(())
    }

    /// Evaluates the event phase once with no actions and without advancing
    /// time, so logical mirrors (contact flags, immersion) reflect the
    /// initial kinematic state.
    pub fn prime(&mut self) -> Result<StepReport, EngineError> {
        let empty = ActionVector::new();
        let mut report = StepReport {
            step: self.vectors.step,
            time: self.time(),
            ..Default::default()
        };
        if self.semantics_enabled {
            let layout = Arc::clone(&self.layout);
            self.event_phase(&layout, &empty, &mut report);
        }
        self.failures.extend(report.failures.iter().cloned());
        self.update_peaks();
        Ok(report)
    }

    /// Advances the environment by one fixed step.
    pub fn step(&mut self, actions: &ActionVector) -> Result<StepReport, EngineError> {
        actions.validate(&self.layout)?;
        let mut report = StepReport::default();
        self.advance(actions, &mut report)?;
        Ok(report)
    }

    /// Steps with already-validated actions, overwriting `report`.
    fn advance(&mut self, actions: &ActionVector, report: &mut StepReport) -> Result<(), EngineError> {
        let layout = Arc::clone(&self.layout);
        self.snapshot.copy_from(&self.vectors);
        self.transfers.begin_step();
        let failures_len = self.failures.len();

        let t0 = self.time();
        report.clear();
        report.step = self.vectors.step + 1;
        report.time = (self.vectors.step + 1) as f64 * self.dt;

        // Phase 1: kinematic proxy.
        let mut kin_failures = Vec::new();
        proxy::apply(
            &layout,
            &mut self.vectors,
            &mut self.transfers,
            actions,
            &mut kin_failures,
        );
        for f in kin_failures {
            report.failures.push(PreconditionFailure {
                time: t0,
                source: f.source,
                precondition: f.precondition,
            });
        }

        if self.semantics_enabled {
            // Phase 2: processes on start-of-step s and l.
            self.process_phase(&layout, actions, t0, report);
            // Phase 3: events in registration order.
            self.event_phase(&layout, actions, report);
        }

        if let Some(bad) = self.vectors.s.iter().position(|v| !v.is_finite()) {
            let slot = layout.s_name(SIdx(bad));
            std::mem::swap(&mut self.vectors, &mut self.snapshot);
            self.transfers.rollback();
            self.failures.truncate(failures_len);
            return Err(EngineError::NonFiniteState {
                slot,
                step: self.vectors.step,
            });
        }

        self.vectors.step += 1;
        self.failures.extend(report.failures.iter().cloned());
        self.update_peaks();
        Ok(())
    }

    fn process_phase(&mut self, layout: &Layout, actions: &ActionVector, t0: f64, report: &mut StepReport) {
        let n = self.vectors.s.len();
        self.scratch.clear();
        self.scratch.resize(n, 0.0);
        let mut ds = std::mem::take(&mut self.scratch);

        {
            let view = View {
                layout,
                x: &self.vectors.x,
                s: &self.vectors.s,
                l: &self.vectors.l,
                actions,
                time: t0,
            };
            for (i, p) in layout.processes.iter().enumerate() {
                let state = if !self.vectors.process_enabled[i] {
                    Err("enabled")
                } else {
                    p.precondition(&view)
                };
                let prev = if self.vectors.step == 0 && !self.vectors.process_active[i] {
                    UNKNOWN
                } else if self.vectors.process_active[i] {
                    ACTIVE
                } else {
                    INACTIVE
                };
                match state {
                    Ok(()) => {
                        report.active.push(i);
                        if prev != ACTIVE {
                            report.activated.push(i);
                        }
                        p.contribute(&view, &mut ds);
                    }
                    Err(name) => {
                        if prev == ACTIVE {
                            report.deactivated.push(i);
                        }
                        if prev != INACTIVE {
                            report.failures.push(PreconditionFailure {
                                time: t0,
                                source: p.id().to_string(),
                                precondition: name.to_string(),
                            });
                        }
                    }
                }
            }
        }
        for p in self.vectors.process_active.iter_mut() {
            *p = false;
        }
        for &i in &report.active {
            self.vectors.process_active[i] = true;
        }

        let dt = self.dt;
        match self.integrator {
            Integrator::Euler => {
                for (j, (s, d)) in self.vectors.s.iter_mut().zip(ds.iter()).enumerate() {
                    if !layout.s_meta[j].fixed {
                        *s += dt * d;
                    }
                }
            }
            Integrator::Rk4 => self.rk4(layout, actions, t0, &report.active, &ds),
        }

        for (j, meta) in layout.s_meta.iter().enumerate() {
            if meta.nonneg && self.vectors.s[j] < 0.0 {
                self.vectors.s[j] = 0.0;
                report.clamps.push((SIdx(j), ClampReason::Negative));
            }
        }
        self.scratch = ds;
    }

    // Classic RK4 with the active set frozen at the start of the step.
    fn rk4(&mut self, layout: &Layout, actions: &ActionVector, t0: f64, active: &[usize], k1: &[f64]) {
        let dt = self.dt;
        let s0 = self.vectors.s.clone();
        let eval = |s: &[f64], t: f64| {
            let mut d = vec![0.0; s.len()];
            let view = View {
                layout,
                x: &self.vectors.x,
                s,
                l: &self.vectors.l,
                actions,
                time: t,
            };
            for &i in active {
                layout.processes[i].contribute(&view, &mut d);
            }
            d
        };
        let shifted = |k: &[f64], h: f64| -> Vec<f64> {
            s0.iter()
                .zip(k)
                .enumerate()
                .map(|(j, (s, k))| if layout.s_meta[j].fixed { *s } else { s + h * k })
                .collect()
        };
        let k2 = eval(&shifted(k1, dt / 2.0), t0 + dt / 2.0);
        let k3 = eval(&shifted(&k2, dt / 2.0), t0 + dt / 2.0);
        let k4 = eval(&shifted(&k3, dt), t0 + dt);
        for j in 0..s0.len() {
            if !layout.s_meta[j].fixed {
                self.vectors.s[j] = s0[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
        }
    }

    fn event_phase(&mut self, layout: &Layout, actions: &ActionVector, report: &mut StepReport) {
        let time = report.time;
        for (i, ev) in layout.events.iter().enumerate() {
            let triggered = {
                let view = View {
                    layout,
                    x: &self.vectors.x,
                    s: &self.vectors.s,
                    l: &self.vectors.l,
                    actions,
                    time,
                };
                ev.triggered(&view)
            };
            if !triggered {
                continue;
            }
            let mut ctx = EffectCtx {
                layout,
                x: &mut self.vectors.x,
                s: &mut self.vectors.s,
                l: &mut self.vectors.l,
                process_enabled: &mut self.vectors.process_enabled,
                actions,
                time,
                transfers: &mut self.transfers,
            };
            match ev.apply(&mut ctx) {
                Ok(()) => report.fired.push(i),
                Err(f) => report.failures.push(PreconditionFailure {
                    time,
                    source: f.source,
                    precondition: f.precondition,
                }),
            }
        }
    }
}

fn thread_pool() -> Option<&'static rayon::ThreadPool> {
    static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();
    POOL.get_or_init(|| {
        let n: usize = std::env::var("LABTWIN_THREADS").ok()?.parse().ok()?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build().ok()
    })
    .as_ref()
}

/// Steps every environment of the batch with its own action vector.
///
/// Environments share no mutable state, so they are stepped in parallel;
/// the result equals stepping each one sequentially.
pub fn step_batch(batch: &mut EnvironmentBatch, actions: &[ActionVector]) -> Result<Vec<StepReport>, EngineError> {
    if actions.len() != batch.environments.len() {
        return Err(EngineError::LengthMismatch {
            envs: batch.environments.len(),
            actions: actions.len(),
        });
    }
    let run = |envs: &mut [EnvironmentState]| -> Result<Vec<StepReport>, EngineError> {
        if envs.len() == 1 {
            return Ok(vec![envs[0].step(&actions[0])?]);
        }
        envs.par_iter_mut()
            .zip(actions.par_iter())
            .map(|(env, a)| env.step(a))
            .collect()
    };
    match thread_pool() {
        Some(pool) => pool.install(|| run(&mut batch.environments)),
        None => run(&mut batch.environments),
    }
}

/// Steps every environment with the same action vector.
///
/// The actions are validated once for the whole batch. Each worker reuses
/// one scratch report across the environments it steps.
pub fn step_batch_shared(batch: &mut EnvironmentBatch, actions: &ActionVector) -> Result<(), EngineError> {
    let Some(first) = batch.environments.first() else {
        return Ok(());
    };
    actions.validate(&first.layout)?;
    if batch
        .environments
        .iter()
        .any(|e| !Arc::ptr_eq(&e.layout, &first.layout))
    {
        for env in &batch.environments[1..] {
            actions.validate(&env.layout)?;
        }
    }
    let run = |envs: &mut [EnvironmentState]| -> Result<(), EngineError> {
        if envs.len() == 1 || rayon::current_num_threads() == 1 {
            let mut report = StepReport::default();
            return envs.iter_mut().try_for_each(|env| env.advance(actions, &mut report));
        }
        envs.par_iter_mut()
            .try_for_each_init(StepReport::default, |report, env| env.advance(actions, report))
    };
    match thread_pool() {
        Some(pool) => pool.install(|| run(&mut batch.environments)),
        None => run(&mut batch.environments),
    }
}

type Predicate = dyn Fn(&View<'_>) -> bool + Send + Sync;
type Contribution = dyn Fn(&View<'_>, &mut [f64]) + Send + Sync;

/// A process assembled from closures, for user-defined behaviors.
pub struct FnProcess {
    id: String,
    slots: Vec<SlotRef>,
    precondition: Box<Predicate>,
    precondition_name: String,
    contribute: Box<Contribution>,
}

impl FnProcess {
    pub fn new(
        id: impl Into<String>,
        slots: Vec<SlotRef>,
        contribute: impl Fn(&View<'_>, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            slots,
            precondition: Box::new(|_| true),
            precondition_name: "always".into(),
            contribute: Box::new(contribute),
        }
    }

    pub fn with_precondition(
        mut self,
        name: impl Into<String>,
        pred: impl Fn(&View<'_>) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.precondition = Box::new(pred);
        self.precondition_name = name.into();
        self
    }
}

impl Process for FnProcess {
    fn id(&self) -> &str {
        &self.id
    }

    fn slots(&self) -> Vec<SlotRef> {
        self.slots.clone()
    }

    fn precondition<'a>(&'a self, view: &View<'_>) -> Result<(), &'a str> {
        if (self.precondition)(view) {
            Ok(())
        } else {
            Err(&self.precondition_name)
        }
    }

    fn contribute(&self, view: &View<'_>, ds: &mut [f64]) {
        (self.contribute)(view, ds)
    }
}

type Effect = dyn Fn(&mut EffectCtx<'_>) -> Result<(), CommandFailure> + Send + Sync;

/// An event assembled from closures.
pub struct FnEvent {
    id: String,
    slots: Vec<SlotRef>,
    trigger: Box<Predicate>,
    effect: Box<Effect>,
}

impl FnEvent {
    pub fn new(
        id: impl Into<String>,
        slots: Vec<SlotRef>,
        trigger: impl Fn(&View<'_>) -> bool + Send + Sync + 'static,
        effect: impl Fn(&mut EffectCtx<'_>) -> Result<(), CommandFailure> + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            slots,
            trigger: Box::new(trigger),
            effect: Box::new(effect),
        }
    }
}

impl Event for FnEvent {
    fn id(&self) -> &str {
        &self.id
    }

    fn slots(&self) -> Vec<SlotRef> {
        self.slots.clone()
    }

    fn triggered(&self, view: &View<'_>) -> bool {
        (self.trigger)(view)
    }

    fn apply(&self, ctx: &mut EffectCtx<'_>) -> Result<(), CommandFailure> {
        (self.effect)(ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::Command;
    use crate::state::{EntitySpec, LIdx};

    fn cooling_env() -> (EnvironmentState, SIdx) {
        let mut env = EnvironmentState::new(0.01).unwrap();
        env.register_entity(EntitySpec::heater("h", 1.0).with_value("T_target", 350.0))
            .unwrap();
        let t = env.s_slot("h", "T_target").unwrap();
        (env, t)
    }

    fn newton(id: &str, t: SIdx, rate: f64, ambient: f64) -> Arc<dyn Process> {
        Arc::new(FnProcess::new(id, vec![SlotRef::S(t)], move |v, ds| {
            ds[t.0] += -rate * (v.s[t.0] - ambient);
        }))
    }

    #[test]
    fn empty_dynamics_only_advance_time() {
        let (mut env, _) = cooling_env();
        let before = env.vectors.clone();
        let report = env.step(&ActionVector::new()).unwrap();
        assert_eq!(env.vectors.s, before.s);
        assert_eq!(env.vectors.l, before.l);
        assert_eq!(env.time(), 0.01);
        assert!(report.fired.is_empty());
    }

    #[test]
    fn single_euler_newton_step() {
        let (mut env, t) = cooling_env();
        env.register_process(newton("cool", t, 0.1, 300.0)).unwrap();
        env.step(&ActionVector::new()).unwrap();
        // 350 - 0.01 * 0.1 * 50
        assert!((env.s()[t.0] - 349.95).abs() < 1e-12);
    }

    #[test]
    fn duplicate_process_and_bad_slot() {
        let (mut env, t) = cooling_env();
        env.register_process(newton("cool", t, 0.1, 300.0)).unwrap();
        assert_eq!(
            env.register_process(newton("cool", t, 0.1, 300.0)),
            Err(StateError::DuplicateId("cool".into()))
        );
        let bogus = SIdx(999);
        assert!(matches!(
            env.register_process(newton("bogus", bogus, 0.1, 300.0)),
            Err(StateError::UnknownSlot(_))
        ));
    }

    #[test]
    fn event_registration_errors() {
        let (mut env, _) = cooling_env();
        let on = env.l_slot("h", "heaterOn").unwrap();
        let mk = |id: &str, l: LIdx| -> Arc<dyn Event> {
            Arc::new(FnEvent::new(
                id,
                vec![SlotRef::L(l)],
                |_| true,
                move |ctx| {
                    ctx.l[l.0] = true;
                    Ok(())
                },
            ))
        };
        env.register_event(mk("contact", on)).unwrap();
        assert!(matches!(
            env.register_event(mk("contact", on)),
            Err(StateError::DuplicateId(_))
        ));
        assert!(matches!(
            env.register_event(mk("bad", LIdx(42))),
            Err(StateError::UnknownSlot(_))
        ));
    }

    #[test]
    fn non_finite_state_rolls_back() {
        let (mut env, t) = cooling_env();
        env.register_process(Arc::new(FnProcess::new("blowup", vec![SlotRef::S(t)], move |_, ds| {
            ds[t.0] += f64::INFINITY;
        })))
        .unwrap();
        let before = env.vectors.clone();
        let err = env.step(&ActionVector::new()).unwrap_err();
        assert!(matches!(err, EngineError::NonFiniteState { .. }));
        assert_eq!(env.vectors, before);
        assert_eq!(env.time(), 0.0);
    }

    #[test]
    fn rollback_restores_transfer_totals() {
        let mut env = EnvironmentState::new(0.01).unwrap();
        env.register_entity(EntitySpec::container("a")).unwrap();
        env.register_entity(EntitySpec::container("b")).unwrap();
        env.set_initial("a", "solvent", crate::state::InitialValue::Real(1.0))
            .unwrap();
        let t = env.s_slot("b", "solvent").unwrap();
        env.register_process(Arc::new(FnProcess::new("blowup", vec![SlotRef::S(t)], move |v, ds| {
            if v.time > 0.0 {
                ds[t.0] += f64::NAN;
            }
        })))
        .unwrap();
        let pour = ActionVector::new().with_value("a", "pour.b", 0.1);
        env.step(&pour).unwrap();
        assert!(env.step(&pour).is_err());
        assert_eq!(env.transferred("a", "b").unwrap().solvent, 0.1);
        assert_eq!(env.read_slot("a", "solvent").unwrap().value, 0.9);
    }

    #[test]
    fn unknown_channel_is_rejected() {
        let (mut env, _) = cooling_env();
        let a = ActionVector::new().with_value("h", "angle", 1.0);
        assert!(matches!(env.step(&a), Err(EngineError::UnknownChannel { .. })));
        let a = ActionVector::new().with_value("ghost", "angle", 1.0);
        assert!(matches!(
            env.step(&a),
            Err(EngineError::State(StateError::UnknownEntity(_)))
        ));
    }

    #[test]
    fn inactive_process_contributes_nothing() {
        let (mut env, t) = cooling_env();
        let p = FnProcess::new("cool", vec![SlotRef::S(t)], move |_, ds| ds[t.0] -= 1.0)
            .with_precondition("never", |_| false);
        env.register_process(Arc::new(p)).unwrap();
        let report = env.step(&ActionVector::new()).unwrap();
        assert_eq!(env.s()[t.0], 350.0);
        assert!(report.active.is_empty());
        assert_eq!(env.failures()[0].precondition, "never");
    }

    #[test]
    fn disabled_process_is_inactive() {
        let (mut env, t) = cooling_env();
        env.register_process(newton("cool", t, 0.1, 300.0)).unwrap();
        env.set_process_enabled("cool", false).unwrap();
        env.step(&ActionVector::new()).unwrap();
        assert_eq!(env.s()[t.0], 350.0);
    }

    #[test]
    fn rk4_matches_exponential_closely() {
        let (mut env, t) = cooling_env();
        env.integrator = Integrator::Rk4;
        env.register_process(newton("cool", t, 0.1, 300.0)).unwrap();
        for _ in 0..1000 {
            env.step(&ActionVector::new()).unwrap();
        }
        let exact = 300.0 + 50.0 * (-0.1f64 * 10.0).exp();
        assert!((env.s()[t.0] - exact).abs() < 1e-9);
    }

    #[test]
    fn batch_length_mismatch() {
        let (env, _) = cooling_env();
        let mut batch = env.clone_batch(2).unwrap();
        let a = vec![ActionVector::new(); 3];
        assert!(matches!(
            step_batch(&mut batch, &a),
            Err(EngineError::LengthMismatch { envs: 2, actions: 3 })
        ));
    }

    #[test]
    fn identical_batch_members_stay_identical() {
        let (mut env, t) = cooling_env();
        env.register_process(newton("cool", t, 0.1, 300.0)).unwrap();
        let mut batch = env.clone_batch(2).unwrap();
        let a = vec![ActionVector::new().with_command("h", Command::Heater { on: true, target: None }); 2];
        for _ in 0..10 {
            step_batch(&mut batch, &a).unwrap();
        }
        assert_eq!(batch.environments[0].vectors, batch.environments[1].vectors);
    }
}
