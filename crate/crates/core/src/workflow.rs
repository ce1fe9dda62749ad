//! Hierarchical state-machine workflows and the verification protocol.
//!
//! A workflow is a tree whose leaves are primitive actions. The executor
//! runs leaves strictly left to right, depth first, one at a time. Each call
//! to [`Workflow::tick`] yields the action vector for the next engine step.
//!
//! Leaf timing at step `dt`:
//!
//! * `Wait(d)` occupies `⌈d/dt⌉` ticks and emits nothing;
//! * `Place`/`Pick` occupy `⌈duration/dt⌉` ticks (at least one) and emit the
//!   placement command on the last of them;
//! * `Pour` spreads its mass linearly over `⌈duration/dt⌉` ticks;
//! * device commands occupy one tick;
//! * `ReadScale` records the reading without consuming a tick.
//!
//! A leaf is observed complete on the tick after its last emission, and the
//! next leaf starts on that same tick. Commands that the engine rejects show
//! up in the failure log; the leaf then fails and the workflow halts.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Deserializer};

use crate::action::{ActionVector, Command, LhCommand, ANGLE_CHANNEL, POUR_CHANNEL_PREFIX};
use crate::error::WorkflowError;
use crate::state::{EntityId, EnvironmentState, Layout, PreconditionFailure};
use crate::units::de;

/// Default duration of Place/Pick proxies, s.
pub const DEFAULT_PLACE_DURATION: f64 = 2.0;
/// Default duration of Pour proxies, s.
pub const DEFAULT_POUR_DURATION: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeStatus {
    NotStarted,
    Running,
    Done,
    Failed,
}

impl NodeStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, NodeStatus::Done | NodeStatus::Failed)
    }
}

impl fmt::Display for NodeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NodeStatus::NotStarted => "not-started",
            NodeStatus::Running => "running",
            NodeStatus::Done => "done",
            NodeStatus::Failed => "failed",
        };
        f.write_str(s)
    }
}

fn default_place() -> f64 {
    DEFAULT_PLACE_DURATION
}

fn default_pour() -> f64 {
    DEFAULT_POUR_DURATION
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PrimitiveAction {
    Wait {
        #[serde(deserialize_with = "de::time")]
        duration: f64,
    },
    Place {
        object: String,
        surface: String,
        #[serde(default = "default_place", deserialize_with = "de::time")]
        duration: f64,
    },
    Pick {
        object: String,
        surface: String,
        #[serde(default = "default_place", deserialize_with = "de::time")]
        duration: f64,
    },
    /// Transfers `mass` kg of solvent (with proportional solutes).
    Pour {
        src: String,
        dst: String,
        #[serde(deserialize_with = "de::mass")]
        mass: f64,
        #[serde(default = "default_pour", deserialize_with = "de::time")]
        duration: f64,
    },
    HeaterSet {
        id: String,
        on: bool,
        #[serde(default, deserialize_with = "de::temperature_opt")]
        target: Option<f64>,
    },
    LiquidHandler {
        id: String,
        #[serde(deserialize_with = "lh_command")]
        cmd: LhCommand,
    },
    ReadScale {
        id: String,
        label: String,
    },
    SetKnob {
        id: String,
        #[serde(deserialize_with = "de::angle")]
        angle: f64,
    },
}

#[derive(Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
enum LhSpec {
    LoadTip,
    RemoveTip,
    MoveToWell {
        #[serde(default)]
        target: Option<String>,
    },
    Aspirate {
        #[serde(deserialize_with = "de::volume")]
        volume: f64,
    },
    Dispense {
        #[serde(deserialize_with = "de::volume")]
        volume: f64,
    },
}

fn lh_command<'de, D: Deserializer<'de>>(d: D) -> Result<LhCommand, D::Error> {
    Ok(match LhSpec::deserialize(d)? {
        LhSpec::LoadTip => LhCommand::LoadTip,
        LhSpec::RemoveTip => LhCommand::RemoveTip,
        LhSpec::MoveToWell { target } => LhCommand::MoveToWell(target.map(EntityId::from)),
        LhSpec::Aspirate { volume } => LhCommand::Aspirate(volume),
        LhSpec::Dispense { volume } => LhCommand::Dispense(volume),
    })
}

impl PrimitiveAction {
    pub fn name(&self) -> &'static str {
        match self {
            PrimitiveAction::Wait { .. } => "Wait",
            PrimitiveAction::Place { .. } => "Place",
            PrimitiveAction::Pick { .. } => "Pick",
            PrimitiveAction::Pour { .. } => "Pour",
            PrimitiveAction::HeaterSet { .. } => "HeaterSet",
            PrimitiveAction::LiquidHandler { .. } => "LiquidHandlerCmd",
            PrimitiveAction::ReadScale { .. } => "ReadScale",
            PrimitiveAction::SetKnob { .. } => "SetKnob",
        }
    }

    /// Number of engine steps the leaf occupies.
    pub fn ticks(&self, dt: f64) -> u64 {
        match self {
            PrimitiveAction::Wait { duration } => steps_for(*duration, dt),
            PrimitiveAction::Place { duration, .. }
            | PrimitiveAction::Pick { duration, .. }
            | PrimitiveAction::Pour { duration, .. } => steps_for(*duration, dt).max(1),
            PrimitiveAction::HeaterSet { .. }
            | PrimitiveAction::LiquidHandler { .. }
            | PrimitiveAction::SetKnob { .. } => 1,
            PrimitiveAction::ReadScale { .. } => 0,
        }
    }

    /// Failure-log source whose new entries fail this leaf.
    fn failure_source(&self) -> Option<String> {
        match self {
            PrimitiveAction::Place { object, .. } => Some(format!("{object}.place")),
            PrimitiveAction::Pick { object, .. } => Some(format!("{object}.pick")),
            PrimitiveAction::Pour { src, dst, .. } => Some(format!("{src}.{POUR_CHANNEL_PREFIX}{dst}")),
            PrimitiveAction::HeaterSet { id, .. } => Some(format!("{id}.heater")),
            PrimitiveAction::LiquidHandler { id, .. } => Some(format!("{id}.lh")),
            _ => None,
        }
    }

    fn emit(&self, progress: u64, n: u64, out: &mut ActionVector) {
        match self {
            PrimitiveAction::Wait { .. } | PrimitiveAction::ReadScale { .. } => {}
            PrimitiveAction::Place { object, surface, .. } if progress + 1 == n => {
                out.command(
                    object.as_str(),
                    Command::Place {
                        surface: surface.as_str().into(),
                    },
                );
            }
            PrimitiveAction::Pick { object, surface, .. } if progress + 1 == n => {
                out.command(
                    object.as_str(),
                    Command::Pick {
                        surface: surface.as_str().into(),
                    },
                );
            }
            PrimitiveAction::Place { .. } | PrimitiveAction::Pick { .. } => {}
            PrimitiveAction::Pour { src, dst, mass, .. } => {
                let share = pour_share(*mass, progress, n);
                out.set(src.as_str(), &format!("{POUR_CHANNEL_PREFIX}{dst}"), share);
            }
            PrimitiveAction::HeaterSet { id, on, target } => {
                out.command(
                    id.as_str(),
                    Command::Heater {
                        on: *on,
                        target: *target,
                    },
                );
            }
            PrimitiveAction::LiquidHandler { id, cmd } => {
                out.command(id.as_str(), Command::LiquidHandler(cmd.clone()));
            }
            PrimitiveAction::SetKnob { id, angle } => {
                out.set(id.as_str(), ANGLE_CHANNEL, *angle);
            }
        }
    }
}

/// `⌈duration/dt⌉`, robust to `duration` being a float multiple of `dt`.
pub fn steps_for(duration: f64, dt: f64) -> u64 {
    if duration <= 0.0 {
        return 0;
    }
    (duration / dt - 1e-9).ceil().max(1.0) as u64
}

/// Linear partition of `mass` over `n` steps; shares sum to `mass`.
pub fn pour_share(mass: f64, progress: u64, n: u64) -> f64 {
    let n = n as f64;
    mass * (progress + 1) as f64 / n - mass * progress as f64 / n
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowNode {
    pub id: String,
    pub children: Vec<WorkflowNode>,
    pub action: Option<PrimitiveAction>,
    pub status: NodeStatus,
}

impl WorkflowNode {
    pub fn leaf(id: impl Into<String>, action: PrimitiveAction) -> Self {
        Self {
            id: id.into(),
            children: Vec::new(),
            action: Some(action),
            status: NodeStatus::NotStarted,
        }
    }

    pub fn branch(id: impl Into<String>, children: Vec<WorkflowNode>) -> Self {
        Self {
            id: id.into(),
            children,
            action: None,
            status: NodeStatus::NotStarted,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&WorkflowNode> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a WorkflowNode>) {
        if self.is_leaf() {
            out.push(self);
        } else {
            for c in &self.children {
                c.collect_leaves(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    pub fn find(&self, id: &str) -> Option<&WorkflowNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(id))
    }

    fn leaf_paths(&self, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if self.is_leaf() {
            out.push(prefix.clone());
            return;
        }
        for (i, c) in self.children.iter().enumerate() {
            prefix.push(i);
            c.leaf_paths(prefix, out);
            prefix.pop();
        }
    }
}

/// One node of a workflow description. Children are inline nodes or ids of
/// entries in [`WorkflowSpec::nodes`].
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    #[serde(default)]
    pub children: Vec<ChildSpec>,
    #[serde(default)]
    pub action: Option<PrimitiveAction>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChildSpec {
    Ref(String),
    Node(Box<NodeSpec>),
}

impl<'de> Deserialize<'de> for ChildSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        // Untagged enums hide the inner error, so dispatch by hand.
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::String(s) => Ok(ChildSpec::Ref(s)),
            other => NodeSpec::deserialize(other)
                .map(|n| ChildSpec::Node(Box::new(n)))
                .map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowSpec {
    pub root: ChildSpec,
    #[serde(default)]
    pub nodes: Vec<NodeSpec>,
}

impl WorkflowSpec {
    pub fn single(node: NodeSpec) -> Self {
        Self {
            root: ChildSpec::Node(Box::new(node)),
            nodes: Vec::new(),
        }
    }
}

/// Resolves references, rejects cycles and checks every leaf against the
/// environment's entities.
pub fn build_workflow(spec: &WorkflowSpec, layout: &Layout) -> Result<WorkflowNode, WorkflowError> {
    let mut named: BTreeMap<&str, &NodeSpec> = BTreeMap::new();
    for n in &spec.nodes {
        if named.insert(n.id.as_str(), n).is_some() {
            return Err(WorkflowError::DuplicateNode(n.id.clone()));
        }
    }
    let mut stack = Vec::new();
    let mut seen = HashSet::new();
    let root = resolve(&spec.root, &named, &mut stack, &mut seen)?;
    validate_tree(&root, layout)?;
    Ok(root)
}

fn resolve<'a>(
    child: &'a ChildSpec,
    named: &BTreeMap<&str, &'a NodeSpec>,
    stack: &mut Vec<String>,
    seen: &mut HashSet<String>,
) -> Result<WorkflowNode, WorkflowError> {
    let node: &NodeSpec = match child {
        ChildSpec::Ref(id) => named
            .get(id.as_str())
            .ok_or_else(|| WorkflowError::UnknownNode(id.clone()))?,
        ChildSpec::Node(n) => n,
    };
    if stack.contains(&node.id) {
        return Err(WorkflowError::CycleDetected(node.id.clone()));
    }
    if !seen.insert(node.id.clone()) {
        return Err(WorkflowError::DuplicateNode(node.id.clone()));
    }
    match (&node.action, node.children.is_empty()) {
        (Some(_), false) => return Err(WorkflowError::LeafWithChildren(node.id.clone())),
        (None, true) => return Err(WorkflowError::EmptyNode(node.id.clone())),
        _ => {}
    }
    stack.push(node.id.clone());
    let mut children = Vec::with_capacity(node.children.len());
    for c in &node.children {
        children.push(resolve(c, named, stack, seen)?);
    }
    stack.pop();
    Ok(WorkflowNode {
        id: node.id.clone(),
        children,
        action: node.action.clone(),
        status: NodeStatus::NotStarted,
    })
}

/// Structural and reference checks for a tree built in code.
pub fn validate_tree(root: &WorkflowNode, layout: &Layout) -> Result<(), WorkflowError> {
    let mut ids = HashSet::new();
    validate_node(root, layout, &mut ids)
}

fn validate_node(node: &WorkflowNode, layout: &Layout, ids: &mut HashSet<String>) -> Result<(), WorkflowError> {
    if !ids.insert(node.id.clone()) {
        return Err(WorkflowError::DuplicateNode(node.id.clone()));
    }
    match (&node.action, node.children.is_empty()) {
        (Some(_), false) => return Err(WorkflowError::LeafWithChildren(node.id.clone())),
        (None, true) => return Err(WorkflowError::EmptyNode(node.id.clone())),
        (Some(a), true) => validate_action(&node.id, a, layout)?,
        (None, false) => {}
    }
    for c in &node.children {
        validate_node(c, layout, ids)?;
    }
    Ok(())
}

fn validate_action(node: &str, action: &PrimitiveAction, layout: &Layout) -> Result<(), WorkflowError> {
    let entity = |id: &str, expected: Option<&'static str>| -> Result<usize, WorkflowError> {
        let e = layout.entity_index(id).map_err(|_| WorkflowError::UnknownEntity {
            node: node.to_string(),
            entity: id.to_string(),
        })?;
        let kind = layout.entity_kind(e).name();
        if let Some(expected) = expected {
            if kind != expected {
                return Err(WorkflowError::WrongKind {
                    node: node.to_string(),
                    entity: id.to_string(),
                    kind,
                    expected,
                });
            }
        }
        Ok(e)
    };
    let invalid = |reason: &str| WorkflowError::InvalidParameter {
        node: node.to_string(),
        reason: reason.to_string(),
    };
    let non_negative = |name: &str, v: f64| {
        if v >= 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(invalid(&format!("{name} must be non-negative")))
        }
    };
    match action {
        PrimitiveAction::Wait { duration } => non_negative("duration", *duration)?,
        PrimitiveAction::Place {
            object,
            surface,
            duration,
        }
        | PrimitiveAction::Pick {
            object,
            surface,
            duration,
        } => {
            let o = entity(object, None)?;
            entity(surface, None)?;
            if !layout.entity_kind(o).is_movable() {
                return Err(invalid("object cannot be moved"));
            }
            if object == surface {
                return Err(invalid("object and surface must differ"));
            }
            non_negative("duration", *duration)?;
        }
        PrimitiveAction::Pour {
            src,
            dst,
            mass,
            duration,
        } => {
            entity(src, Some("container"))?;
            entity(dst, Some("container"))?;
            if src == dst {
                return Err(invalid("source and destination must differ"));
            }
            non_negative("mass", *mass)?;
            non_negative("duration", *duration)?;
        }
        PrimitiveAction::HeaterSet { id, target, .. } => {
            entity(id, Some("heater"))?;
            if let Some(t) = target {
                if !(*t > 0.0) || !t.is_finite() {
                    return Err(invalid("target temperature must be positive"));
                }
            }
        }
        PrimitiveAction::LiquidHandler { id, cmd } => {
            entity(id, Some("liquid-handler"))?;
            match cmd {
                LhCommand::MoveToWell(Some(w)) => {
                    entity(w.as_str(), Some("container"))?;
                }
                LhCommand::Aspirate(v) | LhCommand::Dispense(v) => non_negative("volume", *v)?,
                _ => {}
            }
        }
        PrimitiveAction::ReadScale { id, .. } => {
            entity(id, Some("scale"))?;
        }
        PrimitiveAction::SetKnob { id, angle } => {
            entity(id, Some("faucet"))?;
            non_negative("angle", *angle)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafStart {
    pub leaf: String,
    pub tick: u64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleRecord {
    pub label: String,
    pub scale: String,
    pub time: f64,
    /// kg.
    pub value: f64,
}

/// Why a leaf failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionFailed {
    pub leaf: String,
    pub cause: String,
    pub time: f64,
}

impl fmt::Display for ActionFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "leaf `{}` failed at t={} s: {}", self.leaf, self.time, self.cause)
    }
}

/// Depth-first executor over a validated tree.
#[derive(Debug, Clone)]
pub struct Workflow {
    root: WorkflowNode,
    leaves: Vec<Vec<usize>>,
    dt: f64,
    current: usize,
    started: bool,
    progress: u64,
    ticks: u64,
    seen_failures: usize,
    starts: Vec<LeafStart>,
    readings: Vec<ScaleRecord>,
    failure: Option<ActionFailed>,
}

impl Workflow {
    /// Validates `root` against `env` and resets every status.
    pub fn new(mut root: WorkflowNode, env: &EnvironmentState) -> Result<Self, WorkflowError> {
        validate_tree(&root, env.layout())?;
        reset(&mut root);
        let mut leaves = Vec::new();
        root.leaf_paths(&mut Vec::new(), &mut leaves);
        Ok(Self {
            root,
            leaves,
            dt: env.dt(),
            current: 0,
            started: false,
            progress: 0,
            ticks: 0,
            seen_failures: env.failures().len(),
            starts: Vec::new(),
            readings: Vec::new(),
            failure: None,
        })
    }

    pub fn from_spec(spec: &WorkflowSpec, env: &EnvironmentState) -> Result<Self, WorkflowError> {
        let root = build_workflow(spec, env.layout())?;
        Self::new(root, env)
    }

    pub fn root(&self) -> &WorkflowNode {
        &self.root
    }

    pub fn status(&self) -> NodeStatus {
        self.root.status
    }

    pub fn is_terminated(&self) -> bool {
        self.root.status.is_terminal()
    }

    pub fn leaf_starts(&self) -> &[LeafStart] {
        &self.starts
    }

    pub fn readings(&self) -> &[ScaleRecord] {
        &self.readings
    }

    pub fn reading(&self, label: &str) -> Option<f64> {
        self.readings.iter().find(|r| r.label == label).map(|r| r.value)
    }

    pub fn failure(&self) -> Option<&ActionFailed> {
        self.failure.as_ref()
    }

    /// Total engine steps the leaves occupy if nothing fails.
    pub fn planned_steps(&self) -> u64 {
        self.root
            .leaves()
            .iter()
            .filter_map(|l| l.action.as_ref())
            .map(|a| a.ticks(self.dt))
            .sum()
    }

    fn node_mut(&mut self, path: &[usize]) -> &mut WorkflowNode {
        let mut n = &mut self.root;
        for &i in path {
            n = &mut n.children[i];
        }
        n
    }

    fn set_path_status(&mut self, path: &[usize], status: NodeStatus) {
        for depth in 0..=path.len() {
            let n = self.node_mut(&path[..depth]);
            n.status = status;
        }
    }

    fn complete_leaf(&mut self, path: &[usize]) {
        self.node_mut(path).status = NodeStatus::Done;
        for depth in (0..path.len()).rev() {
            let n = self.node_mut(&path[..depth]);
            if n.children.iter().all(|c| c.status == NodeStatus::Done) {
                n.status = NodeStatus::Done;
            } else {
                break;
            }
        }
    }

    fn fail(&mut self, path: &[usize], leaf: String, cause: String, time: f64) {
        self.set_path_status(path, NodeStatus::Failed);
        self.failure = Some(ActionFailed { leaf, cause, time });
    }

    /// Advances the running leaf and returns the actions for the next step
    /// together with the root status. After termination it returns empty
    /// actions and the unchanged status.
    pub fn tick(&mut self, env: &EnvironmentState) -> (ActionVector, NodeStatus) {
        let mut out = ActionVector::new();
        if self.is_terminated() {
            return (out, self.root.status);
        }
        let tick = self.ticks;
        self.ticks += 1;
        let new_failures = &env.failures()[self.seen_failures.min(env.failures().len())..];
        let new_failures: Vec<PreconditionFailure> = new_failures.to_vec();
        self.seen_failures = env.failures().len();

        loop {
            if self.current >= self.leaves.len() {
                self.root.status = NodeStatus::Done;
                return (out, NodeStatus::Done);
            }
            let path = self.leaves[self.current].clone();
            let leaf = self.node_mut(&path).clone();
            let action = leaf.action.as_ref().expect("validated leaves carry actions");

            if !self.started {
                self.started = true;
                self.progress = 0;
                self.set_path_status(&path, NodeStatus::Running);
                self.starts.push(LeafStart {
                    leaf: leaf.id.clone(),
                    tick,
                    time: env.time(),
                });
                if let PrimitiveAction::Pour { src, mass, .. } = action {
                    let available = env.s_slot(src, "solvent").map(|i| env.s()[i.index()]).unwrap_or(0.0);
                    if *mass > available * (1.0 + 1e-9) + 1e-15 {
                        let cause = format!("Overdraw: cannot draw {mass} kg from {available} kg");
                        self.fail(&path, leaf.id.clone(), cause, env.time());
                        return (ActionVector::new(), NodeStatus::Failed);
                    }
                }
            } else if let Some(source) = action.failure_source() {
                if let Some(f) = new_failures.iter().find(|f| f.source == source) {
                    let cause = f.precondition.clone();
                    self.fail(&path, leaf.id.clone(), cause, f.time);
                    return (ActionVector::new(), NodeStatus::Failed);
                }
            }

            let n = action.ticks(self.dt);
            if self.progress < n {
                action.emit(self.progress, n, &mut out);
                self.progress += 1;
                return (out, self.root.status);
            }

            if let PrimitiveAction::ReadScale { id, label } = action {
                let value = crate::devices::scale_read(env, id).unwrap_or(f64::NAN);
                self.readings.push(ScaleRecord {
                    label: label.clone(),
                    scale: id.clone(),
                    time: env.time(),
                    value,
                });
            }
            self.complete_leaf(&path);
            self.current += 1;
            self.started = false;
        }
    }
}

fn reset(node: &mut WorkflowNode) {
    node.status = NodeStatus::NotStarted;
    for c in &mut node.children {
        reset(c);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Comparator {
    /// final ≥ value.
    AtLeast(f64),
    /// final > value.
    Above(f64),
    /// final ≤ value.
    AtMost(f64),
    /// final < fraction × running peak.
    BelowFractionOfPeak(f64),
}

impl Comparator {
    fn symbol(&self) -> &'static str {
        match self {
            Comparator::AtLeast(_) => ">=",
            Comparator::Above(_) => ">",
            Comparator::AtMost(_) => "<=",
            Comparator::BelowFractionOfPeak(_) => "<",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub container: String,
    pub species: String,
    pub comparator: Comparator,
}

impl Target {
    pub fn at_least(container: &str, species: &str, min: f64) -> Self {
        Self {
            container: container.into(),
            species: species.into(),
            comparator: Comparator::AtLeast(min),
        }
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            container: String,
            species: String,
            #[serde(default, deserialize_with = "de::molality_opt")]
            min: Option<f64>,
            #[serde(default, deserialize_with = "de::molality_opt")]
            above: Option<f64>,
            #[serde(default, deserialize_with = "de::molality_opt")]
            max: Option<f64>,
            #[serde(default)]
            below_fraction_of_peak: Option<f64>,
        }
        let r = Raw::deserialize(d)?;
        let given = [
            r.min.map(Comparator::AtLeast),
            r.above.map(Comparator::Above),
            r.max.map(Comparator::AtMost),
            r.below_fraction_of_peak.map(Comparator::BelowFractionOfPeak),
        ];
        let mut it = given.into_iter().flatten();
        let comparator = match (it.next(), it.next()) {
            (Some(c), None) => c,
            _ => {
                return Err(serde::de::Error::custom(
                    "target needs exactly one of `min`, `above`, `max`, `below_fraction_of_peak`",
                ))
            }
        };
        Ok(Target {
            container: r.container,
            species: r.species,
            comparator,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetResult {
    pub container: String,
    pub species: String,
    pub final_molality: f64,
    /// The molality the final value is compared against.
    pub threshold: f64,
    pub comparator: Comparator,
    pub pass: bool,
}

impl fmt::Display for TargetResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}.{} = {:.6} mol/kg {} {:.6}",
            if self.pass { "PASS" } else { "FAIL" },
            self.container,
            self.species,
            self.final_molality,
            self.comparator.symbol(),
            self.threshold
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub completed: bool,
    pub targets: Vec<TargetResult>,
    pub failures: Vec<PreconditionFailure>,
    pub action_failure: Option<ActionFailed>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.completed && self.targets.iter().all(|t| t.pass)
    }
}

/// Checks the final state against `targets`.
///
/// Targets may reference containers/species that do not exist; they simply
/// fail. `BelowFractionOfPeak` uses the environment's peak watch when one is
/// registered and the final value otherwise.
pub fn verify(
    env: &EnvironmentState,
    workflow: &Workflow,
    targets: &[Target],
) -> Result<VerificationReport, WorkflowError> {
    if !workflow.is_terminated() {
        return Err(WorkflowError::StillRunning);
    }
    Ok(report(env, workflow, targets))
}

/// Like [`verify`], but a workflow that has not terminated counts as not
/// completed instead of being an error.
pub fn report(env: &EnvironmentState, workflow: &Workflow, targets: &[Target]) -> VerificationReport {
    let completed = workflow.status() == NodeStatus::Done;
    let results = targets
        .iter()
        .map(|t| {
            let value = env.molality(&t.container, &t.species).ok();
            let final_molality = value.unwrap_or(f64::NAN);
            let threshold = match t.comparator {
                Comparator::AtLeast(v) | Comparator::Above(v) | Comparator::AtMost(v) => v,
                Comparator::BelowFractionOfPeak(f) => f * env.peak(&t.container, &t.species).unwrap_or(final_molality),
            };
            let ok = value.is_some()
                && match t.comparator {
                    Comparator::AtLeast(_) => final_molality >= threshold,
                    Comparator::Above(_) => final_molality > threshold,
                    Comparator::AtMost(_) => final_molality <= threshold,
                    Comparator::BelowFractionOfPeak(_) => final_molality < threshold,
                };
            TargetResult {
                container: t.container.clone(),
                species: t.species.clone(),
                final_molality,
                threshold,
                comparator: t.comparator,
                pass: completed && ok,
            }
        })
        .collect();
    VerificationReport {
        completed,
        targets: results,
        failures: env.failures().to_vec(),
        action_failure: workflow.failure().cloned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::{register_heater, register_liquid_handler};
    use crate::state::{EntityKind, EntitySpec, LiquidHandlerParams};

    fn lab() -> EnvironmentState {
        let mut env = EnvironmentState::default();
        env.register_entity(EntitySpec::ambient("air", 298.15)).unwrap();
        env.register_entity(EntitySpec::heater("heater", 20.0)).unwrap();
        env.register_entity(EntitySpec::container("beaker").with_value("solvent", 0.1))
            .unwrap();
        env.register_entity(EntitySpec::container("flask")).unwrap();
        env.register_entity(EntitySpec::new(
            "ot2",
            EntityKind::LiquidHandler(LiquidHandlerParams::default()),
        ))
        .unwrap();
        register_heater(&mut env, "heater", 0.5, 900.0, 298.15).unwrap();
        register_liquid_handler(&mut env, "ot2").unwrap();
        crate::proxy::register_contact(&mut env, "beaker", "heater").unwrap();
        env
    }

    fn wait(id: &str, d: f64) -> WorkflowNode {
        WorkflowNode::leaf(id, PrimitiveAction::Wait { duration: d })
    }

    fn run(env: &mut EnvironmentState, wf: &mut Workflow, max: usize) -> Vec<NodeStatus> {
        let mut out = Vec::new();
        for _ in 0..max {
            let (a, st) = wf.tick(env);
            out.push(st);
            if st.is_terminal() {
                break;
            }
            env.step(&a).unwrap();
        }
        out
    }

    #[test]
    fn wait_runs_two_ticks() {
        let mut env = lab();
        let mut wf = Workflow::new(wait("w", 0.02), &env).unwrap();
        let st = run(&mut env, &mut wf, 10);
        assert_eq!(st, vec![NodeStatus::Running, NodeStatus::Running, NodeStatus::Done]);
    }

    #[test]
    fn place_then_heater() {
        let mut env = lab();
        let root = WorkflowNode::branch(
            "root",
            vec![
                WorkflowNode::leaf(
                    "place",
                    PrimitiveAction::Place {
                        object: "beaker".into(),
                        surface: "heater".into(),
                        duration: 0.0,
                    },
                ),
                WorkflowNode::leaf(
                    "on",
                    PrimitiveAction::HeaterSet {
                        id: "heater".into(),
                        on: true,
                        target: Some(343.15),
                    },
                ),
            ],
        );
        let mut wf = Workflow::new(root, &env).unwrap();
        let (a, _) = wf.tick(&env);
        env.step(&a).unwrap();
        assert!(env.read_flag("beaker", "contact.heater").unwrap());
        assert!(!env.read_flag("heater", "heaterOn").unwrap());
        let (a, _) = wf.tick(&env);
        env.step(&a).unwrap();
        assert!(env.read_flag("heater", "heaterOn").unwrap());
        let (a, st) = wf.tick(&env);
        assert_eq!(st, NodeStatus::Done);
        assert!(a.is_empty());
        assert_eq!(wf.tick(&env), (ActionVector::new(), NodeStatus::Done));
    }

    #[test]
    fn pour_spreads_mass_and_overdraw_fails() {
        let mut env = lab();
        let pour = |mass: f64| {
            WorkflowNode::leaf(
                "pour",
                PrimitiveAction::Pour {
                    src: "beaker".into(),
                    dst: "flask".into(),
                    mass,
                    duration: 0.05,
                },
            )
        };
        let mut wf = Workflow::new(pour(0.03), &env).unwrap();
        let st = run(&mut env, &mut wf, 100);
        assert_eq!(st.len(), 6);
        assert_eq!(*st.last().unwrap(), NodeStatus::Done);
        let w = env.read_slot("flask", "solvent").unwrap().value;
        assert!((w - 0.03).abs() < 1e-15);

        let mut wf = Workflow::new(pour(1.0), &env).unwrap();
        let st = run(&mut env, &mut wf, 100);
        assert_eq!(st, vec![NodeStatus::Failed]);
        assert!(wf.failure().unwrap().cause.starts_with("Overdraw"));
        assert_eq!(wf.root().status, NodeStatus::Failed);
    }

    #[test]
    fn rejected_command_fails_ancestors() {
        let mut env = lab();
        let root = WorkflowNode::branch(
            "root",
            vec![
                WorkflowNode::branch(
                    "prep",
                    vec![WorkflowNode::leaf(
                        "asp",
                        PrimitiveAction::LiquidHandler {
                            id: "ot2".into(),
                            cmd: LhCommand::Aspirate(10.0),
                        },
                    )],
                ),
                wait("after", 1.0),
            ],
        );
        let mut wf = Workflow::new(root, &env).unwrap();
        let st = run(&mut env, &mut wf, 10);
        assert_eq!(st, vec![NodeStatus::Running, NodeStatus::Failed]);
        assert_eq!(wf.failure().unwrap().cause, "tipLoaded");
        assert_eq!(wf.root().find("prep").unwrap().status, NodeStatus::Failed);
        assert_eq!(wf.root().find("after").unwrap().status, NodeStatus::NotStarted);
        let report = verify(&env, &wf, &[Target::at_least("flask", "x", 0.0)]).unwrap();
        assert!(!report.completed);
        assert!(!report.passed());
    }

    #[test]
    fn build_errors() {
        let env = lab();
        let parse = |s: &str| serde_json::from_str::<WorkflowSpec>(s).unwrap();
        let cyc = parse(r#"{"root":"a","nodes":[{"id":"a","children":["b"]},{"id":"b","children":["a"]}]}"#);
        assert_eq!(
            build_workflow(&cyc, env.layout()),
            Err(WorkflowError::CycleDetected("a".into()))
        );
        let own = parse(r#"{"root":{"id":"a","children":[{"id":"a","action":{"type":"wait","duration":1}}]}}"#);
        assert_eq!(
            build_workflow(&own, env.layout()),
            Err(WorkflowError::CycleDetected("a".into()))
        );
        let unknown = parse(r#"{"root":{"id":"p","action":{"type":"pour","src":"ghost","dst":"flask","mass":"1 g"}}}"#);
        assert!(matches!(
            build_workflow(&unknown, env.layout()),
            Err(WorkflowError::UnknownEntity { .. })
        ));
        let both = parse(
            r#"{"root":{"id":"x","action":{"type":"wait","duration":1},"children":[{"id":"y","action":{"type":"wait","duration":1}}]}}"#,
        );
        assert_eq!(
            build_workflow(&both, env.layout()),
            Err(WorkflowError::LeafWithChildren("x".into()))
        );
        let one = parse(r#"{"root":{"id":"w","action":{"type":"wait","duration":"1 s"}}}"#);
        let root = build_workflow(&one, env.layout()).unwrap();
        assert_eq!(root.status, NodeStatus::NotStarted);
        assert_eq!(root.depth(), 1);
    }

    #[test]
    fn verify_requires_termination() {
        let env = lab();
        let wf = Workflow::new(wait("w", 1.0), &env).unwrap();
        assert_eq!(verify(&env, &wf, &[]), Err(WorkflowError::StillRunning));
    }

    #[test]
    fn steps_for_is_robust() {
        assert_eq!(steps_for(0.02, 0.01), 2);
        assert_eq!(steps_for(0.3, 0.1), 3);
        assert_eq!(steps_for(3.0, 0.01), 300);
        assert_eq!(steps_for(0.015, 0.01), 2);
        assert_eq!(steps_for(0.0, 0.01), 0);
        let total: f64 = (0..7).map(|p| pour_share(0.048, p, 7)).sum();
        assert!((total - 0.048).abs() < 1e-17);
    }
}
