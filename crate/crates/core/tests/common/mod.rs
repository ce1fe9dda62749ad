//! Property bodies shared by the proptest suite and the acceptance runner.

use labtwin::action::{ActionVector, LhCommand, POUR_CHANNEL_PREFIX};
use labtwin::devices::{liquid_handler_command, register_liquid_handler};
use labtwin::kinetics::{make_mixture, set_mixture, Species};
use labtwin::state::{EntityKind, EntitySpec, EnvironmentState, LiquidHandlerParams};
use labtwin::workflow::{NodeStatus, PrimitiveAction, Workflow, WorkflowNode};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

// ---------------------------------------------------------------------------
// Mass and mole conservation under pours and pipetting

pub const CONTAINERS: [&str; 3] = ["a", "b", "c"];
pub const SPECIES: [&str; 2] = ["X", "Y"];

#[derive(Debug, Clone)]
pub enum Op {
    Pour { src: usize, dst: usize, frac: f64 },
    Lh(LhOp),
}

#[derive(Debug, Clone)]
pub enum LhOp {
    Load,
    Remove,
    Move(Option<usize>),
    Aspirate(f64),
    Dispense(f64),
}

pub fn op_strategy() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..3usize, 0..3usize, 0.0f64..1.2).prop_map(|(src, dst, frac)| Op::Pour { src, dst, frac }),
        Just(Op::Lh(LhOp::Load)),
        Just(Op::Lh(LhOp::Remove)),
        prop::option::of(0..3usize).prop_map(|w| Op::Lh(LhOp::Move(w))),
        (0.0f64..1500.0).prop_map(|v| Op::Lh(LhOp::Aspirate(v))),
        (0.0f64..1500.0).prop_map(|v| Op::Lh(LhOp::Dispense(v))),
    ]
}

/// Initial solvent masses (kg), initial amounts (mol) and a command sequence.
pub type LabCase = ([f64; 3], [[f64; 2]; 3], Vec<Op>);

pub fn lab_case_strategy() -> impl Strategy<Value = LabCase> {
    (
        prop::array::uniform3(0.0f64..0.2),
        prop::array::uniform3(prop::array::uniform2(0.0f64..0.01)),
        prop::collection::vec(op_strategy(), 1..40),
    )
}

pub fn lab(solvents: &[f64; 3], amounts: &[[f64; 2]; 3]) -> EnvironmentState {
    let mut env = EnvironmentState::default();
    for sp in SPECIES {
        env.register_species(Species::new(sp)).unwrap();
    }
    for c in CONTAINERS {
        env.register_entity(EntitySpec::container(c)).unwrap();
    }
    env.register_entity(EntitySpec::new(
        "ot2",
        EntityKind::LiquidHandler(LiquidHandlerParams::default()),
    ))
    .unwrap();
    register_liquid_handler(&mut env, "ot2").unwrap();
    for (i, c) in CONTAINERS.iter().enumerate() {
        let mix = make_mixture(solvents[i], &[(SPECIES[0], amounts[i][0]), (SPECIES[1], amounts[i][1])]).unwrap();
        set_mixture(&mut env, c, &mix).unwrap();
    }
    env
}

/// Total solvent mass and per-species moles over containers and the tip.
pub fn totals(env: &EnvironmentState) -> [f64; 3] {
    let mut t = [0.0; 3];
    let holders = CONTAINERS.iter().map(|c| (*c, "")).chain([("ot2", "tip.")]);
    for (id, prefix) in holders {
        t[0] += env.read_slot(id, &format!("{prefix}solvent")).unwrap().value;
        for (k, sp) in SPECIES.iter().enumerate() {
            t[k + 1] += env.read_slot(id, &format!("{prefix}n.{sp}")).unwrap().value;
        }
    }
    t
}

pub fn check_conservation((solvents, amounts, ops): LabCase) -> Result<(), TestCaseError> {
    let mut env = lab(&solvents, &amounts);
    let before = totals(&env);
    for op in &ops {
        let actions = match op {
            Op::Pour { src, dst, frac } => {
                let available = env.read_slot(CONTAINERS[*src], "solvent").unwrap().value;
                ActionVector::new().with_value(
                    CONTAINERS[*src],
                    &format!("{POUR_CHANNEL_PREFIX}{}", CONTAINERS[*dst]),
                    available * frac,
                )
            }
            Op::Lh(lh) => {
                let cmd = match lh {
                    LhOp::Load => LhCommand::LoadTip,
                    LhOp::Remove => LhCommand::RemoveTip,
                    LhOp::Move(w) => LhCommand::MoveToWell(w.map(|i| CONTAINERS[i].into())),
                    LhOp::Aspirate(v) => LhCommand::Aspirate(*v),
                    LhOp::Dispense(v) => LhCommand::Dispense(*v),
                };
                liquid_handler_command(&env, "ot2", cmd).unwrap()
            }
        };
        env.step(&actions).unwrap();
    }
    let after = totals(&env);
    for (b, a) in before.iter().zip(&after) {
        prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(f64::MIN_POSITIVE), "{b} -> {a}");
    }
    for c in CONTAINERS {
        prop_assert!(env.read_slot(c, "solvent").unwrap().value >= 0.0);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Workflow executor properties

#[derive(Debug, Clone)]
pub enum Tree {
    Leaf(u8),
    Branch(Vec<Tree>),
}

pub fn tree_strategy() -> impl Strategy<Value = Tree> {
    let leaf = (0u8..6).prop_map(Tree::Leaf);
    leaf.prop_recursive(4, 24, 4, |inner| {
        prop::collection::vec(inner, 1..4).prop_map(Tree::Branch)
    })
}

fn to_node(t: &Tree, counter: &mut usize) -> WorkflowNode {
    *counter += 1;
    let id = format!("n{counter}");
    match t {
        Tree::Leaf(kind) => {
            let action = match kind {
                0 | 1 => PrimitiveAction::Wait {
                    duration: 0.01 * f64::from(*kind + 1),
                },
                2 => PrimitiveAction::Wait { duration: 0.0 },
                3 => PrimitiveAction::LiquidHandler {
                    id: "ot2".into(),
                    cmd: LhCommand::LoadTip,
                },
                4 => PrimitiveAction::LiquidHandler {
                    id: "ot2".into(),
                    cmd: LhCommand::RemoveTip,
                },
                _ => PrimitiveAction::Place {
                    object: "a".into(),
                    surface: "b".into(),
                    duration: 0.02,
                },
            };
            WorkflowNode::leaf(id, action)
        }
        Tree::Branch(children) => {
            let children = children.iter().map(|c| to_node(c, counter)).collect();
            WorkflowNode::branch(id, children)
        }
    }
}

fn statuses(node: &WorkflowNode, out: &mut Vec<(String, NodeStatus)>) {
    out.push((node.id.clone(), node.status));
    for c in &node.children {
        statuses(c, out);
    }
}

pub fn check_executor(tree: Tree) -> Result<(), TestCaseError> {
    let mut env = lab(&[0.1, 0.1, 0.1], &[[0.0; 2]; 3]);
    let root = match to_node(&tree, &mut 0) {
        leaf if leaf.is_leaf() => WorkflowNode::branch("root", vec![leaf]),
        branch => branch,
    };
    let order: Vec<String> = root.leaves().iter().map(|l| l.id.clone()).collect();
    let mut wf = Workflow::new(root, &env).unwrap();
    let mut failed_seen = false;
    for _ in 0..500 {
        let (actions, status) = wf.tick(&env);
        if failed_seen {
            prop_assert_eq!(status, NodeStatus::Failed);
        }
        failed_seen |= status == NodeStatus::Failed;
        let leaves = wf.root().leaves();
        let all_done = leaves.iter().all(|l| l.status == NodeStatus::Done);
        prop_assert_eq!(status == NodeStatus::Done, all_done);
        if status.is_terminal() {
            break;
        }
        env.step(&actions).unwrap();
    }
    prop_assert!(wf.is_terminated());

    let started: Vec<String> = wf.leaf_starts().iter().map(|s| s.leaf.clone()).collect();
    prop_assert_eq!(&started[..], &order[..started.len()]);
    if wf.status() == NodeStatus::Done {
        prop_assert_eq!(started.len(), order.len());
    }

    let mut before = Vec::new();
    statuses(wf.root(), &mut before);
    let starts_before = wf.leaf_starts().len();
    for _ in 0..3 {
        let (actions, status) = wf.tick(&env);
        prop_assert!(actions.is_empty());
        prop_assert_eq!(status, wf.status());
    }
    let mut after = Vec::new();
    statuses(wf.root(), &mut after);
    prop_assert_eq!(before, after);
    prop_assert_eq!(starts_before, wf.leaf_starts().len());
    Ok(())
}
