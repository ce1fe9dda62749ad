use super::build::{build, Built};
use super::spec::Scenario;
use super::trace::{Trace, TraceEvent};
use super::ScenarioError;
use crate::engine::StepReport;
use crate::state::EnvironmentState;
use crate::workflow::{report, VerificationReport};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    /// Overrides `trace.stride`.
    pub stride: Option<u64>,
    /// Stops at this many steps instead of `meta.duration`.
    pub max_steps: Option<u64>,
    /// Collects every step report (memory grows with the run).
    pub keep_reports: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub report: VerificationReport,
    /// Final state of the run.
    pub built: Built,
    pub steps: u64,
    /// Present when [`RunOptions::keep_reports`] is set; index 0 is the
    /// priming pass.
    pub step_reports: Vec<StepReport>,
}

fn log_events(trace: &mut Trace, env: &EnvironmentState, rep: &StepReport, enabled: bool) {
    if !enabled {
        return;
    }
    for id in rep.fired_ids(env.layout()) {
        trace.events.push(TraceEvent {
            time: rep.time,
            event: id.to_string(),
        });
    }
}

/// Builds the scenario and alternates workflow ticks with engine steps for
/// the whole duration, recording a trace row every `stride` steps.
///
/// The run does not stop early when the workflow terminates: the trace
/// always covers `meta.duration` so its row count depends on the scenario
/// alone.
pub fn run(sc: &Scenario, opts: RunOptions) -> Result<RunOutput, ScenarioError> {
    let mut built = build(sc)?;
    let stride = opts.stride.unwrap_or(sc.trace.stride).max(1);
    let total = opts.max_steps.unwrap_or_else(|| sc.total_steps());
    let mut trace = Trace::for_env(&built.env, &built.columns);
    let mut reports = Vec::new();

    let env = &mut built.env;
    let primed = env
        .prime()
        .map_err(|source| ScenarioError::Engine { step: 0, source })?;
    log_events(&mut trace, env, &primed, sc.trace.events);
    if opts.keep_reports {
        reports.push(primed);
    }
    trace.record(env);

    for k in 0..total {
        let (actions, _) = built.workflow.tick(env);
        let rep = env
            .step(&actions)
            .map_err(|source| ScenarioError::Engine { step: k, source })?;
        log_events(&mut trace, env, &rep, sc.trace.events);
        if opts.keep_reports {
            reports.push(rep);
        }
        if (k + 1) % stride == 0 {
            trace.record(env);
        }
    }
    // Lets the workflow observe completion of a leaf that ended on the last step.
    built.workflow.tick(env);

    let report = report(env, &built.workflow, &built.targets);
    Ok(RunOutput {
        trace,
        report,
        built,
        steps: total,
        step_reports: reports,
    })
}
