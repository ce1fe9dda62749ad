use std::fmt;
use std::time::{Duration, Instant};

use super::build::build;
use super::spec::Scenario;
use super::ScenarioError;
use crate::action::ActionVector;
use crate::engine::step_batch_shared;
use crate::state::EnvironmentState;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub n_envs: usize,
    pub steps: u64,
    pub wall_with: Duration,
    pub wall_without: Duration,
    /// Environment-steps per second (n_envs · steps / wall).
    pub sps_with: f64,
    pub sps_without: f64,
    /// (t_with − t_without) / t_without.
    pub overhead: f64,
}

impl BenchReport {
    /// Environment-steps per second per environment with semantics on.
    pub fn per_env_sps(&self) -> f64 {
        self.sps_with / self.n_envs as f64
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "bench n_envs={} steps={} with={:.3}s ({:.0} env-steps/s) without={:.3}s ({:.0} env-steps/s) overhead={:.2}%",
            self.n_envs,
            self.steps,
            self.wall_with.as_secs_f64(),
            self.sps_with,
            self.wall_without.as_secs_f64(),
            self.sps_without,
            self.overhead * 100.0
        )
    }
}

/// Action vectors the scenario's workflow emits over `steps` steps of a
/// single environment.
pub fn record_schedule(sc: &Scenario, steps: u64) -> Result<Vec<ActionVector>, ScenarioError> {
    let mut built = build(sc)?;
    let env = &mut built.env;
    env.prime()
        .map_err(|source| ScenarioError::Engine { step: 0, source })?;
    let mut out = Vec::with_capacity(steps as usize);
    for k in 0..steps {
        let (a, _) = built.workflow.tick(env);
        env.step(&a)
            .map_err(|source| ScenarioError::Engine { step: k, source })?;
        out.push(a);
    }
    Ok(out)
}

fn timed(
    base: &EnvironmentState,
    n_envs: usize,
    schedule: &[ActionVector],
    semantics: bool,
) -> Result<Duration, ScenarioError> {
    let mut proto = base.clone();
    proto.semantics_enabled = semantics;
    let mut batch = proto
        .clone_batch(n_envs)
        .map_err(|e| ScenarioError::validation("bench", e))?;
    let start = Instant::now();
    for (k, a) in schedule.iter().enumerate() {
        step_batch_shared(&mut batch, a).map_err(|source| ScenarioError::Engine { step: k as u64, source })?;
    }
    Ok(start.elapsed())
}

/// Times `steps` batch steps of `n_envs` clones with and without
/// processes/events, replaying the same workflow actions in both runs.
pub fn bench(sc: &Scenario, n_envs: usize, steps: u64) -> Result<BenchReport, ScenarioError> {
    if n_envs == 0 {
        return Err(ScenarioError::ZeroCount);
    }
    let schedule = record_schedule(sc, steps)?;
    let mut base = build(sc)?.env;
    base.prime()
        .map_err(|source| ScenarioError::Engine { step: 0, source })?;

    let wall_without = timed(&base, n_envs, &schedule, false)?;
    let wall_with = timed(&base, n_envs, &schedule, true)?;
    let work = n_envs as f64 * steps as f64;
    // Guards against a zero reading from a coarse clock.
    let secs = |d: Duration| d.as_secs_f64().max(1e-9);
    let report = BenchReport {
        n_envs,
        steps,
        wall_with,
        wall_without,
        sps_with: work / secs(wall_with),
        sps_without: work / secs(wall_without),
        overhead: (secs(wall_with) - secs(wall_without)) / secs(wall_without),
    };
    log::info!("{report}");
    Ok(report)
}
