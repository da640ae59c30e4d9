//! Round loop of federated local SGD with a pluggable aggregation rule.
//!
//! Each round: broadcast `x̄ₖ`, honest agents run local SGD concurrently,
//! Byzantine agents fabricate messages after seeing every honest report,
//! the server aggregates. Metrics are taken at the broadcast model `x̄ₖ`;
//! the final model `x̄_K` gets a terminal metric row.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{byzantine_message, honest_local_sgd, AgentRoster, LocalRunConfig};
use crate::aggregation::{aggregate, AggregationRule, Report};
use crate::numerics::{RandomStream, StreamDomain, Vector};
use crate::objectives::{NoiseModel, ObjectiveKind, ProblemInstance};
use crate::{CoreError, Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule<S> {
    Constant { alpha: S },
    /// `αₖ = c / (k + 1)`
    Harmonic { c: S },
}

impl<S: Scalar> StepSchedule<S> {
    pub fn alpha(&self, round: usize) -> S {
        match *self {
            Self::Constant { alpha } => alpha,
            Self::Harmonic { c } => c / S::count(round + 1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            Self::Constant { alpha } => alpha,
            Self::Harmonic { c } => c,
        };
        if v > S::zero() && v.is_finite() {
            Ok(())
        } else {
            Err(CoreError::config("schedule: step size must be positive and finite"))
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig<S: Scalar> {
    pub instance: Arc<ProblemInstance<S>>,
    pub roster: AgentRoster<S>,
    pub rule: AggregationRule,
    pub rounds: usize,
    pub local_steps: usize,
    pub schedule: StepSchedule<S>,
    pub noise: NoiseModel<S>,
    pub root_seed: u64,
    /// `None` starts from the zero vector.
    pub initial_model: Option<Vector<S>>,
}

impl<S: Scalar> ExperimentConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(CoreError::config("rounds must be at least 1"));
        }
        if self.local_steps == 0 {
            return Err(CoreError::config("local_steps must be at least 1"));
        }
        if self.roster.n_agents() != self.instance.n_agents {
            return Err(CoreError::config(format!(
                "roster has N = {} but instance has {} agents",
                self.roster.n_agents(),
                self.instance.n_agents
            )));
        }
        self.schedule.validate()?;
        self.noise.validate()?;
        self.rule.validate(self.roster.n_agents())?;
        self.roster.attack().validate(self.instance.dim)?;
        if let Some(x0) = &self.initial_model {
            x0.check_len(self.instance.dim)
                .map_err(|_| CoreError::config(format!("initial_model must have length {}", self.instance.dim)))?;
        }
        Ok(())
    }

    pub fn start(&self) -> Vector<S> {
        self.initial_model.clone().unwrap_or_else(|| Vector::zeros(self.instance.dim))
    }

    pub fn snapshot(&self) -> ConfigSnapshot<S> {
        ConfigSnapshot {
            kind: self.instance.kind,
            n_agents: self.roster.n_agents(),
            dim: self.instance.dim,
            byzantine_ids: self.roster.byzantine_ids().iter().copied().collect(),
            filter_f: self.roster.filter_f(),
            attack: self.roster.attack().clone(),
            rule: self.rule,
            rounds: self.rounds,
            local_steps: self.local_steps,
            schedule: self.schedule,
            noise: self.noise,
            root_seed: self.root_seed,
        }
    }
}

/// Serializable summary of the configuration a trace came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ConfigSnapshot<S: Scalar> {
    pub kind: ObjectiveKind,
    pub n_agents: usize,
    pub dim: usize,
    pub byzantine_ids: Vec<usize>,
    pub filter_f: usize,
    pub attack: crate::agents::AttackStrategy<S>,
    pub rule: AggregationRule,
    pub rounds: usize,
    pub local_steps: usize,
    pub schedule: StepSchedule<S>,
    pub noise: NoiseModel<S>,
    pub root_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RoundOutcome<S: Scalar> {
    pub round: usize,
    pub x_bar_next: Vector<S>,
    /// `q^H(x̄ₖ) − q^H(x*)`
    pub optimality_gap: S,
    /// `(1/|H|) Σ_{i∈H} ‖∇qⁱ(x̄ₖ)‖²`
    pub mean_sq_grad: S,
    pub eliminated_ids: Vec<usize>,
    /// Byzantine reports that entered the aggregate; `None` for rules that
    /// trim per coordinate.
    pub byzantine_kept: Option<usize>,
}

/// Metrics at the final model `x̄_K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TerminalMetrics<S: Scalar> {
    pub round: usize,
    pub model: Vector<S>,
    pub optimality_gap: S,
    pub mean_sq_grad: S,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Trace<S: Scalar> {
    pub config: ConfigSnapshot<S>,
    pub rounds: Vec<RoundOutcome<S>>,
    pub terminal: Option<TerminalMetrics<S>>,
    pub wall_clock_secs: Vec<f64>,
    pub abort: Option<String>,
}

impl<S: Scalar> Trace<S> {
    /// `(round, optimality_gap, mean_sq_grad)` for every round plus the
    /// terminal row.
    pub fn metric_rows(&self) -> Vec<(usize, S, S)> {
        let mut rows: Vec<_> = self
            .rounds
            .iter()
            .map(|r| (r.round, r.optimality_gap, r.mean_sq_grad))
            .collect();
        if let Some(t) = &self.terminal {
            rows.push((t.round, t.optimality_gap, t.mean_sq_grad));
        }
        rows
    }

    pub fn gaps(&self) -> Vec<S> {
        self.metric_rows().into_iter().map(|r| r.1).collect()
    }

    pub fn final_model(&self) -> Option<&Vector<S>> {
        self.terminal.as_ref().map(|t| &t.model)
    }
}

/// `q^H(x) = (1/|H|) Σ_{i∈H} qⁱ(x)`
pub fn q_honest<S: Scalar>(inst: &ProblemInstance<S>, roster: &AgentRoster<S>, x: &Vector<S>) -> Result<S> {
    let honest = roster.honest_ids();
    let mut total = S::zero();
    for &i in &honest {
        total = total + inst.value(i, x)?;
    }
    Ok(total / S::count(honest.len()))
}

/// `∇q^H(x)`
pub fn grad_honest<S: Scalar>(
    inst: &ProblemInstance<S>,
    roster: &AgentRoster<S>,
    x: &Vector<S>,
) -> Result<Vector<S>> {
    let honest = roster.honest_ids();
    let mut total = Vector::zeros(inst.dim);
    for &i in &honest {
        total.axpy(S::one(), &inst.gradient(i, x)?)?;
    }
    Ok(total.scaled(S::one() / S::count(honest.len())))
}

/// `(1/|H|) Σ_{i∈H} ‖∇qⁱ(x)‖²`
pub fn mean_sq_grad<S: Scalar>(inst: &ProblemInstance<S>, roster: &AgentRoster<S>, x: &Vector<S>) -> Result<S> {
    let honest = roster.honest_ids();
    let mut total = S::zero();
    for &i in &honest {
        total = total + inst.gradient(i, x)?.norm2_sq();
    }
    Ok(total / S::count(honest.len()))
}

/// Reference value `q^H(x*)` at the planted optimum.
pub fn optimum_value<S: Scalar>(inst: &ProblemInstance<S>, roster: &AgentRoster<S>) -> Result<S> {
    q_honest(inst, roster, &inst.planted_optimum)
}

fn metrics<S: Scalar>(cfg: &ExperimentConfig<S>, reference: S, x: &Vector<S>) -> Result<(S, S)> {
    Ok((
        q_honest(&cfg.instance, &cfg.roster, x)? - reference,
        mean_sq_grad(&cfg.instance, &cfg.roster, x)?,
    ))
}

/// Executes round `k` from broadcast model `x_bar`.
pub fn run_round<S: Scalar>(
    cfg: &ExperimentConfig<S>,
    x_bar: &Vector<S>,
    round: usize,
) -> Result<(Vector<S>, RoundOutcome<S>)> {
    let reference = optimum_value(&cfg.instance, &cfg.roster)?;
    run_round_with_reference(cfg, x_bar, round, reference)
}

fn run_round_with_reference<S: Scalar>(
    cfg: &ExperimentConfig<S>,
    x_bar: &Vector<S>,
    round: usize,
    reference: S,
) -> Result<(Vector<S>, RoundOutcome<S>)> {
    if !x_bar.is_finite() {
        return Err(CoreError::NonFinite("broadcast model"));
    }
    let (optimality_gap, msg) = metrics(cfg, reference, x_bar)?;
    let local = LocalRunConfig { steps: cfg.local_steps, alpha: cfg.schedule.alpha(round), round };
    let honest_ids = cfg.roster.honest_ids();

    let honest: Vec<Vector<S>> = honest_ids
        .par_iter()
        .map(|&i| honest_local_sgd(&cfg.instance, i, x_bar, &local, &cfg.noise, cfg.root_seed))
        .collect::<Result<_>>()?;

    // barrier: the Byzantine phase sees every honest report
    let mut reports: Vec<Report<S>> = honest_ids
        .iter()
        .zip(honest.iter())
        .map(|(&i, v)| Report::new(i, v.clone()))
        .collect();
    for &b in cfg.roster.byzantine_ids() {
        let stream = RandomStream::at(cfg.root_seed, StreamDomain::Attack, b as u64, round as u64);
        let msg = byzantine_message(cfg.roster.attack(), x_bar, &honest, cfg.roster.filter_f(), &stream)?;
        reports.push(Report::new(b, msg));
    }

    let outcome = aggregate(&cfg.rule, x_bar, &reports)?;
    if !outcome.next_model.is_finite() {
        return Err(CoreError::NonFiniteAggregate { round });
    }
    let byzantine_kept = outcome.whole_report_selection.then(|| {
        outcome.kept_ids.iter().filter(|&&i| cfg.roster.is_byzantine(i)).count()
    });
    let next = outcome.next_model;
    Ok((
        next.clone(),
        RoundOutcome {
            round,
            x_bar_next: next,
            optimality_gap,
            mean_sq_grad: msg,
            eliminated_ids: outcome.eliminated_ids,
            byzantine_kept,
        },
    ))
}

/// Runs `K` rounds. Configuration errors are returned before any round
/// executes; a divergence or non-finite aggregate stops the run and is
/// recorded in [`Trace::abort`].
pub fn run_experiment<S: Scalar>(cfg: &ExperimentConfig<S>) -> Result<Trace<S>> {
    cfg.validate()?;
    let reference = optimum_value(&cfg.instance, &cfg.roster)?;
    let mut x = cfg.start();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut wall_clock_secs = Vec::with_capacity(cfg.rounds);
    let mut abort = None;
    for k in 0..cfg.rounds {
        let started = Instant::now();
        match run_round_with_reference(cfg, &x, k, reference) {
            Ok((next, outcome)) => {
                rounds.push(outcome);
                x = next;
            }
            Err(e @ (CoreError::Divergence { .. } | CoreError::NonFiniteAggregate { .. })) => {
                abort = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
        wall_clock_secs.push(started.elapsed().as_secs_f64());
    }
    let terminal = if abort.is_none() {
        let (gap, msg) = metrics(cfg, reference, &x)?;
        Some(TerminalMetrics { round: cfg.rounds, model: x, optimality_gap: gap, mean_sq_grad: msg })
    } else {
        None
    };
    Ok(Trace { config: cfg.snapshot(), rounds, terminal, wall_clock_secs, abort })
}

/// Whether a core error is a runtime abort rather than a configuration problem.
pub fn is_runtime_abort(err: &CoreError) -> bool {
    matches!(err, CoreError::Divergence { .. } | CoreError::NonFiniteAggregate { .. })
}
