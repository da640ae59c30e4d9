//! Honest local SGD and Byzantine message fabrication.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::numerics::{gaussian_vector, RandomStream, StreamDomain, Vector};
use crate::objectives::{NoiseModel, ProblemInstance};
use crate::{CoreError, Result, Scalar};

/// How Byzantine agents fabricate the vector they send.
///
/// The adversary is omniscient: it sees every honest report of the round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackStrategy<S: Scalar> {
    /// `x̄ − scale·(mean(honest) − x̄)`
    SignFlip { scale: S },
    /// `x̄ + z`, `z` isotropic Gaussian with `E‖z‖² = magnitude²`.
    GaussianBlast { magnitude: S },
    /// Always sends `target`.
    FixedPoint { target: Vector<S> },
    /// Sits at `scale·ρ` from `x̄` against the honest mean displacement,
    /// where `ρ` is the f-th largest honest distance to `x̄`.
    InlierCollusion { scale: S },
}

impl<S: Scalar> AttackStrategy<S> {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Self::SignFlip { scale } if !scale.is_finite() => {
                Err(CoreError::config("attack.scale must be finite"))
            }
            Self::GaussianBlast { magnitude } if !magnitude.is_finite() || *magnitude < S::zero() => {
                Err(CoreError::config("attack.magnitude must be finite and non-negative"))
            }
            Self::FixedPoint { target } => {
                if !target.is_finite() {
                    return Err(CoreError::config("attack.target must be finite"));
                }
                target.check_len(dim).map_err(|_| {
                    CoreError::config(format!("attack.target must have length {dim}"))
                })
            }
            Self::InlierCollusion { scale } if !(*scale > S::zero() && *scale < S::one()) => {
                Err(CoreError::config("attack.scale for inlier_collusion must lie in (0, 1)"))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::SignFlip { .. } => "sign_flip",
            Self::GaussianBlast { .. } => "gaussian_blast",
            Self::FixedPoint { .. } => "fixed_point",
            Self::InlierCollusion { .. } => "inlier_collusion",
        }
    }
}

/// Agent population: who is Byzantine, what the server tolerates, and how
/// the Byzantine agents attack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AgentRoster<S: Scalar> {
    n_agents: usize,
    byzantine: BTreeSet<usize>,
    filter_f: usize,
    attack: AttackStrategy<S>,
}

impl<S: Scalar> AgentRoster<S> {
    /// Enforces `|B| ≤ f ≤ N/2 − 1` and `B ⊂ {0..N}`.
    pub fn new(
        n_agents: usize,
        byzantine: impl IntoIterator<Item = usize>,
        filter_f: usize,
        attack: AttackStrategy<S>,
    ) -> Result<Self> {
        let byzantine: BTreeSet<usize> = byzantine.into_iter().collect();
        if n_agents == 0 {
            return Err(CoreError::config("roster: N must be positive"));
        }
        if let Some(&bad) = byzantine.iter().find(|&&i| i >= n_agents) {
            return Err(CoreError::config(format!(
                "roster: byzantine id {bad} out of range for N = {n_agents}"
            )));
        }
        if byzantine.len() > filter_f {
            return Err(CoreError::config(format!(
                "roster: {} byzantine agents exceed filter tolerance f = {filter_f}",
                byzantine.len()
            )));
        }
        if filter_f > 0 && 2 * filter_f + 2 > n_agents {
            return Err(CoreError::config(format!(
                "roster: filter tolerance f = {filter_f} violates f ≤ N/2 − 1 for N = {n_agents}"
            )));
        }
        Ok(Self { n_agents, byzantine, filter_f, attack })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn filter_f(&self) -> usize {
        self.filter_f
    }

    pub fn attack(&self) -> &AttackStrategy<S> {
        &self.attack
    }

    pub fn byzantine_ids(&self) -> &BTreeSet<usize> {
        &self.byzantine
    }

    pub fn is_byzantine(&self, agent: usize) -> bool {
        self.byzantine.contains(&agent)
    }

    pub fn honest_ids(&self) -> Vec<usize> {
        (0..self.n_agents).filter(|i| !self.byzantine.contains(i)).collect()
    }

    pub fn honest_count(&self) -> usize {
        self.n_agents - self.byzantine.len()
    }
}

/// Deterministic choice of `count` Byzantine ids out of `n_agents`, drawn
/// from the roster stream of `seed`. Returned ascending.
pub fn choose_byzantine_ids(n_agents: usize, count: usize, seed: u64) -> Result<Vec<usize>> {
    if count > n_agents {
        return Err(CoreError::config(format!(
            "roster: cannot pick {count} byzantine agents out of {n_agents}"
        )));
    }
    let mut rng = RandomStream::at(seed, StreamDomain::Roster, 0, 0).rng();
    let mut ids = rand::seq::index::sample(&mut rng, n_agents, count).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

/// One round's local-phase settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalRunConfig<S> {
    pub steps: usize,
    pub alpha: S,
    pub round: usize,
}

/// Full local trajectory of one honest agent.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalRun<S: Scalar> {
    /// `xⁱ_{k,0} = x̄ₖ, …, xⁱ_{k,T}`
    pub iterates: Vec<Vector<S>>,
    /// `Σₜ ∇Qⁱ(xⁱ_{k,t}; Δⁱ_{k,t})`
    pub gradient_sum: Vector<S>,
}

impl<S: Scalar> LocalRun<S> {
    pub fn output(&self) -> &Vector<S> {
        self.iterates.last().expect("at least the starting point")
    }
}

/// Runs `T` local SGD steps from `x̄ₖ`.
///
/// Every iterate is formed as `x̄ₖ − α·Σ_{l≤t} ∇Qⁱ(xⁱ_{k,l})`, which is the
/// step recursion `x_{t+1} = x_t − α∇Q(x_t)` rewritten around the running
/// gradient sum; the returned `gradient_sum` reproduces the output exactly.
pub fn local_sgd_trajectory<S: Scalar>(
    inst: &ProblemInstance<S>,
    agent: usize,
    x_bar: &Vector<S>,
    cfg: &LocalRunConfig<S>,
    noise: &NoiseModel<S>,
    root_seed: u64,
) -> Result<LocalRun<S>> {
    x_bar.check_len(inst.dim)?;
    let mut iterates = Vec::with_capacity(cfg.steps + 1);
    iterates.push(x_bar.clone());
    let mut gradient_sum = Vector::zeros(inst.dim);
    for t in 0..cfg.steps {
        let stream = RandomStream::noise(root_seed, agent, cfg.round, t);
        let grad = inst.stochastic_gradient(agent, &iterates[t], noise, &stream)?;
        gradient_sum.axpy(S::one(), &grad)?;
        let next = closed_form(x_bar, cfg.alpha, &gradient_sum);
        if !next.is_finite() {
            return Err(CoreError::Divergence { agent, round: cfg.round });
        }
        iterates.push(next);
    }
    Ok(LocalRun { iterates, gradient_sum })
}

/// `x̄ − α·Σ ∇Q`
pub fn closed_form<S: Scalar>(x_bar: &Vector<S>, alpha: S, gradient_sum: &Vector<S>) -> Vector<S> {
    let mut out = x_bar.clone();
    out.axpy(-alpha, gradient_sum).expect("matching lengths");
    out
}

/// Output `xⁱ_{k,T}` of an honest agent's local phase.
pub fn honest_local_sgd<S: Scalar>(
    inst: &ProblemInstance<S>,
    agent: usize,
    x_bar: &Vector<S>,
    cfg: &LocalRunConfig<S>,
    noise: &NoiseModel<S>,
    root_seed: u64,
) -> Result<Vector<S>> {
    let mut run = local_sgd_trajectory(inst, agent, x_bar, cfg, noise, root_seed)?;
    Ok(run.iterates.pop().expect("at least the starting point"))
}

/// Vector a Byzantine agent sends, given every honest report of the round.
///
/// `filter_f` is the server's tolerance; `InlierCollusion` uses it to pick
/// the radius that survives elimination.
pub fn byzantine_message<S: Scalar>(
    strategy: &AttackStrategy<S>,
    x_bar: &Vector<S>,
    honest_reports: &[Vector<S>],
    filter_f: usize,
    stream: &RandomStream,
) -> Result<Vector<S>> {
    let dim = x_bar.len();
    match strategy {
        AttackStrategy::FixedPoint { target } => {
            target.check_len(dim)?;
            Ok(target.clone())
        }
        AttackStrategy::GaussianBlast { magnitude } => {
            let z = gaussian_vector(stream, dim, *magnitude / S::count(dim).sqrt());
            x_bar.add(&z)
        }
        AttackStrategy::SignFlip { scale } => {
            let displacement = Vector::mean(honest_reports)?.sub(x_bar)?;
            let mut out = x_bar.clone();
            out.axpy(-*scale, &displacement)?;
            Ok(out)
        }
        AttackStrategy::InlierCollusion { scale } => {
            let displacement = Vector::mean(honest_reports)?.sub(x_bar)?;
            let mut distances = honest_reports
                .iter()
                .map(|v| v.distance(x_bar))
                .collect::<Result<Vec<S>>>()?;
            distances.sort_by(|a, b| b.total_cmp_s(a));
            let rank = filter_f.clamp(1, distances.len());
            let radius = distances[rank - 1];
            let norm = displacement.norm2();
            if radius == S::zero() || norm == S::zero() {
                return Ok(x_bar.clone());
            }
            let mut out = x_bar.clone();
            out.axpy(-*scale * radius / norm, &displacement)?;
            Ok(out)
        }
    }
}

pub(crate) trait TotalCmp {
    fn total_cmp_s(&self, other: &Self) -> std::cmp::Ordering;
}

impl<S: Scalar> TotalCmp for S {
    fn total_cmp_s(&self, other: &Self) -> std::cmp::Ordering {
        self.partial_cmp(other).unwrap_or_else(|| self.is_nan().cmp(&other.is_nan()))
    }
}
