//! Sampled estimates of the smoothness and PL constants, and the step-size,
//! Byzantine-fraction and error-ball checks of the convergence guarantee for
//! CE-filtered local SGD.
//!
//! The guarantee holds when
//!
//! ```text
//! α ≤ μ / (72 L² T)            (stated step bound)
//! α ≤ μ² / (72 L³ T)           (step bound used in the proof)
//! f / (N − f) ≤ μ / (3 L)
//! ```
//!
//! and then bounds the stationary optimality gap by
//! `180·L·T·α·σ²/μ + 72·T·σ²·f/(μ·|H|)` (with `σ²` replaced by `σ²/m` for
//! mini-batches of size `m`). Everything here is advisory: runs proceed
//! regardless of the verdict.

use serde::{Deserialize, Serialize};

use crate::agents::AgentRoster;
use crate::engine::{grad_honest, optimum_value, q_honest, ExperimentConfig, StepSchedule};
use crate::numerics::{gaussian_vector, RandomStream, StreamDomain, Vector};
use crate::objectives::{ObjectiveKind, ProblemInstance};
use crate::{CoreError, Result, Scalar};

/// Safety factor applied to the sampled smoothness constant.
pub const L_INFLATION: f64 = 1.5;
/// Safety factor applied to the sampled PL constant.
pub const MU_DEFLATION: f64 = 0.75;
/// Samples whose suboptimality is below this are skipped by the PL estimate.
pub const MIN_SUBOPTIMALITY: f64 = 1e-12;

const POWER_STEPS: usize = 8;

/// A differentiable cost the estimators can probe.
pub trait Landscape<S: Scalar>: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector<S>) -> Result<S>;
    fn gradient(&self, x: &Vector<S>) -> Result<Vector<S>>;
}

/// `q^H`, the average cost of the honest agents.
pub struct HonestAverage<'a, S: Scalar> {
    pub instance: &'a ProblemInstance<S>,
    pub roster: &'a AgentRoster<S>,
}

impl<S: Scalar> Landscape<S> for HonestAverage<'_, S> {
    fn dim(&self) -> usize {
        self.instance.dim
    }
    fn value(&self, x: &Vector<S>) -> Result<S> {
        q_honest(self.instance, self.roster, x)
    }
    fn gradient(&self, x: &Vector<S>) -> Result<Vector<S>> {
        grad_honest(self.instance, self.roster, x)
    }
}

/// Sample points in the ball of `radius` around `center`: isotropic
/// direction, radius uniform in `[0, radius]` so every scale is probed.
fn sample_points<S: Scalar>(center: &Vector<S>, radius: S, samples: usize, seed: u64) -> Vec<Vector<S>> {
    (0..samples)
        .map(|j| {
            let stream = RandomStream::at(seed, StreamDomain::Theory, 0, j as u64);
            let dir = gaussian_vector::<S>(&stream, center.len(), S::one());
            let u = gaussian_vector::<S>(&stream.with_draw(1), 1, S::one())[0];
            // map a normal draw to [0, 1) through its CDF-free proxy: fractional part
            let frac = S::lit((u.as_f64().abs() * 7919.0).fract());
            let norm = dir.norm2();
            let mut x = center.clone();
            if norm > S::zero() {
                x.axpy(radius * frac / norm, &dir).expect("matching lengths");
            }
            x
        })
        .collect()
}

fn validate_sampling<S: Scalar>(dim: usize, radius: S, samples: usize) -> Result<()> {
    if dim == 0 {
        return Err(CoreError::Estimation("zero-dimensional landscape".into()));
    }
    if samples < 2 {
        return Err(CoreError::Estimation("need at least 2 samples".into()));
    }
    if !(radius > S::zero()) || !radius.is_finite() {
        return Err(CoreError::Estimation("region radius must be positive".into()));
    }
    Ok(())
}

fn ratio<S: Scalar>(num: S, den: S) -> Option<S> {
    (den > S::zero()).then(|| num / den).filter(|r| r.is_finite())
}

/// Largest gradient-difference ratio `‖∇q(x) − ∇q(y)‖ / ‖x − y‖` over
/// sampled pairs, times [`L_INFLATION`].
///
/// Pairs are consecutive sample points plus, at every sample, a short pair
/// along a direction refined by a few power steps on gradient differences
/// (steering the pair toward the largest local curvature).
pub fn estimate_lipschitz<S: Scalar>(
    landscape: &dyn Landscape<S>,
    center: &Vector<S>,
    radius: S,
    samples: usize,
    seed: u64,
) -> Result<S> {
    validate_sampling(landscape.dim(), radius, samples)?;
    let points = sample_points(center, radius, samples, seed);
    let grads = points.iter().map(|x| landscape.gradient(x)).collect::<Result<Vec<_>>>()?;
    let probe = S::lit(1e-5) * radius.max(S::one());
    let mut best = S::zero();
    for j in 0..samples {
        let k = (j + 1) % samples;
        if let Some(r) = ratio(grads[j].distance(&grads[k])?, points[j].distance(&points[k])?) {
            best = best.max(r);
        }
        let stream = RandomStream::at(seed, StreamDomain::Theory, 1, j as u64);
        let mut dir = gaussian_vector::<S>(&stream, landscape.dim(), S::one());
        for _ in 0..POWER_STEPS {
            let n = dir.norm2();
            if n == S::zero() {
                break;
            }
            let step = dir.scaled(probe / n);
            let y = points[j].add(&step)?;
            let diff = landscape.gradient(&y)?.sub(&grads[j])?;
            if let Some(r) = ratio(diff.norm2(), probe) {
                best = best.max(r);
            }
            dir = diff;
        }
    }
    if !(best > S::zero()) {
        return Err(CoreError::Estimation("gradient is constant on every sampled pair".into()));
    }
    Ok(best * S::lit(L_INFLATION))
}

/// Smallest `‖∇q(x)‖² / (2(q(x) − q*))` over sampled points, times
/// [`MU_DEFLATION`]. Points within [`MIN_SUBOPTIMALITY`] of `q*` are skipped.
pub fn estimate_pl<S: Scalar>(
    landscape: &dyn Landscape<S>,
    center: &Vector<S>,
    optimum_value: S,
    radius: S,
    samples: usize,
    seed: u64,
) -> Result<S> {
    validate_sampling(landscape.dim(), radius, samples)?;
    let points = sample_points(center, radius, samples, seed);
    let mut best: Option<S> = None;
    for x in &points {
        let gap = landscape.value(x)? - optimum_value;
        if gap < S::lit(MIN_SUBOPTIMALITY) {
            continue;
        }
        let g = landscape.gradient(x)?.norm2_sq();
        if let Some(r) = ratio(g, gap + gap) {
            best = Some(best.map_or(r, |b| b.min(r)));
        }
    }
    let mu = best.ok_or_else(|| {
        CoreError::Estimation("every sample sits at the optimum; PL ratio undefined".into())
    })?;
    if !(mu > S::zero()) {
        return Err(CoreError::Estimation("sampled PL ratio is not positive".into()));
    }
    Ok(mu * S::lit(MU_DEFLATION))
}

/// Smoothness estimate of `q^H` around the planted optimum.
pub fn estimate_l<S: Scalar>(
    inst: &ProblemInstance<S>,
    roster: &AgentRoster<S>,
    radius: S,
    samples: usize,
    seed: u64,
) -> Result<S> {
    let land = HonestAverage { instance: inst, roster };
    estimate_lipschitz(&land, &inst.planted_optimum, radius, samples, seed)
}

/// PL estimate of `q^H` around the planted optimum. Only defined for
/// [`ObjectiveKind::RegressionSin`].
pub fn estimate_mu<S: Scalar>(
    inst: &ProblemInstance<S>,
    roster: &AgentRoster<S>,
    radius: S,
    samples: usize,
    seed: u64,
) -> Result<S> {
    if inst.kind != ObjectiveKind::RegressionSin {
        return Err(CoreError::UnsupportedKind(inst.kind));
    }
    let land = HonestAverage { instance: inst, roster };
    let reference = optimum_value(inst, roster)?;
    estimate_pl(&land, &inst.planted_optimum, reference, radius, samples, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationMetadata {
    pub samples: usize,
    pub region_radius: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants<S> {
    #[serde(rename = "L_hat")]
    pub lipschitz: S,
    #[serde(rename = "mu_hat")]
    pub pl: S,
    pub sigma: S,
    pub estimation: Option<EstimationMetadata>,
}

impl<S: Scalar> TheoryConstants<S> {
    /// Constants given directly rather than estimated.
    pub fn exact(lipschitz: S, pl: S, sigma: S) -> Self {
        Self { lipschitz, pl, sigma, estimation: None }
    }

    /// Estimates `L̂` and `μ̂` on the same sample set.
    pub fn estimate(
        inst: &ProblemInstance<S>,
        roster: &AgentRoster<S>,
        sigma: S,
        radius: S,
        samples: usize,
        seed: u64,
    ) -> Result<Self> {
        let lipschitz = estimate_l(inst, roster, radius, samples, seed)?;
        let pl = estimate_mu(inst, roster, radius, samples, seed)?;
        Ok(Self {
            lipschitz,
            pl,
            sigma,
            estimation: Some(EstimationMetadata { samples, region_radius: radius.as_f64(), seed }),
        })
    }
}

/// Run parameters the checks depend on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs<S> {
    pub n_agents: usize,
    pub filter_f: usize,
    pub honest_count: usize,
    pub local_steps: usize,
    /// Constant step size; `None` for a diminishing schedule.
    pub alpha: Option<S>,
    /// Largest step the schedule ever takes.
    pub alpha_peak: S,
    pub minibatch: usize,
}

impl<S: Scalar> TheoryInputs<S> {
    pub fn from_config(cfg: &ExperimentConfig<S>) -> Self {
        let alpha = match cfg.schedule {
            StepSchedule::Constant { alpha } => Some(alpha),
            StepSchedule::Harmonic { .. } => None,
        };
        Self {
            n_agents: cfg.roster.n_agents(),
            filter_f: cfg.roster.filter_f(),
            honest_count: cfg.roster.honest_count(),
            local_steps: cfg.local_steps,
            alpha,
            alpha_peak: cfg.schedule.alpha(0),
            minibatch: cfg.noise.minibatch,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport<S> {
    pub lipschitz: S,
    pub pl: S,
    pub alpha: S,
    /// `μ / (72 L² T)`
    pub alpha_max_stated: S,
    /// `μ² / (72 L³ T)`
    pub alpha_max_proof: S,
    /// Minimum of the two bounds.
    pub alpha_max: S,
    pub step_ok: bool,
    /// `f / (N − f)`
    pub fraction: S,
    /// `f / |H|`
    pub fraction_honest: S,
    /// `μ / (3 L)`
    pub fraction_bound: S,
    pub fraction_ok: bool,
    pub error_ball: Option<S>,
}

impl<S> ConditionReport<S> {
    pub fn passes(&self) -> bool {
        self.step_ok && self.fraction_ok
    }
}

/// `min(μ/(72L²T), μ²/(72L³T))` and both components.
pub fn step_bounds<S: Scalar>(consts: &TheoryConstants<S>, local_steps: usize) -> (S, S, S) {
    let (l, mu) = (consts.lipschitz, consts.pl);
    let denom = S::lit(72.0) * S::count(local_steps);
    let stated = mu / (denom * l * l);
    let proof = mu * mu / (denom * l * l * l);
    (stated, proof, stated.min(proof))
}

pub fn check_conditions<S: Scalar>(consts: &TheoryConstants<S>, inputs: &TheoryInputs<S>) -> ConditionReport<S> {
    let (stated, proof, alpha_max) = step_bounds(consts, inputs.local_steps);
    let f = S::count(inputs.filter_f);
    let fraction = f / S::count(inputs.n_agents - inputs.filter_f);
    let fraction_honest = f / S::count(inputs.honest_count);
    let fraction_bound = consts.pl / (S::lit(3.0) * consts.lipschitz);
    ConditionReport {
        lipschitz: consts.lipschitz,
        pl: consts.pl,
        alpha: inputs.alpha_peak,
        alpha_max_stated: stated,
        alpha_max_proof: proof,
        alpha_max,
        step_ok: inputs.alpha_peak <= alpha_max,
        fraction,
        fraction_honest,
        fraction_bound,
        fraction_ok: inputs.filter_f == 0 || fraction <= fraction_bound,
        error_ball: error_ball(consts, inputs).ok(),
    }
}

/// `180·L·T·α·σ²_eff/μ + 72·T·σ²_eff·f/(μ·|H|)`, `σ²_eff = σ²/m`.
/// Requires a constant step size.
pub fn error_ball<S: Scalar>(consts: &TheoryConstants<S>, inputs: &TheoryInputs<S>) -> Result<S> {
    let alpha = inputs
        .alpha
        .ok_or_else(|| CoreError::config("error ball needs a constant step size"))?;
    let t = S::count(inputs.local_steps);
    let var = consts.sigma * consts.sigma / S::count(inputs.minibatch);
    let step_term = S::lit(180.0) * consts.lipschitz * t * alpha * var / consts.pl;
    let byz_term =
        S::lit(72.0) * t * var * S::count(inputs.filter_f) / (consts.pl * S::count(inputs.honest_count));
    Ok(step_term + byz_term)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(n: usize, f: usize, h: usize, t: usize, alpha: f64, m: usize) -> TheoryInputs<f64> {
        TheoryInputs {
            n_agents: n,
            filter_f: f,
            honest_count: h,
            local_steps: t,
            alpha: Some(alpha),
            alpha_peak: alpha,
            minibatch: m,
        }
    }

    #[test]
    fn step_bound_worked_value() {
        let c = TheoryConstants::exact(10.0, 1.0, 0.0);
        let (stated, proof, min) = step_bounds(&c, 3);
        assert_eq!(stated, 1.0 / 21600.0);
        assert_eq!(proof, 1.0 / 216000.0);
        assert_eq!(min, proof);
    }

    #[test]
    fn fraction_condition() {
        let c = TheoryConstants::exact(1.0, 1e-9, 0.0);
        assert!(check_conditions(&c, &inputs(50, 0, 50, 1, 1.0, 1)).fraction_ok);
        let pass = TheoryConstants::exact(8.0, 1.0, 0.0);
        let r = check_conditions(&pass, &inputs(50, 2, 48, 1, 1.0, 1));
        assert!((r.fraction - 1.0 / 24.0).abs() < 1e-15);
        assert!(r.fraction_ok);
        let fail = TheoryConstants::exact(8.0, 0.99, 0.0);
        assert!(!check_conditions(&fail, &inputs(50, 2, 48, 1, 1.0, 1)).fraction_ok);
    }

    #[test]
    fn error_ball_cases() {
        let c = TheoryConstants::exact(10.0, 1.0, 0.5);
        let b = error_ball(&c, &inputs(50, 2, 48, 3, 1e-4, 1)).unwrap();
        assert!((b - 2.385).abs() < 1e-12, "{b}");
        let quiet = TheoryConstants::exact(10.0, 1.0, 0.0);
        assert_eq!(error_ball(&quiet, &inputs(50, 2, 48, 3, 1e-4, 1)).unwrap(), 0.0);
        let no_f = error_ball(&c, &inputs(50, 0, 50, 3, 1e-4, 1)).unwrap();
        assert!((no_f - 0.135).abs() < 1e-12);
        let mut harmonic = inputs(50, 0, 50, 3, 1e-4, 1);
        harmonic.alpha = None;
        assert!(error_ball(&c, &harmonic).is_err());
    }
}
