//! Per-agent costs `qⁱ`, their gradients and stochastic gradient oracles.
//!
//! Both costs are functions of the residual norm `r = ‖Aⁱx − bⁱ‖`:
//!
//! - [`ObjectiveKind::RegressionSin`]: `r² + sin²(r)`, non-convex but PL.
//! - [`ObjectiveKind::SigmoidNorm`]: `1 / (1 + e^{−r})`, non-convex and not PL.
//!
//! Generated instances plant one minimizer `x*` shared by every agent
//! (`bⁱ = Aⁱx*`), so every subset of agents has the same minimizer and the
//! instance is 2f-redundant for every `f`.

use serde::{Deserialize, Serialize};

use crate::numerics::{gaussian_vector, Matrix, RandomStream, StreamDomain, Vector};
use crate::{CoreError, Result, Scalar};

/// Residual norms below this are treated as zero in the gradients.
pub const RESIDUAL_EPS: f64 = 1e-12;

/// Minimum accepted smallest singular value of each `Aⁱ`.
pub const RANK_TOLERANCE: f64 = 1e-8;

const MAX_RANK_RETRIES: u64 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    RegressionSin,
    SigmoidNorm,
}

/// Private data `(Aⁱ, bⁱ)` of one agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
#[serde(deny_unknown_fields)]
pub struct AgentData<S: Scalar> {
    pub a: Matrix<S>,
    pub b: Vector<S>,
}

/// Synthetic problem: one `(Aⁱ, bⁱ)` per agent plus the planted minimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
#[serde(deny_unknown_fields)]
pub struct ProblemInstance<S: Scalar> {
    pub kind: ObjectiveKind,
    #[serde(rename = "d")]
    pub dim: usize,
    #[serde(rename = "l")]
    pub rows: usize,
    #[serde(rename = "n")]
    pub n_agents: usize,
    /// `false` when generated without the shared-minimizer planting.
    #[serde(default = "default_true")]
    pub planted: bool,
    pub planted_optimum: Vector<S>,
    pub agents: Vec<AgentData<S>>,
}

fn default_true() -> bool {
    true
}

/// Isotropic Gaussian gradient noise with `E‖noise‖² = σ²/m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel<S> {
    pub sigma: S,
    #[serde(default = "default_minibatch")]
    pub minibatch: usize,
}

fn default_minibatch() -> usize {
    1
}

impl<S: Scalar> NoiseModel<S> {
    pub fn new(sigma: S, minibatch: usize) -> Result<Self> {
        let noise = Self { sigma, minibatch };
        noise.validate()?;
        Ok(noise)
    }

    pub fn noiseless() -> Self {
        Self { sigma: S::zero(), minibatch: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= S::zero()) || !self.sigma.is_finite() {
            return Err(CoreError::config("noise.sigma must be finite and non-negative"));
        }
        if self.minibatch == 0 {
            return Err(CoreError::config("noise.minibatch must be at least 1"));
        }
        Ok(())
    }

    /// Per-coordinate standard deviation `σ / √(d·m)`.
    pub fn per_coord_std(&self, dim: usize) -> S {
        if self.sigma == S::zero() {
            return S::zero();
        }
        self.sigma / S::count(dim * self.minibatch).sqrt()
    }

    /// `σ²/m`
    pub fn effective_variance(&self) -> S {
        self.sigma * self.sigma / S::count(self.minibatch)
    }
}

impl<S: Scalar> ProblemInstance<S> {
    /// Checks shapes and the rank condition of every `Aⁱ`.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.rows == 0 {
            return Err(CoreError::config("instance dimensions d and l must be positive"));
        }
        if self.agents.len() != self.n_agents || self.n_agents == 0 {
            return Err(CoreError::config(format!(
                "instance declares n = {} but carries {} agents",
                self.n_agents,
                self.agents.len()
            )));
        }
        self.planted_optimum.check_len(self.dim)?;
        for (i, agent) in self.agents.iter().enumerate() {
            if agent.a.rows() != self.rows || agent.a.cols() != self.dim {
                return Err(CoreError::config(format!(
                    "agent {i}: A is {}×{}, expected {}×{}",
                    agent.a.rows(),
                    agent.a.cols(),
                    self.rows,
                    self.dim
                )));
            }
            agent.b.check_len(self.rows)?;
            if agent.a.smallest_singular_value() <= S::lit(RANK_TOLERANCE) {
                return Err(CoreError::config(format!("agent {i}: A is not full column rank")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: Self = serde_json::from_str(text)
            .map_err(|e| CoreError::config(format!("instance JSON: {e}")))?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("instance serializes")
    }

    fn agent(&self, agent: usize) -> Result<&AgentData<S>> {
        self.agents
            .get(agent)
            .ok_or(CoreError::AgentOutOfRange { agent, n_agents: self.n_agents })
    }

    /// Residual `Aⁱx − bⁱ`.
    fn residual(&self, agent: usize, x: &Vector<S>) -> Result<Vector<S>> {
        let data = self.agent(agent)?;
        data.a.matvec(x)?.sub(&data.b)
    }

    /// `qⁱ(x)`
    pub fn value(&self, agent: usize, x: &Vector<S>) -> Result<S> {
        let r = self.residual(agent, x)?.norm2();
        Ok(match self.kind {
            ObjectiveKind::RegressionSin => {
                let s = r.sin();
                r * r + s * s
            }
            ObjectiveKind::SigmoidNorm => logistic(r),
        })
    }

    /// `∇qⁱ(x)`
    pub fn gradient(&self, agent: usize, x: &Vector<S>) -> Result<Vector<S>> {
        let res = self.residual(agent, x)?;
        let r = res.norm2();
        let data = self.agent(agent)?;
        if r < S::lit(RESIDUAL_EPS) {
            return Ok(Vector::zeros(self.dim));
        }
        let g = data.a.tr_matvec(&res)?;
        let factor = match self.kind {
            // d/dx [r² + sin² r] = 2g + sin(2r)·g/r
            ObjectiveKind::RegressionSin => S::lit(2.0) + (r + r).sin() / r,
            ObjectiveKind::SigmoidNorm => {
                let s = logistic(r);
                s * (S::one() - s) / r
            }
        };
        Ok(g.scaled(factor))
    }

    /// `∇Qⁱ(x; Δ) = ∇qⁱ(x) + noise`, the noise drawn from `stream`.
    pub fn stochastic_gradient(
        &self,
        agent: usize,
        x: &Vector<S>,
        noise: &NoiseModel<S>,
        stream: &RandomStream,
    ) -> Result<Vector<S>> {
        let mut grad = self.gradient(agent, x)?;
        let std = noise.per_coord_std(self.dim);
        if std > S::zero() {
            grad.axpy(S::one(), &gaussian_vector(stream, self.dim, std))?;
        }
        Ok(grad)
    }
}

fn logistic<S: Scalar>(r: S) -> S {
    S::one() / (S::one() + (-r).exp())
}

/// Settings for [`generate_instance`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationSpec {
    pub kind: ObjectiveKind,
    pub n_agents: usize,
    pub dim: usize,
    pub rows: usize,
    pub data_scale: f64,
    pub seed: u64,
    /// Plant the shared minimizer (`bⁱ = Aⁱx*`). When false each agent gets
    /// its own target point and the instance is heterogeneous.
    pub planted: bool,
}

/// Draws `Aⁱ` with i.i.d. `N(0, data_scale²)` entries, `x* ~ N(0, I)` and
/// `bⁱ = Aⁱx*`. An agent whose `Aⁱ` fails the rank check is redrawn up to ten
/// times.
pub fn generate_instance<S: Scalar>(spec: &GenerationSpec) -> Result<ProblemInstance<S>> {
    let GenerationSpec { kind, n_agents, dim, rows, data_scale, seed, planted } = *spec;
    if n_agents == 0 || dim == 0 {
        return Err(CoreError::config("instance needs N ≥ 1 and d ≥ 1"));
    }
    if rows < dim {
        return Err(CoreError::config(format!("instance needs l ≥ d (l = {rows}, d = {dim})")));
    }
    if !(data_scale > 0.0) || !data_scale.is_finite() {
        return Err(CoreError::config("data_scale must be positive and finite"));
    }
    let optimum: Vector<S> =
        gaussian_vector(&RandomStream::at(seed, StreamDomain::Optimum, 0, 0), dim, S::one());
    let mut agents = Vec::with_capacity(n_agents);
    for i in 0..n_agents {
        let mut accepted = None;
        for attempt in 0..MAX_RANK_RETRIES {
            let stream = RandomStream::at(seed, StreamDomain::Instance, i as u64, attempt);
            let entries = gaussian_vector::<S>(&stream, rows * dim, S::lit(data_scale));
            let a = Matrix::new(rows, dim, entries.into_inner())?;
            if a.smallest_singular_value() > S::lit(RANK_TOLERANCE) {
                accepted = Some(a);
                break;
            }
        }
        let a = accepted.ok_or_else(|| {
            CoreError::Generation(format!(
                "agent {i}: no full-rank data matrix after {MAX_RANK_RETRIES} draws"
            ))
        })?;
        let target = if planted {
            optimum.clone()
        } else {
            let offset = gaussian_vector::<S>(
                &RandomStream::at(seed, StreamDomain::Optimum, i as u64 + 1, 0),
                dim,
                S::one(),
            );
            optimum.add(&offset)?
        };
        let b = a.matvec(&target)?;
        agents.push(AgentData { a, b });
    }
    Ok(ProblemInstance {
        kind,
        dim,
        rows,
        n_agents,
        planted,
        planted_optimum: optimum,
        agents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_gradient;
    use std::f64::consts::PI;

    fn scalar_instance(kind: ObjectiveKind, a: f64, b: f64) -> ProblemInstance<f64> {
        ProblemInstance {
            kind,
            dim: 1,
            rows: 1,
            n_agents: 1,
            planted: true,
            planted_optimum: Vector::from_slice(&[b / a]).unwrap(),
            agents: vec![AgentData {
                a: Matrix::from_rows(&[vec![a]]).unwrap(),
                b: Vector::from_slice(&[b]).unwrap(),
            }],
        }
    }

    fn spec(kind: ObjectiveKind, n: usize, d: usize, l: usize, seed: u64) -> GenerationSpec {
        GenerationSpec {
            kind,
            n_agents: n,
            dim: d,
            rows: l,
            data_scale: 1.0 / (l as f64).sqrt(),
            seed,
            planted: true,
        }
    }

    #[test]
    fn value_hand_cases() {
        let inst = scalar_instance(ObjectiveKind::RegressionSin, 1.0, 0.0);
        let x = Vector::from_slice(&[PI]).unwrap();
        assert!((inst.value(0, &x).unwrap() - PI * PI).abs() < 1e-12);
        assert_eq!(inst.value(0, &Vector::zeros(1)).unwrap(), 0.0);

        let sig = scalar_instance(ObjectiveKind::SigmoidNorm, 1.0, 0.0);
        assert_eq!(sig.value(0, &Vector::zeros(1)).unwrap(), 0.5);
    }

    #[test]
    fn gradient_hand_case() {
        let inst = scalar_instance(ObjectiveKind::RegressionSin, 1.0, 0.0);
        let g = inst.gradient(0, &Vector::from_slice(&[1.0]).unwrap()).unwrap();
        let expected = 2.0 + 2.0f64.sin();
        assert!((g[0] - expected).abs() < 1e-12);
        assert!((expected - 2.9093).abs() < 1e-4);
    }

    #[test]
    fn gradient_vanishes_at_planted_optimum() {
        for kind in [ObjectiveKind::RegressionSin, ObjectiveKind::SigmoidNorm] {
            let inst = generate_instance::<f64>(&spec(kind, 4, 3, 5, 11)).unwrap();
            for i in 0..4 {
                let g = inst.gradient(i, &inst.planted_optimum).unwrap();
                assert!(g.norm2() < 1e-9, "{kind:?} agent {i}: {g:?}");
            }
        }
    }

    #[test]
    fn agent_out_of_range() {
        let inst = scalar_instance(ObjectiveKind::RegressionSin, 1.0, 0.0);
        assert!(matches!(
            inst.value(3, &Vector::zeros(1)),
            Err(CoreError::AgentOutOfRange { agent: 3, .. })
        ));
        assert!(inst.gradient(0, &Vector::zeros(2)).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for kind in [ObjectiveKind::RegressionSin, ObjectiveKind::SigmoidNorm] {
            let inst = generate_instance::<f64>(&spec(kind, 3, 4, 6, 5)).unwrap();
            let x = gaussian_vector::<f64>(&RandomStream::at(1, StreamDomain::Test, 0, 0), 4, 1.0);
            for i in 0..3 {
                let analytic = inst.gradient(i, &x).unwrap();
                let fd = finite_diff_gradient(|y: &Vector<f64>| inst.value(i, y).unwrap(), &x, 1e-5);
                for j in 0..4 {
                    let tol = 1e-5 * analytic[j].abs().max(1e-3);
                    assert!((analytic[j] - fd[j]).abs() <= tol, "{kind:?} {i} {j}");
                }
            }
        }
    }

    #[test]
    fn noiseless_stochastic_gradient_is_exact() {
        let inst = generate_instance::<f64>(&spec(ObjectiveKind::RegressionSin, 2, 3, 4, 1)).unwrap();
        let x = Vector::from_slice(&[0.1, 0.2, 0.3]).unwrap();
        let stream = RandomStream::noise(0, 1, 0, 0);
        let sg = inst.stochastic_gradient(1, &x, &NoiseModel::noiseless(), &stream).unwrap();
        assert_eq!(sg, inst.gradient(1, &x).unwrap());
        let noisy = NoiseModel::new(0.7, 1).unwrap();
        assert_eq!(
            inst.stochastic_gradient(1, &x, &noisy, &stream).unwrap(),
            inst.stochastic_gradient(1, &x, &noisy, &stream).unwrap()
        );
    }

    #[test]
    fn stochastic_gradient_moments() {
        let inst = generate_instance::<f64>(&spec(ObjectiveKind::RegressionSin, 1, 4, 6, 2)).unwrap();
        let x = Vector::from_slice(&[0.5, -0.5, 1.0, 0.0]).unwrap();
        let noise = NoiseModel::new(1.0, 1).unwrap();
        let exact = inst.gradient(0, &x).unwrap();
        let n = 100_000usize;
        let mut mean = Vector::<f64>::zeros(4);
        let mut sq = 0.0;
        for k in 0..n {
            let s = inst
                .stochastic_gradient(0, &x, &noise, &RandomStream::noise(77, 0, k, 0))
                .unwrap();
            let dev = s.sub(&exact).unwrap();
            sq += dev.norm2_sq();
            mean.axpy(1.0 / n as f64, &s).unwrap();
        }
        let err = mean.sub(&exact).unwrap();
        assert!(err.iter().all(|e| e.abs() < 0.02), "{err:?}");
        let msq = sq / n as f64;
        assert!((0.97..=1.03).contains(&msq), "mean squared noise {msq}");
    }

    #[test]
    fn minibatch_divides_variance() {
        let noise = NoiseModel::new(2.0f64, 16).unwrap();
        assert!((noise.effective_variance() - 0.25).abs() < 1e-15);
        assert!((noise.per_coord_std(4) - 2.0 / 8.0).abs() < 1e-15);
        assert!(NoiseModel::new(-1.0f64, 1).is_err());
        assert!(NoiseModel::new(1.0f64, 0).is_err());
    }

    #[test]
    fn generated_instance_planted_optimality() {
        let inst = generate_instance::<f64>(&spec(ObjectiveKind::RegressionSin, 1, 2, 2, 0)).unwrap();
        assert_eq!(inst.gradient(0, &inst.planted_optimum).unwrap().norm2(), 0.0);
        let inst = generate_instance::<f64>(&spec(ObjectiveKind::RegressionSin, 7, 5, 8, 3)).unwrap();
        for i in 0..7 {
            assert!(inst.value(i, &inst.planted_optimum).unwrap() < 1e-20);
        }
        inst.validate().unwrap();
    }

    #[test]
    fn generation_rejects_bad_shapes() {
        assert!(generate_instance::<f64>(&spec(ObjectiveKind::RegressionSin, 1, 3, 2, 0)).is_err());
        assert!(generate_instance::<f64>(&spec(ObjectiveKind::RegressionSin, 0, 3, 3, 0)).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let s = spec(ObjectiveKind::SigmoidNorm, 3, 2, 3, 99);
        assert_eq!(generate_instance::<f64>(&s).unwrap(), generate_instance::<f64>(&s).unwrap());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let inst = generate_instance::<f64>(&spec(ObjectiveKind::RegressionSin, 2, 2, 3, 4)).unwrap();
        let back = ProblemInstance::<f64>::from_json(&inst.to_json()).unwrap();
        assert_eq!(back, inst);
        let mut bad: serde_json::Value = serde_json::from_str(&inst.to_json()).unwrap();
        bad["agents"][0]["a"] = serde_json::json!([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]]);
        assert!(ProblemInstance::<f64>::from_json(&bad.to_string()).is_err());
    }

    #[test]
    fn heterogeneous_toggle_breaks_shared_optimum() {
        let mut s = spec(ObjectiveKind::RegressionSin, 3, 2, 3, 4);
        s.planted = false;
        let inst = generate_instance::<f64>(&s).unwrap();
        assert!(!inst.planted);
        assert!((0..3).any(|i| inst.value(i, &inst.planted_optimum).unwrap() > 1e-6));
    }
}
