mod common;

use cefl_core::theory::{
    check_conditions, error_ball, estimate_l, estimate_lipschitz, estimate_mu, estimate_pl, Landscape,
};
use cefl_core::{AgentRoster, AttackStrategy, CoreError, ObjectiveKind, Result, TheoryConstants, TheoryInputs, Vector};
use common::{generated, scalar_instance};
use proptest::prelude::*;

/// `q(x) = (a·x − b)²`
struct Quadratic {
    a: f64,
    b: f64,
}

impl Landscape<f64> for Quadratic {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: &Vector<f64>) -> Result<f64> {
        Ok((self.a * x[0] - self.b).powi(2))
    }
    fn gradient(&self, x: &Vector<f64>) -> Result<Vector<f64>> {
        Vector::from_slice(&[2.0 * self.a * (self.a * x[0] - self.b)])
    }
}

fn roster(n: usize) -> AgentRoster<f64> {
    AgentRoster::new(n, [], 0, AttackStrategy::SignFlip { scale: 1.0 }).unwrap()
}

fn inputs(f: usize, t: usize, alpha: f64, m: usize) -> TheoryInputs<f64> {
    TheoryInputs {
        n_agents: 50,
        filter_f: f,
        honest_count: 50 - f,
        local_steps: t,
        alpha: Some(alpha),
        alpha_peak: alpha,
        minibatch: m,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn quadratic_oracles(a in 0.2f64..5.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let q = Quadratic { a, b };
        let center = Vector::from_slice(&[b / a]).unwrap();
        let l = estimate_lipschitz(&q, &center, 2.0, 100, seed).unwrap();
        prop_assert!(l >= 2.0 * a * a && l <= 1.5 * 2.0 * a * a * 1.1, "L̂ = {l}");
        let mu = estimate_pl(&q, &center, 0.0, 2.0, 100, seed).unwrap();
        prop_assert!(mu >= 0.75 * 2.0 * a * a * 0.9 && mu <= 2.0 * a * a, "μ̂ = {mu}");
    }

    #[test]
    fn error_ball_monotone(
        alpha in 1e-6f64..1e-2, sigma in 0.01f64..2.0, t in 1usize..6, f in 0usize..10, m in 1usize..32,
    ) {
        let c = TheoryConstants::exact(8.0, 0.7, sigma);
        let base = error_ball(&c, &inputs(f, t, alpha, m)).unwrap();
        prop_assert!(base > 0.0);
        prop_assert!(error_ball(&c, &inputs(f, t, alpha * 2.0, m)).unwrap() > base);
        prop_assert!(error_ball(&c, &inputs(f, t + 1, alpha, m)).unwrap() > base);
        prop_assert!(error_ball(&c, &inputs(f + 1, t, alpha, m)).unwrap() > base);
        prop_assert!(error_ball(&c, &inputs(f, t, alpha, m * 2)).unwrap() < base);
        let louder = TheoryConstants::exact(8.0, 0.7, sigma * 1.5);
        prop_assert!(error_ball(&louder, &inputs(f, t, alpha, m)).unwrap() > base);
    }
}

#[test]
fn regression_sin_scalar_curvature_cap() {
    let inst = scalar_instance(ObjectiveKind::RegressionSin, &[1.0], &[0.0]);
    for seed in 0..5 {
        let l = estimate_l(&inst, &roster(1), 3.0, 200, seed).unwrap();
        assert!(l <= 1.5 * 4.0 * 1.1, "L̂ = {l}");
    }
}

#[test]
fn regression_pl_below_smoothness() {
    for seed in 0..4 {
        let inst = generated(ObjectiveKind::RegressionSin, 8, 3, 5, seed);
        let r = roster(8);
        let l = estimate_l(&inst, &r, 2.0, 100, seed).unwrap();
        let mu = estimate_mu(&inst, &r, 2.0, 100, seed).unwrap();
        assert!(mu > 0.0 && mu <= l, "μ̂ = {mu}, L̂ = {l}");
    }
}

#[test]
fn estimator_errors() {
    let sig = generated(ObjectiveKind::SigmoidNorm, 4, 2, 3, 1);
    assert!(matches!(estimate_mu(&sig, &roster(4), 1.0, 50, 0), Err(CoreError::UnsupportedKind(_))));
    let q = Quadratic { a: 1.0, b: 0.0 };
    let center = Vector::zeros(1);
    assert!(estimate_lipschitz(&q, &center, 1.0, 1, 0).is_err());
    assert!(estimate_lipschitz(&q, &center, 0.0, 20, 0).is_err());
    // a 1e-9 ball keeps every sample within 1e-12 of the optimum value
    assert!(matches!(estimate_pl(&q, &center, 0.0, 1e-9, 20, 0), Err(CoreError::Estimation(_))));
}

#[test]
fn worked_values_are_exact() {
    let c = TheoryConstants::exact(10.0, 1.0, 0.5);
    let r = check_conditions(&c, &inputs(2, 3, 1e-4, 1));
    assert_eq!(r.alpha_max, 1.0 / 216000.0);
    assert!(!r.step_ok);
    assert_eq!(r.fraction, 2.0 / 48.0);
    assert!(!r.fraction_ok);
    assert_eq!(r.error_ball, Some(error_ball(&c, &inputs(2, 3, 1e-4, 1)).unwrap()));
    let pass = TheoryConstants::exact(8.0, 1.0, 0.5);
    assert!(check_conditions(&pass, &inputs(2, 3, 1e-7, 1)).passes());
}
