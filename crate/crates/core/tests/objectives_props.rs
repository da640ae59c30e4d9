mod common;

use cefl_core::numerics::finite_diff_gradient;
use cefl_core::objectives::{generate_instance, GenerationSpec};
use cefl_core::{ObjectiveKind, ProblemInstance, Vector};
use proptest::prelude::*;

fn instance(kind: ObjectiveKind, n: usize, d: usize, l: usize, seed: u64) -> ProblemInstance<f64> {
    generate_instance(&GenerationSpec { kind, n_agents: n, dim: d, rows: l, data_scale: 0.5, seed, planted: true })
        .unwrap()
}

fn kinds() -> impl Strategy<Value = ObjectiveKind> {
    prop_oneof![Just(ObjectiveKind::RegressionSin), Just(ObjectiveKind::SigmoidNorm)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_finite_difference(
        kind in kinds(),
        seed in any::<u64>(),
        (d, extra) in (1usize..5, 0usize..3),
        xs in prop::collection::vec(-3.0f64..3.0, 5),
    ) {
        let inst = instance(kind, 2, d, d + extra, seed);
        let x = Vector::from_slice(&xs[..d]).unwrap();
        for agent in 0..2 {
            let analytic = inst.gradient(agent, &x).unwrap();
            let numeric = finite_diff_gradient(|y: &Vector<f64>| inst.value(agent, y).unwrap(), &x, 1e-6);
            for j in 0..d {
                let (a, n) = (analytic[j], numeric[j]);
                prop_assert!((a - n).abs() <= 1e-5 * a.abs().max(n.abs()) + 1e-8, "{kind:?} j={j}: {a} vs {n}");
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_planted_optimum(kind in kinds(), seed in any::<u64>()) {
        let inst = instance(kind, 3, 3, 4, seed);
        for agent in 0..3 {
            let floor = match kind {
                ObjectiveKind::RegressionSin => 0.0,
                ObjectiveKind::SigmoidNorm => 0.5,
            };
            prop_assert!((inst.value(agent, &inst.planted_optimum).unwrap() - floor).abs() < 1e-12);
            prop_assert!(inst.gradient(agent, &inst.planted_optimum).unwrap().norm2() < 1e-9);
        }
    }

    #[test]
    fn json_round_trip(kind in kinds(), seed in any::<u64>()) {
        let inst = instance(kind, 3, 2, 3, seed);
        prop_assert_eq!(ProblemInstance::from_json(&inst.to_json()).unwrap(), inst);
    }
}

/// Subset sums of a planted instance share the planted minimizer.
#[test]
fn subset_descent_lands_on_planted_optimum() {
    let (n, f) = (6usize, 2usize);
    let inst = instance(ObjectiveKind::RegressionSin, n, 3, 4, 42);
    let mut checked = 0;
    for mask in 1u32..(1 << n) {
        let subset: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        if subset.len() < n - 2 * f {
            continue;
        }
        // curvature of r² + sin²r is at most 4‖A‖²
        let lip: f64 = subset
            .iter()
            .map(|&i| 4.0 * inst.agents[i].a.as_slice().iter().map(|v| v * v).sum::<f64>())
            .sum();
        let step = 0.5 / lip;
        let mut x = Vector::from_fn(3, |j| [2.0, -1.5, 0.7][j] + mask as f64 * 1e-3);
        for _ in 0..10_000 {
            let mut g = Vector::zeros(3);
            for &i in &subset {
                g.axpy(1.0, &inst.gradient(i, &x).unwrap()).unwrap();
            }
            x.axpy(-step, &g).unwrap();
        }
        let err = x.distance(&inst.planted_optimum).unwrap();
        assert!(err < 1e-4, "subset {subset:?}: {err}");
        checked += 1;
    }
    assert_eq!(checked, (1 << n) - 1 - n);
}
