#![allow(dead_code)]

use std::sync::Arc;

use cefl_core::objectives::{generate_instance, AgentData, GenerationSpec};
use cefl_core::{
    AgentRoster, AggregationRule, AttackStrategy, ExperimentConfig, Matrix, NoiseModel, ObjectiveKind,
    ProblemInstance, StepSchedule, Vector,
};

/// One-dimensional instance with `qⁱ` built from `Aⁱ = [aᵢ]`, `bⁱ = [bᵢ]`.
pub fn scalar_instance(kind: ObjectiveKind, a: &[f64], b: &[f64]) -> ProblemInstance<f64> {
    ProblemInstance {
        kind,
        dim: 1,
        rows: 1,
        n_agents: a.len(),
        planted: true,
        planted_optimum: Vector::from_slice(&[b[0] / a[0]]).unwrap(),
        agents: a
            .iter()
            .zip(b)
            .map(|(&ai, &bi)| AgentData {
                a: Matrix::new(1, 1, vec![ai]).unwrap(),
                b: Vector::from_slice(&[bi]).unwrap(),
            })
            .collect(),
    }
}

pub fn generated(kind: ObjectiveKind, n: usize, d: usize, l: usize, seed: u64) -> ProblemInstance<f64> {
    generate_instance(&GenerationSpec { kind, n_agents: n, dim: d, rows: l, data_scale: 0.3, seed, planted: true })
        .unwrap()
}

pub fn config(
    inst: ProblemInstance<f64>,
    byz: &[usize],
    f: usize,
    attack: AttackStrategy<f64>,
    rule: AggregationRule,
    alpha: f64,
    rounds: usize,
    local_steps: usize,
    sigma: f64,
) -> ExperimentConfig<f64> {
    let n = inst.n_agents;
    ExperimentConfig {
        instance: Arc::new(inst),
        roster: AgentRoster::new(n, byz.iter().copied(), f, attack).unwrap(),
        rule,
        rounds,
        local_steps,
        schedule: StepSchedule::Constant { alpha },
        noise: NoiseModel::new(sigma, 1).unwrap(),
        root_seed: 7,
        initial_model: None,
    }
}

/// Least-squares fit of `log gap` against round; returns `(slope, r²)`.
pub fn log_linear_fit(points: &[(usize, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0 as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (slope, r2)
}
