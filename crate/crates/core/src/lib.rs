//! Byzantine fault-tolerant federated local SGD with the comparative
//! elimination (CE) filter.
//!
//! The crate is generic over the floating-point scalar (see [`Scalar`]);
//! every tolerance in the test-suite assumes `f64`, and the `*64` aliases
//! below are what the harness uses.
//!
//! Layout:
//! - [`numerics`]: dense vectors/matrices, counter-based random streams,
//!   finite differences.
//! - [`objectives`]: the regression-with-sine and sigmoid-of-residual costs,
//!   their gradients, stochastic oracles and planted instance generation.
//! - [`agents`]: honest local SGD and Byzantine message fabrication.
//! - [`aggregation`]: CE, multi-KRUM, coordinate-wise trimmed mean and mean.
//! - [`engine`]: the round loop and experiment traces.
//! - [`theory`]: constant estimation and the step/fraction/error-ball checks.

pub mod agents;
pub mod aggregation;
pub mod engine;
mod error;
pub mod numerics;
pub mod objectives;
mod scalar;
pub mod theory;

pub use agents::{AgentRoster, AttackStrategy, LocalRunConfig};
pub use aggregation::{AggregationOutcome, AggregationRule, Report};
pub use engine::{ExperimentConfig, RoundOutcome, StepSchedule, Trace};
pub use error::{CoreError, Result};
pub use numerics::{Matrix, RandomStream, StreamDomain, Vector};
pub use objectives::{NoiseModel, ObjectiveKind, ProblemInstance};
pub use scalar::Scalar;
pub use theory::{ConditionReport, TheoryConstants, TheoryInputs};

pub type Vector64 = Vector<f64>;
pub type Matrix64 = Matrix<f64>;
pub type Instance64 = ProblemInstance<f64>;
pub type Roster64 = AgentRoster<f64>;
pub type Attack64 = AttackStrategy<f64>;
pub type Noise64 = NoiseModel<f64>;
pub type Schedule64 = StepSchedule<f64>;
pub type Config64 = ExperimentConfig<f64>;
pub type Trace64 = Trace<f64>;
pub type Outcome64 = AggregationOutcome<f64>;
pub type Constants64 = TheoryConstants<f64>;

pub type Vector32 = Vector<f32>;
pub type Instance32 = ProblemInstance<f32>;
pub type Config32 = ExperimentConfig<f32>;
