//! JSON experiment configuration.
//!
//! A minimal document only needs `instance`; everything else has a default
//! (`local_steps = 3`, `rounds = 50`, CE rule, `sigma = 0`). Loading resolves
//! the document into a runnable [`ExperimentConfig`] and fills every default
//! in, so writing [`LoadedConfig::file`] back out gives the canonical form.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use cefl_core::agents::choose_byzantine_ids;
use cefl_core::objectives::{generate_instance, GenerationSpec};
use cefl_core::theory::{check_conditions, estimate_l, step_bounds, EstimationMetadata};
use cefl_core::{
    AgentRoster, AggregationRule, AttackStrategy, ConditionReport, ExperimentConfig, NoiseModel, ObjectiveKind,
    ProblemInstance, StepSchedule, TheoryConstants, TheoryInputs, Vector,
};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const DEFAULT_ROUNDS: usize = 50;
pub const DEFAULT_LOCAL_STEPS: usize = 3;
pub const DEFAULT_ALPHA: f64 = 0.02;
pub const DEFAULT_THEORY_SAMPLES: usize = 200;
/// Step as a share of the theoretical bound for `schedule.type = "theory"`.
pub const DEFAULT_THEORY_FRACTION: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub instance: InstanceSource,
    #[serde(default)]
    pub byzantine: ByzantineSpec,
    /// Server tolerance; defaults to the number of Byzantine agents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_f: Option<usize>,
    #[serde(default = "default_attack")]
    pub attack: AttackStrategy<f64>,
    #[serde(default)]
    pub rule: RuleSpec,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_local_steps")]
    pub local_steps: usize,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial_model: InitialModel,
    #[serde(default)]
    pub theory: TheorySettings,
}

fn default_attack() -> AttackStrategy<f64> {
    AttackStrategy::InlierCollusion { scale: 0.9 }
}

fn default_rounds() -> usize {
    DEFAULT_ROUNDS
}

fn default_local_steps() -> usize {
    DEFAULT_LOCAL_STEPS
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSource {
    Generate {
        kind: ObjectiveKind,
        n: usize,
        d: usize,
        l: usize,
        /// Entry scale of `Aⁱ`; defaults to `1/√l`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data_scale: Option<f64>,
        /// Defaults to the top-level seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default = "default_true")]
        planted: bool,
    },
    /// Instance JSON; relative paths resolve against the config's directory.
    File { path: PathBuf },
}

/// Either `{"count": c}` (ids drawn from the seed) or `{"ids": [..]}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByzantineSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<usize>>,
}

impl ByzantineSpec {
    pub fn count(count: usize) -> Self {
        Self { count: Some(count), ids: None }
    }

    fn resolve(&self, n: usize, seed: u64) -> Result<Vec<usize>> {
        match (self.count, &self.ids) {
            (Some(_), Some(_)) => Err(HarnessError::field("byzantine", "give either count or ids, not both")),
            (None, Some(ids)) => Ok(ids.clone()),
            (count, None) => choose_byzantine_ids(n, count.unwrap_or(0), seed)
                .map_err(|e| HarnessError::field("byzantine.count", e)),
        }
    }
}

/// Aggregation rule with optional parameters filled from the roster.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RuleSpec {
    Ce {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        f: Option<usize>,
    },
    MultiKrum {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        f: Option<usize>,
        /// Defaults to `N − f`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m_select: Option<usize>,
    },
    Cwtm {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        f: Option<usize>,
    },
    Mean,
}

impl Default for RuleSpec {
    fn default() -> Self {
        Self::Ce { f: None }
    }
}

impl RuleSpec {
    /// Parses `ce`, `cwtm`, `multi_krum` or `mean`.
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "ce" => Some(Self::Ce { f: None }),
            "cwtm" => Some(Self::Cwtm { f: None }),
            "multi_krum" | "krum" => Some(Self::MultiKrum { f: None, m_select: None }),
            "mean" => Some(Self::Mean),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Ce { .. } => "ce",
            Self::MultiKrum { .. } => "multi_krum",
            Self::Cwtm { .. } => "cwtm",
            Self::Mean => "mean",
        }
    }

    fn resolve(&self, n: usize, filter_f: usize) -> AggregationRule {
        match *self {
            Self::Ce { f } => AggregationRule::Ce { f: f.unwrap_or(filter_f) },
            Self::MultiKrum { f, m_select } => {
                let f = f.unwrap_or(filter_f);
                AggregationRule::MultiKrum { f, m_select: m_select.unwrap_or(n.saturating_sub(f)) }
            }
            Self::Cwtm { f } => AggregationRule::Cwtm { f: f.unwrap_or(filter_f) },
            Self::Mean => AggregationRule::Mean,
        }
    }

    fn canonical(rule: &AggregationRule) -> Self {
        match *rule {
            AggregationRule::Ce { f } => Self::Ce { f: Some(f) },
            AggregationRule::MultiKrum { f, m_select } => Self::MultiKrum { f: Some(f), m_select: Some(m_select) },
            AggregationRule::Cwtm { f } => Self::Cwtm { f: Some(f) },
            AggregationRule::Mean => Self::Mean,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Constant { alpha: f64 },
    /// `αₖ = c / (k + 1)`
    Harmonic { c: f64 },
    /// Constant `fraction · α_max` from the estimated constants.
    Theory {
        #[serde(default = "default_fraction")]
        fraction: f64,
    },
}

fn default_fraction() -> f64 {
    DEFAULT_THEORY_FRACTION
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self::Constant { alpha: DEFAULT_ALPHA }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "one")]
    pub minibatch: usize,
}

fn one() -> usize {
    1
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { sigma: 0.0, minibatch: 1 }
    }
}

/// `"zeros"` or an explicit vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum InitialModel {
    #[default]
    Zeros,
    Vector(Vec<f64>),
}

impl Serialize for InitialModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Zeros => serializer.serialize_str("zeros"),
            Self::Vector(v) => v.serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for InitialModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Name(String),
            Vector(Vec<f64>),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Name(n) if n == "zeros" => Ok(Self::Zeros),
            Raw::Name(n) => Err(serde::de::Error::custom(format!(
                "initial_model must be \"zeros\" or an array of numbers, got \"{n}\""
            ))),
            Raw::Vector(v) => Ok(Self::Vector(v)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySettings {
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Defaults to `1.1·‖x̄₀ − x*‖`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_radius: Option<f64>,
    /// Defaults to the top-level seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_samples() -> usize {
    DEFAULT_THEORY_SAMPLES
}

impl Default for TheorySettings {
    fn default() -> Self {
        Self { samples: DEFAULT_THEORY_SAMPLES, region_radius: None, seed: None }
    }
}

/// Estimated constants and the advisory verdict for a resolved config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Advisory {
    #[serde(rename = "L_hat")]
    pub lipschitz: f64,
    /// Absent when the objective has no PL constant.
    #[serde(rename = "mu_hat")]
    pub pl: Option<f64>,
    pub conditions: Option<ConditionReport<f64>>,
    pub estimation: EstimationMetadata,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug)]
pub struct LoadedConfig {
    /// Canonical document with every default filled in.
    pub file: ConfigFile,
    pub experiment: ExperimentConfig<f64>,
    pub advisory: Advisory,
}

impl ConfigFile {
    /// Document with only the instance given.
    pub fn minimal(instance: InstanceSource) -> Self {
        serde_json::from_value(serde_json::json!({ "instance": instance })).expect("defaults deserialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Validation(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Builds the runnable configuration. Relative instance paths resolve
    /// against `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<LoadedConfig> {
        let (instance, instance_source) = self.load_instance(base_dir)?;
        let n = instance.n_agents;
        let byzantine = self.byzantine.resolve(n, self.seed)?;
        let filter_f = self.filter_f.unwrap_or(byzantine.len());
        let roster = AgentRoster::new(n, byzantine, filter_f, self.attack.clone())
            .map_err(|e| HarnessError::field("byzantine/filter_f", e))?;
        self.attack.validate(instance.dim).map_err(|e| HarnessError::field("attack", e))?;
        let rule = self.rule.resolve(n, filter_f);
        rule.validate(n).map_err(|e| HarnessError::field("rule", e))?;
        let noise = NoiseModel::new(self.noise.sigma, self.noise.minibatch).map_err(|e| HarnessError::field("noise", e))?;
        let initial_model = match &self.initial_model {
            InitialModel::Zeros => None,
            InitialModel::Vector(v) => {
                let x = Vector::new(v.clone()).map_err(|e| HarnessError::field("initial_model", e))?;
                x.check_len(instance.dim).map_err(|e| HarnessError::field("initial_model", e))?;
                Some(x)
            }
        };
        if self.local_steps == 0 {
            return Err(HarnessError::field("local_steps", "must be at least 1"));
        }
        if self.rounds == 0 {
            return Err(HarnessError::field("rounds", "must be at least 1"));
        }

        let start = initial_model.clone().unwrap_or_else(|| Vector::zeros(instance.dim));
        let theory = self.resolve_theory_settings(&instance, &start)?;
        let advisory_constants = estimate_constants(&instance, &roster, self.noise.sigma, &theory)?;

        let schedule = match self.schedule {
            ScheduleSpec::Constant { alpha } => StepSchedule::Constant { alpha },
            ScheduleSpec::Harmonic { c } => StepSchedule::Harmonic { c },
            ScheduleSpec::Theory { fraction } => {
                if !(fraction > 0.0 && fraction.is_finite()) {
                    return Err(HarnessError::field("schedule.fraction", "must be positive"));
                }
                let consts = advisory_constants.1.as_ref().ok_or_else(|| {
                    HarnessError::field(
                        "schedule",
                        format!("theory schedule needs a PL constant, unavailable for {:?}", instance.kind),
                    )
                })?;
                StepSchedule::Constant { alpha: fraction * step_bounds(consts, self.local_steps).2 }
            }
        };
        schedule.validate().map_err(|e| HarnessError::field("schedule", e))?;

        let experiment = ExperimentConfig {
            instance: Arc::new(instance),
            roster,
            rule,
            rounds: self.rounds,
            local_steps: self.local_steps,
            schedule,
            noise,
            root_seed: self.seed,
            initial_model,
        };
        experiment.validate()?;

        let (lipschitz, consts) = advisory_constants;
        let conditions = consts.as_ref().map(|c| check_conditions(c, &TheoryInputs::from_config(&experiment)));
        let note = consts
            .is_none()
            .then(|| "PL constant undefined for this objective; only the smoothness estimate is reported".to_string());
        let advisory = Advisory {
            lipschitz,
            pl: consts.map(|c| c.pl),
            conditions,
            estimation: EstimationMetadata {
                samples: theory.samples,
                region_radius: theory.region_radius.expect("resolved"),
                seed: theory.seed.expect("resolved"),
            },
            note,
        };

        let mut file = self.clone();
        file.instance = instance_source;
        file.filter_f = Some(filter_f);
        file.rule = RuleSpec::canonical(&experiment.rule);
        file.theory = theory;
        Ok(LoadedConfig { file, experiment, advisory })
    }

    fn load_instance(&self, base_dir: &Path) -> Result<(ProblemInstance<f64>, InstanceSource)> {
        match &self.instance {
            InstanceSource::Generate { kind, n, d, l, data_scale, seed, planted } => {
                let data_scale = data_scale.unwrap_or_else(|| 1.0 / (*l as f64).sqrt());
                let seed = seed.unwrap_or(self.seed);
                let spec = GenerationSpec {
                    kind: *kind,
                    n_agents: *n,
                    dim: *d,
                    rows: *l,
                    data_scale,
                    seed,
                    planted: *planted,
                };
                let inst = generate_instance(&spec).map_err(|e| HarnessError::field("instance", e))?;
                let canonical = InstanceSource::Generate {
                    kind: *kind,
                    n: *n,
                    d: *d,
                    l: *l,
                    data_scale: Some(data_scale),
                    seed: Some(seed),
                    planted: *planted,
                };
                Ok((inst, canonical))
            }
            InstanceSource::File { path } => {
                let full = base_dir.join(path);
                let text = std::fs::read_to_string(&full).map_err(|e| HarnessError::io(&full, e))?;
                let inst = ProblemInstance::from_json(&text)
                    .map_err(|e| HarnessError::field(&format!("instance ({})", full.display()), e))?;
                Ok((inst, self.instance.clone()))
            }
        }
    }

    fn resolve_theory_settings(&self, inst: &ProblemInstance<f64>, start: &Vector<f64>) -> Result<TheorySettings> {
        let radius = match self.theory.region_radius {
            Some(r) => r,
            None => {
                let r = 1.1 * start.distance(&inst.planted_optimum)?;
                if r > 0.0 {
                    r
                } else {
                    1.0
                }
            }
        };
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(HarnessError::field("theory.region_radius", "must be positive"));
        }
        if self.theory.samples < 2 {
            return Err(HarnessError::field("theory.samples", "need at least 2"));
        }
        Ok(TheorySettings {
            samples: self.theory.samples,
            region_radius: Some(radius),
            seed: Some(self.theory.seed.unwrap_or(self.seed)),
        })
    }
}

/// `L̂` always; full constants only when a PL constant exists.
fn estimate_constants(
    inst: &ProblemInstance<f64>,
    roster: &AgentRoster<f64>,
    sigma: f64,
    theory: &TheorySettings,
) -> Result<(f64, Option<TheoryConstants<f64>>)> {
    let radius = theory.region_radius.expect("resolved");
    let seed = theory.seed.expect("resolved");
    let wrap = |e| HarnessError::field("theory", e);
    match inst.kind {
        ObjectiveKind::RegressionSin => {
            let c = TheoryConstants::estimate(inst, roster, sigma, radius, theory.samples, seed).map_err(wrap)?;
            Ok((c.lipschitz, Some(c)))
        }
        ObjectiveKind::SigmoidNorm => Ok((estimate_l(inst, roster, radius, theory.samples, seed).map_err(wrap)?, None)),
    }
}

/// Reads, parses, resolves and validates a config file.
pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let file: ConfigFile = serde_json::from_str(&text)
        .map_err(|e| HarnessError::Validation(format!("{}: {e}", path.display())))?;
    file.resolve(path.parent().unwrap_or(Path::new(".")))
}
