//! One-axis sweeps over a base config.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ByzantineSpec, ConfigFile, RuleSpec};
use crate::error::{HarnessError, Result};
use crate::output::write_json;
use crate::summary::SummaryStats;
use crate::execute;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "values", rename_all = "snake_case")]
pub enum Axis {
    /// Number of Byzantine agents; the filter tolerance follows.
    ByzantineF(Vec<usize>),
    #[serde(rename = "local_T")]
    LocalT(Vec<usize>),
    Rule(Vec<RuleSpec>),
    Seed(Vec<u64>),
}

impl Axis {
    /// Parses `name=v1,v2,...`.
    pub fn parse(spec: &str) -> std::result::Result<Self, String> {
        let (name, values) = spec.split_once('=').ok_or_else(|| format!("axis {spec:?}: expected name=v1,v2,..."))?;
        let items: Vec<&str> = values.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        if items.is_empty() {
            return Err(format!("axis {name:?} has no values"));
        }
        fn nums<T: std::str::FromStr>(items: &[&str], name: &str) -> std::result::Result<Vec<T>, String>
        where
            T::Err: std::fmt::Display,
        {
            items.iter().map(|s| s.parse().map_err(|e| format!("axis {name}: {s:?}: {e}"))).collect()
        }
        match name {
            "byzantine_f" => Ok(Self::ByzantineF(nums(&items, name)?)),
            "local_T" | "local_t" => Ok(Self::LocalT(nums(&items, name)?)),
            "seed" => Ok(Self::Seed(nums(&items, name)?)),
            "rule" => items
                .iter()
                .map(|s| RuleSpec::from_name(s).ok_or_else(|| format!("axis rule: unknown rule {s:?}")))
                .collect::<std::result::Result<_, _>>()
                .map(Self::Rule),
            other => Err(format!("unknown axis {other:?}; expected byzantine_f, local_T, rule or seed")),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::ByzantineF(_) => "byzantine_f",
            Self::LocalT(_) => "local_T",
            Self::Rule(_) => "rule",
            Self::Seed(_) => "seed",
        }
    }

    fn labels(&self) -> Vec<String> {
        match self {
            Self::ByzantineF(v) | Self::LocalT(v) => v.iter().map(usize::to_string).collect(),
            Self::Seed(v) => v.iter().map(u64::to_string).collect(),
            Self::Rule(v) => v.iter().map(|r| r.name().to_string()).collect(),
        }
    }

    fn apply(&self, index: usize, cfg: &mut ConfigFile) {
        match self {
            Self::ByzantineF(v) => {
                cfg.byzantine = ByzantineSpec::count(v[index]);
                cfg.filter_f = Some(v[index]);
                cfg.rule = RuleSpec::from_name(cfg.rule.name()).expect("known rule");
            }
            Self::LocalT(v) => cfg.local_steps = v[index],
            Self::Rule(v) => cfg.rule = v[index],
            Self::Seed(v) => cfg.seed = v[index],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub base: ConfigFile,
    pub axis: Axis,
    pub replications: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: String,
    pub replication: usize,
    pub seed: u64,
    pub dir: String,
    pub summary: Option<SummaryStats>,
    pub abort: Option<String>,
}

/// Replication `r` adds `r` to the cell's seed. All cells are resolved
/// before any runs, so an invalid axis value fails the whole sweep.
pub fn run_sweep(spec: &SweepSpec, out: &Path, base_dir: &Path) -> Result<Vec<SweepCell>> {
    if spec.replications == 0 {
        return Err(HarnessError::field("reps", "need at least one replication"));
    }
    let mut plans = Vec::new();
    for (i, label) in spec.axis.labels().into_iter().enumerate() {
        for r in 0..spec.replications {
            let mut cfg = spec.base.clone();
            spec.axis.apply(i, &mut cfg);
            cfg.seed = cfg.seed.wrapping_add(r as u64);
            let dir = format!("{}={label}/rep{r}", spec.axis.name());
            let loaded = cfg
                .resolve(base_dir)
                .map_err(|e| HarnessError::Validation(format!("{}={label}: {e}", spec.axis.name())))?;
            plans.push((label.clone(), r, dir, loaded));
        }
    }
    let cells = plans
        .par_iter()
        .map(|(value, r, dir, loaded)| {
            let run = execute(loaded, &out.join(dir))?;
            Ok(SweepCell {
                value: value.clone(),
                replication: *r,
                seed: loaded.file.seed,
                dir: dir.clone(),
                summary: run.summary,
                abort: run.abort,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(&out.join("sweep.json"), &serde_json::json!({ "axis": spec.axis, "cells": cells }))?;
    Ok(cells)
}
