//! Plot presets on a 50-agent network.
//!
//! * `fig1`: CE, CWTM, multi-KRUM and Mean under attack for each `f`, plus
//!   a fault-free Mean baseline; `T = 3`.
//! * `fig2`: CE with `T ∈ {1, 3}` for each `f`.
//! * `fig3`: as `fig2` on the sigmoid objective, judged by mean squared
//!   gradient.
//!
//! Every cell gets its own directory with `trace.csv`, `config.json` and
//! `trace.json`; the preset root holds `preset.json`, `summary.json` and a
//! `plot.py` that reads them.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use cefl_core::{AttackStrategy, ObjectiveKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{
    ByzantineSpec, ConfigFile, InitialModel, InstanceSource, NoiseSpec, RuleSpec, ScheduleSpec, TheorySettings,
};
use crate::error::{HarnessError, Result};
use crate::output::{write_file, write_json};
use crate::summary::{rounds_to_reach, Metric, SummaryStats};
use crate::{execute, metric_for};

pub const N_AGENTS: usize = 50;
pub const DIM: usize = 20;
pub const ROWS: usize = 25;
pub const SIGMA: f64 = 0.5;
pub const ROUNDS: usize = 50;
pub const F_VALUES: [usize; 4] = [2, 5, 8, 10];
pub const PRESET_ALPHA: f64 = 0.02;
/// Level used for rounds-to-reach in `summary.json`.
pub const REACH_THRESHOLD: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Fig1,
    Fig2,
    Fig3,
}

impl FromStr for PresetName {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fig1" => Ok(Self::Fig1),
            "fig2" => Ok(Self::Fig2),
            "fig3" => Ok(Self::Fig3),
            other => Err(format!("unknown preset {other:?}; expected fig1, fig2 or fig3")),
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Fig1 => "fig1",
            Self::Fig2 => "fig2",
            Self::Fig3 => "fig3",
        })
    }
}

/// Step size of every cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaChoice {
    Fixed(f64),
    /// Share of each cell's own theoretical bound.
    Theory(f64),
}

impl FromStr for AlphaChoice {
    type Err = String;
    /// `0.01`, `theory` (half the bound) or `theory:0.25`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "theory" {
            return Ok(Self::Theory(crate::config::DEFAULT_THEORY_FRACTION));
        }
        if let Some(frac) = s.strip_prefix("theory:") {
            return frac.parse().map(Self::Theory).map_err(|e| format!("alpha {s:?}: {e}"));
        }
        s.parse().map(Self::Fixed).map_err(|e| format!("alpha {s:?}: {e}"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PresetOptions {
    pub seed: u64,
    pub alpha: AlphaChoice,
    pub attack: AttackStrategy<f64>,
}

impl Default for PresetOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            alpha: AlphaChoice::Fixed(PRESET_ALPHA),
            attack: AttackStrategy::InlierCollusion { scale: 0.9 },
        }
    }
}

/// Parses `sign_flip:10`, `gaussian_blast:1e6`, `inlier_collusion:0.9` or
/// `fixed_point:c` (every coordinate set to `c`).
pub fn parse_attack(spec: &str) -> std::result::Result<AttackStrategy<f64>, String> {
    let (name, param) = spec.split_once(':').ok_or_else(|| format!("attack {spec:?}: expected name:param"))?;
    let v: f64 = param.parse().map_err(|e| format!("attack {spec:?}: {e}"))?;
    let attack = match name {
        "sign_flip" => AttackStrategy::SignFlip { scale: v },
        "gaussian_blast" => AttackStrategy::GaussianBlast { magnitude: v },
        "inlier_collusion" => AttackStrategy::InlierCollusion { scale: v },
        "fixed_point" => AttackStrategy::FixedPoint {
            target: cefl_core::Vector::new(vec![v; DIM]).map_err(|e| e.to_string())?,
        },
        other => return Err(format!("unknown attack {other:?}")),
    };
    attack.validate(DIM).map_err(|e| e.to_string())?;
    Ok(attack)
}

/// One preset curve.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub name: String,
    pub rule: &'static str,
    pub f: usize,
    pub local_steps: usize,
    pub config: ConfigFile,
}

fn base_config(kind: ObjectiveKind, opts: &PresetOptions) -> ConfigFile {
    ConfigFile {
        instance: InstanceSource::Generate {
            kind,
            n: N_AGENTS,
            d: DIM,
            l: ROWS,
            data_scale: Some(1.0 / (ROWS as f64).sqrt()),
            seed: Some(opts.seed),
            planted: true,
        },
        byzantine: ByzantineSpec::count(0),
        filter_f: Some(0),
        attack: opts.attack.clone(),
        rule: RuleSpec::default(),
        rounds: ROUNDS,
        local_steps: 3,
        schedule: match opts.alpha {
            AlphaChoice::Fixed(alpha) => ScheduleSpec::Constant { alpha },
            AlphaChoice::Theory(fraction) => ScheduleSpec::Theory { fraction },
        },
        noise: NoiseSpec { sigma: SIGMA, minibatch: 1 },
        seed: opts.seed,
        initial_model: InitialModel::Zeros,
        theory: TheorySettings::default(),
    }
}

fn cell(base: &ConfigFile, rule: RuleSpec, f: usize, local_steps: usize, name: String) -> Cell {
    let mut config = base.clone();
    config.byzantine = ByzantineSpec::count(f);
    config.filter_f = Some(f);
    config.rule = rule;
    config.local_steps = local_steps;
    Cell { name, rule: rule.name(), f, local_steps, config }
}

pub fn preset_cells(name: PresetName, opts: &PresetOptions) -> Vec<Cell> {
    let mut cells = Vec::new();
    match name {
        PresetName::Fig1 => {
            let base = base_config(ObjectiveKind::RegressionSin, opts);
            let rules = [
                RuleSpec::Ce { f: None },
                RuleSpec::Cwtm { f: None },
                RuleSpec::MultiKrum { f: None, m_select: None },
                RuleSpec::Mean,
            ];
            for f in F_VALUES {
                for rule in rules {
                    cells.push(cell(&base, rule, f, 3, format!("{}_f{f}", rule.name())));
                }
            }
            cells.push(cell(&base, RuleSpec::Mean, 0, 3, "baseline_mean_f0".into()));
        }
        PresetName::Fig2 | PresetName::Fig3 => {
            let kind = if name == PresetName::Fig2 {
                ObjectiveKind::RegressionSin
            } else {
                ObjectiveKind::SigmoidNorm
            };
            let base = base_config(kind, opts);
            for f in F_VALUES {
                for t in [1, 3] {
                    cells.push(cell(&base, RuleSpec::Ce { f: None }, f, t, format!("ce_T{t}_f{f}")));
                }
            }
        }
    }
    cells
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub name: String,
    pub rule: String,
    pub f: usize,
    pub local_steps: usize,
    /// Path of the trace CSV relative to the preset directory.
    pub csv: String,
    pub summary: Option<SummaryStats>,
    /// First round at or below [`REACH_THRESHOLD`].
    pub rounds_to_reach: Option<usize>,
    pub abort: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresetReport {
    pub preset: PresetName,
    pub seed: u64,
    pub metric: Metric,
    pub reach_threshold: f64,
    pub cells: Vec<CellResult>,
}

impl PresetReport {
    pub fn cell(&self, name: &str) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.name == name)
    }
}

/// Resolves every cell first, so a bad option fails before anything runs.
pub fn run_preset(name: PresetName, out: &Path, opts: &PresetOptions) -> Result<PresetReport> {
    let cells = preset_cells(name, opts);
    let loaded = cells
        .iter()
        .map(|c| c.config.resolve(out).map_err(|e| HarnessError::Validation(format!("{}: {e}", c.name))))
        .collect::<Result<Vec<_>>>()?;
    let metric = metric_for(loaded[0].experiment.instance.kind);
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let results = cells
        .par_iter()
        .zip(loaded.par_iter())
        .map(|(c, l)| {
            let run = execute(l, &out.join(&c.name))?;
            Ok(CellResult {
                name: c.name.clone(),
                rule: c.rule.to_string(),
                f: c.f,
                local_steps: c.local_steps,
                csv: format!("{}/trace.csv", c.name),
                summary: run.summary,
                rounds_to_reach: rounds_to_reach(&run.rows, metric, REACH_THRESHOLD),
                abort: run.abort,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = PresetReport { preset: name, seed: opts.seed, metric, reach_threshold: REACH_THRESHOLD, cells: results };
    write_json(&out.join("summary.json"), &report)?;
    write_json(
        &out.join("preset.json"),
        &serde_json::json!({
            "preset": name,
            "seed": opts.seed,
            "alpha": opts.alpha,
            "attack": opts.attack,
            "metric": metric,
            "cells": report.cells.iter().map(|c| serde_json::json!({
                "name": c.name, "rule": c.rule, "f": c.f, "local_steps": c.local_steps, "csv": c.csv,
            })).collect::<Vec<_>>(),
        }),
    )?;
    write_file(&out.join("plot.py"), PLOT_SCRIPT)?;
    Ok(report)
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plot the traces of this preset directory: one panel per f, one curve per cell."""
import csv
import json
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, "preset.json")) as fh:
    preset = json.load(fh)
metric = preset["metric"]

panels = sorted({c["f"] for c in preset["cells"] if c["f"] > 0})
baselines = [c for c in preset["cells"] if c["f"] == 0]
fig, axes = plt.subplots(1, len(panels), figsize=(4 * len(panels), 3.5), squeeze=False)
for ax, f in zip(axes[0], panels):
    for cell in [c for c in preset["cells"] if c["f"] == f] + baselines:
        with open(os.path.join(here, cell["csv"])) as fh:
            rows = list(csv.DictReader(fh))
        label = cell["rule"] if cell["f"] else "baseline"
        if preset["preset"] != "fig1":
            label += " T=%d" % cell["local_steps"]
        ax.semilogy([int(r["round"]) for r in rows], [float(r[metric]) for r in rows], label=label)
    ax.set_title("f = %d" % f)
    ax.set_xlabel("round")
    ax.set_ylabel(metric)
    ax.legend(fontsize="small")
fig.tight_layout()
target = sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, preset["preset"] + ".png")
fig.savefig(target, dpi=150)
print(target)
"#;
