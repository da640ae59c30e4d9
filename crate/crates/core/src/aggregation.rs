//! Server-side aggregation rules.
//!
//! All rules are pure functions of the reports. Reports carry agent ids;
//! every sort breaks ties by ascending id, and every mean accumulates in
//! ascending-id order, so outcomes do not depend on report order.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::agents::TotalCmp;
use crate::numerics::Vector;
use crate::{CoreError, Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AggregationRule {
    /// Comparative elimination: drop the `f` reports farthest from `x̄`.
    Ce { f: usize },
    MultiKrum { f: usize, m_select: usize },
    /// Coordinate-wise trimmed mean.
    Cwtm { f: usize },
    Mean,
}

impl AggregationRule {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Ce { .. } => "ce",
            Self::MultiKrum { .. } => "multi_krum",
            Self::Cwtm { .. } => "cwtm",
            Self::Mean => "mean",
        }
    }

    /// Checks rule parameters against the number of reporting agents.
    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            Self::Ce { f } if f >= n => Err(CoreError::config(format!(
                "ce: need N > f (N = {n}, f = {f})"
            ))),
            Self::MultiKrum { f, .. } if n < 2 * f + 3 => Err(CoreError::config(format!(
                "multi_krum: need N ≥ 2f + 3 (N = {n}, f = {f})"
            ))),
            Self::MultiKrum { f, m_select } if m_select == 0 || m_select > n - f => {
                Err(CoreError::config(format!(
                    "multi_krum: need 1 ≤ m_select ≤ N − f (m_select = {m_select}, N − f = {})",
                    n - f
                )))
            }
            Self::Cwtm { f } if n <= 2 * f => Err(CoreError::config(format!(
                "cwtm: need N > 2f (N = {n}, f = {f})"
            ))),
            _ => Ok(()),
        }
    }

    /// Whether the rule keeps or drops whole reports (so a Byzantine
    /// survivor count is meaningful).
    pub fn selects_whole_reports(&self) -> bool {
        !matches!(self, Self::Cwtm { .. })
    }
}

/// A received vector tagged with its sender.
#[derive(Clone, Debug, PartialEq)]
pub struct Report<S: Scalar> {
    pub agent: usize,
    pub vector: Vector<S>,
}

impl<S: Scalar> Report<S> {
    pub fn new(agent: usize, vector: Vector<S>) -> Self {
        Self { agent, vector }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregationOutcome<S: Scalar> {
    pub next_model: Vector<S>,
    /// Ascending ids. For CWTM this is every reporting agent.
    pub kept_ids: Vec<usize>,
    /// Ascending ids.
    pub eliminated_ids: Vec<usize>,
    /// False for CWTM, whose trimming is per coordinate.
    pub whole_report_selection: bool,
}

/// Reports sorted by agent id, after checking ids are unique and lengths agree.
fn sorted_reports<S: Scalar>(reports: &[Report<S>]) -> Result<Vec<&Report<S>>> {
    let first = reports
        .first()
        .ok_or_else(|| CoreError::config("aggregation needs at least one report"))?;
    let dim = first.vector.len();
    let mut sorted: Vec<&Report<S>> = reports.iter().collect();
    sorted.sort_by_key(|r| r.agent);
    for pair in sorted.windows(2) {
        if pair[0].agent == pair[1].agent {
            return Err(CoreError::config(format!("duplicate report from agent {}", pair[0].agent)));
        }
    }
    for r in &sorted {
        r.vector.check_len(dim)?;
    }
    Ok(sorted)
}

/// Keeps `keep` of the id-sorted reports ranked by `score` (ties by id) and
/// averages them.
fn select_lowest<S: Scalar>(sorted: &[&Report<S>], scores: &[S], keep: usize) -> Result<AggregationOutcome<S>> {
    let mut order: Vec<usize> = (0..sorted.len()).collect();
    order.sort_by(|&a, &b| match scores[a].total_cmp_s(&scores[b]) {
        Ordering::Equal => sorted[a].agent.cmp(&sorted[b].agent),
        other => other,
    });
    let mut kept: Vec<usize> = order[..keep].to_vec();
    kept.sort_unstable();
    let mut eliminated: Vec<usize> = order[keep..].to_vec();
    eliminated.sort_unstable();
    let next_model = Vector::mean(kept.iter().map(|&i| &sorted[i].vector))?;
    Ok(AggregationOutcome {
        next_model,
        kept_ids: kept.iter().map(|&i| sorted[i].agent).collect(),
        eliminated_ids: eliminated.iter().map(|&i| sorted[i].agent).collect(),
        whole_report_selection: true,
    })
}

/// Comparative elimination: sort by `‖x̄ − vᵢ‖`, keep the `N − f` closest,
/// average them.
pub fn ce_filter<S: Scalar>(x_bar: &Vector<S>, reports: &[Report<S>], f: usize) -> Result<AggregationOutcome<S>> {
    AggregationRule::Ce { f }.validate(reports.len())?;
    let sorted = sorted_reports(reports)?;
    x_bar.check_len(sorted[0].vector.len())?;
    let distances: Vec<S> = sorted.iter().map(|r| r.vector.distance_sq_unchecked(x_bar)).collect();
    select_lowest(&sorted, &distances, reports.len() - f)
}

/// Multi-KRUM: score each report by the summed squared distance to its
/// `N − f − 2` nearest other reports; average the `m_select` lowest.
pub fn multi_krum<S: Scalar>(reports: &[Report<S>], f: usize, m_select: usize) -> Result<AggregationOutcome<S>> {
    let n = reports.len();
    AggregationRule::MultiKrum { f, m_select }.validate(n)?;
    let sorted = sorted_reports(reports)?;
    let neighbours = n - f - 2;
    let mut pairwise = vec![S::zero(); n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sorted[i].vector.distance_sq_unchecked(&sorted[j].vector);
            pairwise[i * n + j] = d;
            pairwise[j * n + i] = d;
        }
    }
    let scores: Vec<S> = (0..n)
        .map(|i| {
            let mut row: Vec<S> = (0..n).filter(|&j| j != i).map(|j| pairwise[i * n + j]).collect();
            row.sort_by(|a, b| a.total_cmp_s(b));
            row[..neighbours].iter().fold(S::zero(), |acc, &d| acc + d)
        })
        .collect();
    select_lowest(&sorted, &scores, m_select)
}

/// Coordinate-wise trimmed mean: per coordinate drop the `f` smallest and
/// `f` largest values and average the rest.
pub fn cwtm<S: Scalar>(reports: &[Report<S>], f: usize) -> Result<AggregationOutcome<S>> {
    let n = reports.len();
    AggregationRule::Cwtm { f }.validate(n)?;
    let sorted = sorted_reports(reports)?;
    let dim = sorted[0].vector.len();
    let kept = S::count(n - 2 * f);
    let mut column = Vec::with_capacity(n);
    let next = (0..dim)
        .map(|j| {
            column.clear();
            column.extend(sorted.iter().map(|r| r.vector[j]));
            column.sort_by(|a, b| a.total_cmp_s(b));
            column[f..n - f].iter().fold(S::zero(), |acc, &v| acc + v) / kept
        })
        .collect();
    Ok(AggregationOutcome {
        next_model: Vector::from_raw(next),
        kept_ids: sorted.iter().map(|r| r.agent).collect(),
        eliminated_ids: Vec::new(),
        whole_report_selection: false,
    })
}

pub fn mean<S: Scalar>(reports: &[Report<S>]) -> Result<AggregationOutcome<S>> {
    let sorted = sorted_reports(reports)?;
    Ok(AggregationOutcome {
        next_model: Vector::mean(sorted.iter().map(|r| &r.vector))?,
        kept_ids: sorted.iter().map(|r| r.agent).collect(),
        eliminated_ids: Vec::new(),
        whole_report_selection: true,
    })
}

pub fn aggregate<S: Scalar>(
    rule: &AggregationRule,
    x_bar: &Vector<S>,
    reports: &[Report<S>],
) -> Result<AggregationOutcome<S>> {
    match *rule {
        AggregationRule::Ce { f } => ce_filter(x_bar, reports, f),
        AggregationRule::MultiKrum { f, m_select } => multi_krum(reports, f, m_select),
        AggregationRule::Cwtm { f } => cwtm(reports, f),
        AggregationRule::Mean => mean(reports),
    }
}
