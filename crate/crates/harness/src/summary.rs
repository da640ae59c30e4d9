//! Rate, plateau and survivor statistics for one trace.

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::output::CsvRow;

pub const MIN_ROWS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    OptimalityGap,
    MeanSqGrad,
}

impl Metric {
    pub fn of(&self, row: &CsvRow) -> f64 {
        match self {
            Self::OptimalityGap => row.optimality_gap,
            Self::MeanSqGrad => row.mean_sq_grad,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "optimality_gap" | "gap" => Some(Self::OptimalityGap),
            "mean_sq_grad" | "grad" => Some(Self::MeanSqGrad),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub metric: Metric,
    /// Last round in the trace.
    pub rounds: usize,
    /// Inclusive round window of the log-linear fit.
    pub fit_window: (usize, usize),
    /// Per-round factor `ρ = exp(slope)` of the fit; 0 on exact convergence.
    pub rate: f64,
    pub r_squared: f64,
    /// Some metric value in the fit window is exactly zero.
    pub exact_convergence: bool,
    /// Mean metric over the final 20% of rounds.
    pub plateau: f64,
    pub final_value: f64,
    pub mean_byzantine_kept: Option<f64>,
}

/// Least squares of `ln y` on `x`; returns `(slope, r²)`, with `r² = 1`
/// when the values are constant (the residual and total sums both vanish).
fn log_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (dx, dy) = (x - mx, y.ln() - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if points.iter().all(|p| p.1 == points[0].1) {
        return (0.0, 1.0);
    }
    let slope = sxy / sxx;
    if syy == 0.0 {
        return (slope, 1.0);
    }
    let r2 = (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0);
    (slope, r2)
}

/// Fit over rounds `[⌈K/10⌉, K]`, plateau over rounds `≥ ⌈0.8·K⌉`.
pub fn summarize(rows: &[CsvRow], metric: Metric) -> Result<SummaryStats> {
    if rows.len() < MIN_ROWS {
        return Err(HarnessError::Validation(format!(
            "summary needs at least {MIN_ROWS} rows, trace has {}",
            rows.len()
        )));
    }
    let k = rows.last().expect("non-empty").round;
    let fit_start = k.div_ceil(10);
    let in_fit: Vec<&CsvRow> = rows.iter().filter(|r| r.round >= fit_start).collect();
    let positive: Vec<(f64, f64)> = in_fit
        .iter()
        .map(|r| (r.round as f64, metric.of(r)))
        .filter(|p| p.1 > 0.0)
        .collect();
    let exact_convergence = positive.len() < in_fit.len();
    let (rate, r_squared) = if positive.len() < 2 {
        (0.0, 1.0)
    } else {
        let (slope, r2) = log_fit(&positive);
        (slope.exp(), r2)
    };
    let plateau_start = (4 * k).div_ceil(5);
    let tail: Vec<f64> = rows.iter().filter(|r| r.round >= plateau_start).map(|r| metric.of(r)).collect();
    let plateau = tail.iter().sum::<f64>() / tail.len() as f64;
    let kept: Vec<f64> = rows.iter().filter_map(|r| r.byzantine_kept).map(|v| v as f64).collect();
    Ok(SummaryStats {
        metric,
        rounds: k,
        fit_window: (fit_start, k),
        rate,
        r_squared,
        exact_convergence,
        plateau,
        final_value: metric.of(rows.last().expect("non-empty")),
        mean_byzantine_kept: (!kept.is_empty()).then(|| kept.iter().sum::<f64>() / kept.len() as f64),
    })
}

/// First round whose metric is at or below `threshold`.
pub fn rounds_to_reach(rows: &[CsvRow], metric: Metric, threshold: f64) -> Option<usize> {
    rows.iter().find(|r| metric.of(r) <= threshold).map(|r| r.round)
}
