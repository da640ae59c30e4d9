//! Trace files: `trace.csv`, `config.json` and `trace.json`.

use std::fs;
use std::path::Path;

use cefl_core::Trace;
use serde::Serialize;

use crate::config::{Advisory, LoadedConfig};
use crate::error::{HarnessError, Result};

pub const CSV_HEADER: [&str; 5] = ["round", "optimality_gap", "mean_sq_grad", "eliminated_ids", "byzantine_kept"];

/// One parsed line of a trace CSV. The terminal row (round `K`) has no
/// eliminated ids and no survivor count.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub round: usize,
    pub optimality_gap: f64,
    pub mean_sq_grad: f64,
    pub eliminated_ids: Vec<usize>,
    pub byzantine_kept: Option<usize>,
}

/// 17 significant digits, enough to replay every `f64` exactly.
fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn join_ids(ids: &[usize]) -> String {
    ids.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

pub fn trace_rows(trace: &Trace<f64>) -> Vec<CsvRow> {
    let mut rows: Vec<CsvRow> = trace
        .rounds
        .iter()
        .map(|r| CsvRow {
            round: r.round,
            optimality_gap: r.optimality_gap,
            mean_sq_grad: r.mean_sq_grad,
            eliminated_ids: r.eliminated_ids.clone(),
            byzantine_kept: r.byzantine_kept,
        })
        .collect();
    if let Some(t) = &trace.terminal {
        rows.push(CsvRow {
            round: t.round,
            optimality_gap: t.optimality_gap,
            mean_sq_grad: t.mean_sq_grad,
            eliminated_ids: Vec::new(),
            byzantine_kept: None,
        });
    }
    rows
}

pub fn csv_string(rows: &[CsvRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.round.to_string(),
            float(r.optimality_gap),
            float(r.mean_sq_grad),
            join_ids(&r.eliminated_ids),
            r.byzantine_kept.map(|k| k.to_string()).unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

pub fn parse_csv(text: &str, origin: &Path) -> Result<Vec<CsvRow>> {
    let bad = |message: String| HarnessError::Format { path: origin.to_path_buf(), message };
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(bad(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let at = |what: &str, e: &dyn std::fmt::Display| bad(format!("row {}: {what}: {e}", line + 1));
        let opt_usize = |s: &str| -> Result<Option<usize>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e| at("byzantine_kept", &e))
            }
        };
        let ids = if record[3].is_empty() {
            Vec::new()
        } else {
            record[3]
                .split(';')
                .map(|s| s.parse::<usize>().map_err(|e| at("eliminated_ids", &e)))
                .collect::<Result<_>>()?
        };
        rows.push(CsvRow {
            round: record[0].parse().map_err(|e| at("round", &e))?,
            optimality_gap: record[1].parse().map_err(|e| at("optimality_gap", &e))?,
            mean_sq_grad: record[2].parse().map_err(|e| at("mean_sq_grad", &e))?,
            eliminated_ids: ids,
            byzantine_kept: opt_usize(&record[4])?,
        });
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_csv(&text, path)
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(path, &text)
}

#[derive(Serialize)]
struct TraceDocument<'a> {
    config: &'a crate::config::ConfigFile,
    advisory: &'a Advisory,
    trace: &'a Trace<f64>,
}

/// Writes `trace.csv`, `config.json` (canonical, loadable by `run`) and
/// `trace.json` (full trace plus theory advisory) into `dir`.
pub fn write_run(dir: &Path, loaded: &LoadedConfig, trace: &Trace<f64>) -> Result<Vec<CsvRow>> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let rows = trace_rows(trace);
    write_file(&dir.join("trace.csv"), &csv_string(&rows))?;
    write_json(&dir.join("config.json"), &loaded.file)?;
    write_json(
        &dir.join("trace.json"),
        &TraceDocument { config: &loaded.file, advisory: &loaded.advisory, trace },
    )?;
    Ok(rows)
}
