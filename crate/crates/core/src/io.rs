//! CSV and JSON persistence for traces, validation data and schedules.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! writer here is exactly inverted by its reader.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{check_dim, CalibError, Result};
use crate::trace::{AgentTrace, Provenance, SummaryTrace, ValidationData};

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| CalibError::Parse {
        line,
        message: format!("'{s}': {e}"),
    })
}

fn time_header(first: &str, horizon: usize) -> Vec<String> {
    let mut h = vec![first.to_string()];
    h.extend((1..=horizon).map(|t| format!("t{t}")));
    h
}

/// Writes `stat,t1..tT`, one row per statistic.
pub fn write_summary_csv(path: &Path, trace: &SummaryTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(time_header("stat", trace.horizon()))?;
    for (s, name) in trace.names.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend(trace.stats.row(s).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<SummaryTrace> {
    let mut r = csv::Reader::from_path(path)?;
    let horizon = r.headers()?.len().saturating_sub(1);
    let mut names = Vec::new();
    let mut data = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != horizon + 1 {
            return Err(CalibError::Parse {
                line,
                message: format!("expected {} fields, found {}", horizon + 1, rec.len()),
            });
        }
        names.push(rec[0].to_string());
        for v in rec.iter().skip(1) {
            data.push(parse_f64(v, line)?);
        }
    }
    if names.is_empty() {
        return Err(CalibError::Parse {
            line: 1,
            message: "no statistic rows".into(),
        });
    }
    SummaryTrace::new(names.clone(), DMatrix::from_row_slice(names.len(), horizon, &data))
}

/// Sidecar holding the provenance of `csv_path`: `<stem>.provenance.json`.
pub fn provenance_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.provenance.json"))
}

/// Writes the trace CSV and its provenance sidecar.
pub fn write_validation(path: &Path, data: &ValidationData) -> Result<()> {
    write_summary_csv(path, &data.trace)?;
    fs::write(provenance_path(path), serde_json::to_string_pretty(&data.provenance)?)?;
    Ok(())
}

/// Reads a validation CSV; the sidecar is optional.
pub fn read_validation(path: &Path) -> Result<ValidationData> {
    let trace = read_summary_csv(path)?;
    let side = provenance_path(path);
    let provenance: Provenance = if side.exists() {
        serde_json::from_str(&fs::read_to_string(side)?)?
    } else {
        ValidationData::from_trace(trace.clone()).provenance
    };
    Ok(ValidationData { trace, provenance })
}

/// Writes `agent_id,attr,t1..tT`, one row per agent and attribute.
pub fn write_agent_csv(path: &Path, trace: &AgentTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = time_header("attr", trace.horizon());
    header.insert(0, "agent_id".to_string());
    w.write_record(&header)?;
    for (a, m) in trace.agents.iter().enumerate() {
        for (k, attr) in trace.attrs.iter().enumerate() {
            let mut rec = vec![a.to_string(), attr.clone()];
            rec.extend(m.row(k).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_agent_csv(path: &Path) -> Result<AgentTrace> {
    let mut r = csv::Reader::from_path(path)?;
    let horizon = r.headers()?.len().saturating_sub(2);
    let mut attrs: Vec<String> = Vec::new();
    let mut rows: Vec<(usize, String, Vec<f64>)> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        check_dim("agent CSV row width", horizon + 2, rec.len())?;
        let agent: usize = rec[0].parse().map_err(|e: std::num::ParseIntError| CalibError::Parse {
            line,
            message: e.to_string(),
        })?;
        let attr = rec[1].to_string();
        if !attrs.contains(&attr) {
            attrs.push(attr.clone());
        }
        let values = rec.iter().skip(2).map(|v| parse_f64(v, line)).collect::<Result<Vec<_>>>()?;
        rows.push((agent, attr, values));
    }
    let num_agents = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let mut agents = vec![DMatrix::from_element(attrs.len(), horizon, f64::NAN); num_agents];
    for (a, attr, values) in rows {
        let k = attrs.iter().position(|x| *x == attr).expect("attribute registered");
        for (t, v) in values.into_iter().enumerate() {
            agents[a][(k, t)] = v;
        }
    }
    if agents.iter().any(|m| m.iter().any(|v| v.is_nan())) {
        return Err(CalibError::Parse {
            line: 0,
            message: "agent CSV is missing agent/attribute rows".into(),
        });
    }
    Ok(AgentTrace { attrs, agents })
}
