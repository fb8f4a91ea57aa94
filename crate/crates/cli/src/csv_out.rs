//! CSV emission with a pinned schema and reproducible float formatting.
//!
//! Floats are printed with 17 significant digits (`{:.16e}`), which
//! round-trips every finite f64 exactly; non-finite values print as
//! `NaN`/`inf` literals. Fields never contain separators, so no quoting
//! is needed.

use std::io::Write;
use std::path::Path;

use crate::records::{ExperimentRecord, SummaryRow, SynthesisRecord};
use crate::{CliError, Result};

pub const RECORD_HEADER: &str =
    "scenario,controller,T,noise,trial,seed,cost,regret,safety_margin,solve_time,status";

pub const SUMMARY_HEADER: &str = "scenario,controller,T,noise,mean_cost,sd_cost,trials,infeasible";

pub const SYNTHESIS_HEADER: &str =
    "scenario,controller,T,status,iterations,solve_time,lambda,gamma,objective";

/// 17-significant-digit float field.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        }
    } else {
        format!("{v:.16e}")
    }
}

pub fn parse_float(s: &str) -> Result<f64> {
    match s {
        "NaN" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        other => other
            .parse::<f64>()
            .map_err(|e| CliError::Config(format!("bad float field `{other}`: {e}"))),
    }
}

fn open(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::io(parent.display().to_string(), e))?;
        }
    }
    let file =
        std::fs::File::create(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    Ok(std::io::BufWriter::new(file))
}

/// Writes rollout records in canonical order.
pub fn emit_records_csv(records: &[ExperimentRecord], path: &Path) -> Result<()> {
    let mut sorted: Vec<&ExperimentRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.sort_key());
    let mut out = open(path)?;
    let write = |out: &mut dyn Write| -> std::io::Result<()> {
        writeln!(out, "{RECORD_HEADER}")?;
        for r in &sorted {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.scenario,
                r.controller,
                r.horizon,
                r.noise,
                r.trial,
                r.seed,
                fmt_float(r.cost),
                fmt_float(r.regret),
                fmt_float(r.safety_margin),
                fmt_float(r.solve_time),
                r.status,
            )?;
        }
        Ok(())
    };
    write(&mut out).map_err(|e| CliError::io(path.display().to_string(), e))
}

/// Writes summary rows (already in canonical order from `summarize`).
pub fn emit_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut out = open(path)?;
    let write = |out: &mut dyn Write| -> std::io::Result<()> {
        writeln!(out, "{SUMMARY_HEADER}")?;
        for r in rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.scenario,
                r.controller,
                r.horizon,
                r.noise,
                fmt_float(r.mean_cost),
                fmt_float(r.sd_cost),
                r.trials,
                r.infeasible,
            )?;
        }
        Ok(())
    };
    write(&mut out).map_err(|e| CliError::io(path.display().to_string(), e))
}

/// Writes synthesis metadata (wall-clock times; not byte-reproducible).
pub fn emit_synthesis_csv(rows: &[SynthesisRecord], path: &Path) -> Result<()> {
    let mut sorted: Vec<&SynthesisRecord> = rows.iter().collect();
    sorted.sort_by_key(|r| (crate::records::controller_rank(r.controller), r.horizon));
    let mut out = open(path)?;
    let write = |out: &mut dyn Write| -> std::io::Result<()> {
        writeln!(out, "{SYNTHESIS_HEADER}")?;
        for r in &sorted {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.scenario,
                r.controller,
                r.horizon,
                r.status,
                r.iterations,
                fmt_float(r.solve_time),
                r.lambda.map(fmt_float).unwrap_or_default(),
                r.gamma.map(fmt_float).unwrap_or_default(),
                fmt_float(r.objective),
            )?;
        }
        Ok(())
    };
    write(&mut out).map_err(|e| CliError::io(path.display().to_string(), e))
}

/// Reads a record CSV back; used by the plot command and by tests.
pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == SUMMARY_HEADER => {}
        other => {
            return Err(CliError::Config(format!(
                "unexpected summary header {other:?}"
            )))
        }
    }
    let mut out = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(CliError::Config(format!(
                "summary line {} has {} fields",
                ln + 2,
                f.len()
            )));
        }
        out.push(SummaryRow {
            scenario: f[0].to_string(),
            controller: f[1].parse()?,
            horizon: f[2]
                .parse()
                .map_err(|e| CliError::Config(format!("bad horizon: {e}")))?,
            noise: f[3]
                .parse()
                .map_err(|e: sls_regret::Error| CliError::Config(e.to_string()))?,
            mean_cost: parse_float(f[4])?,
            sd_cost: parse_float(f[5])?,
            trials: f[6]
                .parse()
                .map_err(|e| CliError::Config(format!("bad trials: {e}")))?,
            infeasible: f[7]
                .parse()
                .map_err(|e| CliError::Config(format!("bad infeasible: {e}")))?,
        });
    }
    Ok(out)
}

/// Reads rollout records back into memory; used by tests to check
/// round-trip equality.
pub fn read_records_csv(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RECORD_HEADER => {}
        other => {
            return Err(CliError::Config(format!(
                "unexpected record header {other:?}"
            )))
        }
    }
    let mut out = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(CliError::Config(format!(
                "record line {} has {} fields",
                ln + 2,
                f.len()
            )));
        }
        let status = match f[10] {
            "optimal" => sls_regret::conic::SolveStatus::Optimal,
            "infeasible" => sls_regret::conic::SolveStatus::Infeasible,
            "unbounded" => sls_regret::conic::SolveStatus::Unbounded,
            "numerical-failure" => sls_regret::conic::SolveStatus::NumericalFailure,
            other => {
                return Err(CliError::Config(format!("unknown status `{other}`")));
            }
        };
        out.push(ExperimentRecord {
            scenario: f[0].to_string(),
            controller: f[1].parse()?,
            horizon: f[2]
                .parse()
                .map_err(|e| CliError::Config(format!("bad horizon: {e}")))?,
            noise: f[3]
                .parse()
                .map_err(|e: sls_regret::Error| CliError::Config(e.to_string()))?,
            trial: f[4]
                .parse()
                .map_err(|e| CliError::Config(format!("bad trial: {e}")))?,
            seed: f[5]
                .parse()
                .map_err(|e| CliError::Config(format!("bad seed: {e}")))?,
            cost: parse_float(f[6])?,
            regret: parse_float(f[7])?,
            safety_margin: parse_float(f[8])?,
            solve_time: parse_float(f[9])?,
            status,
        });
    }
    Ok(out)
}
