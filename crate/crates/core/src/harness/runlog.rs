//! JSONL persistence: one header line, then one line per evaluation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explore::{EvalRecord, RunLog, TuneConfig};
use crate::importance::ImportanceVector;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: TuneConfig,
    seed: u64,
    importance: Option<Vec<f64>>,
}

pub fn render_runlog(log: &RunLog) -> Result<String> {
    let header = Header {
        config: log.config.clone(),
        seed: log.seed(),
        importance: log.importance.as_ref().map(|i| i.values().to_vec()),
    };
    let mut out = serde_json::to_string(&header)?;
    out.push('\n');
    for r in &log.records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_runlog(text: &str) -> Result<RunLog> {
    let bad = |line: usize, e: &dyn std::fmt::Display| Error::RunLog { line, msg: e.to_string() };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or_else(|| bad(1, &"missing header"))?;
    let header: Header = serde_json::from_str(first).map_err(|e| bad(1, &e))?;
    if header.seed != header.config.seed {
        return Err(bad(1, &"header seed disagrees with the config"));
    }
    let importance = header.importance.map(ImportanceVector::new).transpose().map_err(|e| bad(1, &e))?;
    let mut records = Vec::new();
    for (n, line) in lines {
        let r: EvalRecord = serde_json::from_str(line).map_err(|e| bad(n, &e))?;
        if r.feasible == r.objectives.is_empty() {
            return Err(bad(n, &"feasible records carry objectives; infeasible ones do not"));
        }
        records.push(r);
    }
    Ok(RunLog { config: header.config, importance, records })
}

pub fn write_runlog(path: impl AsRef<Path>, log: &RunLog) -> Result<()> {
    std::fs::write(path, render_runlog(log)?)?;
    Ok(())
}

pub fn read_runlog(path: impl AsRef<Path>) -> Result<RunLog> {
    parse_runlog(&std::fs::read_to_string(path)?)
}
