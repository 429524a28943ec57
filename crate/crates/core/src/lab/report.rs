//! Report records and their on-disk formats (JSON Lines and CSV).
//!
//! Every record carries the configuration hash, the seed and the module
//! version, so any number in any report is reproducible from the config
//! file alone. Writers sort records into a canonical order first: reruns
//! with identical configs produce byte-identical files.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{LabError, Result};

pub const MODULE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct ReportRecord {
    pub experiment: String,
    pub config_hash: String,
    pub module_version: String,
    pub seed: u64,
    pub metric: String,
    pub n: Option<usize>,
    pub scenario: Option<usize>,
    pub value: f64,
    pub se: Option<f64>,
    pub verdict: Option<String>,
}

impl ReportRecord {
    pub fn new(experiment: &str, config_hash: &str, seed: u64, metric: &str, value: f64) -> Self {
        Self {
            experiment: experiment.to_string(),
            config_hash: config_hash.to_string(),
            module_version: MODULE_VERSION.to_string(),
            seed,
            metric: metric.to_string(),
            n: None,
            scenario: None,
            value,
            se: None,
            verdict: None,
        }
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    pub fn with_scenario(mut self, s: usize) -> Self {
        self.scenario = Some(s);
        self
    }

    pub fn with_se(mut self, se: f64) -> Self {
        self.se = Some(se);
        self
    }

    pub fn with_verdict(mut self, pass: bool) -> Self {
        self.verdict = Some(if pass { "pass" } else { "fail" }.to_string());
        self
    }

    pub fn informational(mut self, note: &str) -> Self {
        self.verdict = Some(note.to_string());
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict.as_deref() != Some("fail")
    }
}

fn canonical_order(records: &mut [ReportRecord]) {
    records.sort_by(|a, b| {
        (&a.experiment, &a.metric, a.n, a.scenario, a.seed).cmp(&(
            &b.experiment,
            &b.metric,
            b.n,
            b.scenario,
            b.seed,
        ))
    });
}

pub fn write_jsonl(path: &Path, records: &[ReportRecord]) -> Result<()> {
    let mut sorted = records.to_vec();
    canonical_order(&mut sorted);
    let mut out = std::fs::File::create(path)?;
    for rec in &sorted {
        let line = serde_json::to_string(rec)
            .map_err(|e| LabError::Internal(format!("serialize record: {e}")))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn write_csv(path: &Path, records: &[ReportRecord]) -> Result<()> {
    let mut sorted = records.to_vec();
    canonical_order(&mut sorted);
    let mut out = std::fs::File::create(path)?;
    writeln!(
        out,
        "experiment,config_hash,module_version,seed,metric,n,scenario,value,se,verdict"
    )?;
    for r in &sorted {
        let n = r.n.map(|v| v.to_string()).unwrap_or_default();
        let scenario = r.scenario.map(|v| v.to_string()).unwrap_or_default();
        let se = r.se.map(|v| v.to_string()).unwrap_or_default();
        let verdict = r.verdict.clone().unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.experiment,
            r.config_hash,
            r.module_version,
            r.seed,
            r.metric,
            n,
            scenario,
            r.value,
            se,
            verdict
        )?;
    }
    Ok(())
}

/// Write both formats under `dir/name.{jsonl,csv}`.
pub fn write_records(dir: &Path, name: &str, records: &[ReportRecord]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_jsonl(&dir.join(format!("{name}.jsonl")), records)?;
    write_csv(&dir.join(format!("{name}.csv")), records)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writers_are_deterministic_and_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![
            ReportRecord::new("e", "h", 1, "zeta", 1.0).with_n(64),
            ReportRecord::new("e", "h", 1, "zeta", 2.0).with_n(16),
        ];
        write_records(dir.path(), "r", &records).unwrap();
        let a = std::fs::read(dir.path().join("r.jsonl")).unwrap();
        write_records(dir.path(), "r", &records).unwrap();
        let b = std::fs::read(dir.path().join("r.jsonl")).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.contains("\"n\":16"), "sorted by n: {first}");
    }
}
