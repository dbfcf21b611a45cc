//! Flat per-(replication, method, λ) records, one JSON object per line.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::run::{Method, MethodOutcome, ReplicationResult};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub schema_version: u32,
    pub replication: usize,
    pub method: Method,
    pub prefactor: f64,
    pub lambda: f64,
    /// The method ignores λ; this row repeats its single fit.
    pub lambda_free: bool,
    pub mismatches: usize,
    pub sigma_y: f64,
    pub lambda_base: f64,
    pub beta_error: Option<f64>,
    pub theta_error: Option<f64>,
    pub deviance: Option<f64>,
    pub hamming: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub nonzero_offsets: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// One record per replication, method and grid point. Methods that do not
/// use λ are repeated for every grid point. Runtimes are kept only when
/// `with_runtime`, since they break byte-for-byte reproducibility.
pub fn to_records(results: &[ReplicationResult], prefactors: &[f64], with_runtime: bool) -> Vec<Record> {
    let mut out = Vec::new();
    for r in results {
        let mut seen: Vec<Method> = Vec::new();
        for o in &r.outcomes {
            if seen.contains(&o.method) {
                continue;
            }
            seen.push(o.method);
            let per_lambda: Vec<&MethodOutcome> = r.outcomes_of(o.method).collect();
            for (g, &c) in prefactors.iter().enumerate() {
                let src = if o.method.uses_lambda() { per_lambda[g] } else { per_lambda[0] };
                out.push(Record {
                    schema_version: SCHEMA_VERSION,
                    replication: r.replication,
                    method: src.method,
                    prefactor: c,
                    lambda: c * r.lambda_base,
                    lambda_free: !src.method.uses_lambda(),
                    mismatches: r.mismatches,
                    sigma_y: r.sigma_y,
                    lambda_base: r.lambda_base,
                    beta_error: src.beta_error,
                    theta_error: src.theta_error,
                    deviance: src.deviance,
                    hamming: src.hamming,
                    converged: src.converged,
                    iterations: src.iterations,
                    nonzero_offsets: src.nonzero_offsets,
                    runtime_ms: if with_runtime { src.runtime_ms } else { None },
                    note: src.note.clone(),
                });
            }
        }
    }
    out
}

/// Inverse of [`to_records`].
pub fn from_records(records: &[Record]) -> Result<Vec<ReplicationResult>> {
    let mut by_rep: BTreeMap<usize, ReplicationResult> = BTreeMap::new();
    for rec in records {
        if rec.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(format!("unsupported schema_version {}", rec.schema_version)));
        }
        let r = by_rep.entry(rec.replication).or_insert_with(|| ReplicationResult {
            replication: rec.replication,
            mismatches: rec.mismatches,
            sigma_y: rec.sigma_y,
            lambda_base: rec.lambda_base,
            outcomes: Vec::new(),
        });
        if rec.lambda_free && r.outcomes.iter().any(|o| o.method == rec.method) {
            continue;
        }
        let (prefactor, lambda) = if rec.lambda_free { (None, None) } else { (Some(rec.prefactor), Some(rec.lambda)) };
        r.outcomes.push(MethodOutcome {
            method: rec.method,
            prefactor,
            lambda,
            beta_error: rec.beta_error,
            theta_error: rec.theta_error,
            deviance: rec.deviance,
            hamming: rec.hamming,
            converged: rec.converged,
            iterations: rec.iterations,
            nonzero_offsets: rec.nonzero_offsets,
            runtime_ms: rec.runtime_ms,
            note: rec.note.clone(),
        });
    }
    Ok(by_rep.into_values().collect())
}

/// Serialize as newline-terminated JSON lines.
pub fn write_ndtext(records: &[Record]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("records serialize"));
        s.push('\n');
    }
    s
}

/// Parse JSON lines; blank lines and lines starting with `#` are skipped.
pub fn read_ndtext(text: &str) -> Result<Vec<Record>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::invalid(format!("line {}: {e}", i + 1))))
        .collect()
}
