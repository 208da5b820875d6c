//! Versioned JSON reports with their run manifests.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SCHEMA: &str = "ips-duality-lab/1";

/// Everything needed to reproduce a report. Replica `r` of an experiment
/// draws every stream from `(master_seed, stream kind, entity, r)`, so the
/// numbers do not depend on how replicas were spread over workers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: serde_json::Value,
    pub master_seed: u64,
    pub replicas: u64,
    pub workers: usize,
    /// Seed of the first site-clock stream of each of the first replicas,
    /// as a spot check of the derivation.
    pub replica_seeds: Vec<u64>,
    /// SHA-256 of the canonical JSON of the result.
    pub result_digest: String,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub experiment: String,
    /// `None` when the experiment has no pass/fail criterion.
    pub passed: Option<bool>,
    pub result: serde_json::Value,
    pub manifest: RunManifest,
}

pub fn digest(value: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(value).expect("JSON values serialise");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ExperimentReport {
    pub fn new(experiment: &str, passed: Option<bool>, result: serde_json::Value, manifest: RunManifest) -> Self {
        let manifest = RunManifest { result_digest: digest(&result), ..manifest };
        ExperimentReport { schema: SCHEMA.to_string(), experiment: experiment.to_string(), passed, result, manifest }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    /// JSON with the wall-time field zeroed, for reproducibility checks.
    pub fn canonical_json(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.manifest.wall_time_s = 0.0;
        copy.to_json()
    }
}

/// Writes a CSV table with a one-line header.
pub fn write_csv(path: &std::path::Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    w.write_record(header).map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable() {
        let v = serde_json::json!({"a": 1, "b": [1.5, 2.0]});
        assert_eq!(digest(&v), digest(&v.clone()));
        assert_eq!(digest(&v).len(), 64);
    }
}
