use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use pdiv_core::metrics::EvalReport;
use pdiv_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const RESULTS_FILE: &str = "runs.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// One (config, seed, variant) outcome as stored in `runs.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    /// Recipe that produced the record: `run`, `ablate_anchor`, `sweep_beta`.
    pub recipe: String,
    /// Variant within the recipe, e.g. an anchor strategy or `beta=0.5`.
    pub variant: String,
    pub strategy: String,
    pub beta: f64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_accuracy: Option<f64>,
    #[serde(default)]
    pub source_n: usize,
    #[serde(default)]
    pub target_n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_only_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adapted_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_only: Option<EvalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adapted: Option<EvalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_path: Option<PathBuf>,
    pub wall_time_secs: f64,
}

impl RunRecord {
    pub fn key(&self) -> RunKey {
        RunKey {
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            recipe: self.recipe.clone(),
            variant: self.variant.clone(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    /// The record with timing and file locations dropped: what must agree
    /// across repeated runs of the same config and seed.
    pub fn metrics_only(&self) -> RunRecord {
        RunRecord {
            wall_time_secs: 0.0,
            trace_path: None,
            snapshot_path: None,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RunKey {
    pub config_hash: String,
    pub seed: u64,
    pub recipe: String,
    pub variant: String,
}

/// Append-only JSON-lines store. Completed keys found at open time are
/// skipped by the recipes, which is how interrupted sweeps resume.
pub struct ResultsStore {
    path: PathBuf,
    completed: HashMap<RunKey, RunRecord>,
    writer: Mutex<File>,
}

impl ResultsStore {
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RESULTS_FILE);
        let mut completed = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for (k, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: RunRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    path: path.clone(),
                    line: k as u64 + 1,
                    message: e.to_string(),
                })?;
                if rec.is_ok() {
                    completed.insert(rec.key(), rec);
                }
            }
        }
        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(ResultsStore {
            path,
            completed,
            writer: Mutex::new(writer),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn completed(&self, key: &RunKey) -> Option<&RunRecord> {
        self.completed.get(key)
    }

    /// Writes one line; concurrent callers are serialized.
    pub fn append(&self, record: &RunRecord) -> Result<()> {
        let mut line = serde_json::to_string(record)
            .map_err(|e| Error::Validation(format!("run record: {e}")))?;
        line.push('\n');
        let mut w = self.writer.lock().expect("results writer poisoned");
        w.write_all(line.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: k as u64 + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(seed: u64, status: RunStatus) -> RunRecord {
        RunRecord {
            config_hash: "abc".into(),
            seed,
            recipe: "run".into(),
            variant: "whp".into(),
            strategy: "whp".into(),
            beta: 0.5,
            status,
            error: None,
            source_accuracy: Some(0.9),
            source_n: 10,
            target_n: 10,
            source_only_accuracy: Some(0.5),
            adapted_accuracy: Some(0.6),
            source_only: None,
            adapted: None,
            trace_path: None,
            snapshot_path: None,
            wall_time_secs: 1.5,
        }
    }

    #[test]
    fn reopen_sees_only_successful_runs() {
        let dir = tempfile::tempdir().unwrap();
        {
            let store = ResultsStore::open(dir.path()).unwrap();
            store.append(&record(1, RunStatus::Ok)).unwrap();
            store.append(&record(2, RunStatus::Failed)).unwrap();
        }
        let store = ResultsStore::open(dir.path()).unwrap();
        assert!(store.completed(&record(1, RunStatus::Ok).key()).is_some());
        assert!(store.completed(&record(2, RunStatus::Ok).key()).is_none());
        store.append(&record(3, RunStatus::Ok)).unwrap();
        let all = read_records(store.path()).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all[0], record(1, RunStatus::Ok));
    }

    #[test]
    fn corrupt_line_is_reported_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(RESULTS_FILE), "{}\n").unwrap();
        match ResultsStore::open(dir.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {:?}", other.err()),
        }
    }
}
