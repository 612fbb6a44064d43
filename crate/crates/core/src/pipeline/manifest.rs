//! Run manifest: stage records and a digest of every artifact.
//!
//! The manifest holds no timestamps or absolute paths, so two runs with the
//! same inputs produce identical bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineError, Stage};

pub const MANIFEST_FILE: &str = "manifest.json";

pub type Counts = BTreeMap<String, u64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Files written by the stage, relative to the run directory.
    pub outputs: Vec<String>,
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub stages: Vec<StageRecord>,
    pub files: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Files under `dir`, recursively, as sorted `/`-separated relative paths.
pub fn list_files(root: &Path, dir: &Path) -> Result<Vec<String>, PipelineError> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), PipelineError> {
        if !dir.exists() {
            return Ok(());
        }
        let entries = std::fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| PipelineError::io(dir, e))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                out.push(relative(root, &path));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, dir, &mut out)?;
    out.sort();
    Ok(out)
}

fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

impl Manifest {
    pub fn new(run_id: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            run_id: run_id.to_string(),
            seed,
            config,
            stages: Vec::new(),
            files: BTreeMap::new(),
        }
    }

    pub fn path(run_dir: &Path) -> PathBuf {
        run_dir.join(MANIFEST_FILE)
    }

    pub fn load(run_dir: &Path) -> Result<Option<Self>, PipelineError> {
        let path = Self::path(run_dir);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
        match serde_json::from_str(&text) {
            Ok(m) => Ok(Some(m)),
            Err(e) => {
                log::warn!("ignoring unreadable manifest {}: {e}", path.display());
                Ok(None)
            }
        }
    }

    pub fn save(&self, run_dir: &Path) -> Result<(), PipelineError> {
        let path = Self::path(run_dir);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| PipelineError::io(&path, e))
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }

    /// Inserts or replaces a record, keeping stage order.
    pub fn record(&mut self, record: StageRecord) {
        self.stages.retain(|r| r.stage != record.stage);
        self.stages.push(record);
        self.stages.sort_by_key(|r| r.stage);
    }

    /// Forgets `stage` and everything downstream of it.
    pub fn drop_from(&mut self, stage: Stage) {
        self.stages.retain(|r| r.stage < stage);
    }

    /// Re-digests every file in the run directory except the manifest.
    pub fn refresh_files(&mut self, run_dir: &Path) -> Result<(), PipelineError> {
        self.files.clear();
        for rel in list_files(run_dir, run_dir)? {
            if rel == MANIFEST_FILE {
                continue;
            }
            let digest = file_digest(&run_dir.join(&rel))?;
            self.files.insert(rel, digest);
        }
        Ok(())
    }

    /// True when `stage` completed and its outputs still match their digests.
    pub fn is_intact(&self, stage: Stage, run_dir: &Path) -> bool {
        let Some(rec) = self.stage(stage) else {
            return false;
        };
        rec.status == StageStatus::Complete
            && rec.outputs.iter().all(|rel| {
                let expected = self.files.get(rel);
                let actual = file_digest(&run_dir.join(rel)).ok();
                expected.is_some() && expected == actual.as_ref()
            })
    }
}
