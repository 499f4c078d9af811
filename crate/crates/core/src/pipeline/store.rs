//! Content-addressed stage cache.
//!
//! Each stage owns `stages/<name>/` under the output directory. Payloads
//! are written atomically (temporary file, then rename) and `stage.json`,
//! the completion marker, is written last. A stage is a cache hit only when
//! its marker names the same input digest and every payload still hashes to
//! the recorded digest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, Stage};
use crate::digest::sha256_hex;

pub const MARKER: &str = "stage.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub input_digest: String,
    /// Payload file name to SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
    pub gateway_calls: usize,
}

impl StageRecord {
    /// Digest of the stage output, used as input digest downstream.
    pub fn output_digest(&self) -> String {
        crate::digest::digest_fields(self.outputs.iter().map(|(k, v)| format!("{k}={v}")))
    }
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| PipelineError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))
}

#[derive(Debug, Clone)]
pub struct StageStore {
    root: PathBuf,
}

impl StageStore {
    pub fn new(out_dir: &Path) -> Self {
        Self {
            root: out_dir.join("stages"),
        }
    }

    pub fn dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.name())
    }

    pub fn path(&self, stage: Stage, name: &str) -> PathBuf {
        self.dir(stage).join(name)
    }

    /// The committed record, if any, regardless of inputs.
    pub fn record(&self, stage: Stage) -> Option<StageRecord> {
        let bytes = fs::read(self.path(stage, MARKER)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    /// The committed record when it matches `input_digest` and its payloads
    /// are intact.
    pub fn valid(&self, stage: Stage, input_digest: &str) -> Option<StageRecord> {
        let record = self.record(stage)?;
        if record.stage != stage || record.input_digest != input_digest {
            return None;
        }
        for (name, digest) in &record.outputs {
            let bytes = fs::read(self.path(stage, name)).ok()?;
            if &sha256_hex(&bytes) != digest {
                return None;
            }
        }
        Some(record)
    }

    /// Removes the marker, then every payload: an interrupted rebuild is
    /// never mistaken for a complete stage.
    pub fn begin(&self, stage: Stage) -> Result<(), PipelineError> {
        let dir = self.dir(stage);
        let marker = dir.join(MARKER);
        if marker.exists() {
            fs::remove_file(&marker).map_err(|e| PipelineError::io(&marker, e))?;
        }
        if dir.exists() {
            for entry in fs::read_dir(&dir).map_err(|e| PipelineError::io(&dir, e))?.flatten() {
                let p = entry.path();
                if p.is_file() {
                    fs::remove_file(&p).map_err(|e| PipelineError::io(&p, e))?;
                }
            }
        }
        fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))
    }

    pub fn write(&self, stage: Stage, name: &str, bytes: &[u8]) -> Result<String, PipelineError> {
        write_atomic(&self.path(stage, name), bytes)?;
        Ok(sha256_hex(bytes))
    }

    pub fn commit(&self, record: &StageRecord) -> Result<(), PipelineError> {
        let mut json = serde_json::to_vec_pretty(record)?;
        json.push(b'\n');
        write_atomic(&self.path(record.stage, MARKER), &json)
    }

    pub fn read(&self, stage: Stage, name: &str) -> Result<Vec<u8>, PipelineError> {
        let path = self.path(stage, name);
        fs::read(&path).map_err(|e| PipelineError::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_then_validate_then_tamper() {
        let dir = tempfile::tempdir().unwrap();
        let store = StageStore::new(dir.path());
        store.begin(Stage::Extract).unwrap();
        let digest = store.write(Stage::Extract, "graph.json", b"{}").unwrap();
        assert!(store.valid(Stage::Extract, "in").is_none());
        store
            .commit(&StageRecord {
                stage: Stage::Extract,
                input_digest: "in".into(),
                outputs: BTreeMap::from([("graph.json".to_string(), digest)]),
                gateway_calls: 3,
            })
            .unwrap();
        assert!(store.valid(Stage::Extract, "in").is_some());
        assert!(store.valid(Stage::Extract, "other").is_none());
        fs::write(store.path(Stage::Extract, "graph.json"), b"{ }").unwrap();
        assert!(store.valid(Stage::Extract, "in").is_none());
    }

    #[test]
    fn begin_clears_the_marker_first() {
        let dir = tempfile::tempdir().unwrap();
        let store = StageStore::new(dir.path());
        store.begin(Stage::Schema).unwrap();
        store
            .commit(&StageRecord {
                stage: Stage::Schema,
                input_digest: "x".into(),
                outputs: BTreeMap::new(),
                gateway_calls: 0,
            })
            .unwrap();
        store.begin(Stage::Schema).unwrap();
        assert!(store.record(Stage::Schema).is_none());
    }

    #[test]
    fn atomic_write_leaves_no_temporary_files() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("a/b.json");
        write_atomic(&target, b"1").unwrap();
        write_atomic(&target, b"2").unwrap();
        assert_eq!(fs::read(&target).unwrap(), b"2");
        assert_eq!(fs::read_dir(dir.path().join("a")).unwrap().count(), 1);
    }
}
