//! Stage directories: atomic commits, metadata and the output-dir lock.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions, TryLockError};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, PipelineError, Result, Stage};
use crate::hashing::{hash_json_hex, sha256_hex};

pub const META_FILE: &str = "stage.json";
const LOCK_FILE: &str = ".melograph.lock";

/// Written last into each stage directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMeta {
    pub stage: Stage,
    pub config_hash: String,
    /// Upstream output hashes (and source file hashes for ingest).
    pub inputs: BTreeMap<String, String>,
    /// Relative path to sha256 of every artifact.
    pub outputs: BTreeMap<String, String>,
    pub output_hash: String,
    pub duration_ms: u64,
    #[serde(default)]
    pub details: serde_json::Value,
}

/// Files a stage produces, keyed by path relative to its directory.
#[derive(Debug, Default)]
pub(crate) struct Artifacts {
    files: BTreeMap<String, Vec<u8>>,
}

impl Artifacts {
    pub fn add(&mut self, path: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.insert(path.into(), bytes.into());
    }

    pub fn add_json<T: Serialize>(&mut self, path: impl Into<String>, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        self.add(path, text);
    }

    pub fn hashes(&self) -> BTreeMap<String, String> {
        self.files.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect()
    }
}

pub(crate) fn stage_dir(out: &Path, stage: Stage) -> PathBuf {
    out.join(stage.name())
}

pub(crate) fn output_hash(outputs: &BTreeMap<String, String>) -> String {
    hash_json_hex(outputs)
}

/// Writes every artifact into a scratch directory, then swaps it in with
/// renames so a reader never sees a half-written stage.
pub(crate) fn commit(out: &Path, meta: &StageMeta, artifacts: &Artifacts) -> Result<()> {
    let pid = std::process::id();
    let name = meta.stage.name();
    let scratch = out.join(format!(".tmp-{name}-{pid}"));
    if scratch.exists() {
        std::fs::remove_dir_all(&scratch).map_err(io_err(&scratch))?;
    }
    for (rel, bytes) in &artifacts.files {
        let path = scratch.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
    }
    let meta_path = scratch.join(META_FILE);
    std::fs::create_dir_all(&scratch).map_err(io_err(&scratch))?;
    let text = serde_json::to_string_pretty(meta).expect("meta serializes") + "\n";
    crate::atomic::write_atomic(&meta_path, text.as_bytes()).map_err(io_err(&meta_path))?;

    let target = stage_dir(out, meta.stage);
    let retired = out.join(format!(".old-{name}-{pid}"));
    if target.exists() {
        std::fs::rename(&target, &retired).map_err(io_err(&target))?;
    }
    std::fs::rename(&scratch, &target).map_err(io_err(&scratch))?;
    if retired.exists() {
        std::fs::remove_dir_all(&retired).map_err(io_err(&retired))?;
    }
    Ok(())
}

pub(crate) fn read_meta(out: &Path, stage: Stage) -> Result<Option<StageMeta>> {
    let path = stage_dir(out, stage).join(META_FILE);
    match std::fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| PipelineError::Decode { path: path.display().to_string(), message: e.to_string() }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(&path)(e)),
    }
}

/// The first artifact whose bytes no longer match the recorded hash.
pub(crate) fn modified_artifact(out: &Path, meta: &StageMeta) -> Option<String> {
    let dir = stage_dir(out, meta.stage);
    meta.outputs
        .iter()
        .find(|(rel, hash)| std::fs::read(dir.join(rel)).map(|b| sha256_hex(&b) != **hash).unwrap_or(true))
        .map(|(rel, _)| rel.clone())
}

pub(crate) fn read_artifact(out: &Path, stage: Stage, rel: &str) -> Result<Vec<u8>> {
    let path = stage_dir(out, stage).join(rel);
    std::fs::read(&path).map_err(io_err(&path))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(out: &Path, stage: Stage, rel: &str) -> Result<T> {
    let bytes = read_artifact(out, stage, rel)?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::Decode {
        path: stage_dir(out, stage).join(rel).display().to_string(),
        message: e.to_string(),
    })
}

/// Exclusive advisory lock on the output directory, released on drop or
/// when the process dies.
#[derive(Debug)]
pub(crate) struct DirLock {
    _file: File,
}

impl DirLock {
    pub fn acquire(out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out).map_err(io_err(out))?;
        let path = out.join(LOCK_FILE);
        let file = OpenOptions::new().create(true).truncate(false).write(true).open(&path).map_err(io_err(&path))?;
        match file.try_lock() {
            Ok(()) => Ok(DirLock { _file: file }),
            Err(TryLockError::WouldBlock) => Err(PipelineError::Locked(out.to_path_buf())),
            Err(TryLockError::Error(e)) => Err(io_err(&path)(e)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(stage: Stage, artifacts: &Artifacts) -> StageMeta {
        let outputs = artifacts.hashes();
        StageMeta {
            stage,
            config_hash: "c".into(),
            inputs: BTreeMap::new(),
            output_hash: output_hash(&outputs),
            outputs,
            duration_ms: 0,
            details: serde_json::Value::Null,
        }
    }

    #[test]
    fn commit_replaces_previous_output() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::default();
        a.add("x.txt", "one");
        a.add("sub/y.txt", "two");
        commit(dir.path(), &meta(Stage::Ingest, &a), &a).unwrap();
        let mut b = Artifacts::default();
        b.add("x.txt", "three");
        let m = meta(Stage::Ingest, &b);
        commit(dir.path(), &m, &b).unwrap();
        let stage = stage_dir(dir.path(), Stage::Ingest);
        assert_eq!(std::fs::read_to_string(stage.join("x.txt")).unwrap(), "three");
        assert!(!stage.join("sub").exists());
        assert_eq!(read_meta(dir.path(), Stage::Ingest).unwrap(), Some(m.clone()));
        assert_eq!(modified_artifact(dir.path(), &m), None);
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n.starts_with('.'))
            .collect();
        assert!(leftovers.is_empty(), "{leftovers:?}");
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::default();
        a.add("x.txt", "one");
        let m = meta(Stage::Dtw, &a);
        commit(dir.path(), &m, &a).unwrap();
        std::fs::write(stage_dir(dir.path(), Stage::Dtw).join("x.txt"), "two").unwrap();
        assert_eq!(modified_artifact(dir.path(), &m).as_deref(), Some("x.txt"));
    }

    #[test]
    fn missing_meta_is_none() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(read_meta(dir.path(), Stage::Graph).unwrap(), None);
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let held = DirLock::acquire(dir.path()).unwrap();
        assert!(matches!(DirLock::acquire(dir.path()), Err(PipelineError::Locked(_))));
        drop(held);
        DirLock::acquire(dir.path()).unwrap();
    }
}
