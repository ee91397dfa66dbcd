//! Run manifests and artifact bookkeeping.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, MqaConfig};

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    /// False for files that hold wall-clock measurements.
    pub reproducible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReference {
    pub dir: String,
    /// Hash of the dataset manifest as serialised JSON.
    pub manifest_sha256: String,
    pub sequences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub config: MqaConfig,
    pub seed: u64,
    /// Per-run or per-exercise seeds derived from the master seed.
    pub seeds: BTreeMap<String, u64>,
    pub dataset: Option<DatasetReference>,
    pub inputs: Vec<String>,
    pub artifacts: Vec<ArtifactRecord>,
    pub timings: BTreeMap<String, f64>,
    pub created_unix: u64,
}

/// Writes artifacts below one directory and remembers what was written.
pub struct ArtifactWriter {
    root: PathBuf,
    artifacts: Vec<ArtifactRecord>,
}

impl ArtifactWriter {
    pub fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)
            .with_context(|| format!("cannot create output directory {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn put(&mut self, rel: &str, bytes: &[u8], reproducible: bool) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("cannot create {}", parent.display()))?;
        }
        std::fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.record(rel, bytes, reproducible);
        Ok(path)
    }

    fn record(&mut self, rel: &str, bytes: &[u8], reproducible: bool) {
        self.artifacts.retain(|a| a.path != rel);
        self.artifacts.push(ArtifactRecord {
            path: rel.replace('\\', "/"),
            sha256: sha256_hex(bytes),
            reproducible,
        });
    }

    pub fn write(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        self.put(rel, bytes.as_ref(), true)
    }

    /// Writes a file whose content depends on wall-clock time.
    pub fn write_volatile(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        self.put(rel, bytes.as_ref(), false)
    }

    /// Records a file that some other routine already wrote below the root.
    pub fn adopt(&mut self, rel: &str) -> Result<()> {
        let path = self.root.join(rel);
        let bytes =
            std::fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
        self.record(rel, &bytes, true);
        Ok(())
    }

    pub fn artifacts(&self) -> &[ArtifactRecord] {
        &self.artifacts
    }

    /// Sorts the artifact list and writes the manifest, which lists itself last.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<RunManifest> {
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        manifest.artifacts = self.artifacts;
        manifest.artifacts.push(ArtifactRecord {
            path: RUN_MANIFEST_FILE.into(),
            sha256: String::new(),
            reproducible: false,
        });
        let path = self.root.join(RUN_MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n";
        std::fs::write(&path, json).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(manifest)
    }
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writer_lists_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::new(dir.path()).unwrap();
        w.write("b/x.csv", "a,b\n").unwrap();
        w.write_volatile("a.csv", "1\n").unwrap();
        w.write("b/x.csv", "a,c\n").unwrap();
        let m = w
            .finish(RunManifest {
                tool_version: "0".into(),
                command: "t".into(),
                config_hash: String::new(),
                config: MqaConfig::default(),
                seed: 0,
                seeds: BTreeMap::new(),
                dataset: None,
                inputs: Vec::new(),
                artifacts: Vec::new(),
                timings: BTreeMap::new(),
                created_unix: 0,
            })
            .unwrap();
        let paths: Vec<&str> = m.artifacts.iter().map(|a| a.path.as_str()).collect();
        assert_eq!(paths, ["a.csv", "b/x.csv", RUN_MANIFEST_FILE]);
        assert_eq!(m.artifacts[1].sha256, sha256_hex(b"a,c\n"));
        assert!(dir.path().join(RUN_MANIFEST_FILE).exists());
    }
}
