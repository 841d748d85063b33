//! Run manifests: every command records what it ran on (config snapshot,
//! dataset content hashes, checkpoint lineage, seed) so any emitted number
//! traces back to its inputs. Manifests contain no timestamps; a command
//! re-run on identical inputs produces an identical manifest.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub path: String,
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointRef {
    pub path: String,
    pub stage: String,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub datasets: Vec<DatasetRef>,
    /// Ordered lineage, e.g. pretrain checkpoint then slt checkpoint.
    pub checkpoints: Vec<CheckpointRef>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, seed: u64, config: BTreeMap<String, String>) -> Self {
        let mut m = Self {
            run_id: String::new(),
            command: command.into(),
            seed,
            config,
            datasets: Vec::new(),
            checkpoints: Vec::new(),
        };
        m.refresh_run_id();
        m
    }

    /// Deterministic id over command, seed, config, and recorded inputs.
    fn refresh_run_id(&mut self) {
        let mut hasher = Sha256::new();
        hasher.update(self.command.as_bytes());
        hasher.update(self.seed.to_le_bytes());
        for (k, v) in &self.config {
            hasher.update(k.as_bytes());
            hasher.update(b"=");
            hasher.update(v.as_bytes());
            hasher.update(b"\n");
        }
        for d in &self.datasets {
            hasher.update(d.content_hash.as_bytes());
        }
        for c in &self.checkpoints {
            hasher.update(c.hash.as_bytes());
        }
        self.run_id = hex::encode(&hasher.finalize()[..8]);
    }

    pub fn add_dataset_dir(&mut self, path: &Path) -> Result<()> {
        self.datasets.push(DatasetRef {
            path: path.display().to_string(),
            content_hash: hash_tree(path)?,
        });
        self.refresh_run_id();
        Ok(())
    }

    /// Record a dataset that never touched disk (e.g. generated in-memory).
    pub fn add_dataset_virtual(&mut self, name: &str, descriptor: &str) {
        let mut hasher = Sha256::new();
        hasher.update(descriptor.as_bytes());
        self.datasets.push(DatasetRef {
            path: name.to_string(),
            content_hash: hex::encode(hasher.finalize()),
        });
        self.refresh_run_id();
    }

    pub fn add_checkpoint(&mut self, path: &Path, stage: &str) -> Result<()> {
        self.checkpoints.push(CheckpointRef {
            path: path.display().to_string(),
            stage: stage.to_string(),
            hash: hash_file(path)?,
        });
        self.refresh_run_id();
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Content hash of a directory tree: sha256 over the sorted list of
/// (relative path, file hash) pairs.
pub fn hash_tree(root: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_files(root, root, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for rel in files {
        let h = hash_file(&root.join(&rel))?;
        hasher.update(rel.as_bytes());
        hasher.update(b":");
        hasher.update(h.as_bytes());
        hasher.update(b"\n");
    }
    Ok(hex::encode(hasher.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .unwrap_or(&path)
                .to_string_lossy()
                .replace('\\', "/");
            out.push(rel);
        }
    }
    Ok(())
}
