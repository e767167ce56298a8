//! Output directory bookkeeping and reproduction manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use matchlab::io::{write_json, IoError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.json";

/// Tracks every file a run writes so a failed run can be cleaned up.
pub struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<String>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, IoError> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(dir).map_err(|source| IoError::Io { path: dir.to_path_buf(), source })?;
        Ok(Self { dir: dir.to_path_buf(), created_dir, files: Vec::new() })
    }

    /// Path for output `name`, recorded for the manifest.
    pub fn file(&mut self, name: impl Into<String>) -> PathBuf {
        let name = name.into();
        let path = self.dir.join(&name);
        self.files.push(name);
        path
    }

    /// Removes everything this run wrote.
    pub fn discard(self) {
        for f in &self.files {
            let _ = std::fs::remove_file(self.dir.join(f));
        }
        let _ = std::fs::remove_file(self.dir.join(MANIFEST));
        if self.created_dir {
            let _ = std::fs::remove_dir(&self.dir);
        }
    }

    /// Hashes the outputs and writes the manifest.
    pub fn finish(self, config: &RunConfig) -> Result<Manifest, IoError> {
        let mut files = BTreeMap::new();
        for f in &self.files {
            files.insert(f.clone(), sha256_file(&self.dir.join(f))?);
        }
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: config.command,
            seed: config.seed,
            config_sha256: config_hash(config),
            config: config.clone(),
            files,
        };
        write_json(&self.dir.join(MANIFEST), &manifest)?;
        Ok(manifest)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: crate::config::Command,
    pub seed: u64,
    /// Hash of the canonical config JSON with the output directory blanked.
    pub config_sha256: String,
    pub config: RunConfig,
    /// Output file name to SHA-256.
    pub files: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, IoError> {
    let bytes = std::fs::read(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn config_hash(config: &RunConfig) -> String {
    let canonical = RunConfig { output_dir: PathBuf::new(), ..config.clone() };
    let json = serde_json::to_string(&canonical).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discard_removes_written_files_and_new_dir() {
        let root = tempfile::tempdir().unwrap();
        let dir = root.path().join("run");
        let mut out = Outputs::create(&dir).unwrap();
        std::fs::write(out.file("a.csv"), "x").unwrap();
        out.discard();
        assert!(!dir.exists());
    }

    #[test]
    fn discard_keeps_foreign_files() {
        let root = tempfile::tempdir().unwrap();
        std::fs::write(root.path().join("keep.txt"), "x").unwrap();
        let mut out = Outputs::create(root.path()).unwrap();
        std::fs::write(out.file("a.csv"), "x").unwrap();
        out.discard();
        assert!(root.path().join("keep.txt").exists());
        assert!(!root.path().join("a.csv").exists());
    }

    #[test]
    fn file_hashes_are_sha256() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        std::fs::write(&p, "abc").unwrap();
        assert_eq!(sha256_file(&p).unwrap(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn config_hash_ignores_output_dir() {
        let a = RunConfig::default();
        let b = RunConfig { output_dir: "elsewhere".into(), ..RunConfig::default() };
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_ne!(config_hash(&a), config_hash(&RunConfig { seed: 9, ..RunConfig::default() }));
    }
}
