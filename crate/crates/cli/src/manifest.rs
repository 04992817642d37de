//! Run directories and their manifests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub role: String,
    pub path: String,
    /// Git-style blob hash: sha256 of `"blob <len>\0"` followed by the bytes.
    pub sha256: String,
}

/// What a command read, how it was configured and what it wrote.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<InputFile>,
    /// Hash over the command, the config and every input hash.
    pub input_hash: String,
    /// Relative to the run directory.
    pub outputs: Vec<String>,
}

pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn hash_file(role: &str, path: &Path) -> Result<InputFile> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(InputFile {
        role: role.to_string(),
        path: path.display().to_string(),
        sha256: blob_hash(&bytes),
    })
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value, inputs: Vec<InputFile>) -> Self {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update(b"\n");
        h.update(config.to_string().as_bytes());
        h.update(b"\n");
        for i in &inputs {
            h.update(format!("{} {}\n", i.role, i.sha256).as_bytes());
        }
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            inputs,
            input_hash: hex::encode(h.finalize()),
            outputs: Vec::new(),
        }
    }
}

/// Output directory of one command. Everything registered through it is
/// deleted again unless [`RunDir::finish`] is reached.
pub struct RunDir {
    root: PathBuf,
    created_root: bool,
    outputs: Vec<String>,
    done: bool,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        let created_root = !root.exists();
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(RunDir {
            root: root.to_path_buf(),
            created_root,
            outputs: Vec::new(),
            done: false,
        })
    }

    /// Registers `rel` as an output and returns its full path.
    pub fn output(&mut self, rel: &str) -> PathBuf {
        if !self.outputs.iter().any(|o| o == rel) {
            self.outputs.push(rel.to_string());
        }
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.output(rel);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    /// Replaces `outputs` with the files actually present under a
    /// registered directory, so the manifest lists each one.
    pub fn expand_dir(&mut self, rel: &str) -> Result<()> {
        let dir = self.root.join(rel);
        let mut names: Vec<String> = fs::read_dir(&dir)
            .with_context(|| format!("listing {}", dir.display()))?
            .map(|e| Ok(e?.file_name().to_string_lossy().into_owned()))
            .collect::<std::io::Result<_>>()?;
        names.sort();
        let at = self.outputs.iter().position(|o| o == rel).unwrap_or(self.outputs.len());
        self.outputs.retain(|o| o != rel);
        let files = names.into_iter().map(|n| format!("{rel}/{n}"));
        self.outputs.splice(at.min(self.outputs.len())..at.min(self.outputs.len()), files);
        // The directory itself still has to go if a later step fails.
        self.outputs.push(format!("{rel}/"));
        Ok(())
    }

    pub fn finish(mut self, mut manifest: RunManifest) -> Result<()> {
        manifest.outputs = self.outputs.iter().filter(|o| !o.ends_with('/')).cloned().collect();
        self.write_json(MANIFEST, &manifest)?;
        self.done = true;
        Ok(())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if self.done {
            return;
        }
        if self.created_root {
            let _ = fs::remove_dir_all(&self.root);
            return;
        }
        for rel in &self.outputs {
            let p = self.root.join(rel.trim_end_matches('/'));
            if p.is_dir() {
                let _ = fs::remove_dir_all(&p);
            } else {
                let _ = fs::remove_file(&p);
            }
        }
    }
}
