//! Run directory bookkeeping: stage timing, logs, input hashes, manifest.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// `sha256("blob <len>\0" ++ bytes)`, hex encoded.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(content_hash(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: String,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
    pub wall_time_s: f64,
    pub input_hashes: BTreeMap<String, String>,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub const MANIFEST: &str = "manifest.json";
pub const LOG: &str = "run.log";

pub(crate) struct Recorder {
    dir: PathBuf,
    seed: u64,
    started: Instant,
    log: File,
    stages: Vec<StageRecord>,
    pub(crate) inputs: BTreeMap<String, String>,
    artifacts: Vec<String>,
}

impl Recorder {
    pub(crate) fn create(dir: &Path, seed: u64) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let log_path = dir.join(LOG);
        let log = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            seed,
            started: Instant::now(),
            log,
            stages: Vec::new(),
            inputs: BTreeMap::new(),
            artifacts: Vec::new(),
        })
    }

    pub(crate) fn dir(&self) -> &Path {
        &self.dir
    }

    /// Register `name` as an artifact and return its absolute path.
    pub(crate) fn artifact(&mut self, name: &str) -> PathBuf {
        if !self.artifacts.iter().any(|a| a == name) {
            self.artifacts.push(name.to_string());
        }
        self.dir.join(name)
    }

    pub(crate) fn log(&mut self, line: &str) {
        log::info!("{line}");
        // The log is best effort; a full disk surfaces on the next artifact write.
        let _ = writeln!(self.log, "{line}");
        let _ = self.log.flush();
    }

    pub(crate) fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        self.log(&format!("[{name}] start"));
        let t0 = Instant::now();
        let out = f(self);
        let wall_time_s = t0.elapsed().as_secs_f64();
        match out {
            Ok(v) => {
                self.log(&format!("[{name}] done in {wall_time_s:.3}s"));
                self.stages.push(StageRecord { name: name.to_string(), status: "ok".into(), wall_time_s, error: None });
                Ok(v)
            }
            Err(e) => {
                let msg = e.to_string();
                self.log(&format!("[{name}] failed after {wall_time_s:.3}s: {msg}"));
                self.stages.push(StageRecord {
                    name: name.to_string(),
                    status: "failed".into(),
                    wall_time_s,
                    error: Some(msg.clone()),
                });
                let err = e.in_stage(name);
                // Keep the original error if the manifest itself cannot be written.
                let _ = self.write_manifest(Some(err.to_string()));
                Err(err)
            }
        }
    }

    pub(crate) fn write_manifest(&mut self, error: Option<String>) -> Result<()> {
        let manifest = Manifest {
            status: if error.is_some() { "failed" } else { "complete" }.to_string(),
            seed: self.seed,
            stages: self.stages.clone(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            input_hashes: self.inputs.clone(),
            artifacts: self.artifacts.clone(),
            error,
        };
        let path = self.dir.join(MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }
}
