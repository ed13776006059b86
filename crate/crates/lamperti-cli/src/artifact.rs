//! Atomic artifact writing with per-file checksums and the run manifest.
//!
//! Artifacts are written to temporary names and renamed in one batch after
//! the whole computation succeeded; a failed run leaves no partial outputs.
//! Every CSV carries the effective config hash in a leading comment line, and
//! re-running an identical configuration reproduces identical bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Written once per completed run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub experiment: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputRecord>,
    pub notes: BTreeMap<String, String>,
}

/// Collects artifacts for one run and commits them atomically.
pub struct RunWriter {
    out_dir: PathBuf,
    experiment: String,
    config_hash: String,
    seed: u64,
    started: Instant,
    staged: Vec<(PathBuf, PathBuf, OutputRecord)>,
    pub notes: BTreeMap<String, String>,
}

impl RunWriter {
    pub fn new(out_dir: &Path, experiment: &str, config_hash: &str, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(out_dir)
            .with_context(|| format!("creating output directory {}", out_dir.display()))?;
        Ok(RunWriter {
            out_dir: out_dir.to_path_buf(),
            experiment: experiment.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            started: Instant::now(),
            staged: Vec::new(),
            notes: BTreeMap::new(),
        })
    }

    fn stage(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let tmp = self.out_dir.join(format!(".tmp-{name}"));
        std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
        let digest = Sha256::digest(bytes);
        let sha256: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.staged.push((
            tmp,
            self.out_dir.join(name),
            OutputRecord { file: name.to_string(), sha256, bytes: bytes.len() as u64 },
        ));
        Ok(())
    }

    /// Stage a CSV artifact: a comment line with provenance, the header row,
    /// then the data rows.
    pub fn csv(&mut self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let mut text = format!(
            "# config_hash={} tool_version={} experiment={}\n{header}\n",
            self.config_hash, TOOL_VERSION, self.experiment
        );
        for row in rows {
            text.push_str(row);
            text.push('\n');
        }
        self.stage(name, text.as_bytes())
    }

    /// Stage a JSON artifact (used for run summaries consumed by `report`).
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.stage(name, text.as_bytes())
    }

    /// Commit all staged artifacts and the manifest; returns the manifest.
    pub fn commit(mut self) -> Result<RunManifest> {
        let mut outputs = Vec::with_capacity(self.staged.len());
        for (tmp, fin, rec) in &self.staged {
            std::fs::rename(tmp, fin)
                .with_context(|| format!("renaming {} -> {}", tmp.display(), fin.display()))?;
            outputs.push(OutputRecord {
                file: rec.file.clone(),
                sha256: rec.sha256.clone(),
                bytes: rec.bytes,
            });
        }
        self.staged.clear();
        let manifest = RunManifest {
            experiment: self.experiment.clone(),
            tool_version: TOOL_VERSION.to_string(),
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            outputs,
            notes: std::mem::take(&mut self.notes),
        };
        let name = format!("{}_manifest.json", self.experiment);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(self.out_dir.join(name), text)?;
        Ok(manifest)
    }
}

impl Drop for RunWriter {
    fn drop(&mut self) {
        // abandoned runs leave no partial artifacts
        for (tmp, _, _) in &self.staged {
            let _ = std::fs::remove_file(tmp);
        }
    }
}

/// Shortest-roundtrip float formatting shared by all CSV writers.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}
