use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use scosara_core::Result;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    /// `running`, `complete` or `failed`.
    pub status: String,
    /// Paths relative to the output directory, in write order.
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    dir: PathBuf,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    /// Creates the output directory and writes the initial manifest.
    pub fn begin(command: &str, cfg: &ExperimentConfig, dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let m = Self {
            command: command.into(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").into(),
            started_unix: now(),
            finished_unix: None,
            status: "running".into(),
            outputs: Vec::new(),
            warnings: Vec::new(),
            dir: dir.to_path_buf(),
        };
        m.save()?;
        Ok(m)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn save(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(self.dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    /// Writes `contents` to `rel` under the output directory and records it.
    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, contents)?;
        if !self.outputs.iter().any(|o| o == rel) {
            self.outputs.push(rel.to_string());
        }
        Ok(path)
    }

    pub fn warn(&mut self, msg: String) {
        eprintln!("warning: {msg}");
        self.warnings.push(msg);
    }

    pub fn finish(mut self, ok: bool) -> Result<Self> {
        self.finished_unix = Some(now());
        self.status = if ok { "complete" } else { "failed" }.into();
        self.save()?;
        Ok(self)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let mut m: Self = serde_json::from_str(&text).map_err(|e| scosara_core::Error::Parse(e.to_string()))?;
        m.dir = dir.to_path_buf();
        Ok(m)
    }
}
