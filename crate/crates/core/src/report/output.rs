//! Output directory handling, provenance and JSON manifests.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

use super::config::ExperimentConfig;

pub const CRATE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Seed, config digest and version attached to every output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub crate_version: String,
}

impl Provenance {
    pub fn new(command: &str, config: &ExperimentConfig) -> Result<Self> {
        let text = config.to_toml_string()?;
        let digest = Sha256::digest(text.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self {
            command: command.into(),
            seed: config.seed,
            config_sha256: hex,
            crate_version: CRATE_VERSION.into(),
        })
    }

    /// Comment lines prepended to CSV files.
    pub fn csv_header(&self) -> String {
        format!(
            "# command={} seed={} config_sha256={} version={}\n",
            self.command, self.seed, self.config_sha256, self.crate_version
        )
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, S: Serialize> {
    pub provenance: &'a Provenance,
    pub config: &'a ExperimentConfig,
    pub files: Vec<String>,
    pub summary: &'a S,
}

/// Collects the files written by one command.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    provenance: Provenance,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: impl AsRef<Path>, provenance: Provenance) -> Result<Self> {
        std::fs::create_dir_all(root.as_ref())?;
        Ok(Self {
            root: root.as_ref().to_path_buf(),
            provenance,
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn write_text(&mut self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        std::fs::write(&path, body)?;
        self.files.push(name.to_string());
        Ok(path)
    }

    /// CSV body with a provenance comment line in front.
    pub fn write_csv(&mut self, name: &str, body: &str) -> Result<PathBuf> {
        let text = format!("{}{}", self.provenance.csv_header(), body);
        self.write_text(name, &text)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// Writes `manifest_<command>.json` listing every file written so far.
    pub fn finish<S: Serialize>(mut self, config: &ExperimentConfig, summary: &S) -> Result<PathBuf> {
        let name = format!("manifest_{}.json", self.provenance.command.replace('-', "_"));
        let prov = self.provenance.clone();
        let manifest = Manifest {
            provenance: &prov,
            config,
            files: self.files.clone(),
            summary,
        };
        self.write_json(&name, &manifest)
    }
}

/// Serializes rows with the `csv` crate; the header comes from the field names.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::Config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| crate::Error::Config(e.to_string()))
}

/// Drops `#` comment lines so saved CSV files parse as plain tables.
pub fn strip_comments(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_tracks_config() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.alpha = 1.5;
        let pa = Provenance::new("x", &a).unwrap();
        assert_eq!(pa, Provenance::new("x", &a).unwrap());
        assert_ne!(pa.config_sha256, Provenance::new("x", &b).unwrap().config_sha256);
        assert_eq!(pa.config_sha256.len(), 64);
    }

    #[test]
    fn manifest_lists_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::default();
        let mut out = OutputDir::create(dir.path(), Provenance::new("theta-build", &cfg).unwrap()).unwrap();
        out.write_csv("a.csv", "x\n1\n").unwrap();
        let path = out.finish(&cfg, &serde_json::json!({"ok": true})).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(v["files"][0], "a.csv");
        assert_eq!(v["config"]["alpha"], 1.0);
        let csv = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
        assert_eq!(strip_comments(&csv), "x\n1\n");
    }
}
