//! Artifact writing. Every file carries the tool version and the config hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::Failure;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Output {
    dir: PathBuf,
    hash: String,
    config: Value,
}

impl Output {
    pub fn create(cfg: &RunConfig) -> Result<Self, Failure> {
        fs::create_dir_all(&cfg.out_dir)
            .map_err(|e| Failure::io(&format!("cannot create output directory {}", cfg.out_dir.display()), e))?;
        Ok(Self {
            dir: cfg.out_dir.clone(),
            hash: cfg.hash(),
            config: serde_json::to_value(cfg).expect("config serializes"),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| Failure::io(&format!("cannot write {}", p.display()), e))?;
        Ok(p)
    }

    /// `{"kvbeam_version", "config_sha256", "config", <body fields>}`.
    pub fn write_json(&self, name: &str, body: impl Serialize) -> Result<PathBuf, Failure> {
        let mut doc = json!({
            "kvbeam_version": VERSION,
            "config_sha256": self.hash,
            "config": self.config,
        });
        match serde_json::to_value(body).expect("report serializes") {
            Value::Object(m) => doc.as_object_mut().expect("object").extend(m),
            other => {
                doc["result"] = other;
            }
        }
        let mut text = serde_json::to_string_pretty(&doc).expect("json");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes `body` (header plus rows) after the two comment lines.
    pub fn write_csv(&self, name: &str, body: &str) -> Result<PathBuf, Failure> {
        let mut text = format!("# kvbeam {VERSION}\n# config_sha256 {}\n", self.hash);
        text.push_str(body);
        self.write(name, text.as_bytes())
    }
}

pub fn show(p: &Path) -> String {
    p.display().to_string()
}
