//! Output files. Every JSON artifact carries a `meta` block, and every run
//! writes `run.json` with the same block, which also covers the CSV files.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Fully resolved configuration.
    pub config: serde_json::Value,
    pub inputs: Vec<InputFile>,
}

impl Meta {
    pub fn new(command: &str, seed: u64, config: impl Serialize) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
        })
    }

    /// Records an input file by content hash and returns its contents.
    pub fn read_input(&mut self, path: &Path) -> Result<String> {
        let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        self.inputs.push(InputFile { path: path.display().to_string(), sha256: sha256_hex(&bytes) });
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct OutDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("cannot create output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.root.join(name);
        self.written.push(p.clone());
        p
    }

    /// Writes `{ "meta": …, <fields of value> }`.
    pub fn json(&mut self, name: &str, meta: &Meta, value: impl Serialize) -> Result<()> {
        let mut v = serde_json::to_value(value)?;
        if let serde_json::Value::Object(map) = &mut v {
            map.insert("meta".into(), serde_json::to_value(meta)?);
        } else {
            v = serde_json::json!({ "meta": meta, "data": v });
        }
        let p = self.path(name);
        std::fs::write(&p, serde_json::to_string_pretty(&v)? + "\n").with_context(|| format!("cannot write {}", p.display()))
    }

    pub fn csv<R: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<()> {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(&p).with_context(|| format!("cannot write {}", p.display()))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `run.json` and returns every path written.
    pub fn finish(mut self, meta: &Meta) -> Result<Vec<PathBuf>> {
        let p = self.path("run.json");
        std::fs::write(&p, serde_json::to_string_pretty(meta)? + "\n")?;
        Ok(self.written)
    }
}
