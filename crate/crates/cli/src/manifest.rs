//! The workdir manifest: a flat, sorted `key = value` file recording what
//! every stage consumed and produced.
//!
//! Keys:
//! - `format.<name>`: file format versions
//! - `stage.<stage>.config_hash`, `stage.<stage>.seed`, other stage facts
//! - `stage.<stage>.input.<file>`: sha256 of each consumed file
//! - `file.<file>`: sha256 of each produced file, `producer.<file>` its stage
//!
//! Files inside the workdir are named by relative path.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

use crate::Failure;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const MANIFEST_VERSION: u32 = 1;

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(workdir: &Path) -> Result<Self> {
        let path = workdir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let mut entries = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .with_context(|| format!("{}:{}: malformed manifest line", path.display(), idx + 1))?;
            entries.insert(k.to_string(), v.to_string());
        }
        let m = Manifest { entries };
        if let Some(v) = m.get("format.manifest") {
            if v != MANIFEST_VERSION.to_string() {
                return Err(Failure::format(format!(
                    "{} has manifest format {v}, this build reads {MANIFEST_VERSION}",
                    path.display()
                ))
                .into());
            }
        }
        if let Some(v) = m.get("format.l2ge") {
            if v != l2g_core::l2ge::FORMAT_VERSION.to_string() {
                return Err(Failure::format(format!(
                    "workdir artifacts use L2GE format {v}, this build reads {}",
                    l2g_core::l2ge::FORMAT_VERSION
                ))
                .into());
            }
        }
        Ok(m)
    }

    pub fn save(&mut self, workdir: &Path) -> Result<()> {
        self.set("format.manifest", MANIFEST_VERSION);
        self.set("format.l2ge", l2g_core::l2ge::FORMAT_VERSION);
        let mut text = String::new();
        for (k, v) in &self.entries {
            writeln!(text, "{k} = {v}").expect("writing to a string");
        }
        let path = workdir.join(MANIFEST_FILE);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    /// Forget everything a stage recorded, including its outputs.
    pub fn clear_stage(&mut self, stage: &str) {
        let prefix = format!("stage.{stage}.");
        let outputs: Vec<String> = self
            .entries
            .iter()
            .filter(|(k, v)| k.starts_with("producer.") && v.as_str() == stage)
            .map(|(k, _)| k["producer.".len()..].to_string())
            .collect();
        self.entries.retain(|k, _| !k.starts_with(&prefix));
        for file in outputs {
            self.entries.remove(&format!("producer.{file}"));
            self.entries.remove(&format!("file.{file}"));
        }
    }

    pub fn record_output(&mut self, workdir: &Path, stage: &str, rel: &str) -> Result<()> {
        let hash = sha256_file(&workdir.join(rel))?;
        self.set(&format!("file.{rel}"), hash);
        self.set(&format!("producer.{rel}"), stage);
        Ok(())
    }

    /// Check that `rel` exists and that its producing stage is not out of
    /// date, then record it as an input of `stage`. `producer` names the
    /// command that creates the file.
    pub fn consume(&mut self, workdir: &Path, stage: &str, rel: &str, producer: &str) -> Result<String> {
        let path = workdir.join(rel);
        if !path.exists() {
            return Err(Failure::missing(format!(
                "missing {}; run `l2g {producer}` first",
                path.display()
            ))
            .into());
        }
        if let Some(by) = self.get(&format!("producer.{rel}")).map(str::to_string) {
            let prefix = format!("stage.{by}.input.");
            let upstream: Vec<(String, String)> = self
                .entries
                .iter()
                .filter(|(k, _)| k.starts_with(&prefix))
                .map(|(k, v)| (k[prefix.len()..].to_string(), v.clone()))
                .collect();
            for (input, recorded) in upstream {
                let ipath = resolve(workdir, &input);
                let current = if ipath.exists() {
                    sha256_file(&ipath)?
                } else {
                    String::new()
                };
                if current != recorded {
                    return Err(Failure::stale(format!(
                        "{} is stale: {} changed after `l2g {by}` ran; rerun `l2g {by}`",
                        path.display(),
                        ipath.display()
                    ))
                    .into());
                }
            }
        }
        let hash = sha256_file(&path)?;
        if let Some(recorded) = self.get(&format!("file.{rel}")) {
            if recorded != hash {
                log::info!("{} was replaced outside l2g; using it as provided", path.display());
            }
        }
        self.set(&format!("stage.{stage}.input.{rel}"), &hash);
        Ok(hash)
    }

    /// Record an input that lives outside the workdir.
    pub fn consume_external(&mut self, stage: &str, path: &Path) -> Result<()> {
        let hash = sha256_file(path)?;
        let abs = std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
        self.set(&format!("stage.{stage}.input.{}", abs.display()), hash);
        Ok(())
    }
}

fn resolve(workdir: &Path, name: &str) -> PathBuf {
    let p = Path::new(name);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        workdir.join(p)
    }
}
