//! File helpers: JSONL, digests and output manifests.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Parsed lines plus the 1-based numbers of lines that failed to parse.
#[derive(Debug, Clone)]
pub struct JsonlRead<T> {
    pub items: Vec<T>,
    pub malformed: Vec<usize>,
}

impl<T> JsonlRead<T> {
    pub fn lines(&self) -> usize {
        self.items.len() + self.malformed.len()
    }

    pub fn malformed_share(&self) -> f64 {
        if self.lines() == 0 {
            0.0
        } else {
            self.malformed.len() as f64 / self.lines() as f64
        }
    }
}

/// Blank lines are ignored; unparsable lines are recorded, not fatal.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<JsonlRead<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = JsonlRead {
        items: Vec::new(),
        malformed: Vec::new(),
    };
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(v) => out.items.push(v),
            Err(e) => {
                log::warn!("{}:{}: skipping malformed line: {e}", path.display(), n + 1);
                out.malformed.push(n + 1);
            }
        }
    }
    Ok(out)
}

/// Like [`read_jsonl`] but any malformed line is an error.
pub fn read_jsonl_strict<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let r = read_jsonl(path)?;
    if let Some(first) = r.malformed.first() {
        anyhow::bail!(
            "{}: {} malformed line(s), first at line {first}",
            path.display(),
            r.malformed.len()
        );
    }
    Ok(r.items)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_bytes(&bytes))
}

/// Written last into every output directory. Inputs are keyed by role
/// (`edges`, `train`, ...), outputs by file name; no timestamps, so equal
/// runs produce equal manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config_hash: String) -> Self {
        Manifest {
            tool: "kgqa".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config_hash,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input_file(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.insert(role.into(), sha256_file(path)?);
        Ok(())
    }

    pub fn input_bytes(&mut self, role: &str, bytes: &[u8]) {
        self.inputs.insert(role.into(), sha256_bytes(bytes));
    }

    /// Digests every regular file in `dir` except the manifest itself,
    /// descending one level into sub-directories, then writes the manifest.
    pub fn finish(mut self, dir: &Path) -> Result<()> {
        self.outputs.clear();
        collect_outputs(dir, "", &mut self.outputs)?;
        write_json(&dir.join("manifest.json"), &self)
    }
}

fn collect_outputs(dir: &Path, prefix: &str, out: &mut BTreeMap<String, String>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let path = entry.path();
        if path.is_dir() {
            if prefix.is_empty() {
                collect_outputs(&path, &format!("{name}/"), out)?;
            }
        } else if !(prefix.is_empty() && name == "manifest.json") {
            out.insert(format!("{prefix}{name}"), sha256_file(&path)?);
        }
    }
    Ok(())
}
