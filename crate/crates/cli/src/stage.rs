use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let mut f = File::open(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Outputs of one subcommand run, all stamped with the run's config hash.
///
/// The hash covers the stage name, the flag values and the content hashes of
/// every input, so it does not depend on paths, thread count or log level.
pub struct Stage {
    workdir: PathBuf,
    name: &'static str,
    hash: String,
    config: Value,
    inputs: BTreeMap<String, String>,
    outputs: Vec<(String, String)>,
}

impl Stage {
    pub fn new(workdir: &Path, name: &'static str, flags: &impl Serialize, inputs: BTreeMap<String, String>) -> CliResult<Stage> {
        std::fs::create_dir_all(workdir)
            .map_err(|e| CliError::config(format!("cannot create work directory {}: {e}", workdir.display())))?;
        let config = serde_json::to_value(flags).map_err(|e| CliError::config(e.to_string()))?;
        let canonical = json!({ "stage": name, "flags": config, "inputs": inputs });
        Ok(Stage {
            workdir: workdir.to_path_buf(),
            name,
            hash: sha256_bytes(canonical.to_string().as_bytes()),
            config,
            inputs,
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.workdir.join(rel)
    }

    fn create(&self, rel: &str) -> CliResult<BufWriter<File>> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let f = File::create(&path).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        Ok(BufWriter::new(f))
    }

    /// A text file whose first line is `# config_hash: …`.
    pub fn text(&mut self, rel: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> CliResult<()> {
        let mut w = self.create(rel)?;
        writeln!(w, "# config_hash: {}", self.hash)?;
        body(&mut w)?;
        w.flush()?;
        drop(w);
        self.record(rel)
    }

    /// A JSON object with a `config_hash` member added.
    pub fn json(&mut self, rel: &str, value: &impl Serialize) -> CliResult<()> {
        let mut v = serde_json::to_value(value).map_err(|e| CliError::data(e.to_string()))?;
        if let Value::Object(m) = &mut v {
            m.insert("config_hash".into(), Value::String(self.hash.clone()));
        }
        let mut w = self.create(rel)?;
        serde_json::to_writer_pretty(&mut w, &v).map_err(|e| CliError::data(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
        drop(w);
        self.record(rel)
    }

    /// A binary file in a fixed format; its hash is carried by the manifest.
    pub fn binary(&mut self, rel: &str, body: impl FnOnce(BufWriter<File>) -> CliResult<()>) -> CliResult<()> {
        let w = self.create(rel)?;
        body(w)?;
        self.record(rel)
    }

    fn record(&mut self, rel: &str) -> CliResult<()> {
        let sum = sha256_file(&self.path(rel))?;
        self.outputs.retain(|(p, _)| p != rel);
        self.outputs.push((rel.to_owned(), sum));
        Ok(())
    }

    /// Write `<stage>.manifest.json` listing every output.
    pub fn finish(self, summary: Value) -> CliResult<String> {
        let outputs: Vec<Value> = self
            .outputs
            .iter()
            .map(|(p, s)| json!({ "path": p, "sha256": s }))
            .collect();
        let manifest = json!({
            "stage": self.name,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "config_hash": self.hash,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": outputs,
            "summary": summary,
        });
        let path = self.path(&format!("{}.manifest.json", self.name));
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::data(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        Ok(self.hash)
    }
}

/// Read a manifest written by an earlier stage, if present.
pub fn read_manifest(workdir: &Path, stage: &str) -> Option<Value> {
    let text = std::fs::read_to_string(workdir.join(format!("{stage}.manifest.json"))).ok()?;
    serde_json::from_str(&text).ok()
}
