//! Output files and the JSON manifest written next to them.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliResult;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of an input file's contents, for inclusion in a resolved config.
pub fn file_digest(path: &Path) -> CliResult<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// SHA-256 of the resolved configuration serialized as canonical JSON.
    pub config_digest: String,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub timestamp: String,
    pub config: Value,
    pub outputs: Vec<OutputFile>,
}

/// Collects outputs. With a directory each output becomes a file there and a
/// manifest is written at the end; without one the primary output goes to
/// stdout.
pub struct Sink {
    dir: Option<PathBuf>,
    outputs: Vec<OutputFile>,
    printed: bool,
}

impl Sink {
    pub fn new(dir: Option<PathBuf>) -> CliResult<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
        }
        Ok(Self { dir, outputs: Vec::new(), printed: false })
    }

    /// Writes `bytes` as `name`. Secondary outputs are dropped in stdout mode.
    pub fn emit(&mut self, name: &str, bytes: &[u8], primary: bool) -> CliResult<()> {
        match &self.dir {
            Some(d) => {
                fs::write(d.join(name), bytes)?;
                self.outputs.push(OutputFile { file: name.to_string(), sha256: sha256_hex(bytes) });
            }
            None if primary && !self.printed => {
                let mut out = std::io::stdout().lock();
                out.write_all(bytes)?;
                out.flush()?;
                self.printed = true;
            }
            None => {}
        }
        Ok(())
    }

    pub fn finish(self, subcommand: &str, config: Value, seed: Option<u64>) -> CliResult<()> {
        let Some(dir) = self.dir else { return Ok(()) };
        // serde_json maps are ordered by key, so this serialization is canonical.
        let digest = sha256_hex(&serde_json::to_vec(&config)?);
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            config_digest: digest,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            config,
            outputs: self.outputs,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(dir.join(format!("{subcommand}.manifest.json")), bytes)?;
        Ok(())
    }
}
