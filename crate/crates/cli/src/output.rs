//! Output directories, atomic writes and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::commands::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Write to a temporary file in the same directory, then rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    argv: &'a [String],
    inputs: &'a [InputDigest],
    config_digest: String,
    seed: Option<u64>,
    tool_version: &'static str,
    wall_time_s: f64,
    outputs: &'a [String],
    warnings: &'a [String],
}

/// One command's output set; `finish` writes `manifest.json` last.
pub struct OutputSet {
    dir: PathBuf,
    command: &'static str,
    started: Instant,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
    warnings: Vec<String>,
}

impl OutputSet {
    pub fn create(dir: &Path, command: &'static str, started: Instant) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command,
            started,
            inputs: Vec::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = fs::read(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn warn(&mut self, msg: String) {
        eprintln!("shapereg: warning: {msg}");
        self.warnings.push(msg);
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(CliError::from_json)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn finish<C: Serialize>(
        self,
        argv: &[String],
        config: &C,
        seed: Option<u64>,
    ) -> Result<(), CliError> {
        let config = serde_json::to_vec(config).map_err(CliError::from_json)?;
        let manifest = Manifest {
            command: self.command,
            argv,
            inputs: &self.inputs,
            config_digest: sha256_hex(&config),
            seed,
            tool_version: env!("CARGO_PKG_VERSION"),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            outputs: &self.outputs,
            warnings: &self.warnings,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(CliError::from_json)?;
        bytes.push(b'\n');
        write_atomic(&self.dir.join("manifest.json"), &bytes)
    }
}
