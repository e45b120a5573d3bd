//! Run manifests: parameter hash, crate version, wall time and output
//! digests, so a rerun can be verified byte-for-byte.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::CliResult;

/// 64-bit FNV-1a, stable and dependency-free; used for parameter and
/// artifact digests (integrity/reproducibility checks, not security).
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Serialize)]
struct OutputEntry {
    path: PathBuf,
    bytes: u64,
    fnv1a64: String,
}

#[derive(Serialize)]
pub struct Manifest {
    command: String,
    parameters: serde_json::Value,
    parameters_fnv1a64: String,
    version: String,
    outputs: Vec<OutputEntry>,
    wall_ms: u128,
    #[serde(skip)]
    started: Instant,
}

impl Manifest {
    pub fn start(command: &str, parameters: serde_json::Value) -> Self {
        let phash = fnv1a64(parameters.to_string().as_bytes());
        Manifest {
            command: command.to_string(),
            parameters,
            parameters_fnv1a64: format!("{phash:016x}"),
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
            wall_ms: 0,
            started: Instant::now(),
        }
    }

    pub fn add_output(&mut self, path: &Path) -> CliResult<()> {
        let mut f = std::fs::File::open(path)?;
        let mut buf = Vec::new();
        f.read_to_end(&mut buf)?;
        self.outputs.push(OutputEntry {
            path: path.to_path_buf(),
            bytes: buf.len() as u64,
            fnv1a64: format!("{:016x}", fnv1a64(&buf)),
        });
        Ok(())
    }

    pub fn finish(mut self, out_dir: &Path) -> CliResult<()> {
        self.wall_ms = self.started.elapsed().as_millis();
        let path = out_dir.join(format!("{}_manifest.json", self.command));
        std::fs::write(&path, serde_json::to_string_pretty(&self).unwrap())?;
        Ok(())
    }
}
