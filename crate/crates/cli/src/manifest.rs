use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliResult;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    /// Fully resolved parameters; valid as a `--config` file.
    pub params: Value,
    pub inputs: BTreeMap<String, InputDigest>,
    pub seed: Option<u64>,
    pub timestamp: String,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub report: Value,
}

impl RunManifest {
    pub fn new(subcommand: &str, params: &impl Serialize) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            params: serde_json::to_value(params).expect("params serialize"),
            inputs: BTreeMap::new(),
            seed: None,
            timestamp: chrono::Utc::now().to_rfc3339(),
            threads: rayon::current_num_threads(),
            outputs: Vec::new(),
            report: Value::Null,
        }
    }

    pub fn add_input(&mut self, role: &str, path: &Path) -> CliResult<()> {
        self.inputs.insert(
            role.to_string(),
            InputDigest {
                path: path.display().to_string(),
                sha256: sha256_file(path)?,
            },
        );
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(dir.join(MANIFEST_NAME), text + "\n")?;
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let mut f = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}
