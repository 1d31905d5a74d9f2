use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
struct Input {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Versions {
    deap: &'static str,
    model_format: u32,
    config_format: u32,
}

/// Record of one run, written next to its outputs as `manifest.json`.
#[derive(Debug, Serialize)]
pub struct Manifest {
    command: String,
    args: Vec<String>,
    seed: u64,
    config_sha256: String,
    inputs: Vec<Input>,
    outputs: Vec<String>,
    versions: Versions,
    #[serde(skip)]
    dir: PathBuf,
}

impl Manifest {
    pub fn new(command: &str, args: Vec<String>, seed: u64, config_json: &str, dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Manifest {
            command: command.to_string(),
            args,
            seed,
            config_sha256: sha256_hex(config_json.as_bytes()),
            inputs: Vec::new(),
            outputs: Vec::new(),
            versions: Versions {
                deap: env!("CARGO_PKG_VERSION"),
                model_format: deap_core::io::model::FORMAT_VERSION,
                config_format: deap_core::io::config::FORMAT_VERSION,
            },
            dir: dir.to_path_buf(),
        })
    }

    /// Hash an input file into the manifest.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(Input {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Write `contents` to `name` under the output directory.
    pub fn output(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(path)
    }

    pub fn finish(self) -> Result<()> {
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self)? + "\n";
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
