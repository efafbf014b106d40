//! Run manifests: what was run, with which inputs and outputs, by content hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use srb_core::Error;

use crate::config::FitConfig;
use crate::error::CliError;

pub const SEED_SCHEME: &str = "splitmix64 counter expansion: stage seed = derive_seed(root, stage, index); \
     chains use stage CHAIN with index = chain number, SRB projections stage PROJECT with index = state, \
     covariate draw selection stage COVARIATE, validation resampling and noise their own stages";

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub seed_scheme: &'static str,
    pub config_sha256: String,
    pub config: FitConfig,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &FitConfig) -> Self {
        let json = serde_json::to_string(cfg).expect("config serializes");
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            seed_scheme: SEED_SCHEME,
            config_sha256: hex(&Sha256::digest(json.as_bytes())),
            config: cfg.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Records a file, or every file below a directory, relative to `root`.
    pub fn output(&mut self, root: &Path, path: &Path) -> Result<(), CliError> {
        for file in files_below(path)? {
            let key = file.strip_prefix(root).unwrap_or(&file).display().to_string();
            self.outputs.insert(key, sha256_file(&file)?);
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<(), CliError> {
        let path = dir.join(name);
        let json = serde_json::to_string_pretty(self).map_err(Error::from)?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}

fn files_below(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(path, err)))
        .collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        out.extend(files_below(&p)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        std::fs::write(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
