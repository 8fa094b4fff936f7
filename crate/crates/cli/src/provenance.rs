use std::collections::BTreeMap;
use std::path::Path;

use enhance_core::equity::Manifest;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const TOOL: &str = "enhance";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Embedded in every report so a run can be matched to its inputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub manifest_sha256: Option<String>,
    /// Digest over every referenced file, keyed by the path as written in
    /// the manifest so it does not depend on where the data sits.
    pub inputs_sha256: Option<String>,
    pub n_inputs: usize,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Provenance {
    pub fn bare(command: &str, seed: u64) -> Self {
        Provenance {
            tool: TOOL,
            version: VERSION,
            command: command.to_string(),
            seed,
            manifest_sha256: None,
            inputs_sha256: None,
            n_inputs: 0,
        }
    }

    pub fn for_manifest(command: &str, seed: u64, manifest_path: &Path, manifest: &Manifest) -> Result<Self> {
        let mut paths: Vec<&Path> = manifest.records.iter().flat_map(|r| r.paths()).collect();
        paths.sort();
        paths.dedup();
        let digests: Vec<(String, String)> = paths
            .par_iter()
            .map(|p| Ok((p.display().to_string(), file_sha256(&manifest.resolve(p))?)))
            .collect::<Result<_>>()?;
        let mut h = Sha256::new();
        for (p, d) in &digests {
            h.update(p.as_bytes());
            h.update([0]);
            h.update(d.as_bytes());
            h.update([b'\n']);
        }
        Ok(Provenance {
            manifest_sha256: Some(file_sha256(manifest_path)?),
            inputs_sha256: Some(hex::encode(h.finalize())),
            n_inputs: digests.len(),
            ..Provenance::bare(command, seed)
        })
    }

    pub fn as_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("tool".into(), self.tool.into());
        m.insert("version".into(), self.version.into());
        m.insert("command".into(), self.command.clone());
        m.insert("seed".into(), self.seed.to_string());
        if let Some(d) = &self.manifest_sha256 {
            m.insert("manifest_sha256".into(), d.clone());
        }
        if let Some(d) = &self.inputs_sha256 {
            m.insert("inputs_sha256".into(), d.clone());
        }
        m.insert("n_inputs".into(), self.n_inputs.to_string());
        m
    }
}
