//! Run manifests: a TOML file listing the sha256 of every output in a run
//! directory, so a result set can be checked for silent corruption or
//! accidental mixing of runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use longrun_core::error::{CoreError, Result};

pub const MANIFEST_NAME: &str = "manifest.toml";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub checksums: BTreeMap<String, String>,
}

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Every regular file directly inside `dir`, except the manifest itself,
/// keyed by file name in sorted order.
fn checksum_dir(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut checksums = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == MANIFEST_NAME {
            continue;
        }
        checksums.insert(name, sha256_hex(&entry.path())?);
    }
    Ok(checksums)
}

pub fn write(dir: &Path, seed: u64) -> Result<Manifest> {
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        checksums: checksum_dir(dir)?,
    };
    let text = toml::to_string_pretty(&manifest).map_err(|e| CoreError::Configuration {
        detail: format!("manifest serialization failed: {e}"),
    })?;
    fs::write(dir.join(MANIFEST_NAME), text)?;
    Ok(manifest)
}

pub enum VerifyOutcome {
    Clean(usize),
    Mismatch(Vec<String>),
}

/// Recompute checksums and compare against the stored manifest. Reports
/// changed, missing and unexpected files by name.
pub fn verify(dir: &Path) -> Result<VerifyOutcome> {
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path)?;
    let stored: Manifest = toml::from_str(&text).map_err(|e| CoreError::Configuration {
        detail: format!("{}: {e}", path.display()),
    })?;
    let current = checksum_dir(dir)?;

    let mut problems = Vec::new();
    for (name, digest) in &stored.checksums {
        match current.get(name) {
            None => problems.push(format!("missing: {name}")),
            Some(d) if d != digest => problems.push(format!("changed: {name}")),
            Some(_) => {}
        }
    }
    for name in current.keys() {
        if !stored.checksums.contains_key(name) {
            problems.push(format!("unexpected: {name}"));
        }
    }
    if problems.is_empty() {
        Ok(VerifyOutcome::Clean(current.len()))
    } else {
        Ok(VerifyOutcome::Mismatch(problems))
    }
}
