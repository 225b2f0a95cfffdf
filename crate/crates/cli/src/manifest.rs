use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const TOOL: &str = "trinity";

/// Everything needed to reproduce a file-producing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Arguments as given, without the program name.
    pub argv: Vec<String>,
    /// Directory the run started in; relative paths in `argv` resolve here.
    pub cwd: PathBuf,
    pub params: serde_json::Value,
    /// SHA-256 of every input file, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
    /// Effective RNG seed, for commands that draw random numbers.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    /// SHA-256 of every output file.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub fn digests(paths: &[PathBuf]) -> Result<BTreeMap<String, String>, CliError> {
    paths
        .iter()
        .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
        .collect()
}

/// Manifest location for an output file: `<out>.manifest.json`.
pub fn path_for(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn read(path: &Path) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(path)?;
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| {
        CliError::Core(trinity_core::Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    })?;
    if manifest.tool != TOOL {
        return Err(CliError::Core(trinity_core::Error::InvalidInput(format!(
            "manifest was written by {:?}, not {TOOL}",
            manifest.tool
        ))));
    }
    Ok(manifest)
}
