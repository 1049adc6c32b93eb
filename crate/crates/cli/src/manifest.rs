use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::Command;

use dsp_core::data::{
    FEATURES_FILE, LABELS_FILE, PROTOTYPES_FILE, SPLIT_FILE, TRUE_PROTOTYPES_FILE,
};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Everything needed to reproduce a run.
pub struct RunManifest {
    pub config_text: String,
    pub seed: u64,
    pub git_describe: String,
    pub dataset_fingerprint: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "tool_version = {}", env!("CARGO_PKG_VERSION")).unwrap();
        writeln!(out, "git_describe = {}", self.git_describe).unwrap();
        writeln!(out, "seed = {}", self.seed).unwrap();
        writeln!(out, "dataset_sha256 = {}", self.dataset_fingerprint).unwrap();
        writeln!(out, "outputs = {}", self.outputs.join(",")).unwrap();
        out.push_str("[config]\n");
        out.push_str(&self.config_text);
        out
    }
}

/// SHA-256 over the dataset files in a fixed order, each prefixed by its
/// name and length. The optional true-prototype file is included when present.
pub fn dataset_fingerprint(dir: &Path) -> Result<String, CliError> {
    let mut h = Sha256::new();
    for name in [
        FEATURES_FILE,
        LABELS_FILE,
        PROTOTYPES_FILE,
        SPLIT_FILE,
        TRUE_PROTOTYPES_FILE,
    ] {
        let path = dir.join(name);
        if name == TRUE_PROTOTYPES_FILE && !path.exists() {
            continue;
        }
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// `git describe` of the source tree this binary was built from, or
/// "unknown" outside a repository.
pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}
