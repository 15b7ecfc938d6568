use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// The effective configuration of one pipeline invocation. Every field is
/// filled in before any output file is written, and the manifest hash is
/// embedded in each output's metadata header so artifacts can be traced to
/// the run that produced them.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// Canonical-serialization hash of the corpus involved, or "none".
    pub corpus_hash: String,
    /// Hash of the lexicon the rule meaning function used, or "none".
    pub lexicon_hash: String,
    /// Template name to content hash, one entry per template the command
    /// rendered. Empty for commands that render none.
    pub template_hashes: BTreeMap<String, String>,
    /// Model identifier, "mock" for the in-process stand-in, "none" when the
    /// command never touches a model.
    pub model: String,
    /// Endpoint base URL, "mock", or "none".
    pub endpoint: String,
    /// n-best width for generation; 0 when the command never generates.
    pub k: usize,
    /// Rationality values the speaker tables were built for.
    pub alphas: Vec<f64>,
    pub cost_mode: String,
    pub llm_score_mode: String,
    /// Unix seconds. Deterministic runs record SOURCE_DATE_EPOCH or 0 so
    /// reruns stay byte-identical; only live-endpoint runs read the clock.
    pub created_unix: u64,
}

impl RunManifest {
    /// A manifest with every model-free field set to its sentinel. Callers
    /// overwrite what their command actually uses.
    pub fn new(command: &str) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            corpus_hash: "none".to_string(),
            lexicon_hash: "none".to_string(),
            template_hashes: BTreeMap::new(),
            model: "none".to_string(),
            endpoint: "none".to_string(),
            k: 0,
            alphas: Vec::new(),
            cost_mode: "none".to_string(),
            llm_score_mode: "none".to_string(),
            created_unix: 0,
        }
    }

    /// Hash of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("manifest serializes");
        sha256_hex(canonical.as_bytes())
    }

    /// Writes `{"hash": ..., "manifest": {...}}` so readers can resolve the
    /// hash embedded in the data files.
    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        let body = serde_json::json!({ "hash": self.hash(), "manifest": self });
        let text = serde_json::to_string_pretty(&body).expect("manifest serializes");
        fs::write(path, text + "\n")
            .with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(())
    }

    /// First line of JSONL outputs.
    pub fn jsonl_header(&self) -> String {
        format!("{{\"_manifest\":\"{}\"}}", self.hash())
    }
}

/// Timestamp for the manifest. Deterministic commands (anything not talking
/// to a live endpoint) must produce byte-identical reruns, so they never
/// read the clock.
pub fn run_timestamp(deterministic: bool) -> u64 {
    if let Ok(value) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Ok(seconds) = value.parse() {
            return seconds;
        }
    }
    if deterministic {
        return 0;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

/// Hash of a value's canonical JSON form; used for the lexicon.
pub fn json_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(
        serde_json::to_string(value)
            .expect("value serializes")
            .as_bytes(),
    )
}
