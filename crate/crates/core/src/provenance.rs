//! Provenance header written as the first line of every output artifact.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL: &str = "nluforge";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_digest: String,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    #[serde(rename = "_provenance")]
    provenance: Provenance,
}

impl Provenance {
    pub fn new(seed: u64, config_digest: impl Into<String>) -> Self {
        Self {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            seed,
            config_digest: config_digest.into(),
        }
    }

    /// The single JSON line that opens an artifact.
    pub fn header_line(&self) -> String {
        serde_json::to_string(&HeaderLine {
            provenance: self.clone(),
        })
        .expect("provenance serializes")
    }

    pub fn is_header_line(line: &str) -> bool {
        line.trim_start().starts_with("{\"_provenance\"")
    }

    pub fn parse_header(line: &str) -> Option<Provenance> {
        if !Self::is_header_line(line) {
            return None;
        }
        serde_json::from_str::<HeaderLine>(line)
            .ok()
            .map(|h| h.provenance)
    }
}

/// Hex SHA-256 of arbitrary bytes.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// Digest of a JSON value in its compact serialization.
pub fn digest_json(value: &serde_json::Value) -> String {
    sha256_hex(serde_json::to_vec(value).expect("json value serializes"))
}
