use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Record written beside every output.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub command: &'static str,
    /// SHA-256 of the compact JSON encoding of `config`.
    pub config_hash: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl Provenance {
    pub fn new<C: Serialize>(command: &'static str, config: &C, seed: u64) -> Self {
        let config = serde_json::to_value(config).expect("configs serialize to JSON");
        Self {
            tool: TOOL,
            version: VERSION,
            core_version: VERSION,
            command,
            config_hash: config_hash(&config),
            seed,
            config,
        }
    }
}

pub fn config_hash<C: Serialize>(config: &C) -> String {
    let bytes = serde_json::to_vec(config).expect("configs serialize to JSON");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}
