use std::collections::BTreeMap;

use lrtts_core::corpus::CorpusManifest;

use crate::config::PipelineConfig;
use crate::fsutil::sha256_hex;
use crate::manifest::manifest_to_string;

/// Stamped into every manifest a stage writes.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub config_toml: String,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(config: &PipelineConfig) -> Self {
        Self {
            config_toml: config.resolved_toml(),
            config_hash: config.hash(),
        }
    }

    pub fn metadata(&self, stage: &str, input: &CorpusManifest) -> BTreeMap<String, String> {
        BTreeMap::from([
            (
                "tool_version".to_string(),
                lrtts_core::TOOL_VERSION.to_string(),
            ),
            ("stage".to_string(), stage.to_string()),
            ("config".to_string(), self.config_toml.clone()),
            ("config_hash".to_string(), self.config_hash.clone()),
            ("input_fingerprint".to_string(), manifest_fingerprint(input)),
        ])
    }
}

/// SHA-256 of the manifest's serialized form.
pub fn manifest_fingerprint(m: &CorpusManifest) -> String {
    sha256_hex(manifest_to_string(m).as_bytes())
}
