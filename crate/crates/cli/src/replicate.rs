//! Batch pinned execution, so separate processes can be compared bit for bit.

use std::path::Path;

use anyhow::{anyhow, Result};
use props_core::pinned::{execute_pinned, InferenceOutput, ModelSpec, ModelWeights};
use props_core::DataRecord;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicationCase {
    pub spec: ModelSpec,
    pub weights: ModelWeights,
    pub input: DataRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicationResult {
    pub output: Option<InferenceOutput>,
    pub error: Option<String>,
}

pub fn replicate(cases: &[ReplicationCase]) -> Vec<ReplicationResult> {
    cases
        .iter()
        .map(|c| match execute_pinned(&c.spec, &c.weights, &c.input) {
            Ok(y) => ReplicationResult {
                output: Some(y),
                error: None,
            },
            Err(e) => ReplicationResult {
                output: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

/// One JSON result per line, in case order.
pub fn cmd_replicate(input: &Path) -> Result<String> {
    let text = std::fs::read_to_string(input)?;
    let cases: Vec<ReplicationCase> =
        serde_json::from_str(&text).map_err(|e| anyhow!("ParseError: cases: {e}"))?;
    let mut out = String::new();
    for r in replicate(&cases) {
        out.push_str(&serde_json::to_string(&r)?);
        out.push('\n');
    }
    Ok(out)
}
