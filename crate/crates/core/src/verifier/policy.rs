use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::canonical::Canonical;
use crate::committee::CommitteeConfig;
use crate::crypto::{Digest, KeyIdentity};

/// What the consumer requires of the inference step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelRequirement {
    /// The chain must not carry an inference proof.
    None,
    /// Single trusted executor running exactly this pin.
    Exact { pinned_digest: Digest },
    /// Named service run by one of the listed operators.
    ServiceRef {
        service_id: String,
        trusted_executors: BTreeSet<KeyIdentity>,
    },
    /// Quorum of the configured committee on this pin.
    Committee {
        config: CommitteeConfig,
        pinned_digest: Digest,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeliveryRequirement {
    Plaintext,
    Sealed,
    #[default]
    Either,
}

impl DeliveryRequirement {
    pub fn admits(self, sealed: bool) -> bool {
        match self {
            DeliveryRequirement::Plaintext => !sealed,
            DeliveryRequirement::Sealed => sealed,
            DeliveryRequirement::Either => true,
        }
    }
}

/// All trust roots of a consumer. Verification consults nothing else.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifierPolicy {
    /// Attestation signers: oracle proxies, and sources that sign their own
    /// responses.
    pub trusted_attestors: BTreeSet<KeyIdentity>,
    pub trusted_sources: BTreeSet<String>,
    /// Filter executors and single-executor inference.
    pub trusted_executors: BTreeSet<KeyIdentity>,
    /// Digests of fully parameterized filter specs.
    pub filter_whitelist: BTreeSet<Digest>,
    pub required_record_type: String,
    pub model_requirement: ModelRequirement,
    pub max_age_seconds: i64,
    #[serde(default)]
    pub delivery: DeliveryRequirement,
}

impl Canonical for VerifierPolicy {}
