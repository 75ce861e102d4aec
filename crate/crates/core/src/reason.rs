//! Stable reason codes shared by every verification routine.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Why a check failed. Serialized as its PascalCase name; codes written by a
/// newer version survive a round trip as [`ReasonCode::Other`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ReasonCode {
    Malformed,
    BadSignature,
    UntrustedSigner,
    UntrustedSource,
    RecordTypeMismatch,
    FilterNotWhitelisted,
    FilterSpecMismatch,
    LinkageBroken,
    ModelRequirementUnmet,
    PinMismatch,
    InsufficientQuorum,
    DuplicateSigner,
    UnknownSigner,
    Stale,
    NotYetValid,
    DeliveryModeMismatch,
    ConsensusFailure,
    Other(String),
}

const KNOWN: &[(&str, ReasonCode)] = &[
    ("Malformed", ReasonCode::Malformed),
    ("BadSignature", ReasonCode::BadSignature),
    ("UntrustedSigner", ReasonCode::UntrustedSigner),
    ("UntrustedSource", ReasonCode::UntrustedSource),
    ("RecordTypeMismatch", ReasonCode::RecordTypeMismatch),
    ("FilterNotWhitelisted", ReasonCode::FilterNotWhitelisted),
    ("FilterSpecMismatch", ReasonCode::FilterSpecMismatch),
    ("LinkageBroken", ReasonCode::LinkageBroken),
    ("ModelRequirementUnmet", ReasonCode::ModelRequirementUnmet),
    ("PinMismatch", ReasonCode::PinMismatch),
    ("InsufficientQuorum", ReasonCode::InsufficientQuorum),
    ("DuplicateSigner", ReasonCode::DuplicateSigner),
    ("UnknownSigner", ReasonCode::UnknownSigner),
    ("Stale", ReasonCode::Stale),
    ("NotYetValid", ReasonCode::NotYetValid),
    ("DeliveryModeMismatch", ReasonCode::DeliveryModeMismatch),
    ("ConsensusFailure", ReasonCode::ConsensusFailure),
];

impl ReasonCode {
    pub fn as_str(&self) -> &str {
        if let ReasonCode::Other(s) = self {
            return s;
        }
        KNOWN
            .iter()
            .find(|(_, code)| code == self)
            .map(|(name, _)| *name)
            .expect("every named variant is listed")
    }
}

impl FromStr for ReasonCode {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(KNOWN
            .iter()
            .find(|(name, _)| *name == s)
            .map(|(_, code)| code.clone())
            .unwrap_or_else(|| ReasonCode::Other(s.to_string())))
    }
}

impl fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for ReasonCode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ReasonCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(s.parse().expect("infallible"))
    }
}
