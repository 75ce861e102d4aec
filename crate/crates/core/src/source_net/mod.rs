//! Simulated deep-web source: a record server speaking length-prefixed
//! canonical frames over plain TCP, and the blocking client used against it.
//!
//! The server is unaware of attestors. An oracle proxy relays the exact same
//! frames, so the source runs identical code with or without one.

mod client;
mod frame;
mod listener;
mod proxy;
mod server;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{Canonical, CanonicalDoc};
use crate::crypto::{KeyIdentity, Signature};
use crate::record::DataRecord;

pub use client::{exchange, fetch, parse_response, ClientOptions};
pub use frame::{read_frame, write_frame, FrameError, MAX_FRAME_LEN};
pub use listener::{spawn_listener, ServerHandle};
pub use proxy::{Fault, FaultProxy};
pub use server::{serve, SourceServer};

#[derive(Debug, Error)]
pub enum SourceNetError {
    #[error("cannot bind {endpoint}: {reason}")]
    BindFailure { endpoint: String, reason: String },
    #[error("cannot connect to {endpoint}: {reason}")]
    ConnectFailure { endpoint: String, reason: String },
    #[error("authentication denied")]
    AuthDenied,
    #[error("record not found")]
    NotFound,
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("deadline exceeded")]
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceDescriptor {
    pub source_id: String,
    pub listen_endpoint: String,
    pub source_identity: KeyIdentity,
    pub signing_enabled: bool,
}

impl Canonical for SourceDescriptor {}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FetchRequest {
    pub subject_id: String,
    pub credential: String,
    pub record_type: String,
}

impl Canonical for FetchRequest {}

impl fmt::Debug for FetchRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FetchRequest")
            .field("subject_id", &self.subject_id)
            .field("credential", &"<redacted>")
            .field("record_type", &self.record_type)
            .finish()
    }
}

/// A source's own signature over the source-signed attestation statement
/// for this response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSignature {
    pub issued_at: i64,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FetchResponse {
    pub record: DataRecord,
    pub source_signature: Option<SourceSignature>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireErrorCode {
    AuthDenied,
    NotFound,
    Malformed,
}

/// Server → client frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WireResponse {
    Record {
        record: DataRecord,
        source_signature: Option<SourceSignature>,
    },
    Error {
        code: WireErrorCode,
    },
}

impl Canonical for WireResponse {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Credential {
    pub token: String,
    pub subject_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredRecord {
    pub subject_id: String,
    pub record_type: String,
    /// Unix seconds; becomes the served record's `fetched_at`.
    pub as_of: i64,
    pub content: CanonicalDoc,
}

/// Read-only after seeding. Each bearer token is scoped to one subject.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordStore {
    #[serde(default)]
    pub credentials: Vec<Credential>,
    #[serde(default)]
    pub records: Vec<StoredRecord>,
}

impl RecordStore {
    pub fn with_credential(mut self, token: &str, subject_id: &str) -> Self {
        self.credentials.push(Credential {
            token: token.to_string(),
            subject_id: subject_id.to_string(),
        });
        self
    }

    pub fn with_record(mut self, subject_id: &str, record_type: &str, as_of: i64, content: CanonicalDoc) -> Self {
        self.records.push(StoredRecord {
            subject_id: subject_id.to_string(),
            record_type: record_type.to_string(),
            as_of,
            content,
        });
        self
    }

    /// True iff `token` is non-empty and scoped to `subject_id`. Unknown
    /// subjects and bad tokens are indistinguishable here.
    pub fn authorize(&self, token: &str, subject_id: &str) -> bool {
        !token.is_empty()
            && self
                .credentials
                .iter()
                .any(|c| c.token == token && c.subject_id == subject_id)
    }

    pub fn lookup(&self, subject_id: &str, record_type: &str) -> Option<&StoredRecord> {
        self.records
            .iter()
            .find(|r| r.subject_id == subject_id && r.record_type == record_type)
    }
}

#[cfg(test)]
mod tests;
