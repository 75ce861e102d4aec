//! Protected pipelines ("props"): authenticated, privacy-preserving data paths
//! from a deep-web source, through user-controlled filters and pinned-model
//! inference, to a policy-driven verifier.
//!
//! Every hop emits a signed proof over content digests. Proofs compose into a
//! [`PropChain`](verifier::PropChain) that a consumer checks offline against a
//! [`VerifierPolicy`](verifier::VerifierPolicy).
//!
//! Module map:
//!
//! - [`canonical`], [`crypto`], [`record`]: data model, canonical encoding,
//!   digests, signatures and keys.
//! - [`source_net`]: framed TCP record server, client and a fault-injecting proxy.
//! - [`attestor`]: the oracle proxy that turns a fetch session into a
//!   [`SourceAttestation`](attestor::SourceAttestation).
//! - [`filter`]: whitelisted record transforms and their proofs.
//! - [`pinned`]: Q32.32 fixed-point scorer, model pinning and inference proofs.
//! - [`committee`]: exact-match quorum execution across simulated oracle nodes.
//! - [`verifier`]: chain verification, sealed delivery and reports.

pub mod attestor;
pub mod canonical;
pub mod committee;
pub mod crypto;
pub mod filter;
pub mod fixtures;
pub mod pinned;
pub mod reason;
pub mod record;
pub mod source_net;
pub mod verifier;

pub use canonical::{Canonical, CanonicalDoc, CanonicalError};
pub use crypto::{digest, keygen, Digest, DomainTag, KeyIdentity, KeyRole, SecretKey, Signature};
pub use reason::ReasonCode;
pub use record::DataRecord;

/// Current wall-clock time in unix seconds.
pub fn unix_now() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}
