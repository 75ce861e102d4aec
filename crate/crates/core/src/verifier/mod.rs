//! Consumer-side verification of composed prop chains, sealed delivery, and
//! structured reports.
//!
//! Verification is pure and offline: the policy holds every trust root and
//! the clock is a parameter.

mod chain;
mod policy;
mod report;
mod seal;

pub use chain::{
    verify_chain, verify_chain_bytes, ChainPayload, PropChain, CHAIN_SCHEMA, MAX_CLOCK_SKEW_SECONDS,
};
pub use policy::{DeliveryRequirement, ModelRequirement, VerifierPolicy};
pub use report::{report_export, CheckResult, ReportError, VerificationReport, Verdict, REPORT_SCHEMA};
pub use seal::{check_seal_signature, open_payload, seal_payload, SealError, SealedPayload, SEAL_SUITE};

#[cfg(test)]
mod tests;
