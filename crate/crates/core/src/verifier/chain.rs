use serde::{Deserialize, Serialize};

use super::policy::{ModelRequirement, VerifierPolicy};
use super::report::{CheckResult, VerificationReport};
use super::seal::{check_seal_signature, SealedPayload};
use crate::attestor::{check_attestation_signature, check_attestation_trust, SourceAttestation};
use crate::canonical::Canonical;
use crate::committee::verify_committee_proof;
use crate::crypto::{Digest, KeyIdentity};
use crate::filter::{check_filter_proof_signature, FilterProof, FilterSpec};
use crate::pinned::{verify_executor_proof, InferenceOutput, InferenceProof, ModelSpec};
use crate::reason::ReasonCode;
use crate::record::DataRecord;

pub const CHAIN_SCHEMA: &str = "props.chain/v1";

/// Attestations issued further than this into the verifier's future are
/// rejected as not yet valid.
pub const MAX_CLOCK_SKEW_SECONDS: i64 = 60;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChainPayload {
    Record { record: DataRecord },
    Output { output: InferenceOutput },
    Sealed { sealed: SealedPayload },
}

impl ChainPayload {
    pub fn is_sealed(&self) -> bool {
        matches!(self, ChainPayload::Sealed { .. })
    }

    /// Digest of the delivered plaintext, as claimed by the payload.
    pub fn digest(&self) -> Digest {
        match self {
            ChainPayload::Record { record } => record.canonical_digest(),
            ChainPayload::Output { output } => output.canonical_digest(),
            ChainPayload::Sealed { sealed } => sealed.plaintext_digest,
        }
    }
}

/// A composed pipeline: attestation, disclosed filter specs with their
/// proofs, optional inference proof, and the delivered payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropChain {
    pub schema: String,
    pub attestation: SourceAttestation,
    pub filter_specs: Vec<FilterSpec>,
    pub filter_proofs: Vec<FilterProof>,
    pub inference_proof: Option<InferenceProof>,
    pub payload: ChainPayload,
    /// Latest signed timestamp in the chain.
    pub created_at: i64,
}

impl Canonical for PropChain {}

impl PropChain {
    pub fn new(
        attestation: SourceAttestation,
        filters: Vec<(FilterSpec, FilterProof)>,
        inference_proof: Option<InferenceProof>,
        payload: ChainPayload,
    ) -> Self {
        let (filter_specs, filter_proofs) = filters.into_iter().unzip();
        let mut chain = PropChain {
            schema: CHAIN_SCHEMA.to_string(),
            attestation,
            filter_specs,
            filter_proofs,
            inference_proof,
            payload,
            created_at: 0,
        };
        chain.created_at = chain.expected_created_at();
        chain
    }

    pub fn expected_created_at(&self) -> i64 {
        let executed = self.inference_proof.as_ref().map_or(i64::MIN, |p| p.executed_at);
        self.attestation.issued_at.max(executed)
    }

    /// Digest the payload must match: inference output, else last filter
    /// output, else the attested content.
    pub fn terminal_digest(&self) -> Digest {
        if let Some(p) = &self.inference_proof {
            return p.output_digest;
        }
        self.filter_proofs
            .last()
            .map_or(self.attestation.content_digest, |p| p.output_digest)
    }

    /// Identity that signed the last data-carrying hop before delivery.
    pub fn terminal_signer(&self) -> &KeyIdentity {
        self.filter_proofs
            .last()
            .map_or(&self.attestation.attestor_identity, |p| &p.executor_identity)
    }
}

fn ensure(cond: bool, reason: ReasonCode) -> Result<(), ReasonCode> {
    if cond {
        Ok(())
    } else {
        Err(reason)
    }
}

fn check_freshness(att: &SourceAttestation, max_age: i64, now: i64) -> Result<(), ReasonCode> {
    if att.issued_at > now.saturating_add(MAX_CLOCK_SKEW_SECONDS) {
        return Err(ReasonCode::NotYetValid);
    }
    ensure(now.saturating_sub(att.issued_at) <= max_age, ReasonCode::Stale)
}

fn check_disclosure(chain: &PropChain) -> Result<(), ReasonCode> {
    ensure(
        chain.filter_specs.len() == chain.filter_proofs.len(),
        ReasonCode::Malformed,
    )?;
    for spec in &chain.filter_specs {
        ensure(spec.validate().is_ok(), ReasonCode::FilterSpecMismatch)?;
    }
    Ok(())
}

fn check_filter_spec(chain: &PropChain, i: usize) -> Result<(), ReasonCode> {
    let spec = chain.filter_specs.get(i).ok_or(ReasonCode::FilterSpecMismatch)?;
    ensure(
        spec.validate().is_ok() && chain.filter_proofs[i].spec_digest == spec.spec_digest,
        ReasonCode::FilterSpecMismatch,
    )
}

fn check_linkage(chain: &PropChain) -> Result<(), ReasonCode> {
    let mut current = chain.attestation.content_digest;
    for proof in &chain.filter_proofs {
        ensure(proof.input_digest == current, ReasonCode::LinkageBroken)?;
        current = proof.output_digest;
    }
    if let Some(p) = &chain.inference_proof {
        ensure(p.input_digest == current, ReasonCode::LinkageBroken)?;
    }
    Ok(())
}

fn check_model(chain: &PropChain, policy: &VerifierPolicy) -> Result<(), ReasonCode> {
    let proof = match (&policy.model_requirement, &chain.inference_proof) {
        (ModelRequirement::None, None) => return Ok(()),
        (ModelRequirement::None, Some(_)) | (_, None) => return Err(ReasonCode::ModelRequirementUnmet),
        (_, Some(p)) => p,
    };
    match &policy.model_requirement {
        ModelRequirement::None => unreachable!("handled above"),
        ModelRequirement::Exact { pinned_digest } => {
            verify_executor_proof(proof, pinned_digest, &policy.trusted_executors)
        }
        ModelRequirement::ServiceRef {
            service_id,
            trusted_executors,
        } => verify_executor_proof(
            proof,
            &ModelSpec::service_ref(service_id).pinned_digest(),
            trusted_executors,
        ),
        ModelRequirement::Committee {
            config,
            pinned_digest,
        } => verify_committee_proof(proof, config, pinned_digest),
    }
}

fn check_seal(chain: &PropChain, sealed: &SealedPayload) -> Result<(), ReasonCode> {
    check_seal_signature(sealed)?;
    ensure(sealed.sealer == *chain.terminal_signer(), ReasonCode::UntrustedSigner)
}

/// Runs every check against `policy` at time `now`. Never panics on
/// malformed content; every failure becomes a reason code in the report.
pub fn verify_chain(chain: &PropChain, policy: &VerifierPolicy, now: i64) -> VerificationReport {
    let att = &chain.attestation;
    let mut checks = Vec::new();
    let mut push = |id: String, r: Result<(), ReasonCode>| checks.push(CheckResult::from_result(id, r));

    push("chain.schema".into(), ensure(chain.schema == CHAIN_SCHEMA, ReasonCode::Malformed));
    push("attestation.signature".into(), check_attestation_signature(att));
    push(
        "attestation.signer_trust".into(),
        check_attestation_trust(att, &policy.trusted_attestors),
    );
    push(
        "attestation.source".into(),
        ensure(policy.trusted_sources.contains(&att.source_id), ReasonCode::UntrustedSource),
    );
    push(
        "attestation.record_type".into(),
        ensure(att.record_type == policy.required_record_type, ReasonCode::RecordTypeMismatch),
    );
    push(
        "attestation.freshness".into(),
        check_freshness(att, policy.max_age_seconds, now),
    );

    push("filters.disclosure".into(), check_disclosure(chain));
    for (i, proof) in chain.filter_proofs.iter().enumerate() {
        push(format!("filter.{i}.signature"), check_filter_proof_signature(proof));
        push(format!("filter.{i}.spec"), check_filter_spec(chain, i));
        push(
            format!("filter.{i}.executor_trust"),
            ensure(
                policy.trusted_executors.contains(&proof.executor_identity),
                ReasonCode::UntrustedSigner,
            ),
        );
        push(
            format!("filter.{i}.whitelist"),
            ensure(
                policy.filter_whitelist.contains(&proof.spec_digest),
                ReasonCode::FilterNotWhitelisted,
            ),
        );
    }

    push("linkage".into(), check_linkage(chain));
    push("model".into(), check_model(chain, policy));
    push(
        "payload.delivery".into(),
        ensure(
            policy.delivery.admits(chain.payload.is_sealed()),
            ReasonCode::DeliveryModeMismatch,
        ),
    );
    push(
        "payload.digest".into(),
        ensure(chain.payload.digest() == chain.terminal_digest(), ReasonCode::LinkageBroken),
    );
    if let ChainPayload::Sealed { sealed } = &chain.payload {
        push("payload.seal".into(), check_seal(chain, sealed));
    }
    push(
        "chain.created_at".into(),
        ensure(chain.created_at == chain.expected_created_at(), ReasonCode::Malformed),
    );

    VerificationReport::new(checks, now)
}

/// Decodes the canonical form strictly, then verifies. Undecodable input
/// yields a single failing `chain.decode` check.
pub fn verify_chain_bytes(bytes: &[u8], policy: &VerifierPolicy, now: i64) -> VerificationReport {
    match PropChain::from_canonical_bytes(bytes) {
        Ok(chain) => verify_chain(&chain, policy, now),
        Err(_) => VerificationReport::new(
            vec![CheckResult::from_result("chain.decode", Err(ReasonCode::Malformed))],
            now,
        ),
    }
}
