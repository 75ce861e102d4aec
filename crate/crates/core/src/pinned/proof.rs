use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{execute_pinned, ExecError, InferenceOutput, ModelSpec, ModelWeights};
use crate::canonical::{canonical_encode, Canonical};
use crate::crypto::{verify_sig, Digest, DomainTag, KeyIdentity, KeyRole, SecretKey, Signature};
use crate::reason::ReasonCode;
use crate::record::DataRecord;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InferenceError {
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("supplied output differs from the pinned execution")]
    OutputMismatch,
    #[error("service {0:?} is not registered to this executor")]
    UnknownService(String),
    #[error("key role {0} cannot sign inference proofs")]
    WrongRole(KeyRole),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutorSignature {
    pub identity: KeyIdentity,
    pub signature: Signature,
}

/// What every executor signature covers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceStatement {
    pub pinned_digest: Digest,
    pub input_digest: Digest,
    pub output_digest: Digest,
    pub executed_at: i64,
}

impl InferenceStatement {
    pub fn bytes(&self) -> Vec<u8> {
        canonical_encode(self).expect("digests and integers only")
    }

    pub fn sign(&self, key: &SecretKey) -> ExecutorSignature {
        ExecutorSignature {
            identity: key.identity(),
            signature: key.sign(DomainTag::InferenceProof, &self.bytes()),
        }
    }
}

/// Proof that `H(Y)` is the pinned spec's output on `H(X)`. One signature
/// from a single executor, or one per agreeing committee node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceProof {
    pub pinned_digest: Digest,
    pub input_digest: Digest,
    pub output_digest: Digest,
    pub executed_at: i64,
    pub executor_signatures: Vec<ExecutorSignature>,
}

impl Canonical for InferenceProof {}

impl InferenceProof {
    pub fn statement(&self) -> InferenceStatement {
        InferenceStatement {
            pinned_digest: self.pinned_digest,
            input_digest: self.input_digest,
            output_digest: self.output_digest,
            executed_at: self.executed_at,
        }
    }

    pub fn from_statement(statement: InferenceStatement, executor_signatures: Vec<ExecutorSignature>) -> Self {
        InferenceProof {
            pinned_digest: statement.pinned_digest,
            input_digest: statement.input_digest,
            output_digest: statement.output_digest,
            executed_at: statement.executed_at,
            executor_signatures,
        }
    }
}

/// Identity is well formed with the expected role and the signature covers
/// `statement`.
pub fn check_executor_signature(
    sig: &ExecutorSignature,
    role: KeyRole,
    statement: &InferenceStatement,
) -> Result<(), ReasonCode> {
    if !sig.identity.is_well_formed() || sig.identity.role != role {
        return Err(ReasonCode::Malformed);
    }
    if !verify_sig(
        &sig.identity,
        DomainTag::InferenceProof,
        &statement.bytes(),
        &sig.signature,
    ) {
        return Err(ReasonCode::BadSignature);
    }
    Ok(())
}

fn single_signature_proof(
    key: &SecretKey,
    pinned_digest: Digest,
    input: &DataRecord,
    output: &InferenceOutput,
    executed_at: i64,
) -> InferenceProof {
    let statement = InferenceStatement {
        pinned_digest,
        input_digest: input.canonical_digest(),
        output_digest: output.canonical_digest(),
        executed_at,
    };
    let sig = statement.sign(key);
    InferenceProof::from_statement(statement, vec![sig])
}

/// Re-executes the exact pin and signs only a matching output.
pub fn attest_inference(
    executor_key: &SecretKey,
    spec: &ModelSpec,
    weights: &ModelWeights,
    input: &DataRecord,
    output: &InferenceOutput,
    executed_at: i64,
) -> Result<InferenceProof, InferenceError> {
    if executor_key.role() != KeyRole::Executor {
        return Err(InferenceError::WrongRole(executor_key.role()));
    }
    if execute_pinned(spec, weights, input)? != *output {
        return Err(InferenceError::OutputMismatch);
    }
    Ok(single_signature_proof(
        executor_key,
        spec.pinned_digest(),
        input,
        output,
        executed_at,
    ))
}

struct RegisteredService {
    operator: KeyIdentity,
    spec: ModelSpec,
    weights: ModelWeights,
}

/// Services run by trusted operators. The backing model stays private to the
/// operator; proofs only ever name the service.
#[derive(Default)]
pub struct ServiceRegistry {
    services: BTreeMap<String, RegisteredService>,
}

impl ServiceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, service_id: &str, operator: KeyIdentity, spec: ModelSpec, weights: ModelWeights) {
        self.services.insert(
            service_id.to_string(),
            RegisteredService {
                operator,
                spec,
                weights,
            },
        );
    }

    /// Runs the service on `input` as its operator would.
    pub fn invoke(&self, service_id: &str, input: &DataRecord) -> Result<InferenceOutput, InferenceError> {
        let svc = self
            .services
            .get(service_id)
            .ok_or_else(|| InferenceError::UnknownService(service_id.to_string()))?;
        Ok(execute_pinned(&svc.spec, &svc.weights, input)?)
    }
}

/// Model-consistency proof: binds the `ServiceRef` pin for `service_id`.
pub fn attest_service_ref(
    registry: &ServiceRegistry,
    executor_key: &SecretKey,
    service_id: &str,
    input: &DataRecord,
    output: &InferenceOutput,
    executed_at: i64,
) -> Result<InferenceProof, InferenceError> {
    let svc = registry
        .services
        .get(service_id)
        .filter(|s| s.operator == executor_key.identity())
        .ok_or_else(|| InferenceError::UnknownService(service_id.to_string()))?;
    if execute_pinned(&svc.spec, &svc.weights, input)? != *output {
        return Err(InferenceError::OutputMismatch);
    }
    Ok(single_signature_proof(
        executor_key,
        ModelSpec::service_ref(service_id).pinned_digest(),
        input,
        output,
        executed_at,
    ))
}

/// Single-executor proof check: pin, signature, then trust.
pub fn verify_executor_proof(
    proof: &InferenceProof,
    expected_pinned: &Digest,
    trusted_executors: &BTreeSet<KeyIdentity>,
) -> Result<(), ReasonCode> {
    if proof.pinned_digest != *expected_pinned {
        return Err(ReasonCode::PinMismatch);
    }
    let [sig] = proof.executor_signatures.as_slice() else {
        return Err(ReasonCode::Malformed);
    };
    check_executor_signature(sig, KeyRole::Executor, &proof.statement())?;
    if !trusted_executors.contains(&sig.identity) {
        return Err(ReasonCode::UntrustedSigner);
    }
    Ok(())
}
