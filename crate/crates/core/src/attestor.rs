//! Oracle-proxy attestation of source fetches.
//!
//! The attestor relays a client's request frame to an unmodified source,
//! hashes the exact frames it saw, and signs a statement binding the session
//! (source, record type, credential digest) to the digest of the returned
//! record. This simulates a TEE or zkTLS oracle's trust boundary; it is not
//! transcript cryptography.
//!
//! Sources that sign their own responses are wrapped into the same
//! attestation shape by [`wrap_source_signed`].

use std::collections::BTreeSet;
use std::net::TcpStream;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::Canonical;
use crate::crypto::{digest, verify_sig, Digest, DomainTag, KeyIdentity, KeyRole, SecretKey, Signature};
use crate::reason::ReasonCode;
use crate::record::DataRecord;
use crate::source_net::{
    self, read_frame, spawn_listener, write_frame, ClientOptions, FetchRequest, FetchResponse,
    FrameError, ServerHandle, SourceDescriptor, SourceNetError,
};

#[derive(Debug, Error)]
pub enum AttestorError {
    #[error(transparent)]
    Source(#[from] SourceNetError),
    #[error("attestor unavailable: {0}")]
    AttestorUnavailable(String),
    #[error("key role {0} cannot sign attestations")]
    WrongRole(KeyRole),
    #[error("response carries no source signature")]
    MissingSourceSignature,
    #[error("source signature does not verify")]
    BadSourceSignature,
    #[error("unknown source {0:?}")]
    UnknownSource(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttestationMode {
    OracleProxy,
    SourceSigned,
}

impl AttestationMode {
    pub fn signer_role(self) -> KeyRole {
        match self {
            AttestationMode::OracleProxy => KeyRole::Attestor,
            AttestationMode::SourceSigned => KeyRole::Source,
        }
    }
}

#[derive(Serialize)]
struct RequestCommitment<'a> {
    credential_digest: Digest,
    record_type: &'a str,
    source_id: &'a str,
}

/// Commitment to the request context. The credential enters only as its digest.
pub fn request_digest(source_id: &str, record_type: &str, credential: &str) -> Digest {
    let commitment = RequestCommitment {
        credential_digest: digest(credential.as_bytes()),
        record_type,
        source_id,
    };
    digest(&crate::canonical::canonical_encode(&commitment).expect("strings and digests only"))
}

/// The signed statement of a [`SourceAttestation`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttestationBody {
    pub mode: AttestationMode,
    pub attestor_identity: KeyIdentity,
    pub source_id: String,
    /// Disclosed so a verifier can require a record type without the credential.
    pub record_type: String,
    pub request_digest: Digest,
    pub content_digest: Digest,
    pub issued_at: i64,
}

impl Canonical for AttestationBody {}

impl AttestationBody {
    pub fn for_fetch(
        mode: AttestationMode,
        signer: KeyIdentity,
        request: &FetchRequest,
        source_id: &str,
        record: &DataRecord,
        issued_at: i64,
    ) -> Self {
        AttestationBody {
            mode,
            attestor_identity: signer,
            source_id: source_id.to_string(),
            record_type: request.record_type.clone(),
            request_digest: request_digest(source_id, &request.record_type, &request.credential),
            content_digest: record.canonical_digest(),
            issued_at,
        }
    }

    pub fn sign(self, key: &SecretKey) -> SourceAttestation {
        let signature = key.sign(DomainTag::SourceAttestation, &self.canonical_bytes());
        SourceAttestation::from_parts(self, signature)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceAttestation {
    pub mode: AttestationMode,
    pub attestor_identity: KeyIdentity,
    pub source_id: String,
    pub record_type: String,
    pub request_digest: Digest,
    pub content_digest: Digest,
    pub issued_at: i64,
    pub signature: Signature,
}

impl Canonical for SourceAttestation {}

impl SourceAttestation {
    fn from_parts(body: AttestationBody, signature: Signature) -> Self {
        SourceAttestation {
            mode: body.mode,
            attestor_identity: body.attestor_identity,
            source_id: body.source_id,
            record_type: body.record_type,
            request_digest: body.request_digest,
            content_digest: body.content_digest,
            issued_at: body.issued_at,
            signature,
        }
    }

    pub fn body(&self) -> AttestationBody {
        AttestationBody {
            mode: self.mode,
            attestor_identity: self.attestor_identity.clone(),
            source_id: self.source_id.clone(),
            record_type: self.record_type.clone(),
            request_digest: self.request_digest,
            content_digest: self.content_digest,
            issued_at: self.issued_at,
        }
    }
}

/// Digests of the exact frames the attestor relayed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptCommitment {
    pub source_id: String,
    pub request_frame_digest: Digest,
    pub request_len: i64,
    pub response_frame_digest: Digest,
    pub response_len: i64,
    pub observed_at: i64,
}

impl Canonical for TranscriptCommitment {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttestedFetch {
    pub record: DataRecord,
    pub attestation: SourceAttestation,
    pub transcript: TranscriptCommitment,
}

/// Relays `request` to `source`, then signs an oracle-proxy attestation for
/// the record it returns.
pub fn attest_fetch(
    attestor_key: &SecretKey,
    source: &SourceDescriptor,
    request: &FetchRequest,
    opts: ClientOptions,
) -> Result<AttestedFetch, AttestorError> {
    if attestor_key.role() != KeyRole::Attestor {
        return Err(AttestorError::WrongRole(attestor_key.role()));
    }
    let request_frame = request.canonical_bytes();
    let response_frame = source_net::exchange(&source.listen_endpoint, &request_frame, opts)?;
    let response = source_net::parse_response(&response_frame)?;
    let issued_at = crate::unix_now();
    let body = AttestationBody::for_fetch(
        AttestationMode::OracleProxy,
        attestor_key.identity(),
        request,
        &source.source_id,
        &response.record,
        issued_at,
    );
    Ok(AttestedFetch {
        attestation: body.sign(attestor_key),
        record: response.record,
        transcript: TranscriptCommitment {
            source_id: source.source_id.clone(),
            request_frame_digest: digest(&request_frame),
            request_len: request_frame.len() as i64,
            response_frame_digest: digest(&response_frame),
            response_len: response_frame.len() as i64,
            observed_at: issued_at,
        },
    })
}

/// Lifts a source-signed response into a `source-signed` attestation. The
/// signature is the source's own; no attestor is involved.
pub fn wrap_source_signed(
    response: &FetchResponse,
    request: &FetchRequest,
    source_identity: &KeyIdentity,
) -> Result<SourceAttestation, AttestorError> {
    let sig = response
        .source_signature
        .as_ref()
        .ok_or(AttestorError::MissingSourceSignature)?;
    let body = AttestationBody::for_fetch(
        AttestationMode::SourceSigned,
        source_identity.clone(),
        request,
        &response.record.source_id,
        &response.record,
        sig.issued_at,
    );
    if source_identity.role != KeyRole::Source
        || !verify_sig(
            source_identity,
            DomainTag::SourceAttestation,
            &body.canonical_bytes(),
            &sig.signature,
        )
    {
        return Err(AttestorError::BadSourceSignature);
    }
    Ok(SourceAttestation::from_parts(body, sig.signature))
}

/// Structure and signature only; trust is checked separately.
pub fn check_attestation_signature(att: &SourceAttestation) -> Result<(), ReasonCode> {
    let id = &att.attestor_identity;
    if !id.is_well_formed()
        || id.role != att.mode.signer_role()
        || att.source_id.is_empty()
        || att.record_type.is_empty()
        || att.issued_at <= 0
    {
        return Err(ReasonCode::Malformed);
    }
    if !verify_sig(
        id,
        DomainTag::SourceAttestation,
        &att.body().canonical_bytes(),
        &att.signature,
    ) {
        return Err(ReasonCode::BadSignature);
    }
    Ok(())
}

pub fn check_attestation_trust(
    att: &SourceAttestation,
    trust: &BTreeSet<KeyIdentity>,
) -> Result<(), ReasonCode> {
    if trust.contains(&att.attestor_identity) {
        Ok(())
    } else {
        Err(ReasonCode::UntrustedSigner)
    }
}

/// Ok iff the signature is valid, the fields are well formed, and the signer
/// is in `trust`.
pub fn verify_attestation(
    att: &SourceAttestation,
    trust: &BTreeSet<KeyIdentity>,
) -> Result<(), ReasonCode> {
    check_attestation_signature(att)?;
    check_attestation_trust(att, trust)
}

/// [`verify_attestation`] plus the binding to a concrete record.
pub fn verify_attested_record(
    record: &DataRecord,
    att: &SourceAttestation,
    trust: &BTreeSet<KeyIdentity>,
) -> Result<(), ReasonCode> {
    verify_attestation(att, trust)?;
    if record.canonical_digest() != att.content_digest {
        return Err(ReasonCode::LinkageBroken);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Attestor as a network service.

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttestRequest {
    pub source_id: String,
    pub request: FetchRequest,
}

impl Canonical for AttestRequest {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttestErrorCode {
    AuthDenied,
    NotFound,
    Malformed,
    UnknownSource,
    SourceUnreachable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttestReply {
    Attested {
        record: DataRecord,
        attestation: SourceAttestation,
        transcript: TranscriptCommitment,
    },
    Error {
        code: AttestErrorCode,
    },
}

impl Canonical for AttestReply {}

struct AttestorService {
    key: Mutex<SecretKey>,
    sources: Vec<SourceDescriptor>,
    opts: ClientOptions,
}

impl AttestorService {
    fn respond(&self, frame: &[u8]) -> AttestReply {
        let err = |code| AttestReply::Error { code };
        let Ok(req) = AttestRequest::from_canonical_bytes(frame) else {
            return err(AttestErrorCode::Malformed);
        };
        let Some(source) = self.sources.iter().find(|s| s.source_id == req.source_id) else {
            return err(AttestErrorCode::UnknownSource);
        };
        let key = self.key.lock().expect("attestor key lock").clone();
        match attest_fetch(&key, source, &req.request, self.opts) {
            Ok(fetched) => AttestReply::Attested {
                record: fetched.record,
                attestation: fetched.attestation,
                transcript: fetched.transcript,
            },
            Err(AttestorError::Source(SourceNetError::AuthDenied)) => err(AttestErrorCode::AuthDenied),
            Err(AttestorError::Source(SourceNetError::NotFound)) => err(AttestErrorCode::NotFound),
            Err(AttestorError::Source(SourceNetError::MalformedFrame(_))) => {
                err(AttestErrorCode::Malformed)
            }
            Err(_) => err(AttestErrorCode::SourceUnreachable),
        }
    }

    fn handle(&self, mut stream: TcpStream) {
        loop {
            let frame = match read_frame(&mut stream) {
                Ok(f) => f,
                Err(FrameError::Closed) => return,
                Err(_) => {
                    let reply = AttestReply::Error {
                        code: AttestErrorCode::Malformed,
                    };
                    let _ = write_frame(&mut stream, &reply.canonical_bytes());
                    return;
                }
            };
            let reply = self.respond(&frame);
            if write_frame(&mut stream, &reply.canonical_bytes()).is_err() {
                return;
            }
        }
    }
}

/// Runs the attestor as a framed TCP service in front of `sources`.
pub fn serve_attestor(
    endpoint: &str,
    key: SecretKey,
    sources: Vec<SourceDescriptor>,
    opts: ClientOptions,
) -> Result<ServerHandle, AttestorError> {
    if key.role() != KeyRole::Attestor {
        return Err(AttestorError::WrongRole(key.role()));
    }
    let service = Arc::new(AttestorService {
        key: Mutex::new(key),
        sources,
        opts,
    });
    spawn_listener(endpoint, move |s| service.handle(s)).map_err(|e| {
        AttestorError::Source(SourceNetError::BindFailure {
            endpoint: endpoint.to_string(),
            reason: e.to_string(),
        })
    })
}

/// Client side of [`serve_attestor`].
pub fn fetch_attested(
    attestor_endpoint: &str,
    source_id: &str,
    request: &FetchRequest,
    opts: ClientOptions,
) -> Result<AttestedFetch, AttestorError> {
    let frame = AttestRequest {
        source_id: source_id.to_string(),
        request: request.clone(),
    }
    .canonical_bytes();
    let reply_bytes = source_net::exchange(attestor_endpoint, &frame, opts).map_err(|e| match e {
        SourceNetError::ConnectFailure { reason, .. } => AttestorError::AttestorUnavailable(reason),
        other => AttestorError::Source(other),
    })?;
    let reply = AttestReply::from_canonical_bytes(&reply_bytes)
        .map_err(|e| AttestorError::Source(SourceNetError::MalformedFrame(e.to_string())))?;
    match reply {
        AttestReply::Attested {
            record,
            attestation,
            transcript,
        } => Ok(AttestedFetch {
            record,
            attestation,
            transcript,
        }),
        AttestReply::Error { code } => Err(match code {
            AttestErrorCode::AuthDenied => AttestorError::Source(SourceNetError::AuthDenied),
            AttestErrorCode::NotFound => AttestorError::Source(SourceNetError::NotFound),
            AttestErrorCode::Malformed => AttestorError::Source(SourceNetError::MalformedFrame(
                "attestor rejected request".to_string(),
            )),
            AttestErrorCode::UnknownSource => AttestorError::UnknownSource(source_id.to_string()),
            AttestErrorCode::SourceUnreachable => {
                AttestorError::AttestorUnavailable("source unreachable from attestor".to_string())
            }
        }),
    }
}
