//! Sealed delivery: X25519 + HKDF-SHA256 + ChaCha20-Poly1305, keyed to the
//! recipient's Ed25519 identity through its Montgomery form.
//!
//! The plaintext digest travels in the clear so a verifier can check linkage
//! without the key. The sealer signs every other field, ciphertext included.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use curve25519_dalek::montgomery::MontgomeryPoint;
use hkdf::Hkdf;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::canonical::{canonical_encode, Canonical};
use crate::crypto::{verify_sig, Digest, DomainTag, KeyIdentity, KeyRole, PublicKeyBytes, SecretKey, Signature};
use crate::reason::ReasonCode;
use crate::record::DataRecord;

pub const SEAL_SUITE: &str = "PROPS-SEAL-v1/X25519-HKDF-SHA256/ChaCha20Poly1305";
const KDF_INFO: &[u8] = b"PROPS-SEAL-v1 key+nonce";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SealError {
    #[error("sealing requires a recipient identity, got {0}")]
    WrongRecipientRole(KeyRole),
    #[error("recipient public key is not a valid curve point")]
    InvalidRecipient,
    #[error("decryption failed")]
    DecryptFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SealedPayload {
    pub suite: String,
    pub recipient_fingerprint: Digest,
    /// Ephemeral X25519 public key.
    pub enc: PublicKeyBytes,
    /// Lowercase hex.
    pub ciphertext: String,
    pub plaintext_digest: Digest,
    pub sealer: KeyIdentity,
    pub signature: Signature,
}

impl Canonical for SealedPayload {}

#[derive(Serialize)]
struct Header<'a> {
    enc: &'a PublicKeyBytes,
    plaintext_digest: &'a Digest,
    recipient_fingerprint: &'a Digest,
    suite: &'a str,
}

#[derive(Serialize)]
struct SealedBody<'a> {
    ciphertext: &'a str,
    enc: &'a PublicKeyBytes,
    plaintext_digest: &'a Digest,
    recipient_fingerprint: &'a Digest,
    sealer: &'a KeyIdentity,
    suite: &'a str,
}

impl SealedPayload {
    fn header_bytes(&self) -> Vec<u8> {
        canonical_encode(&Header {
            enc: &self.enc,
            plaintext_digest: &self.plaintext_digest,
            recipient_fingerprint: &self.recipient_fingerprint,
            suite: &self.suite,
        })
        .expect("strings and digests")
    }

    fn body_bytes(&self) -> Vec<u8> {
        canonical_encode(&SealedBody {
            ciphertext: &self.ciphertext,
            enc: &self.enc,
            plaintext_digest: &self.plaintext_digest,
            recipient_fingerprint: &self.recipient_fingerprint,
            sealer: &self.sealer,
            suite: &self.suite,
        })
        .expect("strings and digests")
    }
}

fn derive_key(shared: &MontgomeryPoint, enc: &PublicKeyBytes, recipient: &MontgomeryPoint) -> Option<([u8; 32], [u8; 12])> {
    if shared.as_bytes() == &[0u8; 32] {
        return None;
    }
    let mut salt = [0u8; 64];
    salt[..32].copy_from_slice(&enc.0);
    salt[32..].copy_from_slice(recipient.as_bytes());
    let hk = Hkdf::<Sha256>::new(Some(&salt), shared.as_bytes());
    let mut okm = [0u8; 44];
    hk.expand(KDF_INFO, &mut okm).expect("44 bytes is a valid HKDF length");
    let mut key = [0u8; 32];
    let mut nonce = [0u8; 12];
    key.copy_from_slice(&okm[..32]);
    nonce.copy_from_slice(&okm[32..]);
    Some((key, nonce))
}

/// Encrypts `record` to `recipient` and signs the result as `sealer_key`.
pub fn seal_payload(
    sealer_key: &SecretKey,
    recipient: &KeyIdentity,
    record: &DataRecord,
) -> Result<SealedPayload, SealError> {
    seal_with_ephemeral(sealer_key, recipient, record, rand::random())
}

pub(crate) fn seal_with_ephemeral(
    sealer_key: &SecretKey,
    recipient: &KeyIdentity,
    record: &DataRecord,
    ephemeral: [u8; 32],
) -> Result<SealedPayload, SealError> {
    if recipient.role != KeyRole::Recipient {
        return Err(SealError::WrongRecipientRole(recipient.role));
    }
    let recipient_point = recipient
        .verifying_key()
        .map_err(|_| SealError::InvalidRecipient)?
        .to_montgomery();
    let enc = PublicKeyBytes(MontgomeryPoint::mul_base_clamped(ephemeral).to_bytes());
    let shared = recipient_point.mul_clamped(ephemeral);
    let (key, nonce) = derive_key(&shared, &enc, &recipient_point).ok_or(SealError::InvalidRecipient)?;

    let plaintext = record.canonical_bytes();
    let mut sealed = SealedPayload {
        suite: SEAL_SUITE.to_string(),
        recipient_fingerprint: recipient.fingerprint,
        enc,
        ciphertext: String::new(),
        plaintext_digest: record.canonical_digest(),
        sealer: sealer_key.identity(),
        signature: Signature([0; 64]),
    };
    let ciphertext = ChaCha20Poly1305::new(Key::from_slice(&key))
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: &plaintext,
                aad: &sealed.header_bytes(),
            },
        )
        .expect("in-memory encryption");
    sealed.ciphertext = hex::encode(ciphertext);
    sealed.signature = sealer_key.sign(DomainTag::SealedPayload, &sealed.body_bytes());
    Ok(sealed)
}

/// Decrypts with the recipient's secret and checks the plaintext against the
/// digest in the header.
pub fn open_payload(recipient_secret: &SecretKey, sealed: &SealedPayload) -> Result<DataRecord, SealError> {
    let fail = SealError::DecryptFailure;
    let me = recipient_secret.identity();
    if sealed.suite != SEAL_SUITE || sealed.recipient_fingerprint != me.fingerprint {
        return Err(fail);
    }
    let ciphertext = lowercase_hex(&sealed.ciphertext).ok_or(SealError::DecryptFailure)?;
    let recipient_point = me.verifying_key().map_err(|_| SealError::DecryptFailure)?.to_montgomery();
    let shared = MontgomeryPoint(sealed.enc.0).mul_clamped(recipient_secret.x25519_scalar_bytes());
    let (key, nonce) = derive_key(&shared, &sealed.enc, &recipient_point).ok_or(SealError::DecryptFailure)?;
    let plaintext = ChaCha20Poly1305::new(Key::from_slice(&key))
        .decrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: &ciphertext,
                aad: &sealed.header_bytes(),
            },
        )
        .map_err(|_| SealError::DecryptFailure)?;
    let record = DataRecord::from_canonical_bytes(&plaintext).map_err(|_| SealError::DecryptFailure)?;
    if record.canonical_digest() != sealed.plaintext_digest {
        return Err(fail);
    }
    Ok(record)
}

fn lowercase_hex(text: &str) -> Option<Vec<u8>> {
    if text.bytes().any(|b| b.is_ascii_uppercase()) {
        return None;
    }
    hex::decode(text).ok()
}

/// Header well-formedness and the sealer's signature. Who the sealer must be
/// is decided by the chain.
pub fn check_seal_signature(sealed: &SealedPayload) -> Result<(), ReasonCode> {
    if sealed.suite != SEAL_SUITE || !sealed.sealer.is_well_formed() || lowercase_hex(&sealed.ciphertext).is_none() {
        return Err(ReasonCode::Malformed);
    }
    if !verify_sig(&sealed.sealer, DomainTag::SealedPayload, &sealed.body_bytes(), &sealed.signature) {
        return Err(ReasonCode::BadSignature);
    }
    Ok(())
}
