//! SHA-256 digests, Ed25519 identities and domain-separated signatures.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("no secret key held for identity {0}")]
    UnknownKey(Digest),
    #[error("invalid hex encoding: {0}")]
    Hex(String),
    #[error("invalid public key")]
    InvalidPublicKey,
    #[error("unknown key role {0:?}")]
    UnknownRole(String),
}

/// Parses lowercase hex of an exact length. Uppercase is rejected so every
/// value has a single textual form.
pub fn strict_hex<const N: usize>(text: &str) -> Result<[u8; N], CryptoError> {
    if text.len() != N * 2 {
        return Err(CryptoError::Hex(format!(
            "expected {} hex chars, got {}",
            N * 2,
            text.len()
        )));
    }
    if !text.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
        return Err(CryptoError::Hex("non-lowercase-hex character".to_string()));
    }
    let mut out = [0u8; N];
    hex::decode_to_slice(text, &mut out).map_err(|e| CryptoError::Hex(e.to_string()))?;
    Ok(out)
}

macro_rules! hex_bytes_serde {
    ($ty:ident, $n:expr) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&hex::encode(self.0))
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = String::deserialize(d)?;
                strict_hex::<$n>(&text)
                    .map($ty)
                    .map_err(serde::de::Error::custom)
            }
        }

        impl FromStr for $ty {
            type Err = CryptoError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                strict_hex::<$n>(s).map($ty)
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&hex::encode(self.0))
            }
        }

        impl fmt::Debug for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($ty), hex::encode(self.0))
            }
        }
    };
}

/// 32-byte SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; 32]);
hex_bytes_serde!(Digest, 32);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..6])
    }
}

pub fn digest(bytes: &[u8]) -> Digest {
    Digest(Sha256::digest(bytes).into())
}

/// Ed25519 public key bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKeyBytes(pub [u8; 32]);
hex_bytes_serde!(PublicKeyBytes, 32);

/// Ed25519 signature bytes.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; 64]);
hex_bytes_serde!(Signature, 64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyRole {
    Source,
    Attestor,
    Executor,
    CommitteeNode,
    Recipient,
}

impl KeyRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            KeyRole::Source => "source",
            KeyRole::Attestor => "attestor",
            KeyRole::Executor => "executor",
            KeyRole::CommitteeNode => "committee-node",
            KeyRole::Recipient => "recipient",
        }
    }
}

impl fmt::Display for KeyRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KeyRole {
    type Err = CryptoError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "source" => KeyRole::Source,
            "attestor" => KeyRole::Attestor,
            "executor" => KeyRole::Executor,
            "committee-node" => KeyRole::CommitteeNode,
            "recipient" => KeyRole::Recipient,
            other => return Err(CryptoError::UnknownRole(other.to_string())),
        })
    }
}

/// Public half of a key pair, with its role fixed at creation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyIdentity {
    pub role: KeyRole,
    pub fingerprint: Digest,
    pub public_key: PublicKeyBytes,
}

impl KeyIdentity {
    pub fn new(role: KeyRole, public_key: PublicKeyBytes) -> Self {
        KeyIdentity {
            role,
            fingerprint: digest(&public_key.0),
            public_key,
        }
    }

    /// Fingerprint recomputes and the key is a valid curve point.
    pub fn is_well_formed(&self) -> bool {
        self.fingerprint == digest(&self.public_key.0) && self.verifying_key().is_ok()
    }

    pub fn verifying_key(&self) -> Result<VerifyingKey, CryptoError> {
        VerifyingKey::from_bytes(&self.public_key.0).map_err(|_| CryptoError::InvalidPublicKey)
    }
}

impl crate::canonical::Canonical for KeyIdentity {}

/// One-byte domain separators. Every signature covers `tag || digest(payload)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DomainTag {
    SourceAttestation = 0x01,
    FilterProof = 0x02,
    InferenceProof = 0x03,
    SealedPayload = 0x04,
}

fn signing_message(tag: DomainTag, payload: &[u8]) -> [u8; 33] {
    let mut msg = [0u8; 33];
    msg[0] = tag as u8;
    msg[1..].copy_from_slice(digest(payload).as_bytes());
    msg
}

/// Ed25519 signing key tagged with its role.
#[derive(Clone)]
pub struct SecretKey {
    role: KeyRole,
    signing: SigningKey,
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecretKey")
            .field("role", &self.role)
            .field("fingerprint", &self.identity().fingerprint)
            .finish_non_exhaustive()
    }
}

impl SecretKey {
    pub fn from_seed(role: KeyRole, seed: [u8; 32]) -> Self {
        SecretKey {
            role,
            signing: SigningKey::from_bytes(&seed),
        }
    }

    pub fn role(&self) -> KeyRole {
        self.role
    }

    pub fn seed(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn identity(&self) -> KeyIdentity {
        KeyIdentity::new(self.role, PublicKeyBytes(self.signing.verifying_key().to_bytes()))
    }

    pub fn sign(&self, tag: DomainTag, payload: &[u8]) -> Signature {
        Signature(self.signing.sign(&signing_message(tag, payload)).to_bytes())
    }

    /// Unclamped X25519 scalar bytes derived from the Ed25519 secret.
    pub(crate) fn x25519_scalar_bytes(&self) -> [u8; 32] {
        self.signing.to_scalar_bytes()
    }
}

/// On-disk secret key form: role plus the 32-byte seed in hex.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecretKeyFile {
    pub role: KeyRole,
    pub seed: String,
}

impl From<&SecretKey> for SecretKeyFile {
    fn from(key: &SecretKey) -> Self {
        SecretKeyFile {
            role: key.role,
            seed: hex::encode(key.seed()),
        }
    }
}

impl TryFrom<SecretKeyFile> for SecretKey {
    type Error = CryptoError;
    fn try_from(file: SecretKeyFile) -> Result<Self, Self::Error> {
        Ok(SecretKey::from_seed(file.role, strict_hex::<32>(&file.seed)?))
    }
}

pub fn keygen(role: KeyRole) -> (SecretKey, KeyIdentity) {
    let key = SecretKey::from_seed(role, rand::random());
    let identity = key.identity();
    (key, identity)
}

pub fn sign(key: &SecretKey, tag: DomainTag, payload: &[u8]) -> Signature {
    key.sign(tag, payload)
}

/// Strict Ed25519 verification over `tag || digest(payload)`.
pub fn verify_sig(identity: &KeyIdentity, tag: DomainTag, payload: &[u8], sig: &Signature) -> bool {
    let Ok(vk) = identity.verifying_key() else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    vk.verify_strict(&signing_message(tag, payload), &sig).is_ok()
}

/// Single-writer store of secret keys, addressed by public identity.
#[derive(Debug, Default)]
pub struct KeyStore {
    keys: BTreeMap<Digest, SecretKey>,
}

impl KeyStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: SecretKey) -> KeyIdentity {
        let identity = key.identity();
        self.keys.insert(identity.fingerprint, key);
        identity
    }

    pub fn generate(&mut self, role: KeyRole) -> KeyIdentity {
        self.insert(keygen(role).0)
    }

    pub fn get(&self, identity: &KeyIdentity) -> Option<&SecretKey> {
        self.keys
            .get(&identity.fingerprint)
            .filter(|k| k.role == identity.role)
    }

    pub fn sign_as(
        &self,
        identity: &KeyIdentity,
        tag: DomainTag,
        payload: &[u8],
    ) -> Result<Signature, CryptoError> {
        self.get(identity)
            .map(|k| k.sign(tag, payload))
            .ok_or(CryptoError::UnknownKey(identity.fingerprint))
    }
}
