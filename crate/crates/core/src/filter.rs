//! User-side filters X′ = f(X) with signed proofs linking H(X) to H(X′).
//!
//! Filters are pure functions of `(spec, record)`. Composition is a chain of
//! single-filter proofs so a verifier can whitelist filters one by one.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{Canonical, CanonicalDoc};
use crate::crypto::{digest, verify_sig, Digest, DomainTag, KeyIdentity, KeyRole, SecretKey, Signature};
use crate::reason::ReasonCode;
use crate::record::{ContentPath, DataRecord};

/// Replaces every redacted value.
pub const REDACTION_MARKER: &str = "\u{2400}REDACTED";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FilterError {
    #[error("params do not match the {kind} schema: {reason}")]
    ParamSchemaMismatch { kind: FilterKind, reason: String },
    #[error("value at {path} has type {found}, expected {expected}")]
    PathTypeMismatch {
        path: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("path {0} not present in record")]
    PathNotFound(String),
    #[error("spec digest does not match its contents")]
    SpecDigestMismatch,
    #[error("supplied output is not the result of applying the filter")]
    OutputMismatch,
    #[error("key role {0} cannot sign filter proofs")]
    WrongRole(KeyRole),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Identity,
    Redact,
    Select,
    Bucketize,
    Noise,
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FilterKind::Identity => "identity",
            FilterKind::Redact => "redact",
            FilterKind::Select => "select",
            FilterKind::Bucketize => "bucketize",
            FilterKind::Noise => "noise",
        };
        f.write_str(s)
    }
}

#[derive(Serialize)]
struct SpecBody<'a> {
    filter_id: &'a str,
    kind: FilterKind,
    params: &'a CanonicalDoc,
}

/// Public description of a filter. `spec_digest` covers id, kind and params.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub filter_id: String,
    pub kind: FilterKind,
    pub params: CanonicalDoc,
    pub spec_digest: Digest,
}

impl Canonical for FilterSpec {}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Params {
    Identity,
    Redact(Vec<ContentPath>),
    Select(Vec<ContentPath>),
    Bucketize { path: ContentPath, boundaries: Vec<i64> },
    Noise { path: ContentPath, scale_milli: i64 },
}

impl FilterSpec {
    pub fn new(filter_id: &str, kind: FilterKind, params: CanonicalDoc) -> Result<Self, FilterError> {
        parse_params(kind, &params)?;
        let spec_digest = body_digest(filter_id, kind, &params);
        Ok(FilterSpec {
            filter_id: filter_id.to_string(),
            kind,
            params,
            spec_digest,
        })
    }

    pub fn identity(filter_id: &str) -> Self {
        Self::new(filter_id, FilterKind::Identity, CanonicalDoc::object()).expect("valid")
    }

    pub fn redact(filter_id: &str, paths: &[&str]) -> Result<Self, FilterError> {
        let params = CanonicalDoc::object().with("paths", paths.to_vec());
        Self::new(filter_id, FilterKind::Redact, params)
    }

    pub fn select(filter_id: &str, paths: &[&str]) -> Result<Self, FilterError> {
        let params = CanonicalDoc::object().with("paths", paths.to_vec());
        Self::new(filter_id, FilterKind::Select, params)
    }

    pub fn bucketize(filter_id: &str, path: &str, boundaries: &[i64]) -> Result<Self, FilterError> {
        let params = CanonicalDoc::object()
            .with("path", path)
            .with("boundaries", boundaries.to_vec());
        Self::new(filter_id, FilterKind::Bucketize, params)
    }

    /// Noise scale is given in thousandths.
    pub fn noise(filter_id: &str, path: &str, scale_milli: i64) -> Result<Self, FilterError> {
        let params = CanonicalDoc::object()
            .with("path", path)
            .with("scale_milli", scale_milli);
        Self::new(filter_id, FilterKind::Noise, params)
    }

    pub fn recompute_digest(&self) -> Digest {
        body_digest(&self.filter_id, self.kind, &self.params)
    }

    /// Params match the kind's schema and the digest recomputes.
    pub fn validate(&self) -> Result<(), FilterError> {
        parse_params(self.kind, &self.params)?;
        if self.recompute_digest() != self.spec_digest {
            return Err(FilterError::SpecDigestMismatch);
        }
        Ok(())
    }
}

fn body_digest(filter_id: &str, kind: FilterKind, params: &CanonicalDoc) -> Digest {
    let body = SpecBody {
        filter_id,
        kind,
        params,
    };
    digest(&crate::canonical::canonical_encode(&body).expect("canonical params"))
}

fn parse_params(kind: FilterKind, params: &CanonicalDoc) -> Result<Params, FilterError> {
    let bad = |reason: &str| FilterError::ParamSchemaMismatch {
        kind,
        reason: reason.to_string(),
    };
    let map = params.as_object().ok_or_else(|| bad("params must be an object"))?;
    let expect_keys = |keys: &[&str]| -> Result<(), FilterError> {
        let have: BTreeSet<&str> = map.keys().map(String::as_str).collect();
        let want: BTreeSet<&str> = keys.iter().copied().collect();
        if have == want {
            Ok(())
        } else {
            Err(bad(&format!("expected keys {want:?}, found {have:?}")))
        }
    };
    let path_at = |key: &str| -> Result<ContentPath, FilterError> {
        let raw = map[key].as_str().ok_or_else(|| bad(&format!("{key} must be a string")))?;
        ContentPath::parse(raw).map_err(|e| bad(&e.to_string()))
    };
    let path_list = || -> Result<Vec<ContentPath>, FilterError> {
        let items = map["paths"]
            .as_array()
            .ok_or_else(|| bad("paths must be an array"))?;
        items
            .iter()
            .map(|p| {
                let raw = p.as_str().ok_or_else(|| bad("paths must hold strings"))?;
                ContentPath::parse(raw).map_err(|e| bad(&e.to_string()))
            })
            .collect()
    };
    match kind {
        FilterKind::Identity => {
            expect_keys(&[])?;
            Ok(Params::Identity)
        }
        FilterKind::Redact => {
            expect_keys(&["paths"])?;
            Ok(Params::Redact(path_list()?))
        }
        FilterKind::Select => {
            expect_keys(&["paths"])?;
            Ok(Params::Select(path_list()?))
        }
        FilterKind::Bucketize => {
            expect_keys(&["boundaries", "path"])?;
            let boundaries: Vec<i64> = map["boundaries"]
                .as_array()
                .ok_or_else(|| bad("boundaries must be an array"))?
                .iter()
                .map(|b| b.as_int().ok_or_else(|| bad("boundaries must be integers")))
                .collect::<Result<_, _>>()?;
            if boundaries.is_empty() || boundaries.windows(2).any(|w| w[0] >= w[1]) {
                return Err(bad("boundaries must be non-empty and strictly increasing"));
            }
            Ok(Params::Bucketize {
                path: path_at("path")?,
                boundaries,
            })
        }
        FilterKind::Noise => {
            expect_keys(&["path", "scale_milli"])?;
            let scale_milli = map["scale_milli"]
                .as_int()
                .filter(|s| *s > 0)
                .ok_or_else(|| bad("scale_milli must be a positive integer"))?;
            Ok(Params::Noise {
                path: path_at("path")?,
                scale_milli,
            })
        }
    }
}

fn int_at<'a>(content: &'a mut CanonicalDoc, path: &ContentPath) -> Result<&'a mut CanonicalDoc, FilterError> {
    let slot = path
        .get_mut(content)
        .ok_or_else(|| FilterError::PathNotFound(path.to_string()))?;
    if !matches!(slot, CanonicalDoc::Int(_)) {
        return Err(FilterError::PathTypeMismatch {
            path: path.to_string(),
            expected: "int",
            found: slot.type_name(),
        });
    }
    Ok(slot)
}

/// Number of boundaries `<= value`: values below the first boundary land in
/// bucket 0, values at or above the last in bucket `boundaries.len()`.
pub fn bucket_index(value: i64, boundaries: &[i64]) -> i64 {
    boundaries.partition_point(|b| *b <= value) as i64
}

/// Applies `spec` to `record`. Missing redact paths are ignored, missing
/// select paths are omitted, and missing bucketize/noise paths are errors.
pub fn apply_filter(spec: &FilterSpec, record: &DataRecord) -> Result<DataRecord, FilterError> {
    let params = parse_params(spec.kind, &spec.params)?;
    let mut out = record.clone();
    match params {
        Params::Identity => {}
        Params::Redact(paths) => {
            for path in &paths {
                if let Some(slot) = path.get_mut(&mut out.content) {
                    *slot = CanonicalDoc::Str(REDACTION_MARKER.to_string());
                }
            }
        }
        Params::Select(paths) => {
            let mut selected = match record.content {
                CanonicalDoc::Array(_) => CanonicalDoc::Array(Vec::new()),
                _ => CanonicalDoc::object(),
            };
            for path in &paths {
                if let Some(value) = path.get(&record.content) {
                    path.insert(&mut selected, value.clone(), &record.content);
                }
            }
            out.content = selected;
        }
        Params::Bucketize { path, boundaries } => {
            let slot = int_at(&mut out.content, &path)?;
            let value = slot.as_int().expect("checked int");
            *slot = CanonicalDoc::Int(bucket_index(value, &boundaries));
        }
        Params::Noise { path, scale_milli } => {
            let seed = noise_seed(&record.canonical_digest(), &spec.spec_digest);
            let slot = int_at(&mut out.content, &path)?;
            let value = slot.as_int().expect("checked int");
            let noise = discrete_laplace(scale_milli as f64 / 1000.0, seed_to_unit(seed));
            *slot = CanonicalDoc::Int(value.saturating_add(noise));
        }
    }
    Ok(out)
}

/// First 8 bytes (big-endian) of `H(input_digest || spec_digest)`.
pub fn noise_seed(input_digest: &Digest, spec_digest: &Digest) -> u64 {
    let mut buf = [0u8; 64];
    buf[..32].copy_from_slice(input_digest.as_bytes());
    buf[32..].copy_from_slice(spec_digest.as_bytes());
    let d = digest(&buf);
    u64::from_be_bytes(d.0[..8].try_into().expect("8 bytes"))
}

/// Maps a 64-bit seed to a uniform in the open interval (0, 1) using its
/// top 52 bits. With 53 bits the `+ 0.5` would round the largest seed up to 1.
pub fn seed_to_unit(seed: u64) -> f64 {
    ((seed >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Inverse CDF of the discrete Laplace distribution with
/// `P(k) ∝ exp(-|k| / scale)`, evaluated at `u ∈ (0, 1)`.
///
/// Uses `libm` so results are bit-identical across platforms.
pub fn discrete_laplace(scale: f64, u: f64) -> i64 {
    assert!(scale > 0.0 && u > 0.0 && u < 1.0);
    let p = libm::exp(-1.0 / scale);
    let below_zero = p / (1.0 + p);
    if u < below_zero {
        // P(K <= -m) = p^m / (1 + p); take the largest m still >= u.
        let m = libm::floor(-scale * libm::log(u * (1.0 + p)));
        -(m.max(1.0) as i64)
    } else {
        // P(K <= k) = 1 - p^(k+1) / (1 + p); take the smallest k reaching u.
        let x = -scale * libm::log((1.0 - u) * (1.0 + p));
        (libm::ceil(x) - 1.0).max(0.0) as i64
    }
}

#[derive(Serialize)]
struct ProofBody<'a> {
    executor_identity: &'a KeyIdentity,
    input_digest: Digest,
    output_digest: Digest,
    spec_digest: Digest,
}

/// Signed binding `spec_digest: H(X) → H(X′)`. Carries digests only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterProof {
    pub spec_digest: Digest,
    pub input_digest: Digest,
    pub output_digest: Digest,
    pub executor_identity: KeyIdentity,
    pub signature: Signature,
}

impl Canonical for FilterProof {}

impl FilterProof {
    fn body_bytes(&self) -> Vec<u8> {
        crate::canonical::canonical_encode(&ProofBody {
            executor_identity: &self.executor_identity,
            input_digest: self.input_digest,
            output_digest: self.output_digest,
            spec_digest: self.spec_digest,
        })
        .expect("digests only")
    }
}

/// Re-applies the filter and signs only if `output` matches.
pub fn attest_filter(
    executor_key: &SecretKey,
    spec: &FilterSpec,
    input: &DataRecord,
    output: &DataRecord,
) -> Result<FilterProof, FilterError> {
    if executor_key.role() != KeyRole::Executor {
        return Err(FilterError::WrongRole(executor_key.role()));
    }
    spec.validate()?;
    if apply_filter(spec, input)? != *output {
        return Err(FilterError::OutputMismatch);
    }
    let mut proof = FilterProof {
        spec_digest: spec.spec_digest,
        input_digest: input.canonical_digest(),
        output_digest: output.canonical_digest(),
        executor_identity: executor_key.identity(),
        signature: Signature([0; 64]),
    };
    proof.signature = executor_key.sign(DomainTag::FilterProof, &proof.body_bytes());
    Ok(proof)
}

pub fn check_filter_proof_signature(proof: &FilterProof) -> Result<(), ReasonCode> {
    let id = &proof.executor_identity;
    if !id.is_well_formed() || id.role != KeyRole::Executor {
        return Err(ReasonCode::Malformed);
    }
    if !verify_sig(id, DomainTag::FilterProof, &proof.body_bytes(), &proof.signature) {
        return Err(ReasonCode::BadSignature);
    }
    Ok(())
}

/// Checks a proof against the spec the verifier expects and its trusted
/// executors.
pub fn verify_filter_proof(
    proof: &FilterProof,
    expected_spec: &FilterSpec,
    trusted_executors: &BTreeSet<KeyIdentity>,
) -> Result<(), ReasonCode> {
    check_filter_proof_signature(proof)?;
    if expected_spec.validate().is_err() || proof.spec_digest != expected_spec.spec_digest {
        return Err(ReasonCode::FilterSpecMismatch);
    }
    if !trusted_executors.contains(&proof.executor_identity) {
        return Err(ReasonCode::UntrustedSigner);
    }
    Ok(())
}

#[cfg(test)]
mod tests;
