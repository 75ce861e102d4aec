use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::fixed::Fixed;
use crate::canonical::{canonical_encode, Canonical, CanonicalDoc};
use crate::crypto::{digest, Digest};
use crate::record::{ContentPath, DataRecord};

pub const ARITHMETIC_TAG: &str = "q32.32-saturating";
pub const TIE_RULE_TAG: &str = "score>=threshold→approve";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PinError {
    #[error("{weights} weights for {features} feature paths")]
    LengthMismatch { weights: usize, features: usize },
    #[error("invalid environment: {0}")]
    InvalidEnv(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    #[error("spec is not an exact pin; it cannot be executed locally")]
    NotExact,
    #[error("weights do not match the pinned weights digest")]
    WeightsMismatch,
    #[error("invalid pinned spec: {0}")]
    InvalidSpec(String),
    #[error("feature {path}: {reason}")]
    FeaturePathError { path: String, reason: String },
    #[error("arithmetic overflow in strict mode")]
    Overflow,
}

/// Feature preprocessing step, applied to every feature in list order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preprocess {
    /// `true → 1`, `false → 0`; integers pass through.
    BoolAsInt,
    /// `max(x, 0)`.
    ClampNonNeg,
    /// Floor division by a positive constant.
    DivFloor(i64),
}

impl Preprocess {
    pub fn parse(id: &str) -> Result<Self, PinError> {
        match id.split_once(':') {
            None if id == "bool_as_int" => Ok(Preprocess::BoolAsInt),
            None if id == "clamp_nonneg" => Ok(Preprocess::ClampNonNeg),
            Some(("div_floor", n)) => match n.parse::<i64>() {
                Ok(d) if d > 0 && n == d.to_string() => Ok(Preprocess::DivFloor(d)),
                _ => Err(PinError::InvalidEnv(format!("bad divisor in {id:?}"))),
            },
            _ => Err(PinError::InvalidEnv(format!("unknown preprocessing step {id:?}"))),
        }
    }

    fn apply(self, value: CanonicalDoc) -> CanonicalDoc {
        match (self, value) {
            (Preprocess::BoolAsInt, CanonicalDoc::Bool(b)) => CanonicalDoc::Int(b as i64),
            (Preprocess::ClampNonNeg, CanonicalDoc::Int(v)) => CanonicalDoc::Int(v.max(0)),
            (Preprocess::DivFloor(d), CanonicalDoc::Int(v)) => CanonicalDoc::Int(v.div_euclid(d)),
            (_, other) => other,
        }
    }
}

/// E: everything about execution besides the weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvDescriptor {
    pub env_version: String,
    pub feature_paths: Vec<String>,
    pub preprocessing: Vec<String>,
    pub arithmetic: String,
    pub tie_rule: String,
}

impl Canonical for EnvDescriptor {}

impl EnvDescriptor {
    pub fn new(env_version: &str, feature_paths: &[&str], preprocessing: &[&str]) -> Self {
        EnvDescriptor {
            env_version: env_version.to_string(),
            feature_paths: feature_paths.iter().map(|s| s.to_string()).collect(),
            preprocessing: preprocessing.iter().map(|s| s.to_string()).collect(),
            arithmetic: ARITHMETIC_TAG.to_string(),
            tie_rule: TIE_RULE_TAG.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(Vec<ContentPath>, Vec<Preprocess>), PinError> {
        if self.arithmetic != ARITHMETIC_TAG {
            return Err(PinError::InvalidEnv(format!(
                "unsupported arithmetic {:?}",
                self.arithmetic
            )));
        }
        if self.tie_rule != TIE_RULE_TAG {
            return Err(PinError::InvalidEnv(format!(
                "unsupported tie rule {:?}",
                self.tie_rule
            )));
        }
        let paths = self
            .feature_paths
            .iter()
            .map(|p| ContentPath::parse(p).map_err(|e| PinError::InvalidEnv(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let steps = self
            .preprocessing
            .iter()
            .map(|s| Preprocess::parse(s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((paths, steps))
    }
}

/// M: a linear scorer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelWeights {
    pub weights: Vec<Fixed>,
    pub bias: Fixed,
    pub threshold: Fixed,
}

impl Canonical for ModelWeights {}

impl ModelWeights {
    pub fn from_decimals(weights: &[&str], bias: &str, threshold: &str) -> Result<Self, super::FixedError> {
        Ok(ModelWeights {
            weights: weights.iter().map(|w| w.parse()).collect::<Result<_, _>>()?,
            bias: bias.parse()?,
            threshold: threshold.parse()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Exact,
    ServiceRef,
}

/// S = (E, M), pinned by digest. `Exact` is replicable by anyone holding the
/// weights; `ServiceRef` names an opaque service and reveals nothing else.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Exact {
        env: EnvDescriptor,
        weights_digest: Digest,
        pinned_digest: Digest,
    },
    ServiceRef {
        service_id: String,
        pinned_digest: Digest,
    },
}

impl Canonical for ModelSpec {}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum PinnedBody<'a> {
    Exact {
        env: &'a EnvDescriptor,
        weights_digest: Digest,
    },
    ServiceRef {
        service_id: &'a str,
    },
}

fn pinned_body_digest(body: &PinnedBody<'_>) -> Digest {
    digest(&canonical_encode(body).expect("canonical body"))
}

impl ModelSpec {
    pub fn service_ref(service_id: &str) -> ModelSpec {
        ModelSpec::ServiceRef {
            service_id: service_id.to_string(),
            pinned_digest: pinned_body_digest(&PinnedBody::ServiceRef { service_id }),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Exact { .. } => ModelKind::Exact,
            ModelSpec::ServiceRef { .. } => ModelKind::ServiceRef,
        }
    }

    pub fn pinned_digest(&self) -> Digest {
        match self {
            ModelSpec::Exact { pinned_digest, .. } | ModelSpec::ServiceRef { pinned_digest, .. } => {
                *pinned_digest
            }
        }
    }

    pub fn recompute_pinned_digest(&self) -> Digest {
        match self {
            ModelSpec::Exact {
                env,
                weights_digest,
                ..
            } => pinned_body_digest(&PinnedBody::Exact {
                env,
                weights_digest: *weights_digest,
            }),
            ModelSpec::ServiceRef { service_id, .. } => {
                pinned_body_digest(&PinnedBody::ServiceRef { service_id })
            }
        }
    }
}

pub fn pin_model(env: &EnvDescriptor, weights: &ModelWeights) -> Result<ModelSpec, PinError> {
    env.validate()?;
    if weights.weights.len() != env.feature_paths.len() {
        return Err(PinError::LengthMismatch {
            weights: weights.weights.len(),
            features: env.feature_paths.len(),
        });
    }
    let weights_digest = weights.canonical_digest();
    Ok(ModelSpec::Exact {
        env: env.clone(),
        weights_digest,
        pinned_digest: pinned_body_digest(&PinnedBody::Exact {
            env,
            weights_digest,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Approve,
    Deny,
}

/// Y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceOutput {
    pub decision: Decision,
    pub score: Fixed,
}

impl Canonical for InferenceOutput {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ArithmeticMode {
    #[default]
    Saturating,
    /// Report [`ExecError::Overflow`] instead of saturating.
    Strict,
}

/// Extracts integer features in `feature_paths` order.
pub fn extract_features(env: &EnvDescriptor, input: &DataRecord) -> Result<Vec<i64>, ExecError> {
    let (paths, steps) = env
        .validate()
        .map_err(|e| ExecError::InvalidSpec(e.to_string()))?;
    paths
        .iter()
        .map(|path| {
            let raw = path
                .get(&input.content)
                .ok_or_else(|| ExecError::FeaturePathError {
                    path: path.to_string(),
                    reason: "not present".to_string(),
                })?;
            let value = steps.iter().fold(raw.clone(), |v, step| step.apply(v));
            value.as_int().ok_or_else(|| ExecError::FeaturePathError {
                path: path.to_string(),
                reason: format!("{} after preprocessing, expected int", value.type_name()),
            })
        })
        .collect()
}

/// `bias + Σ round(w_i · x_i)`, accumulated left to right starting from zero
/// with the bias added last.
pub fn score(weights: &ModelWeights, features: &[i64], mode: ArithmeticMode) -> Result<Fixed, ExecError> {
    let mut overflow = false;
    let mut acc = Fixed::ZERO;
    for (w, x) in weights.weights.iter().zip(features) {
        let (xf, s1) = Fixed::from_int(*x);
        let (term, s2) = w.mul(xf);
        let (next, s3) = acc.add(term);
        overflow |= s1 | s2 | s3;
        acc = next;
    }
    let (total, s4) = acc.add(weights.bias);
    overflow |= s4;
    if overflow && mode == ArithmeticMode::Strict {
        return Err(ExecError::Overflow);
    }
    Ok(total)
}

pub fn decide(score: Fixed, threshold: Fixed) -> Decision {
    if score >= threshold {
        Decision::Approve
    } else {
        Decision::Deny
    }
}

pub fn execute_pinned(spec: &ModelSpec, weights: &ModelWeights, input: &DataRecord) -> Result<InferenceOutput, ExecError> {
    execute_pinned_with(spec, weights, input, ArithmeticMode::Saturating)
}

pub fn execute_pinned_with(
    spec: &ModelSpec,
    weights: &ModelWeights,
    input: &DataRecord,
    mode: ArithmeticMode,
) -> Result<InferenceOutput, ExecError> {
    let ModelSpec::Exact {
        env,
        weights_digest,
        pinned_digest,
    } = spec
    else {
        return Err(ExecError::NotExact);
    };
    if *pinned_digest != spec.recompute_pinned_digest() {
        return Err(ExecError::InvalidSpec("pinned digest does not recompute".to_string()));
    }
    if *weights_digest != weights.canonical_digest() || weights.weights.len() != env.feature_paths.len() {
        return Err(ExecError::WeightsMismatch);
    }
    let features = extract_features(env, input)?;
    let score = score(weights, &features, mode)?;
    Ok(InferenceOutput {
        decision: decide(score, weights.threshold),
        score,
    })
}
