//! Pinned models: S = (E, M) bound by digest, deterministic Q32.32 execution
//! of a linear scorer, and signed inference proofs.
//!
//! Execution is bit-reproducible: integer arithmetic only, round-to-nearest-
//! even on multiplication, saturating accumulation. Committee consensus
//! depends on this.

mod fixed;
mod model;
mod proof;

pub use fixed::{Fixed, FixedError, FRAC_BITS};
pub use model::{
    decide, execute_pinned, execute_pinned_with, extract_features, pin_model, score,
    ArithmeticMode, Decision, EnvDescriptor, ExecError, InferenceOutput, ModelKind, ModelSpec,
    ModelWeights, PinError, Preprocess, ARITHMETIC_TAG, TIE_RULE_TAG,
};
pub use proof::{
    attest_inference, attest_service_ref, check_executor_signature, verify_executor_proof,
    ExecutorSignature, InferenceError, InferenceProof, InferenceStatement, ServiceRegistry,
};
