//! Adversarial runs. Each attack injects one fault into an otherwise honest
//! pipeline and names the reason code the verifier must report.

use std::fmt;
use std::str::FromStr;

use props_core::ReasonCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attack {
    /// Rewrite the attested record in flight, after the attestor signed it.
    TamperData,
    /// Run a filter the consumer never whitelisted.
    SwapFilter,
    /// Execute a model other than the pinned one.
    SwapModel,
    /// Re-sign the attestation with a key the claimed attestor does not hold.
    ForgeSig,
    /// Present the chain after the freshness window closed.
    Stale,
    /// `k` committee nodes misbehave.
    Byzantine(u32),
}

pub const ATTACK_MATRIX: [Attack; 6] = [
    Attack::TamperData,
    Attack::SwapFilter,
    Attack::SwapModel,
    Attack::ForgeSig,
    Attack::Stale,
    Attack::Byzantine(2),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expectation {
    /// Verification fails and every failing check carries this code.
    Rejected(ReasonCode),
    /// Tolerated fault: the chain verifies and carries the honest output.
    Tolerated,
}

impl Attack {
    pub fn default_scenario(self) -> &'static str {
        match self {
            Attack::SwapModel | Attack::Byzantine(_) => "infer-loan",
            _ => "train-ehr",
        }
    }

    pub fn needs_model(self) -> bool {
        matches!(self, Attack::SwapModel | Attack::Byzantine(_))
    }

    /// `n` and `t` matter only for byzantine runs.
    pub fn expectation(self, n: u32, t: u32) -> Expectation {
        let code = match self {
            Attack::TamperData => ReasonCode::LinkageBroken,
            Attack::SwapFilter => ReasonCode::FilterNotWhitelisted,
            Attack::SwapModel => ReasonCode::PinMismatch,
            Attack::ForgeSig => ReasonCode::BadSignature,
            Attack::Stale => ReasonCode::Stale,
            Attack::Byzantine(k) if k > n - t => ReasonCode::ConsensusFailure,
            Attack::Byzantine(_) => return Expectation::Tolerated,
        };
        Expectation::Rejected(code)
    }
}

impl fmt::Display for Attack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Attack::TamperData => f.write_str("tamper-data"),
            Attack::SwapFilter => f.write_str("swap-filter"),
            Attack::SwapModel => f.write_str("swap-model"),
            Attack::ForgeSig => f.write_str("forge-sig"),
            Attack::Stale => f.write_str("stale"),
            Attack::Byzantine(k) => write!(f, "byzantine-{k}"),
        }
    }
}

impl FromStr for Attack {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || format!("UnknownAttack: {s:?}");
        Ok(match s {
            "tamper-data" => Attack::TamperData,
            "swap-filter" => Attack::SwapFilter,
            "swap-model" => Attack::SwapModel,
            "forge-sig" => Attack::ForgeSig,
            "stale" => Attack::Stale,
            _ => {
                let text = s.strip_prefix("byzantine-").ok_or_else(unknown)?;
                match text.parse::<u32>() {
                    Ok(k) if k.to_string() == text => Attack::Byzantine(k),
                    _ => return Err(unknown()),
                }
            }
        })
    }
}
