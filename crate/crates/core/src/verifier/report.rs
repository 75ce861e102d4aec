use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reason::ReasonCode;

pub const REPORT_SCHEMA: &str = "props.verification-report/v1";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported report schema {0:?}")]
    Schema(String),
    #[error("verdict disagrees with the listed checks")]
    InconsistentVerdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckResult {
    pub check_id: String,
    pub passed: bool,
    pub reason: Option<ReasonCode>,
}

impl CheckResult {
    pub fn from_result(check_id: impl Into<String>, result: Result<(), ReasonCode>) -> Self {
        let check_id = check_id.into();
        match result {
            Ok(()) => CheckResult {
                check_id,
                passed: true,
                reason: None,
            },
            Err(reason) => CheckResult {
                check_id,
                passed: false,
                reason: Some(reason),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationReport {
    pub schema: String,
    pub verdict: Verdict,
    pub checks: Vec<CheckResult>,
    pub verified_at: i64,
}

impl VerificationReport {
    pub fn new(checks: Vec<CheckResult>, verified_at: i64) -> Self {
        let verdict = if !checks.is_empty() && checks.iter().all(|c| c.passed) {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        VerificationReport {
            schema: REPORT_SCHEMA.to_string(),
            verdict,
            checks,
            verified_at,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn check(&self, check_id: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.check_id == check_id)
    }

    /// Reasons of failing checks, in check order.
    pub fn failure_reasons(&self) -> Vec<&ReasonCode> {
        self.checks.iter().filter_map(|c| c.reason.as_ref()).collect()
    }

    pub fn export(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("report serializes");
        out.push(b'\n');
        out
    }

    pub fn import(bytes: &[u8]) -> Result<Self, ReportError> {
        let report: VerificationReport = serde_json::from_slice(bytes)?;
        if report.schema != REPORT_SCHEMA {
            return Err(ReportError::Schema(report.schema));
        }
        let all_passed = !report.checks.is_empty() && report.checks.iter().all(|c| c.passed);
        if all_passed != report.passed() {
            return Err(ReportError::InconsistentVerdict);
        }
        Ok(report)
    }
}

pub fn report_export(report: &VerificationReport) -> Vec<u8> {
    report.export()
}
