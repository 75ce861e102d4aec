//! Sample records for the two reference scenarios: a hospital EHR for the
//! training pipeline and a bank statement for the loan-inference pipeline.

use crate::canonical::{decode, CanonicalDoc};
use crate::source_net::RecordStore;

pub const EHR_SOURCE_ID: &str = "bighospital";
pub const EHR_SUBJECT: &str = "alice";
pub const EHR_TOKEN: &str = "bh-portal-alice-3f9c2e71";
pub const EHR_RECORD_TYPE: &str = "ehr";
pub const EHR_AS_OF: i64 = 1_700_000_000;

pub const LOAN_SOURCE_ID: &str = "bigbank";
pub const LOAN_SUBJECT: &str = "bob";
pub const LOAN_TOKEN: &str = "bb-session-bob-81d0aa4c";
pub const LOAN_RECORD_TYPE: &str = "bank-statement";
pub const LOAN_AS_OF: i64 = 1_700_086_400;

/// Canonical text of the EHR content.
pub const EHR_CONTENT: &str = r#"{"address":"12 Rabbit Hole Lane, Oxford OX1 4AA","diagnoses":["E11.9 type 2 diabetes mellitus","I10 essential hypertension"],"dob":"1990-04-12","labs":{"hba1c_milli_pct":7100,"ldl_mg_dl":131},"mrn":"BH-0042-7781","name":"Alice Liddell","smoker":false,"visits_12m":7}"#;

pub const LOAN_CONTENT: &str = r#"{"account_holder":"Bob Builder","account_number":"BB-99812-0031","balance_cents":1850000,"has_mortgage":true,"income_cents":7200000,"months_on_book":48,"overdrafts_12m":1}"#;

pub fn ehr_content() -> CanonicalDoc {
    decode(EHR_CONTENT.as_bytes()).expect("fixture is canonical")
}

pub fn loan_content() -> CanonicalDoc {
    decode(LOAN_CONTENT.as_bytes()).expect("fixture is canonical")
}

pub fn ehr_store() -> RecordStore {
    RecordStore::default()
        .with_credential(EHR_TOKEN, EHR_SUBJECT)
        .with_credential("bh-portal-carol-00000001", "carol")
        .with_record(EHR_SUBJECT, EHR_RECORD_TYPE, EHR_AS_OF, ehr_content())
}

pub fn loan_store() -> RecordStore {
    RecordStore::default()
        .with_credential(LOAN_TOKEN, LOAN_SUBJECT)
        .with_record(LOAN_SUBJECT, LOAN_RECORD_TYPE, LOAN_AS_OF, loan_content())
}

pub fn ehr_record() -> crate::record::DataRecord {
    crate::record::DataRecord {
        source_id: EHR_SOURCE_ID.to_string(),
        subject_id: EHR_SUBJECT.to_string(),
        content: ehr_content(),
        content_type: EHR_RECORD_TYPE.to_string(),
        fetched_at: EHR_AS_OF,
    }
}

pub fn loan_record() -> crate::record::DataRecord {
    crate::record::DataRecord {
        source_id: LOAN_SOURCE_ID.to_string(),
        subject_id: LOAN_SUBJECT.to_string(),
        content: loan_content(),
        content_type: LOAN_RECORD_TYPE.to_string(),
        fetched_at: LOAN_AS_OF,
    }
}
