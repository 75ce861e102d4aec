use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::seal::seal_with_ephemeral;
use super::*;
use crate::attestor::{AttestationBody, AttestationMode, SourceAttestation};
use crate::canonical::Canonical;
use crate::committee::{run_local_committee, CommitteeConfig};
use crate::crypto::{KeyRole, SecretKey};
use crate::filter::{apply_filter, attest_filter, FilterSpec};
use crate::fixtures::{self, EHR_RECORD_TYPE, EHR_SOURCE_ID, LOAN_RECORD_TYPE, LOAN_SOURCE_ID};
use crate::pinned::{attest_inference, execute_pinned, pin_model, EnvDescriptor, ModelSpec, ModelWeights};
use crate::reason::ReasonCode;
use crate::record::DataRecord;
use crate::source_net::FetchRequest;

const ISSUED: i64 = 1_700_200_000;
const NOW: i64 = ISSUED + 30;
const MAX_AGE: i64 = 3_600;

fn attestor() -> SecretKey {
    SecretKey::from_seed(KeyRole::Attestor, [11; 32])
}
fn executor() -> SecretKey {
    SecretKey::from_seed(KeyRole::Executor, [12; 32])
}
fn recipient() -> SecretKey {
    SecretKey::from_seed(KeyRole::Recipient, [13; 32])
}
fn nodes() -> Vec<SecretKey> {
    (0..5).map(|i| SecretKey::from_seed(KeyRole::CommitteeNode, [20 + i; 32])).collect()
}

fn set<T: Ord + Clone>(items: &[T]) -> BTreeSet<T> {
    items.iter().cloned().collect()
}

fn attest(record: &DataRecord, record_type: &str, issued_at: i64) -> SourceAttestation {
    let request = FetchRequest {
        subject_id: record.subject_id.clone(),
        credential: "secret-token".into(),
        record_type: record_type.into(),
    };
    AttestationBody::for_fetch(
        AttestationMode::OracleProxy,
        attestor().identity(),
        &request,
        &record.source_id,
        record,
        issued_at,
    )
    .sign(&attestor())
}

fn redact_spec() -> FilterSpec {
    FilterSpec::redact("ehr-redact@1", &["name", "address"]).unwrap()
}

fn loan_select() -> FilterSpec {
    FilterSpec::select(
        "loan-select@1",
        &["income_cents", "balance_cents", "overdrafts_12m", "months_on_book"],
    )
    .unwrap()
}

fn loan_model() -> (ModelSpec, ModelWeights) {
    let env = EnvDescriptor::new(
        "privaloan-linear@1",
        &["income_cents", "balance_cents", "overdrafts_12m", "months_on_book"],
        &["clamp_nonneg"],
    );
    let weights = ModelWeights::from_decimals(
        &["0.00000095367431640625", "0.00000095367431640625", "-1.5", "0.0625"],
        "-8.0",
        "0",
    )
    .unwrap();
    (pin_model(&env, &weights).unwrap(), weights)
}

fn committee() -> CommitteeConfig {
    CommitteeConfig::new(nodes().iter().map(|k| k.identity()).collect(), 4)
}

/// Example 1: attest, redact, deliver.
fn ehr_chain(sealed: bool) -> (PropChain, DataRecord) {
    let x = fixtures::ehr_record();
    let att = attest(&x, EHR_RECORD_TYPE, ISSUED);
    let spec = redact_spec();
    let x1 = apply_filter(&spec, &x).unwrap();
    let proof = attest_filter(&executor(), &spec, &x, &x1).unwrap();
    let payload = if sealed {
        ChainPayload::Sealed {
            sealed: seal_with_ephemeral(&executor(), &recipient().identity(), &x1, [5; 32]).unwrap(),
        }
    } else {
        ChainPayload::Record { record: x1.clone() }
    };
    (PropChain::new(att, vec![(spec, proof)], None, payload), x1)
}

fn ehr_policy() -> VerifierPolicy {
    VerifierPolicy {
        trusted_attestors: set(&[attestor().identity()]),
        trusted_sources: set(&[EHR_SOURCE_ID.to_string()]),
        trusted_executors: set(&[executor().identity()]),
        filter_whitelist: set(&[redact_spec().spec_digest]),
        required_record_type: EHR_RECORD_TYPE.into(),
        model_requirement: ModelRequirement::None,
        max_age_seconds: MAX_AGE,
        delivery: DeliveryRequirement::Either,
    }
}

/// Example 2: attest, select, committee inference, deliver Y.
fn loan_chain() -> PropChain {
    let x = fixtures::loan_record();
    let att = attest(&x, LOAN_RECORD_TYPE, ISSUED);
    let spec = loan_select();
    let x1 = apply_filter(&spec, &x).unwrap();
    let fproof = attest_filter(&executor(), &spec, &x, &x1).unwrap();
    let (model, weights) = loan_model();
    let verdict = run_local_committee(&committee(), &nodes(), &model, &weights, &x1, ISSUED + 1).unwrap();
    PropChain::new(
        att,
        vec![(spec, fproof)],
        verdict.proof,
        ChainPayload::Output {
            output: verdict.agreed_output.unwrap(),
        },
    )
}

fn loan_policy() -> VerifierPolicy {
    VerifierPolicy {
        trusted_attestors: set(&[attestor().identity()]),
        trusted_sources: set(&[LOAN_SOURCE_ID.to_string()]),
        trusted_executors: set(&[executor().identity()]),
        filter_whitelist: set(&[loan_select().spec_digest]),
        required_record_type: LOAN_RECORD_TYPE.into(),
        model_requirement: ModelRequirement::Committee {
            config: committee(),
            pinned_digest: loan_model().0.pinned_digest(),
        },
        max_age_seconds: MAX_AGE,
        delivery: DeliveryRequirement::Plaintext,
    }
}

fn failing(report: &VerificationReport) -> Vec<(String, ReasonCode)> {
    report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| (c.check_id.clone(), c.reason.clone().unwrap()))
        .collect()
}

fn assert_single_failure(report: &VerificationReport, check_id: &str, reason: ReasonCode) {
    assert_eq!(failing(report), vec![(check_id.to_string(), reason)], "{report:#?}");
    assert!(!report.passed());
}

#[test]
fn example_one_chain_passes() {
    let (chain, _) = ehr_chain(false);
    let report = verify_chain(&chain, &ehr_policy(), NOW);
    assert!(report.passed(), "{report:#?}");
    assert_eq!(report.verified_at, NOW);
    let ids: Vec<&str> = report.checks.iter().map(|c| c.check_id.as_str()).collect();
    assert_eq!(
        ids,
        [
            "chain.schema",
            "attestation.signature",
            "attestation.signer_trust",
            "attestation.source",
            "attestation.record_type",
            "attestation.freshness",
            "filters.disclosure",
            "filter.0.signature",
            "filter.0.spec",
            "filter.0.executor_trust",
            "filter.0.whitelist",
            "linkage",
            "model",
            "payload.delivery",
            "payload.digest",
            "chain.created_at",
        ]
    );
}

#[test]
fn example_two_chain_passes() {
    let chain = loan_chain();
    assert!(chain.inference_proof.as_ref().unwrap().executor_signatures.len() >= 4);
    let report = verify_chain(&chain, &loan_policy(), NOW);
    assert!(report.passed(), "{report:#?}");
    assert_eq!(chain.created_at, ISSUED + 1);
}

#[test]
fn single_executor_and_service_ref_requirements() {
    let x = fixtures::loan_record();
    let att = attest(&x, LOAN_RECORD_TYPE, ISSUED);
    let (model, weights) = loan_model();
    let y = execute_pinned(&model, &weights, &x).unwrap();
    let proof = attest_inference(&executor(), &model, &weights, &x, &y, ISSUED).unwrap();
    let chain = PropChain::new(att.clone(), vec![], Some(proof), ChainPayload::Output { output: y });
    let mut policy = loan_policy();
    policy.model_requirement = ModelRequirement::Exact {
        pinned_digest: model.pinned_digest(),
    };
    assert!(verify_chain(&chain, &policy, NOW).passed());

    // A ServiceRef requirement is not met by an exact-pin proof.
    policy.model_requirement = ModelRequirement::ServiceRef {
        service_id: "privaloan-scorer".into(),
        trusted_executors: set(&[executor().identity()]),
    };
    assert_single_failure(&verify_chain(&chain, &policy, NOW), "model", ReasonCode::PinMismatch);

    let mut registry = crate::pinned::ServiceRegistry::new();
    registry.register("privaloan-scorer", executor().identity(), model.clone(), weights);
    let sproof =
        crate::pinned::attest_service_ref(&registry, &executor(), "privaloan-scorer", &x, &y, ISSUED).unwrap();
    let chain = PropChain::new(att, vec![], Some(sproof), ChainPayload::Output { output: y });
    assert!(verify_chain(&chain, &policy, NOW).passed());
    // ...and an exact requirement rejects the service proof.
    policy.model_requirement = ModelRequirement::Exact {
        pinned_digest: model.pinned_digest(),
    };
    assert_single_failure(&verify_chain(&chain, &policy, NOW), "model", ReasonCode::PinMismatch);
}

#[test]
fn flipped_payload_breaks_linkage() {
    let (mut chain, _) = ehr_chain(false);
    let ChainPayload::Record { record } = &mut chain.payload else { unreachable!() };
    record.content = record.content.clone().with("smoker", true);
    assert_single_failure(
        &verify_chain(&chain, &ehr_policy(), NOW),
        "payload.digest",
        ReasonCode::LinkageBroken,
    );
}

#[test]
fn non_whitelisted_filter_is_caught() {
    let x = fixtures::ehr_record();
    let spec = FilterSpec::redact("ehr-redact@1", &["name"]).unwrap();
    let x1 = apply_filter(&spec, &x).unwrap();
    let proof = attest_filter(&executor(), &spec, &x, &x1).unwrap();
    let chain = PropChain::new(
        attest(&x, EHR_RECORD_TYPE, ISSUED),
        vec![(spec, proof)],
        None,
        ChainPayload::Record { record: x1 },
    );
    assert_single_failure(
        &verify_chain(&chain, &ehr_policy(), NOW),
        "filter.0.whitelist",
        ReasonCode::FilterNotWhitelisted,
    );
}

#[test]
fn substituted_pin_is_caught() {
    let chain = loan_chain();
    let mut policy = loan_policy();
    let mut other = loan_model().1;
    other.bias = "-9".parse().unwrap();
    let ModelSpec::Exact { env, .. } = loan_model().0 else { unreachable!() };
    let ModelRequirement::Committee { pinned_digest, .. } = &mut policy.model_requirement else {
        unreachable!()
    };
    *pinned_digest = pin_model(&env, &other).unwrap().pinned_digest();
    assert_single_failure(&verify_chain(&chain, &policy, NOW), "model", ReasonCode::PinMismatch);
}

#[test]
fn freshness_window() {
    let (chain, _) = ehr_chain(false);
    let policy = ehr_policy();
    assert!(verify_chain(&chain, &policy, ISSUED + MAX_AGE).passed());
    assert_single_failure(
        &verify_chain(&chain, &policy, ISSUED + MAX_AGE + 1),
        "attestation.freshness",
        ReasonCode::Stale,
    );
    assert_single_failure(
        &verify_chain(&chain, &policy, ISSUED - MAX_CLOCK_SKEW_SECONDS - 1),
        "attestation.freshness",
        ReasonCode::NotYetValid,
    );
}

#[test]
fn policy_checks_isolate_one_failure_each() {
    let (chain, _) = ehr_chain(false);

    let mut p = ehr_policy();
    p.trusted_sources = set(&["otherhospital".to_string()]);
    assert_single_failure(&verify_chain(&chain, &p, NOW), "attestation.source", ReasonCode::UntrustedSource);

    let mut p = ehr_policy();
    p.required_record_type = "billing".into();
    assert_single_failure(
        &verify_chain(&chain, &p, NOW),
        "attestation.record_type",
        ReasonCode::RecordTypeMismatch,
    );

    let mut p = ehr_policy();
    p.trusted_attestors.clear();
    assert_single_failure(
        &verify_chain(&chain, &p, NOW),
        "attestation.signer_trust",
        ReasonCode::UntrustedSigner,
    );

    let mut p = ehr_policy();
    p.trusted_executors.clear();
    assert_single_failure(&verify_chain(&chain, &p, NOW), "filter.0.executor_trust", ReasonCode::UntrustedSigner);

    let mut p = ehr_policy();
    p.delivery = DeliveryRequirement::Sealed;
    assert_single_failure(&verify_chain(&chain, &p, NOW), "payload.delivery", ReasonCode::DeliveryModeMismatch);

    let mut p = ehr_policy();
    p.model_requirement = ModelRequirement::Exact {
        pinned_digest: loan_model().0.pinned_digest(),
    };
    assert_single_failure(&verify_chain(&chain, &p, NOW), "model", ReasonCode::ModelRequirementUnmet);
}

#[test]
fn structural_tampering() {
    let (chain, _) = ehr_chain(false);
    let policy = ehr_policy();

    let mut c = chain.clone();
    c.created_at += 1;
    assert_single_failure(&verify_chain(&c, &policy, NOW), "chain.created_at", ReasonCode::Malformed);

    let mut c = chain.clone();
    c.filter_specs[0] = FilterSpec::redact("ehr-redact@1", &["name"]).unwrap();
    let report = verify_chain(&c, &policy, NOW);
    assert_eq!(report.check("filter.0.spec").unwrap().reason, Some(ReasonCode::FilterSpecMismatch));

    let mut c = chain.clone();
    c.filter_specs.clear();
    let report = verify_chain(&c, &policy, NOW);
    assert_eq!(report.check("filters.disclosure").unwrap().reason, Some(ReasonCode::Malformed));

    let mut c = chain.clone();
    c.filter_proofs[0].input_digest = crate::digest(b"elsewhere");
    let report = verify_chain(&c, &policy, NOW);
    assert_eq!(report.check("linkage").unwrap().reason, Some(ReasonCode::LinkageBroken));
    assert_eq!(report.check("filter.0.signature").unwrap().reason, Some(ReasonCode::BadSignature));

    // Dropping the filter entirely exposes the attested digest mismatch.
    let mut c = chain.clone();
    c.filter_specs.clear();
    c.filter_proofs.clear();
    assert_single_failure(&verify_chain(&c, &policy, NOW), "payload.digest", ReasonCode::LinkageBroken);

    let mut c = chain.clone();
    c.schema = "props.chain/v0".into();
    assert_single_failure(&verify_chain(&c, &policy, NOW), "chain.schema", ReasonCode::Malformed);
}

#[test]
fn every_check_runs_after_a_failure() {
    let (mut chain, _) = ehr_chain(false);
    chain.attestation.signature.0[0] ^= 1;
    let report = verify_chain(&chain, &ehr_policy(), NOW);
    assert_eq!(report.checks.len(), 16);
    assert_eq!(failing(&report), vec![("attestation.signature".into(), ReasonCode::BadSignature)]);
}

#[test]
fn undecodable_bytes_yield_a_decode_failure() {
    let report = verify_chain_bytes(b"{\"schema\":", &ehr_policy(), NOW);
    assert_single_failure(&report, "chain.decode", ReasonCode::Malformed);
    let (chain, _) = ehr_chain(false);
    assert!(verify_chain_bytes(&chain.canonical_bytes(), &ehr_policy(), NOW).passed());
}

fn flip_campaign(chain: &PropChain, policy: &VerifierPolicy, trials: usize, seed: u64) {
    let bytes = chain.canonical_bytes();
    assert!(verify_chain_bytes(&bytes, policy, NOW).passed());
    let mut rng = StdRng::seed_from_u64(seed);
    for _ in 0..trials {
        let bit = rng.gen_range(0..bytes.len() * 8);
        let mut mutated = bytes.clone();
        mutated[bit / 8] ^= 1 << (bit % 8);
        let report = verify_chain_bytes(&mutated, policy, NOW);
        assert!(!report.passed(), "bit {bit} flip accepted");
    }
}

#[test]
fn tamper_totality_plaintext_ehr() {
    let (chain, _) = ehr_chain(false);
    flip_campaign(&chain, &ehr_policy(), 1_200, 1);
}

#[test]
fn tamper_totality_sealed_ehr() {
    let (chain, _) = ehr_chain(true);
    flip_campaign(&chain, &ehr_policy(), 1_200, 2);
}

#[test]
fn tamper_totality_committee_loan() {
    flip_campaign(&loan_chain(), &loan_policy(), 1_200, 3);
}

#[test]
fn seal_round_trip_and_failures() {
    let record = fixtures::ehr_record();
    let sealed = seal_payload(&executor(), &recipient().identity(), &record).unwrap();
    assert_eq!(sealed.suite, SEAL_SUITE);
    assert_eq!(sealed.plaintext_digest, record.canonical_digest());
    assert_eq!(open_payload(&recipient(), &sealed).unwrap(), record);
    check_seal_signature(&sealed).unwrap();

    let other = SecretKey::from_seed(KeyRole::Recipient, [99; 32]);
    assert_eq!(open_payload(&other, &sealed), Err(SealError::DecryptFailure));
    // Same fingerprint claim, wrong key material.
    let mut retargeted = sealed.clone();
    retargeted.recipient_fingerprint = other.identity().fingerprint;
    assert_eq!(open_payload(&other, &retargeted), Err(SealError::DecryptFailure));

    let mut flipped = sealed.clone();
    let mut ct = hex::decode(&flipped.ciphertext).unwrap();
    ct[3] ^= 0x10;
    flipped.ciphertext = hex::encode(ct);
    assert_eq!(open_payload(&recipient(), &flipped), Err(SealError::DecryptFailure));
    assert_eq!(check_seal_signature(&flipped), Err(ReasonCode::BadSignature));

    let mut digest_swap = sealed.clone();
    digest_swap.plaintext_digest = crate::digest(b"x");
    assert_eq!(open_payload(&recipient(), &digest_swap), Err(SealError::DecryptFailure));

    assert_eq!(
        seal_payload(&executor(), &executor().identity(), &record),
        Err(SealError::WrongRecipientRole(KeyRole::Executor))
    );
    let a = seal_payload(&executor(), &recipient().identity(), &record).unwrap();
    assert_ne!(a.enc, sealed.enc);
}

#[test]
fn sealed_chain_passes_and_binds_the_sealer() {
    let (chain, x1) = ehr_chain(true);
    let mut policy = ehr_policy();
    policy.delivery = DeliveryRequirement::Sealed;
    let report = verify_chain(&chain, &policy, NOW);
    assert!(report.passed(), "{report:#?}");
    assert!(report.check("payload.seal").unwrap().passed);
    let ChainPayload::Sealed { sealed } = &chain.payload else { unreachable!() };
    assert_eq!(open_payload(&recipient(), sealed).unwrap(), x1);

    policy.delivery = DeliveryRequirement::Plaintext;
    assert_single_failure(&verify_chain(&chain, &policy, NOW), "payload.delivery", ReasonCode::DeliveryModeMismatch);

    // A third party resealing the same plaintext is not the terminal signer.
    let mut c = chain.clone();
    let stranger = SecretKey::from_seed(KeyRole::Executor, [77; 32]);
    c.payload = ChainPayload::Sealed {
        sealed: seal_payload(&stranger, &recipient().identity(), &x1).unwrap(),
    };
    assert_single_failure(&verify_chain(&c, &ehr_policy(), NOW), "payload.seal", ReasonCode::UntrustedSigner);
}

/// String leaves of at least six bytes: the plaintext a scan must not find.
fn sensitive_strings(record: &DataRecord) -> Vec<String> {
    let mut out: Vec<String> = record
        .content
        .string_leaves()
        .into_iter()
        .filter(|s| s.len() >= 6)
        .map(str::to_string)
        .collect();
    out.push(format!("\"{}\"", record.subject_id));
    out
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

#[test]
fn verifier_input_holds_no_redacted_plaintext() {
    let (chain, _) = ehr_chain(false);
    let bytes = chain.canonical_bytes();
    let pretty = chain.to_json_pretty();
    for secret in ["Alice Liddell", "12 Rabbit Hole Lane, Oxford OX1 4AA"] {
        assert!(!contains(&bytes, secret.as_bytes()));
        assert!(!pretty.contains(secret));
    }
}

#[test]
fn sealed_verifier_input_holds_no_subject_plaintext() {
    let (chain, _) = ehr_chain(true);
    let bytes = chain.canonical_bytes();
    let secrets = sensitive_strings(&fixtures::ehr_record());
    assert!(secrets.len() >= 5);
    for secret in secrets {
        assert!(!contains(&bytes, secret.as_bytes()), "{secret} leaked");
    }
}

#[test]
fn report_export_round_trips() {
    let (chain, _) = ehr_chain(false);
    let pass = verify_chain(&chain, &ehr_policy(), NOW);
    assert_eq!(VerificationReport::import(&report_export(&pass)).unwrap(), pass);

    let mut bad = chain.clone();
    bad.created_at = 1;
    let fail = verify_chain(&bad, &ehr_policy(), NOW + MAX_AGE * 10);
    let back = VerificationReport::import(&fail.export()).unwrap();
    assert_eq!(back, fail);
    assert_eq!(back.failure_reasons(), vec![&ReasonCode::Stale, &ReasonCode::Malformed]);

    let mut json: serde_json::Value = serde_json::from_slice(&fail.export()).unwrap();
    json["checks"][0]["check_id"] = "future.check".into();
    json["checks"][0]["passed"] = false.into();
    json["checks"][0]["reason"] = "QuantumDecoherence".into();
    let future = VerificationReport::import(&serde_json::to_vec(&json).unwrap()).unwrap();
    assert_eq!(future.checks[0].check_id, "future.check");
    assert_eq!(future.checks[0].reason, Some(ReasonCode::Other("QuantumDecoherence".into())));
    let again: serde_json::Value = serde_json::from_slice(&future.export()).unwrap();
    assert_eq!(again, json);

    let mut wrong_schema = json.clone();
    wrong_schema["schema"] = "props.verification-report/v9".into();
    assert!(matches!(
        VerificationReport::import(&serde_json::to_vec(&wrong_schema).unwrap()),
        Err(ReportError::Schema(_))
    ));
    let mut liar = serde_json::to_value(&pass).unwrap();
    liar["checks"][0]["passed"] = false.into();
    liar["checks"][0]["reason"] = "Malformed".into();
    assert!(matches!(
        VerificationReport::import(&serde_json::to_vec(&liar).unwrap()),
        Err(ReportError::InconsistentVerdict)
    ));
}

#[test]
fn chain_and_policy_json_round_trip() {
    let chain = loan_chain();
    assert_eq!(PropChain::from_json(&chain.to_json_pretty()).unwrap(), chain);
    let policy = loan_policy();
    assert_eq!(VerifierPolicy::from_json(&policy.to_json_pretty()).unwrap(), policy);
}

fn shrink<T: Ord + Clone>(items: &BTreeSet<T>, mask: u32) -> BTreeSet<T> {
    items
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << (i % 32)) != 0)
        .map(|(_, x)| x.clone())
        .collect()
}

fn widened(mut p: VerifierPolicy) -> VerifierPolicy {
    let stranger_exec = SecretKey::from_seed(KeyRole::Executor, [50; 32]).identity();
    let stranger_att = SecretKey::from_seed(KeyRole::Attestor, [51; 32]).identity();
    p.trusted_executors.insert(stranger_exec);
    p.trusted_attestors.insert(stranger_att);
    p.trusted_sources.insert("thirdparty".into());
    p.filter_whitelist.insert(FilterSpec::identity("identity@1").spec_digest);
    p.filter_whitelist.insert(FilterSpec::redact("ehr-redact@1", &["name"]).unwrap().spec_digest);
    p
}

fn variant_chains() -> Vec<PropChain> {
    let (plain, _) = ehr_chain(false);
    let (sealed, _) = ehr_chain(true);
    let x = fixtures::ehr_record();
    let weak = FilterSpec::redact("ehr-redact@1", &["name"]).unwrap();
    let x1 = apply_filter(&weak, &x).unwrap();
    let stranger = SecretKey::from_seed(KeyRole::Executor, [50; 32]);
    let weak_proof = attest_filter(&stranger, &weak, &x, &x1).unwrap();
    let non_whitelisted = PropChain::new(
        attest(&x, EHR_RECORD_TYPE, ISSUED),
        vec![(weak, weak_proof)],
        None,
        ChainPayload::Record { record: x1 },
    );
    let mut tampered = plain.clone();
    tampered.created_at += 1;
    vec![plain, sealed, non_whitelisted, tampered]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shrinking_trust_never_turns_fail_into_pass(
        which in 0usize..4,
        m_att in any::<u32>(),
        m_src in any::<u32>(),
        m_exec in any::<u32>(),
        m_wl in any::<u32>(),
    ) {
        let chain = &variant_chains()[which];
        let full = widened(ehr_policy());
        let mut small = full.clone();
        small.trusted_attestors = shrink(&full.trusted_attestors, m_att);
        small.trusted_sources = shrink(&full.trusted_sources, m_src);
        small.trusted_executors = shrink(&full.trusted_executors, m_exec);
        small.filter_whitelist = shrink(&full.filter_whitelist, m_wl);
        let big = verify_chain(chain, &full, NOW);
        let little = verify_chain(chain, &small, NOW);
        prop_assert!(!little.passed() || big.passed());
        // Per check as well: a check failing under the wide policy fails under the narrow one.
        for (b, l) in big.checks.iter().zip(&little.checks) {
            prop_assert_eq!(&b.check_id, &l.check_id);
            prop_assert!(b.passed || !l.passed);
        }
    }
}
