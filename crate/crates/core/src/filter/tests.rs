use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;
use crate::fixtures;

fn executor() -> SecretKey {
    SecretKey::from_seed(KeyRole::Executor, [3; 32])
}

fn trusted() -> BTreeSet<KeyIdentity> {
    [executor().identity()].into_iter().collect()
}

fn record_with(content: CanonicalDoc) -> DataRecord {
    DataRecord {
        source_id: "src".into(),
        subject_id: "subj".into(),
        content,
        content_type: "t".into(),
        fetched_at: 1,
    }
}

#[test]
fn identity_is_byte_identical() {
    let rec = fixtures::ehr_record();
    let out = apply_filter(&FilterSpec::identity("identity@1"), &rec).unwrap();
    assert_eq!(out.canonical_bytes(), rec.canonical_bytes());
}

#[test]
fn redact_fixture_replaces_exactly_name_and_address() {
    let spec = FilterSpec::redact("redact@1", &["name", "address"]).unwrap();
    let out = apply_filter(&spec, &fixtures::ehr_record()).unwrap();
    // Build the expected content by textual substitution on the canonical text.
    let marker_json = "\"\u{2400}REDACTED\"";
    let expected_text = fixtures::EHR_CONTENT
        .replace("\"12 Rabbit Hole Lane, Oxford OX1 4AA\"", marker_json)
        .replace("\"Alice Liddell\"", marker_json);
    assert_eq!(crate::canonical::encode(&out.content), expected_text.as_bytes());
    let mut rest = out.clone();
    rest.content = fixtures::ehr_content();
    assert_eq!(rest, fixtures::ehr_record());
    let bytes = String::from_utf8(out.canonical_bytes()).unwrap();
    assert!(!bytes.contains("Alice Liddell") && !bytes.contains("Rabbit Hole"));
}

#[test]
fn bucketize_income_example() {
    let spec = FilterSpec::bucketize("bucket@1", "income_cents", &[0, 5_000_000]).unwrap();
    let out = apply_filter(&spec, &fixtures::loan_record()).unwrap();
    assert_eq!(out.content.get("income_cents"), Some(&CanonicalDoc::Int(2)));
    assert_eq!(bucket_index(-1, &[0, 5_000_000]), 0);
    assert_eq!(bucket_index(0, &[0, 5_000_000]), 1);
    assert_eq!(bucket_index(4_999_999, &[0, 5_000_000]), 1);
    assert_eq!(bucket_index(5_000_000, &[0, 5_000_000]), 2);
}

#[test]
fn select_keeps_shape_and_pads_arrays() {
    let spec = FilterSpec::select("select@1", &["labs.ldl_mg_dl", "diagnoses.1", "nope"]).unwrap();
    let out = apply_filter(&spec, &fixtures::ehr_record()).unwrap();
    assert_eq!(
        crate::canonical::encode(&out.content),
        br#"{"diagnoses":[null,"I10 essential hypertension"],"labs":{"ldl_mg_dl":131}}"#
    );
}

#[test]
fn missing_path_rules() {
    let rec = fixtures::ehr_record();
    let redact = FilterSpec::redact("r@1", &["ssn", "labs.none"]).unwrap();
    assert_eq!(apply_filter(&redact, &rec).unwrap(), rec);
    let select = FilterSpec::select("s@1", &["ssn"]).unwrap();
    assert_eq!(apply_filter(&select, &rec).unwrap().content, CanonicalDoc::object());
    let bucket = FilterSpec::bucketize("b@1", "ssn", &[1]).unwrap();
    assert!(matches!(apply_filter(&bucket, &rec), Err(FilterError::PathNotFound(_))));
    let noise = FilterSpec::noise("n@1", "ssn", 1000).unwrap();
    assert!(matches!(apply_filter(&noise, &rec), Err(FilterError::PathNotFound(_))));
}

#[test]
fn numeric_kinds_reject_non_integers() {
    let rec = fixtures::ehr_record();
    let bucket = FilterSpec::bucketize("b@1", "name", &[1]).unwrap();
    assert!(matches!(
        apply_filter(&bucket, &rec),
        Err(FilterError::PathTypeMismatch { expected: "int", found: "string", .. })
    ));
    let noise = FilterSpec::noise("n@1", "smoker", 1000).unwrap();
    assert!(matches!(apply_filter(&noise, &rec), Err(FilterError::PathTypeMismatch { .. })));
}

#[test]
fn param_schema_is_enforced() {
    let bad = |kind, params: CanonicalDoc| {
        matches!(
            FilterSpec::new("x@1", kind, params),
            Err(FilterError::ParamSchemaMismatch { .. })
        )
    };
    assert!(bad(FilterKind::Identity, CanonicalDoc::object().with("paths", Vec::<String>::new())));
    assert!(bad(FilterKind::Redact, CanonicalDoc::object()));
    assert!(bad(FilterKind::Redact, CanonicalDoc::object().with("paths", vec![1i64])));
    assert!(bad(FilterKind::Redact, CanonicalDoc::object().with("paths", vec![""])));
    assert!(bad(
        FilterKind::Bucketize,
        CanonicalDoc::object().with("path", "a").with("boundaries", vec![5i64, 5])
    ));
    assert!(bad(
        FilterKind::Bucketize,
        CanonicalDoc::object().with("path", "a").with("boundaries", Vec::<i64>::new())
    ));
    assert!(bad(
        FilterKind::Noise,
        CanonicalDoc::object().with("path", "a").with("scale_milli", 0)
    ));
    assert!(bad(FilterKind::Noise, CanonicalDoc::Array(vec![])));
}

#[test]
fn spec_digest_covers_id_kind_and_params() {
    let a = FilterSpec::redact("redact@1", &["name"]).unwrap();
    assert_ne!(a.spec_digest, FilterSpec::redact("redact@2", &["name"]).unwrap().spec_digest);
    assert_ne!(a.spec_digest, FilterSpec::select("redact@1", &["name"]).unwrap().spec_digest);
    assert_ne!(a.spec_digest, FilterSpec::redact("redact@1", &["address"]).unwrap().spec_digest);
    let mut tampered = a.clone();
    tampered.params = CanonicalDoc::object().with("paths", vec!["address"]);
    assert_eq!(tampered.validate(), Err(FilterError::SpecDigestMismatch));
}

#[test]
fn tiny_scale_noise_is_zero_at_the_fixture_seed() {
    let spec = FilterSpec::noise("noise@1", "visits_12m", 1).unwrap();
    let rec = fixtures::ehr_record();
    let u = seed_to_unit(noise_seed(&rec.canonical_digest(), &spec.spec_digest));
    // At scale 0.001, P(K != 0) = 2p/(1+p) with p = e^-1000: zero in f64, so
    // the inverse CDF must return 0 for every u strictly inside (0, 1).
    assert!(u > 0.0 && u < 1.0);
    assert_eq!(discrete_laplace(0.001, u), 0);
    let out = apply_filter(&spec, &rec).unwrap();
    assert_eq!(out, rec);
}

#[test]
fn noise_is_deterministic_per_input_and_spec() {
    let spec = FilterSpec::noise("noise@1", "income_cents", 50_000).unwrap();
    let rec = fixtures::loan_record();
    let a = apply_filter(&spec, &rec).unwrap();
    let b = apply_filter(&spec, &rec).unwrap();
    assert_eq!(a.canonical_bytes(), b.canonical_bytes());
    let other = FilterSpec::noise("noise@2", "income_cents", 50_000).unwrap();
    assert_ne!(
        noise_seed(&rec.canonical_digest(), &spec.spec_digest),
        noise_seed(&rec.canonical_digest(), &other.spec_digest)
    );
}

#[test]
fn seed_mapping_stays_inside_unit_interval() {
    for seed in [0u64, 1, u64::MAX, u64::MAX - 2047, 1 << 63] {
        let u = seed_to_unit(seed);
        assert!(u > 0.0 && u < 1.0, "{seed} -> {u}");
    }
}

/// Independent pmf: P(k) = (1 - p) / (1 + p) · p^|k| with p = e^(-1/scale).
fn dlap_pmf(scale: f64, k: i64) -> f64 {
    let p = (-1.0 / scale).exp();
    (1.0 - p) / (1.0 + p) * p.powi(k.unsigned_abs() as i32)
}

#[test]
fn noise_distribution_matches_discrete_laplace() {
    const TRIALS: i64 = 10_000;
    // χ² critical value for 14 degrees of freedom at α = 0.001.
    const CHI2_CRITICAL: f64 = 36.12;
    let scale_milli = 2_000;
    let scale = scale_milli as f64 / 1000.0;
    let spec = FilterSpec::noise("noise@1", "v", scale_milli).unwrap();

    // Bins: <= -7, -6..=6, >= 7.
    let mut observed = [0f64; 15];
    for i in 0..TRIALS {
        let rec = record_with(CanonicalDoc::object().with("v", 0).with("i", i));
        let out = apply_filter(&spec, &rec).unwrap();
        let k = out.content.get("v").unwrap().as_int().unwrap();
        observed[(k.clamp(-7, 7) + 7) as usize] += 1.0;
    }
    let mut expected = [0f64; 15];
    for k in -6..=6 {
        expected[(k + 7) as usize] = dlap_pmf(scale, k) * TRIALS as f64;
    }
    let tail = (1.0 - (-6..=6).map(|k| dlap_pmf(scale, k)).sum::<f64>()) / 2.0;
    expected[0] = tail * TRIALS as f64;
    expected[14] = tail * TRIALS as f64;

    let chi2: f64 = observed
        .iter()
        .zip(&expected)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    assert!(chi2 < CHI2_CRITICAL, "chi2 = {chi2}, observed {observed:?}");
}

#[test]
fn honest_proof_verifies() {
    let spec = FilterSpec::redact("redact@1", &["name", "address"]).unwrap();
    let input = fixtures::ehr_record();
    let output = apply_filter(&spec, &input).unwrap();
    let proof = attest_filter(&executor(), &spec, &input, &output).unwrap();
    assert_eq!(proof.input_digest, input.canonical_digest());
    assert_eq!(proof.output_digest, output.canonical_digest());
    verify_filter_proof(&proof, &spec, &trusted()).unwrap();
}

#[test]
fn doctored_output_is_refused() {
    let spec = FilterSpec::redact("redact@1", &["name"]).unwrap();
    let input = fixtures::ehr_record();
    let mut output = apply_filter(&spec, &input).unwrap();
    output.content = output.content.with("smoker", true);
    assert_eq!(
        attest_filter(&executor(), &spec, &input, &output),
        Err(FilterError::OutputMismatch)
    );
}

#[test]
fn proof_checked_against_other_spec_mismatches() {
    let a = FilterSpec::redact("redact@1", &["name"]).unwrap();
    let b = FilterSpec::redact("redact@1", &["name", "address"]).unwrap();
    let input = fixtures::ehr_record();
    let proof = attest_filter(&executor(), &a, &input, &apply_filter(&a, &input).unwrap()).unwrap();
    assert_eq!(verify_filter_proof(&proof, &b, &trusted()), Err(ReasonCode::FilterSpecMismatch));
}

#[test]
fn signer_checks() {
    let spec = FilterSpec::identity("id@1");
    let input = fixtures::ehr_record();
    let attestor = SecretKey::from_seed(KeyRole::Attestor, [4; 32]);
    assert_eq!(
        attest_filter(&attestor, &spec, &input, &input),
        Err(FilterError::WrongRole(KeyRole::Attestor))
    );
    let proof = attest_filter(&executor(), &spec, &input, &input).unwrap();
    assert_eq!(
        verify_filter_proof(&proof, &spec, &BTreeSet::new()),
        Err(ReasonCode::UntrustedSigner)
    );
    let mut forged = proof.clone();
    forged.output_digest = digest(b"other");
    assert_eq!(verify_filter_proof(&forged, &spec, &trusted()), Err(ReasonCode::BadSignature));
}

fn leaf_text() -> impl Strategy<Value = String> {
    "[A-Za-z0-9 ,.'-]{8,32}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn redaction_is_complete(name in leaf_text(), address in leaf_text(), nested in leaf_text()) {
        let content = CanonicalDoc::object()
            .with("name", name.clone())
            .with("address", address.clone())
            .with("contact", CanonicalDoc::object().with("phone", nested.clone()))
            .with("visits", 3);
        let spec = FilterSpec::redact("redact@1", &["name", "address", "contact.phone"]).unwrap();
        let out = apply_filter(&spec, &record_with(content)).unwrap();
        let bytes = out.canonical_bytes();
        let pretty = out.to_json_pretty();
        for secret in [&name, &address, &nested] {
            let needle = secret.as_bytes();
            prop_assert!(!bytes.windows(needle.len()).any(|w| w == needle));
            prop_assert!(!pretty.contains(secret.as_str()));
        }
    }

    #[test]
    fn proofs_link_input_and_output_digests(
        a in any::<i64>(),
        b in -1_000_000i64..1_000_000,
        s in "[a-z]{1,12}",
        which in 0usize..5,
        scale in 1i64..100_000,
    ) {
        let content = CanonicalDoc::object().with("a", a).with("b", b).with("s", s);
        let rec = record_with(content);
        let spec = match which {
            0 => FilterSpec::identity("id@1"),
            1 => FilterSpec::redact("r@1", &["s"]).unwrap(),
            2 => FilterSpec::select("s@1", &["a", "s"]).unwrap(),
            3 => FilterSpec::bucketize("b@1", "b", &[-10, 0, 10]).unwrap(),
            _ => FilterSpec::noise("n@1", "b", scale).unwrap(),
        };
        let out = apply_filter(&spec, &rec).unwrap();
        let proof = attest_filter(&executor(), &spec, &rec, &out).unwrap();
        prop_assert_eq!(proof.input_digest, rec.canonical_digest());
        prop_assert_eq!(proof.output_digest, out.canonical_digest());
        prop_assert_eq!(apply_filter(&spec, &rec).unwrap(), out);
    }

    #[test]
    fn bucket_index_matches_brute_force(
        value in any::<i64>(),
        mut bounds in proptest::collection::btree_set(any::<i64>(), 1..8),
    ) {
        let bounds: Vec<i64> = std::mem::take(&mut bounds).into_iter().collect();
        let brute = bounds.iter().filter(|b| **b <= value).count() as i64;
        prop_assert_eq!(bucket_index(value, &bounds), brute);
    }
}
