use std::collections::BTreeMap;

use proptest::prelude::*;
use props_core::canonical::{decode, encode};
use props_core::{digest, fixtures, Canonical, CanonicalDoc};

fn arb_doc() -> impl Strategy<Value = CanonicalDoc> {
    let leaf = prop_oneof![
        Just(CanonicalDoc::Null),
        any::<bool>().prop_map(CanonicalDoc::Bool),
        any::<i64>().prop_map(CanonicalDoc::Int),
        any::<String>().prop_map(CanonicalDoc::Str),
        "[a-z\\\\\"\u{0}-\u{1f}\u{7f}é😀]{0,6}".prop_map(CanonicalDoc::Str),
    ];
    leaf.prop_recursive(4, 48, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..6).prop_map(CanonicalDoc::Array),
            prop::collection::btree_map(any::<String>(), inner, 0..6).prop_map(CanonicalDoc::Object),
        ]
    })
}

/// serde_json's compact writer over its sorted map is an independent encoder
/// for this subset.
fn reference_encoding(doc: &CanonicalDoc) -> Vec<u8> {
    serde_json::to_vec(&serde_json::Value::from(doc)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn round_trip_is_identity(doc in arb_doc()) {
        let bytes = encode(&doc);
        prop_assert_eq!(&bytes, &reference_encoding(&doc));
        prop_assert_eq!(decode(&bytes).unwrap(), doc.clone());
        prop_assert_eq!(encode(&decode(&bytes).unwrap()), bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn insertion_order_is_irrelevant(
        pairs in prop::collection::vec((any::<String>(), any::<i64>()), 0..12),
        rotate in any::<usize>(),
    ) {
        let forward: BTreeMap<_, _> = pairs.iter().cloned().map(|(k, v)| (k, CanonicalDoc::Int(v))).collect();
        let mut entries: Vec<_> = forward.clone().into_iter().collect();
        if !entries.is_empty() {
            let n = rotate % entries.len();
            entries.rotate_left(n);
        }
        entries.reverse();
        // Written out by hand: serde_json's own map would sort the keys for us.
        let body: Vec<String> = entries
            .iter()
            .map(|(k, v)| format!("{}:{}", serde_json::to_string(k).unwrap(), v))
            .collect();
        let text = format!("{{{}}}", body.join(","));
        let shuffled: CanonicalDoc = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(encode(&shuffled), encode(&CanonicalDoc::Object(forward)));
    }

    #[test]
    fn one_bit_changes_half_the_digest(input in prop::collection::vec(any::<u8>(), 1..256), bit in any::<usize>()) {
        let bit = bit % (input.len() * 8);
        let mut flipped = input.clone();
        flipped[bit / 8] ^= 1 << (bit % 8);
        let a = digest(&input);
        let b = digest(&flipped);
        let distance: u32 = a.0.iter().zip(b.0.iter()).map(|(x, y)| (x ^ y).count_ones()).sum();
        prop_assert!((64..=192).contains(&distance), "hamming distance {}", distance);
    }
}

#[test]
fn sha256_known_vectors() {
    assert_eq!(
        digest(b"").to_hex(),
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    );
    assert_eq!(
        digest(b"abc").to_hex(),
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    );
}

#[test]
fn frozen_fixture_digests() {
    // Computed outside this crate with Python's json.dumps(sort_keys=True,
    // separators=(",", ":"), ensure_ascii=False) and hashlib.sha256.
    assert_eq!(
        fixtures::ehr_record().canonical_digest().to_hex(),
        "e47f3361350083886a01120d779f4baf7214851804cd7ce4a9714c5b6e1eaf76"
    );
    assert_eq!(
        digest(&encode(&fixtures::ehr_content())).to_hex(),
        "16d46de5e05dbb624883d87679ab38f08819cc00bdb2913d5300e3fe860e079c"
    );
}

#[test]
fn strict_decode_rejects_trailing_and_whitespace() {
    for bad in [&b"{} "[..], b" {}", b"{}{}", b"nul", b"[1,]", b"{\"a\":1,}", b"", b"\"\\u00e9\""] {
        assert!(decode(bad).is_err(), "{:?}", String::from_utf8_lossy(bad));
    }
}
