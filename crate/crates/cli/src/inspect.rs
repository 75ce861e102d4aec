//! Human-readable dumps of chain, report, verdict, policy and identity files.
//! Every digest that can be recomputed from the file itself is checked.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, Result};
use props_core::committee::CommitteeVerdict;
use props_core::verifier::{ChainPayload, PropChain, VerificationReport, VerifierPolicy, CHAIN_SCHEMA, REPORT_SCHEMA};
use props_core::{Canonical, Digest, KeyIdentity};

pub struct Dump {
    pub text: String,
    pub consistent: bool,
}

struct Writer {
    text: String,
    consistent: bool,
}

impl Writer {
    fn line(&mut self, s: impl AsRef<str>) {
        self.text.push_str(s.as_ref());
        self.text.push('\n');
    }

    /// `label digest [consistent]`, or `[INCONSISTENT: expected ...]`.
    fn digest(&mut self, label: &str, got: &Digest, expected: Option<&Digest>) {
        let mut s = format!("  {label:<22} {got}");
        match expected {
            Some(e) if e == got => s.push_str("  [consistent]"),
            Some(e) => {
                let _ = write!(s, "  [INCONSISTENT: expected {e}]");
                self.consistent = false;
            }
            None => {}
        }
        self.line(s);
    }
}

fn dump_chain(chain: &PropChain) -> Dump {
    let mut w = Writer {
        text: String::new(),
        consistent: true,
    };
    let att = &chain.attestation;
    w.line(format!("chain {}", chain.schema));
    w.line(format!(
        "attestation  mode={} source={} record_type={} issued_at={}",
        serde_json::to_value(att.mode).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
        att.source_id,
        att.record_type,
        att.issued_at
    ));
    w.line(format!("  signer                 {} ({})", att.attestor_identity.fingerprint, att.attestor_identity.role));
    w.digest("content_digest", &att.content_digest, None);

    if chain.filter_specs.len() != chain.filter_proofs.len() {
        w.consistent = false;
        w.line(format!(
            "filters  [INCONSISTENT: {} specs, {} proofs]",
            chain.filter_specs.len(),
            chain.filter_proofs.len()
        ));
    }
    let mut upstream = att.content_digest;
    for (i, (spec, proof)) in chain.filter_specs.iter().zip(&chain.filter_proofs).enumerate() {
        w.line(format!("filter[{i}] {} ({})", spec.filter_id, spec.kind));
        w.digest("spec_digest", &spec.spec_digest, Some(&spec.recompute_digest()));
        w.digest("proof.spec_digest", &proof.spec_digest, Some(&spec.spec_digest));
        w.digest("input_digest", &proof.input_digest, Some(&upstream));
        w.digest("output_digest", &proof.output_digest, None);
        upstream = proof.output_digest;
    }

    if let Some(inf) = &chain.inference_proof {
        w.line(format!(
            "inference  executed_at={} signatures={}",
            inf.executed_at,
            inf.executor_signatures.len()
        ));
        w.digest("pinned_digest", &inf.pinned_digest, None);
        w.digest("input_digest", &inf.input_digest, Some(&upstream));
        w.digest("output_digest", &inf.output_digest, None);
        for s in &inf.executor_signatures {
            w.line(format!("  signed by              {} ({})", s.identity.fingerprint, s.identity.role));
        }
    }

    let kind = match &chain.payload {
        ChainPayload::Record { .. } => "record",
        ChainPayload::Output { .. } => "output",
        ChainPayload::Sealed { .. } => "sealed",
    };
    w.line(format!("payload {kind}"));
    let terminal = chain.terminal_digest();
    w.digest("digest", &chain.payload.digest(), Some(&terminal));
    if let ChainPayload::Sealed { sealed } = &chain.payload {
        w.line(format!("  suite                  {}", sealed.suite));
        w.line(format!("  recipient              {}", sealed.recipient_fingerprint));
        w.line(format!("  ciphertext bytes       {}", sealed.ciphertext.len() / 2));
    }
    let expected_at = chain.expected_created_at();
    if chain.created_at == expected_at {
        w.line(format!("created_at {}  [consistent]", chain.created_at));
    } else {
        w.consistent = false;
        w.line(format!("created_at {}  [INCONSISTENT: expected {expected_at}]", chain.created_at));
    }
    w.line("");
    w.line(chain.to_json_pretty());
    Dump {
        text: w.text,
        consistent: w.consistent,
    }
}

fn dump_report(report: &VerificationReport) -> Dump {
    let mut text = format!(
        "report {}  verdict={}  verified_at={}\n",
        report.schema,
        if report.passed() { "pass" } else { "fail" },
        report.verified_at
    );
    for c in &report.checks {
        match &c.reason {
            None if c.passed => {
                let _ = writeln!(text, "  [PASS] {}", c.check_id);
            }
            reason => {
                let r = reason.as_ref().map(|r| r.as_str().to_string()).unwrap_or_default();
                let _ = writeln!(text, "  [FAIL] {}: {r}", c.check_id);
            }
        }
    }
    Dump { text, consistent: true }
}

fn dump_verdict(v: &CommitteeVerdict) -> Dump {
    let mut w = Writer {
        text: String::new(),
        consistent: true,
    };
    match (&v.agreed_output, &v.failure) {
        (Some(y), _) => w.line(format!("committee agreed: decision={:?} score={}", y.decision, y.score)),
        (None, Some(f)) => w.line(format!(
            "committee failed: {} (largest agreement {} of quorum {})",
            f.reason, f.largest_agreement, f.quorum_t
        )),
        (None, None) => w.line("committee produced neither output nor failure"),
    }
    if let (Some(y), Some(p)) = (&v.agreed_output, &v.proof) {
        w.digest("proof.output_digest", &p.output_digest, Some(&y.canonical_digest()));
    }
    for (node, vote) in &v.votes {
        w.line(format!("  {node}  {}", serde_json::to_string(vote).unwrap_or_default()));
    }
    Dump {
        text: w.text,
        consistent: w.consistent,
    }
}

/// Parses an artifact by its shape and renders it.
pub fn inspect_bytes(bytes: &[u8]) -> Result<Dump> {
    let text = std::str::from_utf8(bytes).map_err(|_| anyhow!("ParseError: not UTF-8"))?;
    let json: serde_json::Value =
        serde_json::from_str(text).map_err(|e| anyhow!("ParseError: not JSON: {e}"))?;
    let schema = json.get("schema").and_then(|s| s.as_str());
    if schema == Some(CHAIN_SCHEMA) {
        let chain = PropChain::from_json(text).map_err(|e| anyhow!("ParseError: chain: {e}"))?;
        return Ok(dump_chain(&chain));
    }
    if schema == Some(REPORT_SCHEMA) {
        let report = VerificationReport::import(bytes).map_err(|e| anyhow!("ParseError: report: {e}"))?;
        return Ok(dump_report(&report));
    }
    if let Ok(v) = CommitteeVerdict::from_json(text) {
        return Ok(dump_verdict(&v));
    }
    if let Ok(p) = VerifierPolicy::from_json(text) {
        return Ok(Dump {
            text: p.to_json_pretty() + "\n",
            consistent: true,
        });
    }
    if let Ok(id) = KeyIdentity::from_json(text) {
        let ok = id.is_well_formed();
        return Ok(Dump {
            text: format!(
                "identity role={} fingerprint={} [{}]\n",
                id.role,
                id.fingerprint,
                if ok { "consistent" } else { "INCONSISTENT" }
            ),
            consistent: ok,
        });
    }
    Err(anyhow!("ParseError: unrecognised artifact"))
}

pub fn cmd_inspect(path: &Path) -> Result<Dump> {
    let bytes = std::fs::read(path).map_err(|e| anyhow!("ParseError: cannot read {}: {e}", path.display()))?;
    inspect_bytes(&bytes)
}
