//! Scenario orchestration: start the source and attestor, fetch, filter,
//! infer, deliver, verify, and write the artifacts directory.
//!
//! Layout of `out/`:
//!
//! ```text
//! chain.json      the PropChain handed to the consumer
//! report.json     the consumer's verification report
//! policy.json     the resolved verifier policy
//! verdict.json    committee verdict (inference scenarios only)
//! keys/           <name>.secret.json and <name>.identity.json
//! transcripts/    source descriptor and attestor transcript commitment
//! recipient/      opened_record.json (sealed delivery only)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use props_core::attestor::{
    fetch_attested, serve_attestor, wrap_source_signed, AttestationMode, AttestedFetch, TranscriptCommitment,
};
use props_core::committee::{
    run_committee, CommitteeConfig, CommitteeNode, CommitteeVerdict, ConsensusFailure, LocalNode, NodeBehavior,
    RoundRequest,
};
use props_core::filter::{apply_filter, attest_filter, FilterSpec};
use props_core::pinned::{
    attest_inference, execute_pinned, pin_model, Fixed, InferenceOutput, InferenceProof, ModelSpec, ModelWeights,
};
use props_core::source_net::{
    exchange, parse_response, serve, ClientOptions, Fault, FaultProxy, FetchRequest, ServerHandle,
    SourceDescriptor,
};
use props_core::verifier::{
    open_payload, seal_payload, verify_chain, ChainPayload, ModelRequirement, PropChain, VerificationReport,
    VerifierPolicy,
};
use props_core::{digest, unix_now, Canonical, CanonicalDoc, DataRecord, DomainTag, KeyRole, SecretKey};

use crate::attack::Attack;
use crate::config::{DeliveryMode, Pipeline, RequirementConfig, ScenarioConfig};
use crate::keys::{secret_path, KeyRing};
use crate::procs::{node_for, Component};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config_path: Option<PathBuf>,
    pub out: PathBuf,
    pub keys_dir: Option<PathBuf>,
    pub delivery: Option<DeliveryMode>,
    pub multiprocess: bool,
    pub attack: Option<Attack>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub chain: Option<PropChain>,
    pub report: Option<VerificationReport>,
    pub verdict: Option<CommitteeVerdict>,
    /// Set when the committee could not certify an output; no chain exists.
    pub consensus_failure: Option<ConsensusFailure>,
    /// What an honest executor computes on the delivered input.
    pub honest_output: Option<InferenceOutput>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.passed())
    }
}

fn write_json(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

/// Running source and attestor, in-process or as child processes.
enum Running {
    Local(ServerHandle),
    Child(Component),
}

impl Running {
    fn endpoint(&self) -> String {
        match self {
            Running::Local(h) => h.endpoint(),
            Running::Child(c) => c.endpoint().to_string(),
        }
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        if let Running::Local(h) = self {
            h.shutdown();
        }
    }
}

fn config_args(opts: &RunOptions) -> Vec<String> {
    match &opts.config_path {
        Some(p) => vec!["--config".into(), p.display().to_string()],
        None => vec![],
    }
}

/// Adds one to the first top-level integer of the record carried in a
/// response frame, leaving every signature untouched.
fn tamper_frame(frame: &[u8]) -> Vec<u8> {
    let Ok(mut json) = serde_json::from_slice::<serde_json::Value>(frame) else {
        return frame.to_vec();
    };
    if let Some(content) = json
        .get_mut("record")
        .and_then(|r| r.get_mut("content"))
        .and_then(|c| c.as_object_mut())
    {
        let target = content.iter().find(|(_, v)| v.is_i64()).map(|(k, _)| k.clone());
        match target {
            Some(k) => content[&k] = (content[&k].as_i64().unwrap_or(0).wrapping_add(1)).into(),
            None => {
                content.insert("tampered".into(), true.into());
            }
        }
    }
    match CanonicalDoc::try_from(json) {
        Ok(doc) => props_core::canonical::encode(&doc),
        Err(_) => frame.to_vec(),
    }
}

struct Fetched {
    attested: AttestedFetch,
    /// Key that signed the attestation.
    signer: SecretKey,
}

fn fetch_stage(
    cfg: &ScenarioConfig,
    pipe: &Pipeline,
    opts: &RunOptions,
    ring: &mut KeyRing,
    transcripts: &Path,
) -> Result<Fetched> {
    let source_cfg = cfg.source(&pipe.source)?;
    let attestor_cfg = cfg.attestor(&pipe.attestor)?;
    let source_key = ring.get(&source_cfg.source_id, KeyRole::Source)?;
    let request = FetchRequest {
        subject_id: pipe.subject.clone(),
        credential: pipe.credential.clone(),
        record_type: pipe.record_type.clone(),
    };
    let client = ClientOptions::default();

    let source = if opts.multiprocess {
        let mut args = vec!["serve-source".to_string()];
        args.extend(config_args(opts));
        args.extend([
            "--source".into(),
            source_cfg.source_id.clone(),
            "--key".into(),
            secret_path(ring.dir(), &source_cfg.source_id).display().to_string(),
            "--listen".into(),
            "127.0.0.1:0".into(),
        ]);
        Running::Child(Component::spawn("source", &args)?)
    } else {
        let descriptor = SourceDescriptor {
            source_id: source_cfg.source_id.clone(),
            listen_endpoint: "127.0.0.1:0".into(),
            source_identity: source_key.identity(),
            signing_enabled: source_cfg.signing,
        };
        Running::Local(serve(descriptor, source_cfg.store(), source_key.clone())?)
    };
    let descriptor = SourceDescriptor {
        source_id: source_cfg.source_id.clone(),
        listen_endpoint: source.endpoint(),
        source_identity: source_key.identity(),
        signing_enabled: source_cfg.signing,
    };
    let descriptor_path = transcripts.join("source-descriptor.json");
    write_json(&descriptor_path, descriptor.to_json_pretty().as_bytes())?;

    let tamper = opts.attack == Some(Attack::TamperData);
    let proxy_in_front = |endpoint: String| -> Result<(Option<FaultProxy>, String)> {
        if !tamper {
            return Ok((None, endpoint));
        }
        let proxy = FaultProxy::start(&endpoint, Fault::rewrite(tamper_frame))?;
        let ep = proxy.endpoint();
        Ok((Some(proxy), ep))
    };

    match attestor_cfg.mode {
        AttestationMode::OracleProxy => {
            let attestor_key = ring.get(&attestor_cfg.name, KeyRole::Attestor)?;
            let attestor = if opts.multiprocess {
                let args = vec![
                    "serve-attestor".to_string(),
                    "--key".into(),
                    secret_path(ring.dir(), &attestor_cfg.name).display().to_string(),
                    "--descriptor".into(),
                    descriptor_path.display().to_string(),
                    "--listen".into(),
                    "127.0.0.1:0".into(),
                ];
                Running::Child(Component::spawn("attestor", &args)?)
            } else {
                Running::Local(serve_attestor(
                    "127.0.0.1:0",
                    attestor_key.clone(),
                    vec![descriptor.clone()],
                    client,
                )?)
            };
            let (_proxy, endpoint) = proxy_in_front(attestor.endpoint())?;
            let attested = fetch_attested(&endpoint, &descriptor.source_id, &request, client)?;
            write_json(
                &transcripts.join("attestor-transcript.json"),
                attested.transcript.to_json_pretty().as_bytes(),
            )?;
            Ok(Fetched {
                attested,
                signer: attestor_key,
            })
        }
        AttestationMode::SourceSigned => {
            if !source_cfg.signing {
                bail!("ConfigError: source {} does not sign responses", source_cfg.source_id);
            }
            let (_proxy, endpoint) = proxy_in_front(source.endpoint())?;
            let request_frame = request.canonical_bytes();
            let response_frame = exchange(&endpoint, &request_frame, client)?;
            let response = parse_response(&response_frame)?;
            let attestation = wrap_source_signed(&response, &request, &source_key.identity())?;
            let transcript = TranscriptCommitment {
                source_id: descriptor.source_id.clone(),
                request_frame_digest: digest(&request_frame),
                request_len: request_frame.len() as i64,
                response_frame_digest: digest(&response_frame),
                response_len: response_frame.len() as i64,
                observed_at: attestation.issued_at,
            };
            write_json(
                &transcripts.join("source-transcript.json"),
                transcript.to_json_pretty().as_bytes(),
            )?;
            Ok(Fetched {
                attested: AttestedFetch {
                    record: response.record,
                    attestation,
                    transcript,
                },
                signer: source_key,
            })
        }
    }
}

/// Same environment, different weights: a model the consumer never pinned.
fn swapped_model(spec: &ModelSpec, weights: &ModelWeights) -> Result<(ModelSpec, ModelWeights)> {
    let ModelSpec::Exact { env, .. } = spec else {
        bail!("swap-model needs an exact pin");
    };
    let mut other = weights.clone();
    other.bias = Fixed(other.bias.0.saturating_add(Fixed::ONE.0));
    Ok((pin_model(env, &other)?, other))
}

fn committee_config(
    cfg: &ScenarioConfig,
    name: &str,
    ring: &mut KeyRing,
    attack: Option<Attack>,
) -> Result<(CommitteeConfig, Vec<SecretKey>)> {
    let section = cfg.committee(name)?;
    let keys = (0..section.nodes)
        .map(|i| ring.get(&section.node_name(i), KeyRole::CommitteeNode))
        .collect::<Result<Vec<_>>>()?;
    let mut config = CommitteeConfig::new(keys.iter().map(|k| k.identity()).collect(), section.quorum_t);
    config.round_deadline_ms = section.round_deadline_ms;
    let mut faults: BTreeMap<u32, NodeBehavior> = section.fault_indices()?;
    if let Some(Attack::Byzantine(k)) = attack {
        if k > section.nodes {
            bail!("byzantine-{k} exceeds the {} committee nodes", section.nodes);
        }
        const CYCLE: [NodeBehavior; 3] = [NodeBehavior::WrongOutput, NodeBehavior::Crash, NodeBehavior::Equivocate];
        faults = (0..k).map(|i| (i, CYCLE[i as usize % CYCLE.len()])).collect();
    }
    for (i, b) in faults {
        config.fault_plan.insert(keys[i as usize].identity().fingerprint, b);
    }
    Ok((config, keys))
}

fn resolve_policy(cfg: &ScenarioConfig, name: &str, ring: &mut KeyRing) -> Result<VerifierPolicy> {
    let p = cfg.policy(name)?;
    let mut trusted_attestors = std::collections::BTreeSet::new();
    for a in &p.trusted_attestors {
        let id = if cfg.attestor(a).is_ok() {
            ring.identity(a, KeyRole::Attestor)?
        } else {
            ring.identity(a, KeyRole::Source)?
        };
        trusted_attestors.insert(id);
    }
    let trusted_executors = p
        .trusted_executors
        .iter()
        .map(|e| ring.identity(e, KeyRole::Executor))
        .collect::<Result<_>>()?;
    let filter_whitelist = p
        .filter_whitelist
        .iter()
        .map(|f| Ok(cfg.filter(f)?.spec_digest))
        .collect::<Result<_>>()?;
    let model_requirement = match &p.model_requirement {
        RequirementConfig::None => ModelRequirement::None,
        RequirementConfig::Exact { model } => ModelRequirement::Exact {
            pinned_digest: cfg.model(model)?.0.pinned_digest(),
        },
        RequirementConfig::Committee { model, committee } => {
            let (mut config, _) = committee_config(cfg, committee, ring, None)?;
            config.fault_plan.clear();
            ModelRequirement::Committee {
                config,
                pinned_digest: cfg.model(model)?.0.pinned_digest(),
            }
        }
    };
    Ok(VerifierPolicy {
        trusted_attestors,
        trusted_sources: p.trusted_sources.iter().cloned().collect(),
        trusted_executors,
        filter_whitelist,
        required_record_type: p.required_record_type.clone(),
        model_requirement,
        max_age_seconds: p.max_age_seconds,
        delivery: p.delivery,
    })
}

fn run_round(
    config: &CommitteeConfig,
    keys: &[SecretKey],
    ring: &KeyRing,
    names: &[String],
    multiprocess: bool,
    round: RoundRequest,
) -> Result<CommitteeVerdict> {
    let nodes: Vec<Box<dyn CommitteeNode>> = keys
        .iter()
        .zip(names)
        .map(|(k, name)| {
            let behavior = config.behavior(&k.identity());
            if multiprocess {
                node_for(k, secret_path(ring.dir(), name), behavior)
            } else {
                Box::new(LocalNode {
                    key: k.clone(),
                    behavior,
                }) as Box<dyn CommitteeNode>
            }
        })
        .collect();
    Ok(run_committee(config, nodes, round)?)
}

pub fn run_scenario(cfg: &ScenarioConfig, scenario: &str, opts: &RunOptions) -> Result<RunOutcome> {
    let pipe = cfg.pipeline(scenario)?;
    let attack = opts.attack;
    if let Some(a) = attack {
        if a.needs_model() && pipe.model.is_none() {
            bail!("attack {a} needs a scenario with a model; {scenario} has none");
        }
        if matches!(a, Attack::Byzantine(_)) && pipe.committee.is_none() {
            bail!("attack {a} needs a committee scenario");
        }
    }
    let delivery = opts.delivery.unwrap_or(pipe.delivery);
    if delivery == DeliveryMode::Sealed && pipe.model.is_some() {
        bail!("ConfigError: sealed delivery carries records, not inference outputs");
    }

    fs::create_dir_all(&opts.out)?;
    let transcripts = opts.out.join("transcripts");
    fs::create_dir_all(&transcripts)?;
    let keys_dir = opts.keys_dir.clone().unwrap_or_else(|| opts.out.join("keys"));
    let mut ring = KeyRing::open(&keys_dir)?;

    // Fetch through the attestor.
    let fetched = fetch_stage(cfg, pipe, opts, &mut ring, &transcripts)?;
    let mut attestation = fetched.attested.attestation.clone();
    let mut record: DataRecord = fetched.attested.record.clone();

    // User-controlled filters.
    let executor = ring.get(&pipe.executor, KeyRole::Executor)?;
    let mut specs: Vec<FilterSpec> = pipe.filters.iter().map(|f| cfg.filter(f)).collect::<Result<_>>()?;
    if attack == Some(Attack::SwapFilter) {
        let rogue = FilterSpec::identity("identity@1");
        match specs.first_mut() {
            Some(first) => *first = rogue,
            None => specs.push(rogue),
        }
    }
    let mut filters = Vec::with_capacity(specs.len());
    for spec in specs {
        let out = apply_filter(&spec, &record).map_err(|e| anyhow!("filter {}: {e}", spec.filter_id))?;
        let proof = attest_filter(&executor, &spec, &record, &out)?;
        filters.push((spec, proof));
        record = out;
    }

    // Inference.
    let mut verdict = None;
    let mut honest_output = None;
    let mut inference: Option<InferenceProof> = None;
    let mut output = None;
    if let Some(model_id) = &pipe.model {
        let (spec, weights) = cfg.model(model_id)?;
        honest_output = Some(execute_pinned(&spec, &weights, &record)?);
        let (run_spec, run_weights) = if attack == Some(Attack::SwapModel) {
            swapped_model(&spec, &weights)?
        } else {
            (spec, weights)
        };
        let executed_at = unix_now();
        match &pipe.committee {
            Some(name) => {
                let (config, keys) = committee_config(cfg, name, &mut ring, attack)?;
                let section = cfg.committee(name)?;
                let names: Vec<String> = (0..section.nodes).map(|i| section.node_name(i)).collect();
                let round = RoundRequest {
                    spec: run_spec,
                    weights: run_weights,
                    input: record.clone(),
                    executed_at,
                };
                let v = run_round(&config, &keys, &ring, &names, opts.multiprocess, round)?;
                write_json(&opts.out.join("verdict.json"), v.to_json_pretty().as_bytes())?;
                if let Some(failure) = &v.failure {
                    return Ok(RunOutcome {
                        chain: None,
                        report: None,
                        consensus_failure: Some(failure.clone()),
                        verdict: Some(v),
                        honest_output,
                    });
                }
                inference = v.proof.clone();
                output = v.agreed_output;
                verdict = Some(v);
            }
            None => {
                let y = execute_pinned(&run_spec, &run_weights, &record)?;
                inference = Some(attest_inference(&executor, &run_spec, &run_weights, &record, &y, executed_at)?);
                output = Some(y);
            }
        }
    }

    if attack == Some(Attack::ForgeSig) {
        // The attacker cannot sign as the claimed attestor; it signs with its
        // own key and keeps the trusted identity on the statement.
        let (impostor, _) = props_core::keygen(fetched.signer.role());
        attestation.signature = impostor.sign(DomainTag::SourceAttestation, &attestation.body().canonical_bytes());
    }

    // Delivery.
    let recipient = ring.get(&pipe.recipient, KeyRole::Recipient)?;
    let payload = match (output, delivery) {
        (Some(y), _) => ChainPayload::Output { output: y },
        (None, DeliveryMode::Plaintext) => ChainPayload::Record { record: record.clone() },
        (None, DeliveryMode::Sealed) => {
            // The seal must come from whoever signed the last hop.
            let sealer = if filters.is_empty() { &fetched.signer } else { &executor };
            ChainPayload::Sealed {
                sealed: seal_payload(sealer, &recipient.identity(), &record)?,
            }
        }
    };
    let chain = PropChain::new(attestation, filters, inference, payload);

    // Consumer side.
    let policy = resolve_policy(cfg, &pipe.policy, &mut ring)?;
    write_json(&opts.out.join("policy.json"), policy.to_json_pretty().as_bytes())?;
    let mut now = unix_now();
    if attack == Some(Attack::Stale) {
        now += policy.max_age_seconds + 1;
    }
    let report = verify_chain(&chain, &policy, now);
    write_json(&opts.out.join("chain.json"), chain.to_json_pretty().as_bytes())?;
    write_json(&opts.out.join("report.json"), &report.export())?;

    if report.passed() {
        if let ChainPayload::Sealed { sealed } = &chain.payload {
            let opened = open_payload(&recipient, sealed)?;
            write_json(
                &opts.out.join("recipient").join("opened_record.json"),
                opened.to_json_pretty().as_bytes(),
            )?;
        }
    }

    Ok(RunOutcome {
        chain: Some(chain),
        report: Some(report),
        verdict,
        consensus_failure: None,
        honest_output,
    })
}
