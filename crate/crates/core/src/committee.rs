//! Decentralized-oracle committee simulation.
//!
//! Each node independently executes an exact pinned spec on the same input
//! and signs the resulting statement. An aggregator collects votes until the
//! round deadline and emits a multi-signature [`InferenceProof`] iff at least
//! `quorum_t` nodes produced the same output digest. Outputs are
//! deterministic, so there is no leader and no second round.
//!
//! Faulty nodes err independently: each deviates by its own offset. Equivocation
//! is modeled, but a node's votes reach only the aggregator, so an equivocator
//! behaves like a wrong-output node from its point of view.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::Canonical;
use crate::crypto::{Digest, KeyIdentity, KeyRole, SecretKey, Signature};
use crate::pinned::{
    check_executor_signature, execute_pinned, Decision, ExecutorSignature, Fixed, InferenceOutput,
    InferenceProof, InferenceStatement, ModelKind, ModelSpec, ModelWeights,
};
use crate::reason::ReasonCode;
use crate::record::DataRecord;

pub const DEFAULT_ROUND_DEADLINE_MS: u64 = 2_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CommitteeError {
    #[error("committee execution needs an exact pin; service references are not replicable")]
    NotExact,
    #[error("invalid committee config: {0}")]
    InvalidConfig(String),
    #[error("no secret key for committee node {0}")]
    MissingKey(Digest),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeBehavior {
    #[default]
    Honest,
    WrongOutput,
    Crash,
    Equivocate,
}

impl NodeBehavior {
    pub fn is_faulty(self) -> bool {
        self != NodeBehavior::Honest
    }
}

impl std::str::FromStr for NodeBehavior {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "honest" => Ok(NodeBehavior::Honest),
            "wrong-output" => Ok(NodeBehavior::WrongOutput),
            "crash" => Ok(NodeBehavior::Crash),
            "equivocate" => Ok(NodeBehavior::Equivocate),
            other => Err(format!("unknown node behavior {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommitteeConfig {
    pub nodes: Vec<KeyIdentity>,
    pub quorum_t: u32,
    /// Keyed by node fingerprint; absent nodes are honest.
    #[serde(default)]
    pub fault_plan: BTreeMap<Digest, NodeBehavior>,
    #[serde(default = "default_deadline")]
    pub round_deadline_ms: u64,
}

fn default_deadline() -> u64 {
    DEFAULT_ROUND_DEADLINE_MS
}

impl Canonical for CommitteeConfig {}

impl CommitteeConfig {
    pub fn new(nodes: Vec<KeyIdentity>, quorum_t: u32) -> Self {
        CommitteeConfig {
            nodes,
            quorum_t,
            fault_plan: BTreeMap::new(),
            round_deadline_ms: DEFAULT_ROUND_DEADLINE_MS,
        }
    }

    pub fn behavior(&self, node: &KeyIdentity) -> NodeBehavior {
        self.fault_plan
            .get(&node.fingerprint)
            .copied()
            .unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), CommitteeError> {
        let bad = |m: String| Err(CommitteeError::InvalidConfig(m));
        let n = self.nodes.len();
        if self.quorum_t < 1 || self.quorum_t as usize > n {
            return bad(format!("quorum {} outside 1..={n}", self.quorum_t));
        }
        let mut seen = BTreeSet::new();
        for node in &self.nodes {
            if node.role != KeyRole::CommitteeNode || !node.is_well_formed() {
                return bad(format!("node {} is not a committee-node identity", node.fingerprint));
            }
            if !seen.insert(node.fingerprint) {
                return bad(format!("node {} listed twice", node.fingerprint));
            }
        }
        if let Some(stray) = self.fault_plan.keys().find(|k| !seen.contains(*k)) {
            return bad(format!("fault plan names unknown node {stray}"));
        }
        Ok(())
    }
}

/// Everything a node needs for one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundRequest {
    pub spec: ModelSpec,
    pub weights: ModelWeights,
    pub input: DataRecord,
    pub executed_at: i64,
}

impl Canonical for RoundRequest {}

impl RoundRequest {
    pub fn statement_for(&self, output: &InferenceOutput) -> InferenceStatement {
        InferenceStatement {
            pinned_digest: self.spec.pinned_digest(),
            input_digest: self.input.canonical_digest(),
            output_digest: output.canonical_digest(),
            executed_at: self.executed_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vote {
    pub node: KeyIdentity,
    pub output: InferenceOutput,
    pub signature: Signature,
}

impl Canonical for Vote {}

/// Reply frame from a node; `vote` is absent when the node crashed or could
/// not execute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeReply {
    pub vote: Option<Vote>,
}

impl Canonical for NodeReply {}

fn deviate(honest: InferenceOutput, delta: i64) -> InferenceOutput {
    InferenceOutput {
        decision: match honest.decision {
            Decision::Approve => Decision::Deny,
            Decision::Deny => Decision::Approve,
        },
        score: Fixed(honest.score.0.wrapping_add(delta)),
    }
}

/// Node-specific nonzero offset. Faulty nodes err independently, so they
/// never agree with one another by accident.
fn deviation(node: &KeyIdentity) -> i64 {
    let fp = node.fingerprint.as_bytes();
    1 + u32::from_be_bytes([fp[0], fp[1], fp[2], fp[3]]) as i64
}

fn signed_vote(key: &SecretKey, round: &RoundRequest, output: InferenceOutput) -> Vote {
    let sig = round.statement_for(&output).sign(key);
    Vote {
        node: sig.identity,
        output,
        signature: sig.signature,
    }
}

/// The votes an equivocating node emits: one honest copy for peers and a
/// conflicting one for the aggregator.
pub struct Equivocation {
    pub to_peers: Vote,
    pub to_aggregator: Vote,
}

pub fn equivocate(key: &SecretKey, round: &RoundRequest) -> Option<Equivocation> {
    let honest = execute_pinned(&round.spec, &round.weights, &round.input).ok()?;
    Some(Equivocation {
        to_peers: signed_vote(key, round, honest),
        to_aggregator: signed_vote(key, round, deviate(honest, -deviation(&key.identity()))),
    })
}

/// One node's behavior for one round; returns the vote it sends to the
/// aggregator.
pub fn node_execute(key: &SecretKey, behavior: NodeBehavior, round: &RoundRequest) -> Option<Vote> {
    match behavior {
        NodeBehavior::Crash => None,
        NodeBehavior::Honest => {
            let output = execute_pinned(&round.spec, &round.weights, &round.input).ok()?;
            Some(signed_vote(key, round, output))
        }
        NodeBehavior::WrongOutput => {
            let honest = execute_pinned(&round.spec, &round.weights, &round.input).ok()?;
            Some(signed_vote(key, round, deviate(honest, deviation(&key.identity()))))
        }
        NodeBehavior::Equivocate => equivocate(key, round).map(|e| e.to_aggregator),
    }
}

/// A committee member reachable over some transport.
pub trait CommitteeNode: Send {
    fn identity(&self) -> KeyIdentity;
    fn run(self: Box<Self>, round: RoundRequest) -> Option<Vote>;
}

/// In-process node.
pub struct LocalNode {
    pub key: SecretKey,
    pub behavior: NodeBehavior,
}

impl CommitteeNode for LocalNode {
    fn identity(&self) -> KeyIdentity {
        self.key.identity()
    }

    fn run(self: Box<Self>, round: RoundRequest) -> Option<Vote> {
        node_execute(&self.key, self.behavior, &round)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case", deny_unknown_fields)]
pub enum VoteRecord {
    Voted { output_digest: Digest },
    /// Vote arrived but its signature or signer did not check out.
    Invalid,
    /// Crashed, or missed the round deadline.
    Missing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusFailure {
    pub reason: String,
    pub largest_agreement: u32,
    pub quorum_t: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommitteeVerdict {
    pub agreed_output: Option<InferenceOutput>,
    pub proof: Option<InferenceProof>,
    /// Keyed by node fingerprint.
    pub votes: BTreeMap<Digest, VoteRecord>,
    pub failure: Option<ConsensusFailure>,
}

impl Canonical for CommitteeVerdict {}

/// Runs a round over arbitrary node transports.
pub fn run_committee(
    config: &CommitteeConfig,
    nodes: Vec<Box<dyn CommitteeNode>>,
    round: RoundRequest,
) -> Result<CommitteeVerdict, CommitteeError> {
    config.validate()?;
    if round.spec.kind() != ModelKind::Exact {
        return Err(CommitteeError::NotExact);
    }
    let configured: BTreeSet<Digest> = config.nodes.iter().map(|n| n.fingerprint).collect();
    for node in &nodes {
        let id = node.identity();
        if !configured.contains(&id.fingerprint) {
            return Err(CommitteeError::InvalidConfig(format!(
                "node {} is not in the committee",
                id.fingerprint
            )));
        }
    }

    let (tx, rx) = mpsc::channel::<(Digest, Option<Vote>)>();
    let expected = nodes.len();
    for node in nodes {
        let tx = tx.clone();
        let round = round.clone();
        std::thread::spawn(move || {
            let id = node.identity().fingerprint;
            let vote = node.run(round);
            let _ = tx.send((id, vote));
        });
    }
    drop(tx);

    let deadline = Instant::now() + Duration::from_millis(config.round_deadline_ms);
    let mut replies: BTreeMap<Digest, Option<Vote>> = BTreeMap::new();
    while replies.len() < expected {
        let remaining = deadline.saturating_duration_since(Instant::now());
        match rx.recv_timeout(remaining) {
            Ok((id, vote)) => {
                replies.entry(id).or_insert(vote);
            }
            Err(_) => break,
        }
    }

    Ok(tally(config, &round, replies))
}

fn tally(
    config: &CommitteeConfig,
    round: &RoundRequest,
    mut replies: BTreeMap<Digest, Option<Vote>>,
) -> CommitteeVerdict {
    let mut votes = BTreeMap::new();
    let mut groups: BTreeMap<Digest, (InferenceOutput, Vec<ExecutorSignature>)> = BTreeMap::new();
    for node in &config.nodes {
        let record = match replies.remove(&node.fingerprint).flatten() {
            None => VoteRecord::Missing,
            Some(vote) => {
                let statement = round.statement_for(&vote.output);
                let sig = ExecutorSignature {
                    identity: vote.node.clone(),
                    signature: vote.signature,
                };
                if vote.node != *node
                    || check_executor_signature(&sig, KeyRole::CommitteeNode, &statement).is_err()
                {
                    VoteRecord::Invalid
                } else {
                    groups
                        .entry(statement.output_digest)
                        .or_insert_with(|| (vote.output, Vec::new()))
                        .1
                        .push(sig);
                    VoteRecord::Voted {
                        output_digest: statement.output_digest,
                    }
                }
            }
        };
        votes.insert(node.fingerprint, record);
    }

    let t = config.quorum_t as usize;
    let largest = groups.values().map(|(_, s)| s.len()).max().unwrap_or(0) as u32;
    let mut reaching: Vec<_> = groups.into_iter().filter(|(_, (_, s))| s.len() >= t).collect();
    let failure = |reason: &str| CommitteeVerdict {
        agreed_output: None,
        proof: None,
        votes: votes.clone(),
        failure: Some(ConsensusFailure {
            reason: reason.to_string(),
            largest_agreement: largest,
            quorum_t: config.quorum_t,
        }),
    };
    match reaching.len() {
        0 => failure("no output reached quorum"),
        1 => {
            let (_, (output, sigs)) = reaching.pop().expect("one group");
            let statement = round.statement_for(&output);
            CommitteeVerdict {
                agreed_output: Some(output),
                proof: Some(InferenceProof::from_statement(statement, sigs)),
                votes,
                failure: None,
            }
        }
        _ => failure("conflicting outputs both reached quorum"),
    }
}

/// Builds in-process nodes from `keys` with behaviors from the fault plan.
pub fn local_nodes(config: &CommitteeConfig, keys: &[SecretKey]) -> Result<Vec<Box<dyn CommitteeNode>>, CommitteeError> {
    config
        .nodes
        .iter()
        .map(|id| {
            let key = keys
                .iter()
                .find(|k| k.identity() == *id)
                .ok_or(CommitteeError::MissingKey(id.fingerprint))?;
            Ok(Box::new(LocalNode {
                key: key.clone(),
                behavior: config.behavior(id),
            }) as Box<dyn CommitteeNode>)
        })
        .collect()
}

pub fn run_local_committee(
    config: &CommitteeConfig,
    keys: &[SecretKey],
    spec: &ModelSpec,
    weights: &ModelWeights,
    input: &DataRecord,
    executed_at: i64,
) -> Result<CommitteeVerdict, CommitteeError> {
    let nodes = local_nodes(config, keys)?;
    run_committee(
        config,
        nodes,
        RoundRequest {
            spec: spec.clone(),
            weights: weights.clone(),
            input: input.clone(),
            executed_at,
        },
    )
}

/// Ok iff the pin matches and at least `quorum_t` distinct configured nodes
/// validly signed the proof's statement. Every carried signature must
/// verify.
pub fn verify_committee_proof(
    proof: &InferenceProof,
    config: &CommitteeConfig,
    expected_pinned: &Digest,
) -> Result<(), ReasonCode> {
    if proof.pinned_digest != *expected_pinned {
        return Err(ReasonCode::PinMismatch);
    }
    let statement = proof.statement();
    let mut signers = BTreeSet::new();
    for sig in &proof.executor_signatures {
        if !config.nodes.contains(&sig.identity) {
            return Err(ReasonCode::UnknownSigner);
        }
        if !signers.insert(sig.identity.fingerprint) {
            return Err(ReasonCode::DuplicateSigner);
        }
        check_executor_signature(sig, KeyRole::CommitteeNode, &statement)?;
    }
    if signers.len() < config.quorum_t as usize {
        return Err(ReasonCode::InsufficientQuorum);
    }
    Ok(())
}
