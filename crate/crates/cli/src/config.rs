//! Scenario documents: sources, attestors, filters, models, committees,
//! policies and the pipelines that wire them together.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use props_core::attestor::AttestationMode;
use props_core::committee::{NodeBehavior, DEFAULT_ROUND_DEADLINE_MS};
use props_core::filter::{FilterKind, FilterSpec};
use props_core::fixtures;
use props_core::pinned::{pin_model, EnvDescriptor, ModelSpec, ModelWeights};
use props_core::source_net::RecordStore;
use props_core::verifier::DeliveryRequirement;
use props_core::CanonicalDoc;
use serde::Deserialize;

pub const SCENARIO_SCHEMA: &str = "props.scenario/v1";

/// The document shipped with the binary.
pub const BUNDLED: &str = include_str!("../scenarios/props.toml");

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: String,
    #[serde(default)]
    pub sources: Vec<SourceConfig>,
    #[serde(default)]
    pub attestors: Vec<AttestorConfig>,
    #[serde(default)]
    pub filters: Vec<FilterConfig>,
    #[serde(default)]
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub committees: Vec<CommitteeSection>,
    #[serde(default)]
    pub policies: Vec<PolicyConfig>,
    #[serde(default)]
    pub scenarios: BTreeMap<String, Pipeline>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fixture {
    Ehr,
    Loan,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub source_id: String,
    pub fixture: Fixture,
    /// Sign responses with the source's own key.
    #[serde(default)]
    pub signing: bool,
}

impl SourceConfig {
    pub fn store(&self) -> RecordStore {
        match self.fixture {
            Fixture::Ehr => fixtures::ehr_store(),
            Fixture::Loan => fixtures::loan_store(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttestorConfig {
    pub name: String,
    pub mode: AttestationMode,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub filter_id: String,
    pub kind: FilterKind,
    #[serde(default = "empty_table")]
    pub params: toml::Value,
}

fn empty_table() -> toml::Value {
    toml::Value::Table(Default::default())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model_id: String,
    /// Defaults to `model_id`.
    pub env_version: Option<String>,
    pub feature_paths: Vec<String>,
    #[serde(default)]
    pub preprocessing: Vec<String>,
    pub weights: Vec<String>,
    pub bias: String,
    pub threshold: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommitteeSection {
    pub name: String,
    pub nodes: u32,
    pub quorum_t: u32,
    #[serde(default = "default_deadline")]
    pub round_deadline_ms: u64,
    /// Node index (as a string key) to behavior.
    #[serde(default)]
    pub faults: BTreeMap<String, NodeBehavior>,
}

fn default_deadline() -> u64 {
    DEFAULT_ROUND_DEADLINE_MS
}

impl CommitteeSection {
    pub fn node_name(&self, index: u32) -> String {
        format!("{}-node-{index}", self.name)
    }

    pub fn fault_indices(&self) -> Result<BTreeMap<u32, NodeBehavior>> {
        self.faults
            .iter()
            .map(|(k, b)| {
                let i: u32 = k
                    .parse()
                    .map_err(|_| anyhow!("committee {}: fault key {k:?} is not a node index", self.name))?;
                if i >= self.nodes {
                    bail!("committee {}: fault names node {i} of {}", self.name, self.nodes);
                }
                Ok((i, *b))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RequirementConfig {
    None,
    Exact { model: String },
    Committee { model: String, committee: String },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub name: String,
    /// Attestor names and, for source-signed sources, source ids.
    pub trusted_attestors: Vec<String>,
    pub trusted_sources: Vec<String>,
    #[serde(default)]
    pub trusted_executors: Vec<String>,
    #[serde(default)]
    pub filter_whitelist: Vec<String>,
    pub required_record_type: String,
    pub model_requirement: RequirementConfig,
    pub max_age_seconds: i64,
    #[serde(default)]
    pub delivery: DeliveryRequirement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DeliveryMode {
    Plaintext,
    Sealed,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pipeline {
    pub source: String,
    pub attestor: String,
    pub subject: String,
    pub credential: String,
    pub record_type: String,
    #[serde(default)]
    pub filters: Vec<String>,
    pub executor: String,
    pub model: Option<String>,
    /// Without a committee a model runs on the executor alone.
    pub committee: Option<String>,
    pub recipient: String,
    pub policy: String,
    pub delivery: DeliveryMode,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).context("ConfigError: scenario document")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Self::parse(BUNDLED),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("ConfigError: cannot read {}", p.display()))?;
                Self::parse(&text)
            }
        }
    }

    pub fn source(&self, id: &str) -> Result<&SourceConfig> {
        self.sources
            .iter()
            .find(|s| s.source_id == id)
            .ok_or_else(|| anyhow!("ConfigError: unknown source {id:?}"))
    }

    pub fn attestor(&self, name: &str) -> Result<&AttestorConfig> {
        self.attestors
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| anyhow!("ConfigError: unknown attestor {name:?}"))
    }

    pub fn filter(&self, id: &str) -> Result<FilterSpec> {
        let f = self
            .filters
            .iter()
            .find(|f| f.filter_id == id)
            .ok_or_else(|| anyhow!("ConfigError: unknown filter {id:?}"))?;
        let json = serde_json::to_value(&f.params)?;
        let params = CanonicalDoc::try_from(json)
            .map_err(|e| anyhow!("ConfigError: filter {id}: {e}"))?;
        FilterSpec::new(&f.filter_id, f.kind, params).map_err(|e| anyhow!("ConfigError: filter {id}: {e}"))
    }

    pub fn model(&self, id: &str) -> Result<(ModelSpec, ModelWeights)> {
        let m = self
            .models
            .iter()
            .find(|m| m.model_id == id)
            .ok_or_else(|| anyhow!("ConfigError: unknown model {id:?}"))?;
        let paths: Vec<&str> = m.feature_paths.iter().map(String::as_str).collect();
        let steps: Vec<&str> = m.preprocessing.iter().map(String::as_str).collect();
        let env = EnvDescriptor::new(m.env_version.as_deref().unwrap_or(&m.model_id), &paths, &steps);
        let ws: Vec<&str> = m.weights.iter().map(String::as_str).collect();
        let weights = ModelWeights::from_decimals(&ws, &m.bias, &m.threshold)
            .map_err(|e| anyhow!("ConfigError: model {id}: {e}"))?;
        let spec = pin_model(&env, &weights).map_err(|e| anyhow!("ConfigError: model {id}: {e}"))?;
        Ok((spec, weights))
    }

    pub fn committee(&self, name: &str) -> Result<&CommitteeSection> {
        self.committees
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| anyhow!("ConfigError: unknown committee {name:?}"))
    }

    pub fn policy(&self, name: &str) -> Result<&PolicyConfig> {
        self.policies
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| anyhow!("ConfigError: unknown policy {name:?}"))
    }

    pub fn pipeline(&self, scenario: &str) -> Result<&Pipeline> {
        self.scenarios
            .get(scenario)
            .ok_or_else(|| anyhow!("ConfigError: document has no scenario {scenario:?}"))
    }

    /// Names of parties that can sign as executors.
    fn executors(&self) -> BTreeSet<&str> {
        self.scenarios.values().map(|p| p.executor.as_str()).collect()
    }

    /// Every name and id referenced anywhere must be defined.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCENARIO_SCHEMA {
            bail!("ConfigError: schema {:?}, expected {SCENARIO_SCHEMA:?}", self.schema);
        }
        let mut seen = BTreeSet::new();
        for id in self
            .sources
            .iter()
            .map(|s| &s.source_id)
            .chain(self.attestors.iter().map(|a| &a.name))
        {
            if !seen.insert(id) {
                bail!("ConfigError: {id:?} defined twice");
            }
        }
        for f in &self.filters {
            self.filter(&f.filter_id)?;
        }
        for m in &self.models {
            self.model(&m.model_id)?;
        }
        for c in &self.committees {
            if c.quorum_t < 1 || c.quorum_t > c.nodes {
                bail!("ConfigError: committee {}: quorum {} of {} nodes", c.name, c.quorum_t, c.nodes);
            }
            c.fault_indices()?;
        }
        let executors = self.executors();
        for p in &self.policies {
            for a in &p.trusted_attestors {
                let signs = self.attestor(a).is_ok() || self.source(a).map(|s| s.signing).unwrap_or(false);
                if !signs {
                    bail!("ConfigError: policy {}: {a:?} is neither an attestor nor a signing source", p.name);
                }
            }
            for s in &p.trusted_sources {
                self.source(s)?;
            }
            for e in &p.trusted_executors {
                if !executors.contains(e.as_str()) {
                    bail!("ConfigError: policy {}: no scenario uses executor {e:?}", p.name);
                }
            }
            for f in &p.filter_whitelist {
                self.filter(f)?;
            }
            match &p.model_requirement {
                RequirementConfig::None => {}
                RequirementConfig::Exact { model } => {
                    self.model(model)?;
                }
                RequirementConfig::Committee { model, committee } => {
                    self.model(model)?;
                    self.committee(committee)?;
                }
            }
        }
        for (name, p) in &self.scenarios {
            self.source(&p.source)?;
            self.attestor(&p.attestor)?;
            for f in &p.filters {
                self.filter(f)?;
            }
            if let Some(m) = &p.model {
                self.model(m)?;
            }
            match (&p.model, &p.committee) {
                (None, Some(_)) => bail!("ConfigError: scenario {name}: committee without a model"),
                (_, Some(c)) => {
                    self.committee(c)?;
                }
                _ => {}
            }
            if p.model.is_some() && p.delivery == DeliveryMode::Sealed {
                bail!("ConfigError: scenario {name}: sealed delivery carries records, not inference outputs");
            }
            self.policy(&p.policy)?;
        }
        Ok(())
    }
}
