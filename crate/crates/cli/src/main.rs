//! `props`: provision keys, run the reference pipelines, attack them, and
//! inspect the resulting artifacts.
//!
//! Exit codes: 0 success (scenario verified, attack caught), 1 verification
//! outcome not as required, 2 usage, config or parse errors.

mod attack;
mod config;
mod inspect;
mod keys;
mod procs;
mod replicate;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use props_core::committee::NodeBehavior;
use props_core::KeyRole;

use attack::{Attack, Expectation};
use config::{DeliveryMode, ScenarioConfig};
use run::{run_scenario, RunOptions, RunOutcome};

#[derive(Parser)]
#[command(name = "props", version, about = "Protected pipelines: attested data, filters, pinned inference, verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key pair as <dir>/<name>.secret.json and <name>.identity.json.
    Keygen {
        #[arg(long, value_parser = parse_role)]
        role: KeyRole,
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "keys")]
        dir: PathBuf,
    },
    /// Run a scenario end to end and verify the resulting chain.
    RunScenario {
        /// train-ehr or infer-loan (any scenario defined in the config).
        scenario: String,
        /// Scenario document; the bundled one when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reuse keys from this directory instead of <out>/keys.
        #[arg(long)]
        keys: Option<PathBuf>,
        #[arg(long, value_enum)]
        delivery: Option<DeliveryMode>,
        /// Run source, attestor and committee nodes as separate processes.
        #[arg(long)]
        multiprocess: bool,
    },
    /// Run a scenario with one injected fault; succeeds iff the fault is caught.
    Attack {
        /// tamper-data, swap-filter, swap-model, forge-sig, stale or byzantine-<k>.
        #[arg(value_parser = parse_attack)]
        attack: Attack,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to infer-loan for model attacks, train-ehr otherwise.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        multiprocess: bool,
    },
    /// Run every bundled attack; succeeds iff all are caught.
    AttackMatrix {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        multiprocess: bool,
    },
    /// Pretty-print a chain, report, verdict, policy or identity file.
    Inspect { path: PathBuf },
    #[command(hide = true)]
    ServeSource {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        source: String,
        #[arg(long)]
        key: PathBuf,
        #[arg(long, default_value = "127.0.0.1:0")]
        listen: String,
    },
    #[command(hide = true)]
    ServeAttestor {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        descriptor: PathBuf,
        #[arg(long, default_value = "127.0.0.1:0")]
        listen: String,
    },
    #[command(hide = true)]
    CommitteeNode {
        #[arg(long)]
        key: PathBuf,
        #[arg(long, value_parser = parse_behavior, default_value = "honest")]
        behavior: NodeBehavior,
    },
    /// Execute pinned models on a JSON array of cases; one result per line.
    #[command(hide = true)]
    Replicate {
        #[arg(long)]
        input: PathBuf,
    },
}

fn parse_role(s: &str) -> Result<KeyRole, String> {
    s.parse::<KeyRole>().map_err(|e| e.to_string())
}

fn parse_attack(s: &str) -> Result<Attack, String> {
    s.parse()
}

fn parse_behavior(s: &str) -> Result<NodeBehavior, String> {
    s.parse()
}

fn default_out(label: &str) -> PathBuf {
    PathBuf::from("props-out").join(label)
}

fn summarize(outcome: &RunOutcome) {
    if let Some(f) = &outcome.consensus_failure {
        println!(
            "ConsensusFailure: {} (largest agreement {} of quorum {})",
            f.reason, f.largest_agreement, f.quorum_t
        );
    }
    if let Some(report) = &outcome.report {
        println!("verdict: {}", if report.passed() { "pass" } else { "fail" });
        for c in report.checks.iter().filter(|c| !c.passed) {
            let reason = c.reason.as_ref().map(|r| r.as_str().to_string()).unwrap_or_default();
            println!("  failed {}: {reason}", c.check_id);
        }
    }
    if let Some(proof) = outcome.chain.as_ref().and_then(|c| c.inference_proof.as_ref()) {
        println!("inference signatures: {}", proof.executor_signatures.len());
    }
}

fn cmd_run(
    scenario: &str,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    keys: Option<PathBuf>,
    delivery: Option<DeliveryMode>,
    multiprocess: bool,
) -> Result<ExitCode> {
    let cfg = ScenarioConfig::load(config.as_deref())?;
    let opts = RunOptions {
        out: out.unwrap_or_else(|| default_out(scenario)),
        config_path: config,
        keys_dir: keys,
        delivery,
        multiprocess,
        attack: None,
    };
    let outcome = run_scenario(&cfg, scenario, &opts)?;
    summarize(&outcome);
    println!("artifacts: {}", opts.out.display());
    Ok(if outcome.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

/// Whether the outcome matches what the attack should produce.
pub fn attack_caught(outcome: &RunOutcome, expectation: &Expectation) -> bool {
    match expectation {
        Expectation::Tolerated => {
            let delivered = outcome
                .chain
                .as_ref()
                .and_then(|c| match &c.payload {
                    props_core::verifier::ChainPayload::Output { output } => Some(*output),
                    _ => None,
                });
            outcome.passed() && delivered.is_some() && delivered == outcome.honest_output
        }
        Expectation::Rejected(props_core::ReasonCode::ConsensusFailure) => {
            outcome.consensus_failure.is_some() && outcome.chain.is_none()
        }
        Expectation::Rejected(code) => match &outcome.report {
            Some(r) => !r.passed() && r.failure_reasons().iter().all(|c| *c == code),
            None => false,
        },
    }
}

fn cmd_attack(
    attack: Attack,
    config: Option<PathBuf>,
    scenario: Option<String>,
    out: Option<PathBuf>,
    multiprocess: bool,
) -> Result<ExitCode> {
    let cfg = ScenarioConfig::load(config.as_deref())?;
    let scenario = scenario.unwrap_or_else(|| attack.default_scenario().to_string());
    let pipe = cfg.pipeline(&scenario)?;
    let (n, t) = match &pipe.committee {
        Some(c) => {
            let c = cfg.committee(c)?;
            (c.nodes, c.quorum_t)
        }
        None => (1, 1),
    };
    let expectation = attack.expectation(n, t);
    let opts = RunOptions {
        out: out.unwrap_or_else(|| default_out(&format!("attack-{attack}"))),
        config_path: config,
        keys_dir: None,
        delivery: None,
        multiprocess,
        attack: Some(attack),
    };
    let outcome = run_scenario(&cfg, &scenario, &opts)?;
    summarize(&outcome);
    let caught = attack_caught(&outcome, &expectation);
    let wanted = match &expectation {
        Expectation::Rejected(code) => format!("rejected with {}", code.as_str()),
        Expectation::Tolerated => "tolerated with the honest output".to_string(),
    };
    let result = match (&expectation, caught) {
        (_, false) => "NOT CAUGHT",
        (Expectation::Tolerated, true) => "tolerated",
        (Expectation::Rejected(_), true) => "caught",
    };
    println!("attack {attack} on {scenario}: {result} (expected {wanted})");
    Ok(if caught { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Keygen { role, name, dir } => {
            keys::cmd_keygen(&dir, role, &name)?;
            let id = keys::read_identity(&keys::identity_path(&dir, &name))?;
            println!("{}", props_core::Canonical::to_json_pretty(&id));
            Ok(ExitCode::SUCCESS)
        }
        Command::RunScenario {
            scenario,
            config,
            out,
            keys,
            delivery,
            multiprocess,
        } => cmd_run(&scenario, config, out, keys, delivery, multiprocess),
        Command::Attack {
            attack,
            config,
            scenario,
            out,
            multiprocess,
        } => cmd_attack(attack, config, scenario, out, multiprocess),
        Command::AttackMatrix {
            config,
            out,
            multiprocess,
        } => {
            let base = out.unwrap_or_else(|| default_out("attack-matrix"));
            let mut all = true;
            for a in attack::ATTACK_MATRIX {
                let code = cmd_attack(a, config.clone(), None, Some(base.join(a.to_string())), multiprocess)?;
                all &= code == ExitCode::SUCCESS;
            }
            Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Inspect { path } => {
            let dump = inspect::cmd_inspect(&path)?;
            print!("{}", dump.text);
            Ok(if dump.consistent { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::ServeSource {
            config,
            source,
            key,
            listen,
        } => procs::cmd_serve_source(config.as_deref(), &source, &key, &listen).map(|_| ExitCode::SUCCESS),
        Command::ServeAttestor { key, descriptor, listen } => {
            procs::cmd_serve_attestor(&key, &descriptor, &listen).map(|_| ExitCode::SUCCESS)
        }
        Command::CommitteeNode { key, behavior } => {
            procs::cmd_committee_node(&key, behavior).map(|_| ExitCode::SUCCESS)
        }
        Command::Replicate { input } => {
            print!("{}", replicate::cmd_replicate(Path::new(&input))?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
