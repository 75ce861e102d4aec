//! Child-process components for `--multiprocess` runs, and the hidden
//! subcommands they execute.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use props_core::attestor::serve_attestor;
use props_core::committee::{node_execute, CommitteeNode, NodeBehavior, NodeReply, RoundRequest, Vote};
use props_core::source_net::{serve, ClientOptions, ServerHandle, SourceDescriptor};
use props_core::{Canonical, KeyIdentity, SecretKey};

use crate::config::ScenarioConfig;
use crate::keys::read_secret;

const READY_PREFIX: &str = "LISTENING ";

/// A long-running component in a child process. Closing its stdin asks it to
/// stop; it is killed if it does not exit promptly.
pub struct Component {
    name: String,
    child: Child,
    stdin: Option<ChildStdin>,
    endpoint: String,
}

impl Component {
    pub fn spawn(name: &str, args: &[String]) -> Result<Self> {
        let exe = std::env::current_exe()?;
        let mut child = Command::new(exe)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .with_context(|| format!("cannot start {name}"))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("piped stdout");
        let mut line = String::new();
        BufReader::new(stdout).read_line(&mut line)?;
        let Some(endpoint) = line.trim().strip_prefix(READY_PREFIX) else {
            let _ = child.kill();
            let _ = child.wait();
            bail!("{name} failed to start");
        };
        Ok(Component {
            name: name.to_string(),
            endpoint: endpoint.to_string(),
            child,
            stdin,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl Drop for Component {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let deadline = Instant::now() + Duration::from_secs(2);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        eprintln!("{} did not stop; killing it", self.name);
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Announces the bound endpoint, then serves until stdin closes.
fn serve_until_stdin_closes(mut handle: ServerHandle) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{READY_PREFIX}{}", handle.endpoint())?;
    out.flush()?;
    drop(out);
    let mut sink = Vec::new();
    let _ = std::io::stdin().read_to_end(&mut sink);
    handle.shutdown();
    Ok(())
}

pub fn cmd_serve_source(config: Option<&Path>, source_id: &str, key: &Path, listen: &str) -> Result<()> {
    let cfg = ScenarioConfig::load(config)?;
    let source = cfg.source(source_id)?;
    let key = read_secret(key)?;
    let descriptor = SourceDescriptor {
        source_id: source.source_id.clone(),
        listen_endpoint: listen.to_string(),
        source_identity: key.identity(),
        signing_enabled: source.signing,
    };
    let handle = serve(descriptor, source.store(), key)?;
    serve_until_stdin_closes(handle)
}

pub fn cmd_serve_attestor(key: &Path, descriptor: &Path, listen: &str) -> Result<()> {
    let key = read_secret(key)?;
    let text = std::fs::read_to_string(descriptor)?;
    let descriptor = SourceDescriptor::from_json(&text).map_err(|e| anyhow!("bad descriptor: {e}"))?;
    let handle = serve_attestor(listen, key, vec![descriptor], ClientOptions::default())?;
    serve_until_stdin_closes(handle)
}

/// Reads one round from stdin and answers with a [`NodeReply`]. A crashing
/// node exits without answering.
pub fn cmd_committee_node(key: &Path, behavior: NodeBehavior) -> Result<()> {
    let key = read_secret(key)?;
    let mut input = Vec::new();
    std::io::stdin().read_to_end(&mut input)?;
    let round = RoundRequest::from_canonical_bytes(&input).map_err(|e| anyhow!("bad round: {e}"))?;
    if behavior == NodeBehavior::Crash {
        std::process::exit(3);
    }
    let reply = NodeReply {
        vote: node_execute(&key, behavior, &round),
    };
    std::io::stdout().write_all(&reply.canonical_bytes())?;
    Ok(())
}

/// Committee member running as `props committee-node`.
pub struct ProcessNode {
    pub identity: KeyIdentity,
    pub key_file: PathBuf,
    pub behavior: NodeBehavior,
}

impl ProcessNode {
    fn exchange(&self, round: &RoundRequest) -> Result<Option<Vote>> {
        let mut child = Command::new(std::env::current_exe()?)
            .arg("committee-node")
            .arg("--key")
            .arg(&self.key_file)
            .arg("--behavior")
            .arg(behavior_name(self.behavior))
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        stdin.write_all(&round.canonical_bytes())?;
        drop(stdin);
        let out = child.wait_with_output()?;
        if !out.status.success() {
            return Ok(None);
        }
        let reply = NodeReply::from_canonical_bytes(&out.stdout).map_err(|e| anyhow!("bad reply: {e}"))?;
        Ok(reply.vote)
    }
}

impl CommitteeNode for ProcessNode {
    fn identity(&self) -> KeyIdentity {
        self.identity.clone()
    }

    fn run(self: Box<Self>, round: RoundRequest) -> Option<Vote> {
        self.exchange(&round).ok().flatten()
    }
}

pub fn behavior_name(b: NodeBehavior) -> &'static str {
    match b {
        NodeBehavior::Honest => "honest",
        NodeBehavior::WrongOutput => "wrong-output",
        NodeBehavior::Crash => "crash",
        NodeBehavior::Equivocate => "equivocate",
    }
}

/// Node backed by a child process that loads `key_file` itself.
pub fn node_for(key: &SecretKey, key_file: PathBuf, behavior: NodeBehavior) -> Box<dyn CommitteeNode> {
    Box::new(ProcessNode {
        identity: key.identity(),
        key_file,
        behavior,
    })
}
