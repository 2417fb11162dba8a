//! Scenario script parsing and execution.
//!
//! Scripts are line-oriented: `#` comments and blank lines are skipped,
//! every other line is `<actor> [name] <op> [key=value ...]`. Values may be
//! double-quoted to carry spaces. Policy and attribute-list arguments come
//! either from TOML files (paths relative to the harness state directory)
//! or from a compact inline grammar:
//!
//! * attribute lists: `attrs="dept=cardio,role=nurse"`
//! * universes:       `attrs="dept:cardio,onco;role:nurse,doctor"`
//! * policies:        `gates="dept=cardio & role=* | dept=onco"`
//!
//! Example:
//!
//! ```text
//! universe attrs="dept:cardio,onco;role:nurse,doctor"
//! aa setup
//! aa keygen du=dana attrs="dept=cardio,role=doctor"
//! do owner1 setup
//! dev sensor1 init owner=owner1 pool=4
//! dev sensor1 send object=vitals payload=text:138/92
//! do owner1 policy object=vitals gates="dept=cardio"
//! csp publish object=vitals
//! du dana access object=vitals expect=ok
//! ```

use std::collections::BTreeSet;
use std::fs;

use crate::error::{Error, Result};
use crate::policy::{AndGate, AttributeDef, AttributeList, GateClause, Policy, Universe};

use super::Harness;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PayloadSpec {
    Text(String),
    Hex(String),
    File(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expect {
    Ok,
    Denied,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScriptAction {
    Universe { file: Option<String>, attrs: Option<String> },
    ClockAdvance { seconds: u64 },
    AaSetup,
    AaKeygen { user: String, attrs: String },
    DoSetup { owner: String },
    DoPolicy { owner: String, object: String, file: Option<String>, gates: Option<String>, expire: Option<String> },
    DoDelete { owner: String, object: String, gate: u64 },
    DoAdd { owner: String, object: String, file: Option<String>, gates: Option<String>, expire: Option<String> },
    DevInit { name: String, owner: String, pool: usize },
    DevRefill { name: String, count: usize },
    DevSend { name: String, object: String, payload: PayloadSpec },
    CspPublish { object: String },
    CspSweep,
    CspRestart,
    DuAccess { user: String, object: String, expect: Option<Expect> },
}

#[derive(Clone, Debug)]
pub struct SourcedAction {
    pub line: usize,
    pub action: ScriptAction,
}

fn script_err(line: usize, message: impl Into<String>) -> Error {
    Error::Script { line, message: message.into() }
}

/// Split a line into tokens; double quotes group, and quotes directly
/// after `=` keep key=value pairs together.
fn tokenize(line: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    for c in line.chars() {
        match c {
            '"' => in_quotes = !in_quotes,
            c if c.is_whitespace() && !in_quotes => {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
            }
            c => current.push(c),
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

struct Args {
    line: usize,
    pairs: Vec<(String, String)>,
    used: BTreeSet<String>,
}

impl Args {
    fn new(line: usize, tokens: &[String]) -> Result<Self> {
        let mut pairs = Vec::new();
        for token in tokens {
            match token.split_once('=') {
                Some((k, v)) => pairs.push((k.to_string(), v.to_string())),
                None => {
                    return Err(script_err(line, format!("expected key=value, got `{token}`")))
                }
            }
        }
        Ok(Args { line, pairs, used: BTreeSet::new() })
    }

    fn get(&mut self, key: &str) -> Option<String> {
        self.used.insert(key.to_string());
        self.pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone())
    }

    fn require(&mut self, key: &str) -> Result<String> {
        self.get(key).ok_or_else(|| script_err(self.line, format!("missing `{key}=`")))
    }

    fn finish(self) -> Result<()> {
        for (k, _) in &self.pairs {
            if !self.used.contains(k) {
                return Err(script_err(self.line, format!("unknown argument `{k}=`")));
            }
        }
        Ok(())
    }
}

pub fn parse_script(text: &str) -> Result<Vec<SourcedAction>> {
    let mut actions = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens = tokenize(line);
        let action = parse_line(line_no, &tokens)?;
        actions.push(SourcedAction { line: line_no, action });
    }
    Ok(actions)
}

fn parse_line(line: usize, tokens: &[String]) -> Result<ScriptAction> {
    let head = tokens[0].as_str();
    match head {
        "universe" => {
            let mut args = Args::new(line, &tokens[1..])?;
            let file = args.get("file");
            let attrs = args.get("attrs");
            args.finish()?;
            if file.is_none() == attrs.is_none() {
                return Err(script_err(line, "universe takes exactly one of file= or attrs="));
            }
            Ok(ScriptAction::Universe { file, attrs })
        }
        "clock" => {
            let mut args = Args::new(line, &tokens[1..])?;
            let seconds = parse_u64(line, &args.require("advance")?)?;
            args.finish()?;
            Ok(ScriptAction::ClockAdvance { seconds })
        }
        "aa" => {
            let op = tokens.get(1).map(String::as_str);
            match op {
                Some("setup") => {
                    Args::new(line, &tokens[2..])?.finish()?;
                    Ok(ScriptAction::AaSetup)
                }
                Some("keygen") => {
                    let mut args = Args::new(line, &tokens[2..])?;
                    let user = args.require("du")?;
                    let attrs = args.require("attrs")?;
                    args.finish()?;
                    Ok(ScriptAction::AaKeygen { user, attrs })
                }
                _ => Err(script_err(line, "aa supports: setup, keygen")),
            }
        }
        "do" => {
            let owner = tokens
                .get(1)
                .cloned()
                .ok_or_else(|| script_err(line, "do needs an owner name"))?;
            let op = tokens.get(2).map(String::as_str);
            match op {
                Some("setup") => {
                    Args::new(line, &tokens[3..])?.finish()?;
                    Ok(ScriptAction::DoSetup { owner })
                }
                Some("policy") => {
                    let mut args = Args::new(line, &tokens[3..])?;
                    let object = args.require("object")?;
                    let file = args.get("file");
                    let gates = args.get("gates");
                    let expire = args.get("expire");
                    args.finish()?;
                    if file.is_none() == gates.is_none() {
                        return Err(script_err(line, "policy takes exactly one of file= or gates="));
                    }
                    Ok(ScriptAction::DoPolicy { owner, object, file, gates, expire })
                }
                Some("delete") => {
                    let mut args = Args::new(line, &tokens[3..])?;
                    let object = args.require("object")?;
                    let gate = parse_u64(line, &args.require("gate")?)?;
                    args.finish()?;
                    Ok(ScriptAction::DoDelete { owner, object, gate })
                }
                Some("add") => {
                    let mut args = Args::new(line, &tokens[3..])?;
                    let object = args.require("object")?;
                    let file = args.get("file");
                    let gates = args.get("gates");
                    let expire = args.get("expire");
                    args.finish()?;
                    if file.is_none() == gates.is_none() {
                        return Err(script_err(line, "add takes exactly one of file= or gates="));
                    }
                    Ok(ScriptAction::DoAdd { owner, object, file, gates, expire })
                }
                _ => Err(script_err(line, "do supports: setup, policy, delete, add")),
            }
        }
        "dev" => {
            let name = tokens
                .get(1)
                .cloned()
                .ok_or_else(|| script_err(line, "dev needs a device name"))?;
            let op = tokens.get(2).map(String::as_str);
            match op {
                Some("init") => {
                    let mut args = Args::new(line, &tokens[3..])?;
                    let owner = args.require("owner")?;
                    let pool = args.get("pool").map(|v| parse_u64(line, &v)).transpose()?.unwrap_or(16);
                    args.finish()?;
                    Ok(ScriptAction::DevInit { name, owner, pool: pool as usize })
                }
                Some("refill") => {
                    let mut args = Args::new(line, &tokens[3..])?;
                    let count =
                        args.get("count").map(|v| parse_u64(line, &v)).transpose()?.unwrap_or(16);
                    args.finish()?;
                    Ok(ScriptAction::DevRefill { name, count: count as usize })
                }
                Some("send") => {
                    let mut args = Args::new(line, &tokens[3..])?;
                    let object = args.require("object")?;
                    let raw = args.require("payload")?;
                    args.finish()?;
                    let payload = match raw.split_once(':') {
                        Some(("text", rest)) => PayloadSpec::Text(rest.to_string()),
                        Some(("hex", rest)) => PayloadSpec::Hex(rest.to_string()),
                        Some(("file", rest)) => PayloadSpec::File(rest.to_string()),
                        _ => {
                            return Err(script_err(
                                line,
                                "payload must be text:..., hex:... or file:...",
                            ))
                        }
                    };
                    Ok(ScriptAction::DevSend { name, object, payload })
                }
                _ => Err(script_err(line, "dev supports: init, refill, send")),
            }
        }
        "csp" => {
            let op = tokens.get(1).map(String::as_str);
            match op {
                Some("publish") => {
                    let mut args = Args::new(line, &tokens[2..])?;
                    let object = args.require("object")?;
                    args.finish()?;
                    Ok(ScriptAction::CspPublish { object })
                }
                Some("sweep") => {
                    Args::new(line, &tokens[2..])?.finish()?;
                    Ok(ScriptAction::CspSweep)
                }
                Some("restart") => {
                    Args::new(line, &tokens[2..])?.finish()?;
                    Ok(ScriptAction::CspRestart)
                }
                _ => Err(script_err(line, "csp supports: publish, sweep, restart")),
            }
        }
        "du" => {
            let user = tokens
                .get(1)
                .cloned()
                .ok_or_else(|| script_err(line, "du needs a user name"))?;
            match tokens.get(2).map(String::as_str) {
                Some("access") => {
                    let mut args = Args::new(line, &tokens[3..])?;
                    let object = args.require("object")?;
                    let expect = match args.get("expect").as_deref() {
                        None => None,
                        Some("ok") => Some(Expect::Ok),
                        Some("denied") => Some(Expect::Denied),
                        Some(other) => {
                            return Err(script_err(line, format!("expect must be ok or denied, got `{other}`")))
                        }
                    };
                    args.finish()?;
                    Ok(ScriptAction::DuAccess { user, object, expect })
                }
                _ => Err(script_err(line, "du supports: access")),
            }
        }
        other => Err(script_err(line, format!("unknown actor `{other}`"))),
    }
}

fn parse_u64(line: usize, v: &str) -> Result<u64> {
    v.parse::<u64>().map_err(|_| script_err(line, format!("expected a number, got `{v}`")))
}

/// `"dept:cardio,onco;role:nurse,doctor"`
fn parse_inline_universe(line: usize, spec: &str) -> Result<Universe> {
    let mut attributes = Vec::new();
    for part in spec.split(';') {
        let (name, values) = part
            .split_once(':')
            .ok_or_else(|| script_err(line, format!("bad universe attribute `{part}`")))?;
        attributes.push(AttributeDef {
            name: name.trim().to_string(),
            values: values.split(',').map(|v| v.trim().to_string()).collect(),
        });
    }
    Ok(Universe { attributes })
}

/// `"dept=cardio,role=nurse"`
fn parse_inline_list(line: usize, universe: &Universe, spec: &str) -> Result<AttributeList> {
    let mut pairs = Vec::new();
    for part in spec.split(',') {
        let (name, value) = part
            .split_once('=')
            .ok_or_else(|| script_err(line, format!("bad attribute selection `{part}`")))?;
        pairs.push((name.trim(), value.trim()));
    }
    AttributeList::from_pairs(universe, pairs)
}

/// `"dept=cardio,onco & role=* | dept=lab"`
fn parse_inline_policy(line: usize, universe: &Universe, spec: &str) -> Result<Policy> {
    let mut gates = Vec::new();
    for gate_spec in spec.split('|') {
        let mut clauses = vec![GateClause::Wildcard; universe.attr_count()];
        for clause_spec in gate_spec.split('&') {
            let clause_spec = clause_spec.trim();
            if clause_spec.is_empty() {
                continue;
            }
            let (name, values) = clause_spec
                .split_once('=')
                .ok_or_else(|| script_err(line, format!("bad clause `{clause_spec}`")))?;
            let i = universe
                .attr_index(name.trim())
                .ok_or_else(|| script_err(line, format!("unknown attribute `{name}`")))?;
            if values.trim() == "*" {
                clauses[i] = GateClause::Wildcard;
                continue;
            }
            let mut set = std::collections::BTreeSet::new();
            for value in values.split(',') {
                let t = universe
                    .value_index(i, value.trim())
                    .ok_or_else(|| script_err(line, format!("unknown value `{value}` for `{name}`")))?;
                set.insert(t);
            }
            clauses[i] = GateClause::Values(set);
        }
        gates.push(AndGate { clauses });
    }
    Ok(Policy { gates })
}

/// `"1:+100,3:+200"`: gate ordinal (1-based, in policy order) to relative
/// expiration seconds.
fn parse_expirations(
    line: usize,
    gate_count: usize,
    clock: u64,
    spec: Option<&str>,
) -> Result<Vec<Option<u64>>> {
    let mut out = vec![None; gate_count];
    let Some(spec) = spec else { return Ok(out) };
    for part in spec.split(',') {
        let (ordinal, offset) = part
            .split_once(':')
            .ok_or_else(|| script_err(line, format!("bad expiration `{part}` (want ord:+secs)")))?;
        let ordinal: usize = ordinal
            .trim()
            .parse()
            .map_err(|_| script_err(line, format!("bad gate ordinal `{ordinal}`")))?;
        if ordinal == 0 || ordinal > gate_count {
            return Err(script_err(line, format!("gate ordinal {ordinal} out of range 1..={gate_count}")));
        }
        let offset = offset.trim();
        let secs: u64 = offset
            .strip_prefix('+')
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| script_err(line, format!("bad expiration offset `{offset}` (want +secs)")))?;
        out[ordinal - 1] = Some(clock + secs);
    }
    Ok(out)
}

fn load_policy(
    harness: &Harness,
    line: usize,
    file: Option<&str>,
    gates: Option<&str>,
) -> Result<Policy> {
    let universe = harness
        .universe()
        .ok_or_else(|| script_err(line, "no universe defined yet"))?;
    match (file, gates) {
        (Some(path), None) => {
            let text = fs::read_to_string(harness.base_dir().join(path))?;
            Policy::from_toml(universe, &text)
        }
        (None, Some(spec)) => parse_inline_policy(line, universe, spec),
        _ => Err(script_err(line, "exactly one of file= or gates= required")),
    }
}

fn expectation(line: usize, expect: Option<Expect>, outcome: Result<Vec<Vec<u8>>>) -> Result<()> {
    let denied = match &outcome {
        Ok(_) => false,
        Err(Error::AccessDenied) | Err(Error::NotPublished(_)) | Err(Error::PayloadAuth) => true,
        Err(_) => {
            return outcome.map(|_| ());
        }
    };
    match expect {
        None => Ok(()),
        Some(Expect::Ok) if !denied => Ok(()),
        Some(Expect::Denied) if denied => Ok(()),
        Some(Expect::Ok) => Err(Error::Expectation {
            line,
            message: format!("expected ok, got denial ({})", outcome.unwrap_err()),
        }),
        Some(Expect::Denied) => {
            Err(Error::Expectation { line, message: "expected denial, access succeeded".into() })
        }
    }
}

pub(super) fn execute(harness: &mut Harness, sourced: SourcedAction) -> Result<()> {
    let line = sourced.line;
    match sourced.action {
        ScriptAction::Universe { file, attrs } => {
            let universe = match (file, attrs) {
                (Some(path), None) => {
                    Universe::from_toml(&fs::read_to_string(harness.base_dir().join(path))?)?
                }
                (None, Some(spec)) => parse_inline_universe(line, &spec)?,
                _ => unreachable!("parser enforces exactly one source"),
            };
            harness.set_universe(universe)
        }
        ScriptAction::ClockAdvance { seconds } => {
            harness.advance_clock(seconds);
            Ok(())
        }
        ScriptAction::AaSetup => harness.aa_setup(),
        ScriptAction::AaKeygen { user, attrs } => {
            let universe = harness
                .universe()
                .ok_or_else(|| script_err(line, "no universe defined yet"))?;
            let list = parse_inline_list(line, universe, &attrs)?;
            harness.aa_keygen(&user, &list)
        }
        ScriptAction::DoSetup { owner } => harness.do_setup(&owner),
        ScriptAction::DoPolicy { owner, object, file, gates, expire } => {
            let policy = load_policy(harness, line, file.as_deref(), gates.as_deref())?;
            let expirations =
                parse_expirations(line, policy.gates.len(), harness.clock(), expire.as_deref())?;
            harness.do_policy(&owner, &object, &policy, expirations)?;
            Ok(())
        }
        ScriptAction::DoDelete { owner, object, gate } => {
            harness.do_delete(&owner, &object, gate)?;
            Ok(())
        }
        ScriptAction::DoAdd { owner, object, file, gates, expire } => {
            let policy = load_policy(harness, line, file.as_deref(), gates.as_deref())?;
            let expires_at = match expire.as_deref() {
                None => None,
                Some(offset) => {
                    let secs: u64 = offset
                        .strip_prefix('+')
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| script_err(line, format!("bad expiration `{offset}`")))?;
                    Some(harness.clock() + secs)
                }
            };
            harness.do_add(&owner, &object, &policy, expires_at)?;
            Ok(())
        }
        ScriptAction::DevInit { name, owner, pool } => harness.dev_init(&name, &owner, pool),
        ScriptAction::DevRefill { name, count } => harness.dev_refill(&name, count),
        ScriptAction::DevSend { name, object, payload } => {
            let bytes = match payload {
                PayloadSpec::Text(text) => text.into_bytes(),
                PayloadSpec::Hex(hex_str) => decode_hex(line, &hex_str)?,
                PayloadSpec::File(path) => fs::read(harness.base_dir().join(path))?,
            };
            harness.dev_send(&name, &object, &bytes)
        }
        ScriptAction::CspPublish { object } => {
            harness.csp_publish(&object)?;
            Ok(())
        }
        ScriptAction::CspSweep => {
            harness.csp_sweep()?;
            Ok(())
        }
        ScriptAction::CspRestart => harness.csp_restart(),
        ScriptAction::DuAccess { user, object, expect } => {
            let outcome = harness.du_access(&user, &object);
            expectation(line, expect, outcome)
        }
    }
}

fn decode_hex(line: usize, s: &str) -> Result<Vec<u8>> {
    if s.len() % 2 != 0 {
        return Err(script_err(line, "hex payload has odd length"));
    }
    (0..s.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&s[i..i + 2], 16)
                .map_err(|_| script_err(line, format!("bad hex at offset {i}")))
        })
        .collect()
}
