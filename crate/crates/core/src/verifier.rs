//! Static plan checks.
//!
//! [`verify`] runs every check and accumulates findings so one round of
//! feedback carries every problem. Messages embed the concrete fix, since
//! the report text is fed straight back to the planner.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::binding::{bind_agent, PortSource};
use crate::kg::{
    is_input_slot, is_reserved_flag, resolve, Dag, DagError, InputRef, KnowledgeGraph, SourcePath, CHUNK_OUTPUT, SUPERNODE_OUTPUT,
};
use crate::registry::{check_param, DataKind, ToolRegistry, ToolSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Code {
    #[serde(rename = "E_STRUCTURE")]
    Structure,
    #[serde(rename = "E_RESERVED_AS_AGENT")]
    ReservedAsAgent,
    #[serde(rename = "E_UNKNOWN_AGENT")]
    UnknownAgent,
    #[serde(rename = "E_UNRESOLVED_INPUT")]
    UnresolvedInput,
    #[serde(rename = "E_TYPE_MISMATCH")]
    TypeMismatch,
    #[serde(rename = "E_MISSING_PARAM")]
    MissingParam,
    #[serde(rename = "E_PARAM_FORMAT")]
    ParamFormat,
    #[serde(rename = "E_CYCLE")]
    Cycle,
    #[serde(rename = "E_NO_READER")]
    NoReader,
    #[serde(rename = "E_OUTPUT_FLAG")]
    OutputFlag,
    #[serde(rename = "W_UNKNOWN_PARAM")]
    UnknownParam,
}

impl Code {
    pub fn as_str(self) -> &'static str {
        match self {
            Code::Structure => "E_STRUCTURE",
            Code::ReservedAsAgent => "E_RESERVED_AS_AGENT",
            Code::UnknownAgent => "E_UNKNOWN_AGENT",
            Code::UnresolvedInput => "E_UNRESOLVED_INPUT",
            Code::TypeMismatch => "E_TYPE_MISMATCH",
            Code::MissingParam => "E_MISSING_PARAM",
            Code::ParamFormat => "E_PARAM_FORMAT",
            Code::Cycle => "E_CYCLE",
            Code::NoReader => "E_NO_READER",
            Code::OutputFlag => "E_OUTPUT_FLAG",
            Code::UnknownParam => "W_UNKNOWN_PARAM",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            Code::UnknownParam => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "ERROR",
            Severity::Warning => "WARNING",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: Code,
    pub severity: Severity,
    pub path: SourcePath,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}: {}", self.severity, self.code, self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub diagnostics: Vec<Diagnostic>,
    pub passed: bool,
}

impl VerificationReport {
    pub fn from_diagnostics(diagnostics: Vec<Diagnostic>) -> Self {
        let passed = diagnostics.iter().all(|d| d.severity != Severity::Error);
        Self { diagnostics, passed }
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Error)
    }

    pub fn error_count(&self) -> usize {
        self.errors().count()
    }

    pub fn has(&self, code: Code) -> bool {
        self.diagnostics.iter().any(|d| d.code == code)
    }
}

/// One line per diagnostic, then `Checks passed: True|False`.
pub fn render_report(report: &VerificationReport) -> String {
    let mut out = String::new();
    for d in &report.diagnostics {
        out.push_str(&d.to_string());
        out.push('\n');
    }
    out.push_str(if report.passed {
        "Checks passed: True"
    } else {
        "Checks passed: False"
    });
    out
}

/// The diagnostics as a JSON array.
pub fn report_to_json(report: &VerificationReport) -> String {
    serde_json::to_string_pretty(&report.diagnostics).expect("diagnostics serialize")
}

pub fn verify(graph: &KnowledgeGraph, registry: &ToolRegistry) -> VerificationReport {
    let mut v = Verifier {
        graph,
        registry,
        out: Vec::new(),
    };
    v.hierarchy();
    v.reserved_names();
    v.agent_names();
    v.input_links();
    v.output_flags();
    v.port_kinds();
    v.params();
    v.acyclic();
    v.reader_present();
    VerificationReport::from_diagnostics(v.out)
}

struct Verifier<'a> {
    graph: &'a KnowledgeGraph,
    registry: &'a ToolRegistry,
    out: Vec<Diagnostic>,
}

impl<'a> Verifier<'a> {
    fn emit(&mut self, code: Code, path: SourcePath, message: impl Into<String>) {
        self.out.push(Diagnostic {
            code,
            severity: code.severity(),
            path,
            message: message.into(),
        });
    }

    /// Registered, non-reserved tool for an agent name.
    fn tool(&self, agent: &str) -> Option<&'a ToolSpec> {
        if is_reserved_flag(agent) {
            return None;
        }
        self.registry.get(agent)
    }

    fn hierarchy(&mut self) {
        for (sn, s) in self.graph.supernodes.iter() {
            if s.chunks.is_empty() {
                self.emit(
                    Code::Structure,
                    SourcePath::supernode(sn),
                    format!("supernode `{sn}` has no chunks; each supernode holds one or more chunks keyed by chunk name"),
                );
            }
            for (cn, c) in s.chunks.iter() {
                if cn.trim().is_empty() {
                    self.emit(Code::Structure, SourcePath::chunk(sn, cn), "chunk names must be non-empty");
                }
                for (slot, _) in c.inputs.iter() {
                    if !is_input_slot(slot) {
                        self.emit(
                            Code::Structure,
                            SourcePath::slot(sn, cn, slot),
                            format!("`{slot}` is not an input slot; chunk keys are `agents`, `input` or `input_<n>` (e.g. `input_1`)"),
                        );
                    }
                }
                if c.agents.is_empty() {
                    self.emit(
                        Code::Structure,
                        SourcePath::chunk(sn, cn),
                        "chunk has an empty `agents` object; add at least one agent",
                    );
                }
            }
        }
    }

    fn reserved_names(&mut self) {
        for (sn, cn, an, _) in self.graph.agents() {
            if is_reserved_flag(an) {
                self.emit(
                    Code::ReservedAsAgent,
                    SourcePath::agent(sn, cn, an),
                    format!(
                        "`{an}` is a flag, not an agent; remove it from `agents` and set `{an}: true` inside the agent whose output should be exported"
                    ),
                );
            }
        }
    }

    fn agent_names(&mut self) {
        let known: Vec<&str> = self.registry.names().collect();
        for (sn, cn, an, _) in self.graph.agents() {
            if is_reserved_flag(an) {
                continue;
            }
            let Some(spec) = self.registry.get(an) else {
                self.emit(
                    Code::UnknownAgent,
                    SourcePath::agent(sn, cn, an),
                    format!("unknown agent `{an}`; available agents: {}", known.join(", ")),
                );
                continue;
            };
            let supernode = self.graph.supernodes.get(sn).expect("iterated from graph");
            for needed in &spec.requires_agents {
                let present = supernode.chunks.values().any(|c| c.agents.contains_key(needed));
                if !present {
                    self.emit(
                        Code::UnknownAgent,
                        SourcePath::agent(sn, cn, an),
                        format!(
                            "`{an}` needs a `{needed}` agent in supernode `{sn}` but none is configured; add a chunk with a `{needed}` agent and link `{an}`'s chunk input to it"
                        ),
                    );
                }
            }
        }
    }

    fn input_links(&mut self) {
        for (sn, s) in self.graph.supernodes.iter() {
            for (cn, c) in s.chunks.iter() {
                for (slot, input) in c.inputs.iter() {
                    let path = SourcePath::slot(sn, cn, slot);
                    match input {
                        InputRef::Chunk(name) if !s.chunks.contains_key(name) => {
                            let options: Vec<&str> = s.chunks.keys().filter(|k| *k != cn).collect();
                            self.emit(
                                Code::UnresolvedInput,
                                path,
                                format!(
                                    "`{slot}: from {name}` names no chunk in supernode `{sn}`; link to one of: {}",
                                    list_or_none(&options)
                                ),
                            );
                        }
                        InputRef::Supernode(name) if !self.graph.supernodes.contains_key(name) => {
                            let options: Vec<&str> = self.graph.supernodes.keys().collect();
                            let hint = if s.chunks.contains_key(name) {
                                format!(" (to link chunk `{name}` of this supernode write `{slot}: from {name}`)")
                            } else {
                                String::new()
                            };
                            self.emit(
                                Code::UnresolvedInput,
                                path,
                                format!(
                                    "`{slot}: {name}` names no supernode; link to one of: {}{hint}",
                                    list_or_none(&options)
                                ),
                            );
                        }
                        _ => {}
                    }
                }
            }
        }
    }

    fn output_flags(&mut self) {
        let referenced: Vec<&str> = {
            let mut v: Vec<&str> = Vec::new();
            for (_, s) in self.graph.supernodes.iter() {
                for (_, c) in s.chunks.iter() {
                    for (_, input) in c.inputs.iter() {
                        if let InputRef::Supernode(name) = input {
                            if !v.contains(&name.as_str()) {
                                v.push(name);
                            }
                        }
                    }
                }
            }
            v
        };

        for (sn, s) in self.graph.supernodes.iter() {
            let flagged: Vec<(&str, &str)> = s
                .chunks
                .iter()
                .flat_map(|(cn, c)| c.agents.iter().filter(|(_, a)| a.supernode_output).map(move |(an, _)| (cn, an)))
                .collect();
            if referenced.contains(&sn) && flagged.is_empty() {
                self.emit(
                    Code::OutputFlag,
                    SourcePath::supernode(sn),
                    format!(
                        "supernode `{sn}` is used as an input but no agent sets `supernode_output: true`; add it to the agent whose output the supernode exports"
                    ),
                );
            }
            for (cn, an) in flagged.iter().skip(1) {
                self.emit(
                    Code::OutputFlag,
                    SourcePath::agent(sn, *cn, *an).with_param(SUPERNODE_OUTPUT),
                    format!(
                        "supernode `{sn}` has more than one `supernode_output: true` agent (first is `{}/{}`); keep exactly one",
                        flagged[0].0, flagged[0].1
                    ),
                );
            }
            for (cn, c) in s.chunks.iter() {
                let chunk_flags: Vec<&str> = c.agents.iter().filter(|(_, a)| a.chunk_output).map(|(n, _)| n).collect();
                for an in chunk_flags.iter().skip(1) {
                    self.emit(
                        Code::OutputFlag,
                        SourcePath::agent(sn, cn, *an).with_param(CHUNK_OUTPUT),
                        format!("chunk `{cn}` has more than one `chunk_output: true` agent; keep exactly one"),
                    );
                }
                for (an, a) in c.agents.iter() {
                    for flag in [SUPERNODE_OUTPUT, CHUNK_OUTPUT] {
                        if let Some(v) = a.params.get(flag) {
                            self.emit(
                                Code::OutputFlag,
                                SourcePath::agent(sn, cn, an).with_param(flag),
                                format!("`{flag}` must be the boolean `true` or `false`, found {}", v.type_name()),
                            );
                        }
                    }
                }
            }
        }
    }

    /// Kind exported by the chunk an input resolves to, when knowable.
    fn input_kind(&self, from_sn: &str, input: &InputRef) -> Option<DataKind> {
        let target = resolve(self.graph, from_sn, input)?;
        let chunk = self.graph.chunk(&target)?;
        let agent = match input {
            InputRef::Supernode(_) => chunk.agents.iter().find(|(_, a)| a.supernode_output).map(|(n, _)| n)?,
            InputRef::Chunk(_) => chunk.exported_agent()?,
        };
        self.tool(agent)?.output_kind()
    }

    fn port_kinds(&mut self) {
        for (sn, s) in self.graph.supernodes.iter() {
            for (cn, c) in s.chunks.iter() {
                let slots = c.inputs_in_slot_order();
                let slot_names: Vec<&str> = slots.iter().map(|(n, _)| *n).collect();
                let mut previous: Option<(&str, Option<DataKind>)> = None;
                for (pos, (an, _)) in c.agents.iter().enumerate() {
                    let Some(spec) = self.tool(an) else {
                        previous = Some((an, None));
                        continue;
                    };
                    let binding = bind_agent(spec, pos, &slot_names);
                    for slot in &binding.unbound_slots {
                        self.emit(
                            Code::UnresolvedInput,
                            SourcePath::slot(sn, cn, slot.as_str()),
                            format!(
                                "`{an}` takes {} input(s) ({}) and has no port for slot `{slot}`; remove the slot or put an agent that consumes it first",
                                spec.inputs.len(),
                                list_or_none(&spec.inputs.iter().map(|p| p.name.as_str()).collect::<Vec<_>>())
                            ),
                        );
                    }
                    for &port in &binding.missing_required {
                        let p = &spec.inputs[port];
                        let slot_hint = p
                            .alternate_names
                            .iter()
                            .find(|a| is_input_slot(a))
                            .map(String::as_str)
                            .unwrap_or("input");
                        self.emit(
                            Code::UnresolvedInput,
                            SourcePath::agent(sn, cn, an),
                            format!(
                                "required input `{}` ({}) of `{an}` is not linked; add `{slot_hint}: <supernode>` or `{slot_hint}: from <chunk>` to chunk `{cn}`",
                                p.name, p.kind
                            ),
                        );
                    }
                    for (port, source) in &binding.ports {
                        let expected = spec.inputs[*port].kind;
                        let (found, path, origin) = match source {
                            PortSource::Slot(slot) => {
                                let input = c.inputs.get(slot).expect("bound slot exists");
                                (
                                    self.input_kind(sn, input),
                                    SourcePath::slot(sn, cn, slot.as_str()),
                                    format!("`{slot}: {input}`"),
                                )
                            }
                            PortSource::Pipeline => {
                                let (prev, kind) = previous.expect("pipeline binding implies a previous agent");
                                (kind, SourcePath::agent(sn, cn, an), format!("previous agent `{prev}`"))
                            }
                        };
                        if let Some(found) = found {
                            if found != expected {
                                self.emit(
                                    Code::TypeMismatch,
                                    path,
                                    format!(
                                        "{origin} delivers {found} but `{an}` input `{}` expects {expected}",
                                        spec.inputs[*port].name
                                    ),
                                );
                            }
                        }
                    }
                    previous = Some((an, spec.output_kind()));
                }
            }
        }
    }

    fn params(&mut self) {
        for (sn, cn, an, agent) in self.graph.agents() {
            let Some(spec) = self.tool(an) else { continue };
            for p in &spec.params {
                if !p.optional && !agent.params.contains_key(&p.name) {
                    let example = spec
                        .param_format_rules
                        .get(&p.name)
                        .map(|r| format!(" (e.g. `{}: {}`)", p.name, r.example()))
                        .unwrap_or_default();
                    self.emit(
                        Code::MissingParam,
                        SourcePath::agent(sn, cn, an),
                        format!("`{an}` requires parameter `{}`{example}", p.name),
                    );
                }
            }
            for (pn, value) in agent.params.iter() {
                if is_reserved_flag(pn) {
                    continue;
                }
                match spec.param(pn) {
                    Some(p) => {
                        if let Err(why) = check_param(value, p, spec.param_format_rules.get(pn)) {
                            self.emit(
                                Code::ParamFormat,
                                SourcePath::agent(sn, cn, an).with_param(pn),
                                format!("`{pn}` of `{an}`: {why}"),
                            );
                        }
                    }
                    None => {
                        let known: Vec<&str> = spec.params.iter().map(|p| p.name.as_str()).collect();
                        self.emit(
                            Code::UnknownParam,
                            SourcePath::agent(sn, cn, an).with_param(pn),
                            format!("`{an}` does not declare parameter `{pn}`; declared: {}", list_or_none(&known)),
                        );
                    }
                }
            }
        }
    }

    fn acyclic(&mut self) {
        if let Err(DagError::Cycle { nodes }) = Dag::build(self.graph) {
            let Some(first) = nodes.first() else { return };
            let chain: Vec<String> = nodes.iter().chain(std::iter::once(first)).map(|n| n.to_string()).collect();
            self.emit(
                Code::Cycle,
                SourcePath::chunk(&first.supernode, &first.chunk),
                format!(
                    "inputs form a cycle {}; break it by relinking one of these chunks to an upstream producer",
                    chain.join(" -> ")
                ),
            );
        }
    }

    fn reader_present(&mut self) {
        let found = self
            .graph
            .supernodes
            .values()
            .flat_map(|s| s.chunks.values())
            .any(|c| c.inputs.is_empty() && c.agents.contains_key("reader"));
        if !found {
            self.emit(
                Code::NoReader,
                SourcePath::root(),
                "no input-free chunk contains a `reader` agent; start the pipeline with a chunk (no inputs) whose agents include `reader` with `supernode_output: true`",
            );
        }
    }
}

fn list_or_none(items: &[&str]) -> String {
    if items.is_empty() {
        "(none)".to_string()
    } else {
        items.join(", ")
    }
}
