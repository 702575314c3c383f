//! Knowledge-graph plan model.
//!
//! A plan is a three-level hierarchy under the root `chunks` key:
//! supernode → chunk → agents. Chunks carry named input slots that link to
//! other supernodes (`input: chest_xr_image`) or to sibling chunks
//! (`input_2: from image_processing`). Agents are configured tool instances
//! whose keys are parameters, plus the two reserved output flags.
//!
//! Parsing is permissive: a document that has the right shape always parses,
//! even when it names unknown tools or dangling links. Semantic checks live
//! in [`crate::verifier`].

mod dag;
mod parse;
mod yaml;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use dag::{resolve, ChunkId, Dag, DagError, Link};
pub use parse::{parse_json_plan, parse_yaml_plan, ParseError};
pub use yaml::json_to_yaml;

/// Reserved agent flag exporting the agent's message under the supernode name.
pub const SUPERNODE_OUTPUT: &str = "supernode_output";
/// Reserved agent flag exporting the agent's message under the chunk name.
pub const CHUNK_OUTPUT: &str = "chunk_output";
/// Root key of every plan document.
pub const ROOT_KEY: &str = "chunks";
/// Key holding the agent map inside a chunk.
pub const AGENTS_KEY: &str = "agents";
/// Prefix marking an input that names a chunk of the same supernode.
pub const CHUNK_REF_PREFIX: &str = "from ";

pub fn is_reserved_flag(name: &str) -> bool {
    name == SUPERNODE_OUTPUT || name == CHUNK_OUTPUT
}

/// `input` or `input_<n>` with n a positive integer.
pub fn is_input_slot(key: &str) -> bool {
    if key == "input" {
        return true;
    }
    match key.strip_prefix("input_") {
        Some(n) => !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()) && !n.starts_with('0'),
        None => false,
    }
}

/// Position of an input slot in binding order: `input` first, then by index.
pub fn slot_rank(key: &str) -> u64 {
    if key == "input" {
        return 0;
    }
    key.strip_prefix("input_").and_then(|n| n.parse::<u64>().ok()).unwrap_or(u64::MAX)
}

/// Insertion-ordered string-keyed map. Equality is order-sensitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ordered<V> {
    entries: Vec<(String, V)>,
}

impl<V> Default for Ordered<V> {
    fn default() -> Self {
        Self { entries: Vec::new() }
    }
}

impl<V> Ordered<V> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces, keeping the original position on replace.
    pub fn insert(&mut self, key: impl Into<String>, value: V) {
        let key = key.into();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&V> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn get_mut(&mut self, key: &str) -> Option<&mut V> {
        self.entries.iter_mut().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn remove(&mut self, key: &str) -> Option<V> {
        let pos = self.entries.iter().position(|(k, _)| k == key)?;
        Some(self.entries.remove(pos).1)
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    pub fn position(&self, key: &str) -> Option<usize> {
        self.entries.iter().position(|(k, _)| k == key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &V)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut V)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn values(&self) -> impl Iterator<Item = &V> {
        self.entries.iter().map(|(_, v)| v)
    }
}

impl<V> FromIterator<(String, V)> for Ordered<V> {
    fn from_iter<T: IntoIterator<Item = (String, V)>>(iter: T) -> Self {
        let mut map = Ordered::new();
        for (k, v) in iter {
            map.insert(k, v);
        }
        map
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    pub supernodes: Ordered<Supernode>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Supernode {
    pub chunks: Ordered<Chunk>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Chunk {
    /// Slot name → link. Slot names outside `input`/`input_<n>` are kept so
    /// the verifier can report them.
    pub inputs: Ordered<InputRef>,
    pub agents: Ordered<AgentInstance>,
}

impl Chunk {
    /// Inputs in binding order (`input`, `input_1`, `input_2`, ...).
    pub fn inputs_in_slot_order(&self) -> Vec<(&str, &InputRef)> {
        let mut v: Vec<_> = self.inputs.iter().collect();
        v.sort_by_key(|(slot, _)| slot_rank(slot));
        v
    }

    /// The agent whose message is exported under the chunk name: the
    /// `chunk_output` agent when flagged, otherwise the last agent.
    pub fn exported_agent(&self) -> Option<&str> {
        self.agents
            .iter()
            .find(|(_, a)| a.chunk_output)
            .map(|(n, _)| n)
            .or_else(|| self.agents.keys().last())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "snake_case")]
pub enum InputRef {
    Supernode(String),
    Chunk(String),
}

impl InputRef {
    pub fn parse(text: &str) -> Self {
        match text.strip_prefix(CHUNK_REF_PREFIX) {
            Some(rest) => InputRef::Chunk(rest.trim().to_string()),
            None => InputRef::Supernode(text.trim().to_string()),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            InputRef::Supernode(n) | InputRef::Chunk(n) => n,
        }
    }
}

impl fmt::Display for InputRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputRef::Supernode(n) => f.write_str(n),
            InputRef::Chunk(n) => write!(f, "{CHUNK_REF_PREFIX}{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentInstance {
    pub params: Ordered<ParamValue>,
    #[serde(default)]
    pub supernode_output: bool,
    #[serde(default)]
    pub chunk_output: bool,
}

impl AgentInstance {
    pub fn param(&self, name: &str) -> Option<&ParamValue> {
        self.params.get(name)
    }
}

/// Scalar agent parameter.
///
/// A string whose trimmed text starts with `[` and ends with `]` is always
/// tagged [`ParamValue::StringifiedList`]; a native sequence is kept as
/// [`ParamValue::List`] so the verifier can flag it where a stringified
/// list is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum ParamValue {
    String(String),
    Integer(i64),
    Float(f64),
    Boolean(bool),
    StringifiedList(String),
    List(Vec<ParamValue>),
    Null,
}

impl ParamValue {
    /// Builds a string value, tagging stringified lists.
    pub fn from_text(text: impl Into<String>) -> Self {
        let text = text.into();
        let t = text.trim();
        if t.starts_with('[') && t.ends_with(']') {
            ParamValue::StringifiedList(text)
        } else {
            ParamValue::String(text)
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::String(s) | ParamValue::StringifiedList(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Integer(i) => Some(*i as f64),
            ParamValue::Float(f) => Some(*f),
            ParamValue::String(s) => s.trim().parse().ok(),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            ParamValue::Integer(i) => Some(*i),
            ParamValue::Float(f) if f.fract() == 0.0 => Some(*f as i64),
            ParamValue::String(s) => s.trim().parse().ok(),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            ParamValue::Boolean(b) => Some(*b),
            ParamValue::String(s) => match s.trim() {
                "true" | "True" => Some(true),
                "false" | "False" => Some(false),
                _ => None,
            },
            _ => None,
        }
    }

    /// Interprets a stringified list as a flat list of numbers.
    pub fn interpret_list(&self) -> Option<Vec<f64>> {
        let ParamValue::StringifiedList(text) = self else {
            return None;
        };
        let inner = text.trim().strip_prefix('[')?.strip_suffix(']')?;
        if inner.trim().is_empty() {
            return Some(Vec::new());
        }
        inner.split(',').map(|item| item.trim().parse::<f64>().ok()).collect()
    }

    /// `__name__` placeholder bound at execution time.
    pub fn placeholder(&self) -> Option<&str> {
        match self {
            ParamValue::String(s) if is_placeholder(s) => Some(s),
            _ => None,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            ParamValue::String(_) => "string",
            ParamValue::Integer(_) => "integer",
            ParamValue::Float(_) => "float",
            ParamValue::Boolean(_) => "boolean",
            ParamValue::StringifiedList(_) => "stringified list",
            ParamValue::List(_) => "native list",
            ParamValue::Null => "null",
        }
    }
}

pub fn is_placeholder(s: &str) -> bool {
    s.len() > 4 && s.starts_with("__") && s.ends_with("__") && s[2..s.len() - 2].bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

/// Address of an element in a plan: `supernode/chunk/agent/param`.
///
/// A chunk input slot is addressed with `agent` unset and `param` holding
/// the slot name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct SourcePath {
    pub supernode: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub chunk: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub agent: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub param: Option<String>,
}

impl SourcePath {
    pub fn root() -> Self {
        Self::default()
    }

    pub fn supernode(sn: impl Into<String>) -> Self {
        Self {
            supernode: sn.into(),
            ..Self::default()
        }
    }

    pub fn chunk(sn: impl Into<String>, chunk: impl Into<String>) -> Self {
        Self {
            supernode: sn.into(),
            chunk: Some(chunk.into()),
            ..Self::default()
        }
    }

    pub fn agent(sn: impl Into<String>, chunk: impl Into<String>, agent: impl Into<String>) -> Self {
        Self {
            supernode: sn.into(),
            chunk: Some(chunk.into()),
            agent: Some(agent.into()),
            param: None,
        }
    }

    pub fn slot(sn: impl Into<String>, chunk: impl Into<String>, slot: impl Into<String>) -> Self {
        Self {
            supernode: sn.into(),
            chunk: Some(chunk.into()),
            agent: None,
            param: Some(slot.into()),
        }
    }

    pub fn with_param(mut self, param: impl Into<String>) -> Self {
        self.param = Some(param.into());
        self
    }

    /// True when the path names an element present in `graph`. The empty
    /// root path always resolves.
    pub fn resolves_in(&self, graph: &KnowledgeGraph) -> bool {
        if self.supernode.is_empty() {
            return self.chunk.is_none();
        }
        let Some(sn) = graph.supernodes.get(&self.supernode) else {
            return false;
        };
        let Some(chunk_name) = &self.chunk else {
            return true;
        };
        let Some(chunk) = sn.chunks.get(chunk_name) else {
            return false;
        };
        match (&self.agent, &self.param) {
            (None, None) => true,
            (None, Some(slot)) => chunk.inputs.contains_key(slot),
            (Some(agent), None) => chunk.agents.contains_key(agent),
            (Some(agent), Some(param)) => chunk
                .agents
                .get(agent)
                .is_some_and(|a| a.params.contains_key(param) || is_reserved_flag(param)),
        }
    }
}

impl fmt::Display for SourcePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.supernode.is_empty() {
            return f.write_str(ROOT_KEY);
        }
        f.write_str(&self.supernode)?;
        for seg in [&self.chunk, &self.agent, &self.param].into_iter().flatten() {
            write!(f, "/{seg}")?;
        }
        Ok(())
    }
}

impl KnowledgeGraph {
    pub fn chunk(&self, id: &ChunkId) -> Option<&Chunk> {
        self.supernodes.get(&id.supernode)?.chunks.get(&id.chunk)
    }

    /// Every `(supernode, chunk, agent)` triple in authoring order.
    pub fn agents(&self) -> impl Iterator<Item = (&str, &str, &str, &AgentInstance)> {
        self.supernodes.iter().flat_map(|(sn, s)| {
            s.chunks
                .iter()
                .flat_map(move |(cn, c)| c.agents.iter().map(move |(an, a)| (sn, cn, an, a)))
        })
    }

    /// The chunk holding the supernode's `supernode_output` agent, if exactly
    /// determined (first match wins when several are flagged).
    pub fn supernode_output_chunk(&self, supernode: &str) -> Option<(&str, &str)> {
        let sn = self.supernodes.get(supernode)?;
        sn.chunks
            .iter()
            .find_map(|(cn, c)| c.agents.iter().find(|(_, a)| a.supernode_output).map(|(an, _)| (cn, an)))
    }
}
