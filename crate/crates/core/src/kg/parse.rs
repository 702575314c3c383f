use serde_json::{Map, Number, Value};
use thiserror::Error;
use yaml_rust2::{Yaml, YamlLoader};

use super::{
    AgentInstance, Chunk, InputRef, KnowledgeGraph, ParamValue, SourcePath, Supernode, AGENTS_KEY, CHUNK_OUTPUT, ROOT_KEY, SUPERNODE_OUTPUT,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("structure error at {path}: {message}")]
    Structure { path: SourcePath, message: String },
}

impl ParseError {
    fn structure(path: SourcePath, message: impl Into<String>) -> Self {
        ParseError::Structure {
            path,
            message: message.into(),
        }
    }

    fn syntax(message: impl Into<String>) -> Self {
        ParseError::Syntax {
            line: 0,
            column: 0,
            message: message.into(),
        }
    }
}

/// Parses a plan from JSON text, keeping authoring order.
pub fn parse_json_plan(text: &str) -> Result<KnowledgeGraph, ParseError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    build_graph(&value)
}

/// Parses a plan from YAML text. Quoted scalars such as `'[512, 512]'` are
/// strings (and so stringified lists); flow sequences are native lists.
pub fn parse_yaml_plan(text: &str) -> Result<KnowledgeGraph, ParseError> {
    let docs = YamlLoader::load_from_str(text).map_err(|e| ParseError::Syntax {
        line: e.marker().line(),
        column: e.marker().col() + 1,
        message: e.info().to_string(),
    })?;
    let doc = match docs.as_slice() {
        [] => return Err(ParseError::syntax("empty document")),
        [doc] => doc,
        _ => return Err(ParseError::syntax("multi-document streams are not supported")),
    };
    if matches!(doc, Yaml::Null) {
        return Err(ParseError::syntax("empty document"));
    }
    build_graph(&yaml_to_value(doc)?)
}

fn yaml_to_value(node: &Yaml) -> Result<Value, ParseError> {
    Ok(match node {
        Yaml::Null => Value::Null,
        Yaml::Boolean(b) => Value::Bool(*b),
        Yaml::Integer(i) => Value::Number((*i).into()),
        Yaml::Real(text) => {
            let f = node.as_f64().ok_or_else(|| ParseError::syntax(format!("invalid float `{text}`")))?;
            Value::Number(Number::from_f64(f).ok_or_else(|| ParseError::syntax(format!("non-finite float `{text}` is not supported")))?)
        }
        Yaml::String(s) => Value::String(s.clone()),
        Yaml::Array(items) => Value::Array(items.iter().map(yaml_to_value).collect::<Result<_, _>>()?),
        Yaml::Hash(hash) => {
            let mut map = Map::new();
            for (k, v) in hash {
                let key = match k {
                    Yaml::String(s) => s.clone(),
                    Yaml::Integer(i) => i.to_string(),
                    Yaml::Real(r) => r.clone(),
                    Yaml::Boolean(b) => b.to_string(),
                    Yaml::Null => "null".to_string(),
                    _ => return Err(ParseError::syntax("mapping keys must be scalars")),
                };
                map.insert(key, yaml_to_value(v)?);
            }
            Value::Object(map)
        }
        Yaml::Alias(_) => return Err(ParseError::syntax("YAML aliases are not supported")),
        Yaml::BadValue => return Err(ParseError::syntax("unparseable YAML value")),
    })
}

fn build_graph(root: &Value) -> Result<KnowledgeGraph, ParseError> {
    let root_path = SourcePath::root();
    let Value::Object(root_map) = root else {
        return Err(ParseError::structure(
            root_path,
            "document must be an object with a top-level key \"chunks\"",
        ));
    };
    if let Some(extra) = root_map.keys().find(|k| *k != ROOT_KEY) {
        return Err(ParseError::structure(
            root_path,
            format!("unexpected top-level key \"{extra}\"; the only top-level key is \"chunks\""),
        ));
    }
    let Some(chunks) = root_map.get(ROOT_KEY) else {
        return Err(ParseError::structure(root_path, "missing top-level key \"chunks\""));
    };
    let Value::Object(sn_map) = chunks else {
        return Err(ParseError::structure(
            root_path,
            "\"chunks\" must map supernode names to supernode objects",
        ));
    };
    if sn_map.is_empty() {
        return Err(ParseError::structure(
            root_path,
            "empty supernode map: \"chunks\" needs at least one supernode",
        ));
    }

    let mut graph = KnowledgeGraph::default();
    for (sn_name, sn_value) in sn_map {
        if sn_name.trim().is_empty() {
            return Err(ParseError::structure(SourcePath::root(), "supernode names must be non-empty"));
        }
        graph.supernodes.insert(sn_name.clone(), build_supernode(sn_name, sn_value)?);
    }
    Ok(graph)
}

fn build_supernode(sn: &str, value: &Value) -> Result<Supernode, ParseError> {
    let chunk_map = match value {
        Value::Null => return Ok(Supernode::default()),
        Value::Object(m) => m,
        other => {
            return Err(ParseError::structure(
                SourcePath::supernode(sn),
                format!("supernode must be an object of chunks, found {}", json_type(other)),
            ))
        }
    };
    let mut supernode = Supernode::default();
    for (chunk_name, chunk_value) in chunk_map {
        supernode
            .chunks
            .insert(chunk_name.clone(), build_chunk(sn, chunk_name, chunk_value)?);
    }
    Ok(supernode)
}

fn build_chunk(sn: &str, cn: &str, value: &Value) -> Result<Chunk, ParseError> {
    let path = SourcePath::chunk(sn, cn);
    let Value::Object(map) = value else {
        return Err(ParseError::structure(
            path,
            format!(
                "chunk must be an object with inputs and an \"agents\" object, found {}",
                json_type(value)
            ),
        ));
    };
    let mut chunk = Chunk::default();
    let mut saw_agents = false;
    for (key, v) in map {
        if key == AGENTS_KEY {
            saw_agents = true;
            match v {
                Value::Null => {}
                Value::Object(agents) => {
                    for (agent_name, agent_value) in agents {
                        let agent = build_agent(sn, cn, agent_name, agent_value)?;
                        chunk.agents.insert(agent_name.clone(), agent);
                    }
                }
                other => {
                    return Err(ParseError::structure(
                        path.clone().with_param(AGENTS_KEY),
                        format!("\"agents\" must be an object keyed by agent name, found {}", json_type(other)),
                    ))
                }
            }
        } else {
            match v {
                Value::String(s) => chunk.inputs.insert(key.clone(), InputRef::parse(s)),
                Value::Object(_) => {
                    return Err(ParseError::structure(
                        SourcePath::slot(sn, cn, key.clone()),
                        format!("\"{key}\" looks like an agent placed directly in the chunk; agents belong under \"agents\""),
                    ))
                }
                other => {
                    return Err(ParseError::structure(
                        SourcePath::slot(sn, cn, key.clone()),
                        format!("chunk input \"{key}\" must be a string link, found {}", json_type(other)),
                    ))
                }
            }
        }
    }
    if !saw_agents {
        return Err(ParseError::structure(path, "chunk has no \"agents\" object"));
    }
    Ok(chunk)
}

fn build_agent(sn: &str, cn: &str, name: &str, value: &Value) -> Result<AgentInstance, ParseError> {
    let path = SourcePath::agent(sn, cn, name);
    let map = match value {
        Value::Null => return Ok(AgentInstance::default()),
        Value::Object(m) => m,
        // A flag written where an agent belongs; kept so the verifier can point at it.
        _ if super::is_reserved_flag(name) => return Ok(AgentInstance::default()),
        other => {
            return Err(ParseError::structure(
                path,
                format!("agent must be an object of parameters, found {}", json_type(other)),
            ))
        }
    };
    let mut agent = AgentInstance::default();
    for (key, v) in map {
        match (key.as_str(), v) {
            (SUPERNODE_OUTPUT, Value::Bool(b)) => agent.supernode_output = *b,
            (CHUNK_OUTPUT, Value::Bool(b)) => agent.chunk_output = *b,
            _ => {
                let param = build_param(v).ok_or_else(|| {
                    ParseError::structure(
                        path.clone().with_param(key.clone()),
                        "parameter values must be scalars or lists, not nested objects",
                    )
                })?;
                agent.params.insert(key.clone(), param);
            }
        }
    }
    Ok(agent)
}

fn build_param(v: &Value) -> Option<ParamValue> {
    Some(match v {
        Value::Null => ParamValue::Null,
        Value::Bool(b) => ParamValue::Boolean(*b),
        Value::Number(n) => match n.as_i64() {
            Some(i) => ParamValue::Integer(i),
            None => ParamValue::Float(n.as_f64()?),
        },
        Value::String(s) => ParamValue::from_text(s.clone()),
        Value::Array(items) => ParamValue::List(items.iter().map(build_param).collect::<Option<_>>()?),
        Value::Object(_) => return None,
    })
}

fn json_type(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "a list",
        Value::Object(_) => "an object",
    }
}

/// Rebuilds the plan as a JSON value with the document layout.
pub(crate) fn graph_to_value(graph: &KnowledgeGraph) -> Value {
    let mut sns = Map::new();
    for (sn_name, sn) in graph.supernodes.iter() {
        let mut chunks = Map::new();
        for (cn, chunk) in sn.chunks.iter() {
            let mut c = Map::new();
            for (slot, input) in chunk.inputs.iter() {
                c.insert(slot.to_string(), Value::String(input.to_string()));
            }
            let mut agents = Map::new();
            for (an, agent) in chunk.agents.iter() {
                let mut a = Map::new();
                for (pn, pv) in agent.params.iter() {
                    a.insert(pn.to_string(), param_to_value(pv));
                }
                if agent.supernode_output {
                    a.insert(SUPERNODE_OUTPUT.into(), Value::Bool(true));
                }
                if agent.chunk_output {
                    a.insert(CHUNK_OUTPUT.into(), Value::Bool(true));
                }
                agents.insert(an.to_string(), Value::Object(a));
            }
            c.insert(AGENTS_KEY.into(), Value::Object(agents));
            chunks.insert(cn.to_string(), Value::Object(c));
        }
        sns.insert(sn_name.to_string(), Value::Object(chunks));
    }
    let mut root = Map::new();
    root.insert(ROOT_KEY.into(), Value::Object(sns));
    Value::Object(root)
}

fn param_to_value(p: &ParamValue) -> Value {
    match p {
        ParamValue::String(s) | ParamValue::StringifiedList(s) => Value::String(s.clone()),
        ParamValue::Integer(i) => Value::Number((*i).into()),
        ParamValue::Float(f) => Number::from_f64(*f).map(Value::Number).unwrap_or(Value::Null),
        ParamValue::Boolean(b) => Value::Bool(*b),
        ParamValue::List(items) => Value::Array(items.iter().map(param_to_value).collect()),
        ParamValue::Null => Value::Null,
    }
}

impl KnowledgeGraph {
    /// Pretty JSON in the plan document layout.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&graph_to_value(self)).expect("plan values serialize")
    }
}
