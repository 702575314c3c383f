use std::fmt::Write;

use yaml_rust2::Yaml;

use super::{KnowledgeGraph, ParamValue, AGENTS_KEY, CHUNK_OUTPUT, ROOT_KEY, SUPERNODE_OUTPUT};

const INDENT: &str = "  ";

/// Serializes a plan to YAML: `chunks` root, two-space indentation,
/// stringified lists single-quoted.
pub fn json_to_yaml(graph: &KnowledgeGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{ROOT_KEY}:");
    for (sn_name, sn) in graph.supernodes.iter() {
        line(&mut out, 1, &key(sn_name), None);
        for (cn, chunk) in sn.chunks.iter() {
            line(&mut out, 2, &key(cn), None);
            for (slot, input) in chunk.inputs.iter() {
                line(&mut out, 3, &key(slot), Some(&scalar(&input.to_string())));
            }
            line(&mut out, 3, AGENTS_KEY, None);
            for (an, agent) in chunk.agents.iter() {
                line(&mut out, 4, &key(an), None);
                for (pn, pv) in agent.params.iter() {
                    line(&mut out, 5, &key(pn), Some(&param(pv)));
                }
                if agent.supernode_output {
                    line(&mut out, 5, SUPERNODE_OUTPUT, Some("true"));
                }
                if agent.chunk_output {
                    line(&mut out, 5, CHUNK_OUTPUT, Some("true"));
                }
            }
        }
    }
    out
}

fn line(out: &mut String, depth: usize, key: &str, value: Option<&str>) {
    for _ in 0..depth {
        out.push_str(INDENT);
    }
    out.push_str(key);
    out.push(':');
    if let Some(v) = value {
        out.push(' ');
        out.push_str(v);
    }
    out.push('\n');
}

fn key(k: &str) -> String {
    scalar(k)
}

fn param(p: &ParamValue) -> String {
    match p {
        ParamValue::String(s) => scalar(s),
        ParamValue::StringifiedList(s) => single_quoted(s).unwrap_or_else(|| double_quoted(s)),
        ParamValue::Integer(i) => i.to_string(),
        ParamValue::Float(f) => float(*f),
        ParamValue::Boolean(b) => b.to_string(),
        ParamValue::Null => "null".to_string(),
        ParamValue::List(items) => {
            let inner: Vec<String> = items.iter().map(flow_item).collect();
            format!("[{}]", inner.join(", "))
        }
    }
}

// Strings inside a flow sequence are always quoted: `,` `[` `]` end plain scalars there.
fn flow_item(p: &ParamValue) -> String {
    match p {
        ParamValue::String(s) | ParamValue::StringifiedList(s) => single_quoted(s).unwrap_or_else(|| double_quoted(s)),
        other => param(other),
    }
}

fn float(f: f64) -> String {
    if f.is_nan() {
        ".nan".into()
    } else if f.is_infinite() {
        if f > 0.0 {
            ".inf".into()
        } else {
            "-.inf".into()
        }
    } else {
        // Debug keeps a fractional part (`3.0`) so the value re-reads as a float.
        format!("{f:?}")
    }
}

/// Plain when the scalar would re-read as the same string, quoted otherwise.
fn scalar(s: &str) -> String {
    if is_plain_safe(s) {
        s.to_string()
    } else {
        single_quoted(s).unwrap_or_else(|| double_quoted(s))
    }
}

fn is_plain_safe(s: &str) -> bool {
    let Some(first) = s.chars().next() else {
        return false;
    };
    if !(first.is_ascii_alphanumeric() || matches!(first, '_' | '/' | '.')) {
        return false;
    }
    if s.ends_with(' ') || s.ends_with(':') || s.contains(": ") || s.contains(" #") {
        return false;
    }
    let allowed = |c: char| {
        c.is_ascii_alphanumeric()
            || matches!(
                c,
                '_' | '.' | '/' | '-' | '+' | '=' | '%' | '~' | '(' | ')' | '@' | '?' | '&' | ':' | ' '
            )
    };
    if !s.chars().all(allowed) {
        return false;
    }
    matches!(Yaml::from_str(s), Yaml::String(ref r) if r == s)
}

fn single_quoted(s: &str) -> Option<String> {
    if s.chars().any(|c| c.is_control()) {
        return None;
    }
    Some(format!("'{}'", s.replace('\'', "''")))
}

fn double_quoted(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}
