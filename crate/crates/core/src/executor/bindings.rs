//! Run bindings: placeholder values, mode, and output locations.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::kg::{is_placeholder, KnowledgeGraph, ParamValue, SourcePath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Learn,
    Think,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Learn => "learn",
            Mode::Think => "think",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tie-breaking among chunks that are ready at the same time.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Schedule {
    /// Earlier-authored chunks first.
    #[default]
    Authoring,
    /// Later-authored chunks first.
    Reverse,
    /// `ranks[i]` orders chunk `i` (authoring index); lower runs first.
    Permuted(Vec<usize>),
}

impl Schedule {
    pub fn rank(&self, node: usize, nodes: usize) -> usize {
        match self {
            Schedule::Authoring => node,
            Schedule::Reverse => nodes - node,
            Schedule::Permuted(ranks) => ranks.get(node).copied().unwrap_or(node),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunBindings {
    /// Placeholder name (with underscores, e.g. `__input_images__`) to value.
    pub substitutions: BTreeMap<String, String>,
    pub mode: Mode,
    pub out_dir: PathBuf,
    pub weights_dir: PathBuf,
    /// Directory that relative manifest paths resolve against.
    pub base_dir: PathBuf,
    pub schedule: Schedule,
}

impl RunBindings {
    pub fn new(mode: Mode, out_dir: impl Into<PathBuf>) -> Self {
        let out_dir = out_dir.into();
        Self {
            substitutions: BTreeMap::new(),
            mode,
            weights_dir: out_dir.join("weights"),
            out_dir,
            base_dir: PathBuf::from("."),
            schedule: Schedule::Authoring,
        }
    }

    pub fn bind(mut self, placeholder: &str, value: impl Into<String>) -> Self {
        self.substitutions.insert(normalize_key(placeholder), value.into());
        self
    }

    pub fn resolve_path(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

fn normalize_key(key: &str) -> String {
    if is_placeholder(key) {
        key.to_string()
    } else {
        format!("__{key}__")
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BindingsError {
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("placeholder `{name}` at {path} has no binding")]
    Unbound { name: String, path: SourcePath },
}

/// Reads a bindings file: a JSON object mapping placeholders to strings,
/// with optional `learn` and `think` objects overriding entries per mode.
/// Keys may omit the surrounding double underscores.
pub fn load_bindings(path: &Path, mode: Mode, out_dir: &Path) -> Result<RunBindings, BindingsError> {
    let err = |message: String| BindingsError::File {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(err("expected a JSON object".into()));
    };
    let mut bindings = RunBindings::new(mode, out_dir);
    bindings.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut layer = |obj: &serde_json::Map<String, Value>, nested: bool| -> Result<(), BindingsError> {
        for (k, v) in obj {
            match v {
                Value::String(s) => {
                    bindings.substitutions.insert(normalize_key(k), s.clone());
                }
                Value::Object(_) if !nested && (k == "learn" || k == "think") => {}
                other => return Err(err(format!("`{k}` must be a string, found {other}"))),
            }
        }
        Ok(())
    };
    layer(&map, false)?;
    if let Some(Value::Object(over)) = map.get(mode.as_str()) {
        layer(over, true)?;
    }
    Ok(bindings)
}

/// Replaces every whole-value `__name__` parameter with its binding.
pub fn substitute(graph: &KnowledgeGraph, bindings: &RunBindings) -> Result<KnowledgeGraph, BindingsError> {
    let mut out = graph.clone();
    for (sn, s) in out.supernodes.iter_mut() {
        for (cn, c) in s.chunks.iter_mut() {
            for (an, a) in c.agents.iter_mut() {
                for (pn, v) in a.params.iter_mut() {
                    if let Some(name) = v.placeholder().map(str::to_string) {
                        let value = bindings.substitutions.get(&name).ok_or_else(|| BindingsError::Unbound {
                            name: name.clone(),
                            path: SourcePath::agent(sn, cn, an).with_param(pn),
                        })?;
                        *v = ParamValue::from_text(value.clone());
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Placeholders a graph needs bound, in first-use order.
pub fn placeholders(graph: &KnowledgeGraph) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for (_, _, _, a) in graph.agents() {
        for (_, v) in a.params.iter() {
            if let Some(p) = v.placeholder() {
                if !out.iter().any(|o| o == p) {
                    out.push(p.to_string());
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::parse_json_plan;

    #[test]
    fn file_layers_and_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.json");
        std::fs::write(
            &p,
            r#"{"input_images": "all.csv", "__header_params__": "image,mask", "think": {"__input_images__": "test.csv"}}"#,
        )
        .unwrap();
        let learn = load_bindings(&p, Mode::Learn, dir.path()).unwrap();
        assert_eq!(learn.substitutions["__input_images__"], "all.csv");
        let think = load_bindings(&p, Mode::Think, dir.path()).unwrap();
        assert_eq!(think.substitutions["__input_images__"], "test.csv");
        assert_eq!(think.resolve_path("test.csv"), dir.path().join("test.csv"));
        std::fs::write(&p, r#"{"x": 1}"#).unwrap();
        assert!(load_bindings(&p, Mode::Learn, dir.path()).is_err());
    }

    #[test]
    fn substitution() {
        let g = parse_json_plan(
            r#"{"chunks": {"s": {"c": {"agents": {"reader": {"csv_path": "__input_images__", "header_params": "keep __x__"}}}}}}"#,
        )
        .unwrap();
        assert_eq!(placeholders(&g), vec!["__input_images__"]);
        let unbound = substitute(&g, &RunBindings::new(Mode::Think, "o")).unwrap_err();
        assert_eq!(
            unbound.to_string(),
            "placeholder `__input_images__` at s/c/reader/csv_path has no binding"
        );
        let b = RunBindings::new(Mode::Think, "o").bind("input_images", "a.csv");
        let g2 = substitute(&g, &b).unwrap();
        let reader = &g2
            .supernodes
            .get("s")
            .unwrap()
            .chunks
            .get("c")
            .unwrap()
            .agents
            .get("reader")
            .unwrap();
        assert_eq!(reader.param("csv_path").unwrap().as_str(), Some("a.csv"));
        assert_eq!(reader.param("header_params").unwrap().as_str(), Some("keep __x__"));
    }
}
