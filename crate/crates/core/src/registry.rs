//! Tool contracts: input/output data kinds and parameter requirements.
//!
//! The wire format is the tool dictionary: a JSON object keyed by tool name,
//! each entry holding `info.agent_input_def`, `info.agent_output_def`,
//! `info.agent_parameter_def` and a descriptive `path`. Three optional
//! entry-level keys extend it (`trainable`, `param_format`,
//! `requires_agents`); they are emitted only when set, so plain dictionary
//! entries round-trip unchanged.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::kg::{Ordered, ParamValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    ImageCompressedNumpy,
    MaskCompressedNumpy,
    WeightsFile,
    FilePath,
    Scalar,
}

impl DataKind {
    pub const ALL: [DataKind; 5] = [
        DataKind::ImageCompressedNumpy,
        DataKind::MaskCompressedNumpy,
        DataKind::WeightsFile,
        DataKind::FilePath,
        DataKind::Scalar,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DataKind::ImageCompressedNumpy => "image_compressed_numpy",
            DataKind::MaskCompressedNumpy => "mask_compressed_numpy",
            DataKind::WeightsFile => "weights_file",
            DataKind::FilePath => "file_path",
            DataKind::Scalar => "scalar",
        }
    }
}

impl fmt::Display for DataKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DataKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DataKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown data kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortSpec {
    pub name: String,
    pub alternate_names: Vec<String>,
    pub optional: bool,
    pub kind: DataKind,
}

impl PortSpec {
    pub fn answers_to(&self, slot: &str) -> bool {
        self.name == slot || self.alternate_names.iter().any(|a| a == slot)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub optional: bool,
}

/// Wire-format constraint layered over a parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatRule {
    /// A quoted list such as `'[512, 512]'` holding `len` numbers.
    StringifiedList { len: usize },
}

impl FormatRule {
    fn wire_name(&self) -> String {
        match self {
            FormatRule::StringifiedList { len } => format!("stringified_list:{len}"),
        }
    }

    fn from_wire(s: &str) -> Option<Self> {
        let len = s.strip_prefix("stringified_list:")?.parse().ok()?;
        Some(FormatRule::StringifiedList { len })
    }

    /// A literal satisfying the rule, as written in YAML.
    pub fn example(&self) -> String {
        match self {
            FormatRule::StringifiedList { len } => {
                let items = vec!["512"; *len].join(", ");
                format!("'[{items}]'")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub inputs: Vec<PortSpec>,
    pub outputs: Vec<PortSpec>,
    pub params: Vec<ParamSpec>,
    pub path: String,
    pub trainable: bool,
    pub param_format_rules: Ordered<FormatRule>,
    /// Agents that must be configured in the same supernode for this tool
    /// to have its inputs.
    pub requires_agents: Vec<String>,
}

impl ToolSpec {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Kind of the (first) declared output.
    pub fn output_kind(&self) -> Option<DataKind> {
        self.outputs.first().map(|p| p.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistryError {
    #[error("dictionary syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("dictionary entry `{tool}`: {message}")]
    Schema { tool: String, message: String },
}

/// Immutable tool lookup table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ToolRegistry {
    tools: Ordered<ToolSpec>,
}

impl ToolRegistry {
    pub fn from_specs(specs: impl IntoIterator<Item = ToolSpec>) -> Self {
        Self {
            tools: specs.into_iter().map(|s| (s.name.clone(), s)).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tools.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tools.keys()
    }

    pub fn tools(&self) -> impl Iterator<Item = &ToolSpec> {
        self.tools.values()
    }

    /// Renders the registry in dictionary format.
    pub fn to_dictionary(&self) -> String {
        let mut root = Map::new();
        for spec in self.tools.values() {
            root.insert(spec.name.clone(), spec_to_entry(spec));
        }
        serde_json::to_string_pretty(&Value::Object(root)).expect("dictionary serializes")
    }
}

/// Loads a registry from dictionary text. Missing `optional` means required.
pub fn load_registry(text: &str) -> Result<ToolRegistry, RegistryError> {
    let root: Value = serde_json::from_str(text).map_err(|e| RegistryError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let Value::Object(entries) = root else {
        return Err(RegistryError::Syntax {
            line: 1,
            column: 1,
            message: "dictionary must be a JSON object".into(),
        });
    };
    let mut specs = Vec::with_capacity(entries.len());
    for (name, entry) in &entries {
        specs.push(entry_to_spec(name, entry)?);
    }
    Ok(ToolRegistry::from_specs(specs))
}

fn entry_to_spec(name: &str, entry: &Value) -> Result<ToolSpec, RegistryError> {
    let schema = |message: String| RegistryError::Schema {
        tool: name.to_string(),
        message,
    };
    let obj = entry.as_object().ok_or_else(|| schema("entry must be an object".into()))?;
    let info = obj
        .get("info")
        .and_then(Value::as_object)
        .ok_or_else(|| schema("missing `info` object".into()))?;
    let section = |key: &str| {
        info.get(key)
            .and_then(Value::as_object)
            .ok_or_else(|| schema(format!("missing `info.{key}` object")))
    };

    let ports = |key: &str| -> Result<Vec<PortSpec>, RegistryError> {
        section(key)?
            .iter()
            .map(|(port, def)| {
                let def = def.as_object().ok_or_else(|| schema(format!("port `{port}` must be an object")))?;
                let kind = def
                    .get("type")
                    .and_then(Value::as_str)
                    .ok_or_else(|| schema(format!("port `{port}` has no `type`")))?
                    .parse::<DataKind>()
                    .map_err(|e| schema(format!("port `{port}`: {e}")))?;
                let alternate_names = match def.get("alternate_names") {
                    None => Vec::new(),
                    Some(v) => v
                        .as_array()
                        .and_then(|a| a.iter().map(|x| x.as_str().map(str::to_string)).collect::<Option<Vec<_>>>())
                        .ok_or_else(|| schema(format!("port `{port}`: `alternate_names` must be a list of strings")))?,
                };
                if alternate_names.iter().any(|a| a == port) {
                    return Err(schema(format!("port `{port}` lists itself as an alternate name")));
                }
                Ok(PortSpec {
                    name: port.clone(),
                    alternate_names,
                    optional: def.get("optional").and_then(Value::as_bool).unwrap_or(false),
                    kind,
                })
            })
            .collect()
    };

    let inputs = ports("agent_input_def")?;
    let outputs = ports("agent_output_def")?;
    let params = section("agent_parameter_def")?
        .iter()
        .map(|(p, def)| ParamSpec {
            name: p.clone(),
            optional: def.get("optional").and_then(Value::as_bool).unwrap_or(false),
        })
        .collect();

    let mut param_format_rules = Ordered::new();
    if let Some(rules) = obj.get("param_format") {
        let rules = rules.as_object().ok_or_else(|| schema("`param_format` must be an object".into()))?;
        for (p, rule) in rules {
            let rule = rule
                .as_str()
                .and_then(FormatRule::from_wire)
                .ok_or_else(|| schema(format!("unknown format rule for `{p}`")))?;
            param_format_rules.insert(p.clone(), rule);
        }
    }

    Ok(ToolSpec {
        name: name.to_string(),
        inputs,
        outputs,
        params,
        path: obj.get("path").and_then(Value::as_str).unwrap_or_default().to_string(),
        trainable: obj.get("trainable").and_then(Value::as_bool).unwrap_or(false),
        param_format_rules,
        requires_agents: obj
            .get("requires_agents")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(|x| x.as_str().map(str::to_string)).collect())
            .unwrap_or_default(),
    })
}

fn spec_to_entry(spec: &ToolSpec) -> Value {
    let inputs: Map<String, Value> = spec
        .inputs
        .iter()
        .map(|p| {
            let mut def = Map::new();
            if !p.alternate_names.is_empty() {
                def.insert("alternate_names".into(), json!(p.alternate_names));
            }
            def.insert("optional".into(), json!(p.optional));
            def.insert("type".into(), json!(p.kind.as_str()));
            (p.name.clone(), Value::Object(def))
        })
        .collect();
    let outputs: Map<String, Value> = spec
        .outputs
        .iter()
        .map(|p| (p.name.clone(), json!({ "type": p.kind.as_str() })))
        .collect();
    let params: Map<String, Value> = spec
        .params
        .iter()
        .map(|p| (p.name.clone(), json!({ "optional": p.optional })))
        .collect();

    let mut entry = Map::new();
    entry.insert(
        "info".into(),
        json!({
            "agent_input_def": inputs,
            "agent_output_def": outputs,
            "agent_parameter_def": params,
        }),
    );
    entry.insert("path".into(), json!(spec.path));
    if spec.trainable {
        entry.insert("trainable".into(), json!(true));
    }
    if !spec.param_format_rules.is_empty() {
        let rules: Map<String, Value> = spec
            .param_format_rules
            .iter()
            .map(|(p, r)| (p.to_string(), json!(r.wire_name())))
            .collect();
        entry.insert("param_format".into(), Value::Object(rules));
    }
    if !spec.requires_agents.is_empty() {
        entry.insert("requires_agents".into(), json!(spec.requires_agents));
    }
    Value::Object(entry)
}

/// Checks one parameter value against its format rule.
///
/// On violation returns a description naming the expected format with a
/// correct literal.
pub fn check_param(value: &ParamValue, _spec: &ParamSpec, rule: Option<&FormatRule>) -> Result<(), String> {
    let Some(rule) = rule else {
        return Ok(());
    };
    match rule {
        FormatRule::StringifiedList { len } => {
            let expected = format!("expected stringified list like {}", rule.example());
            match value {
                ParamValue::StringifiedList(_) => match value.interpret_list() {
                    Some(items) if items.len() == *len => Ok(()),
                    Some(items) => Err(format!("{expected}, found a list of {} values", items.len())),
                    None => Err(format!("{expected}, found an unreadable list")),
                },
                ParamValue::List(_) => Err(format!("{expected} (a quoted string), found a native list")),
                other => Err(format!("{expected}, found {}", other.type_name())),
            }
        }
    }
}

fn port(name: &str, alternates: &[&str], optional: bool, kind: DataKind) -> PortSpec {
    PortSpec {
        name: name.into(),
        alternate_names: alternates.iter().map(|s| s.to_string()).collect(),
        optional,
        kind,
    }
}

fn params(list: &[(&str, bool)]) -> Vec<ParamSpec> {
    list.iter()
        .map(|(n, optional)| ParamSpec {
            name: n.to_string(),
            optional: *optional,
        })
        .collect()
}

fn image_tool(name: &str, path: &str, param_list: &[(&str, bool)]) -> ToolSpec {
    ToolSpec {
        name: name.into(),
        inputs: vec![port("input", &["image"], false, DataKind::ImageCompressedNumpy)],
        outputs: vec![port("image", &[], false, DataKind::ImageCompressedNumpy)],
        params: params(param_list),
        path: path.into(),
        trainable: false,
        param_format_rules: Ordered::new(),
        requires_agents: Vec::new(),
    }
}

/// The tools shipped with the executor.
pub fn builtin_registry() -> ToolRegistry {
    use DataKind::*;
    let reader = ToolSpec {
        name: "reader".into(),
        inputs: vec![],
        outputs: vec![port("image", &[], false, ImageCompressedNumpy)],
        params: params(&[("csv_path", false), ("header_params", true)]),
        path: "tools/io/reader".into(),
        trainable: false,
        param_format_rules: Ordered::new(),
        requires_agents: vec![],
    };
    let save_image = ToolSpec {
        name: "save_image".into(),
        inputs: vec![
            port("image", &["input", "input_1"], false, ImageCompressedNumpy),
            port("mask", &["input_2"], true, MaskCompressedNumpy),
        ],
        outputs: vec![port("file", &[], false, FilePath)],
        params: params(&[("output_filename", false), ("mask_alpha", true)]),
        path: "tools/io/save_image".into(),
        trainable: false,
        param_format_rules: Ordered::new(),
        requires_agents: vec![],
    };
    let mut resize = image_tool(
        "resize",
        "tools/image_processing/resize",
        &[
            ("target_shape", false),
            ("order", true),
            ("preserve_range", true),
            ("anti_aliasing", true),
            ("numpy_only", false),
        ],
    );
    resize
        .param_format_rules
        .insert("target_shape", FormatRule::StringifiedList { len: 2 });
    let expand_channels = image_tool(
        "expand_channels",
        "tools/image_processing/expand_channels",
        &[("number_of_channels", false), ("numpy_only", false)],
    );
    let clahe = image_tool(
        "clahe",
        "tools/image_processing/clahe",
        &[("channel", true), ("clip_limit", false), ("nbins", false), ("numpy_only", false)],
    );
    let histeq = image_tool(
        "histeq",
        "tools/image_processing/histeq",
        &[("channel", false), ("nbins", false), ("numpy_only", false)],
    );
    let z_score = image_tool(
        "z_score",
        "tools/image_processing/z_score",
        &[("channel", true), ("numpy_only", false)],
    );
    let segmentation = ToolSpec {
        name: "tf2_segmentation".into(),
        inputs: vec![
            port("image", &["input", "input_2"], false, ImageCompressedNumpy),
            port("reference", &["input_1"], true, ImageCompressedNumpy),
        ],
        outputs: vec![port("mask", &[], false, MaskCompressedNumpy)],
        params: params(&[
            ("prediction_threshold", false),
            ("settings_yaml", true),
            ("working_dir", true),
            ("weights_path", true),
            ("weights_url", true),
        ]),
        path: "tools/neural_net/threshold_segmenter".into(),
        trainable: true,
        param_format_rules: Ordered::new(),
        requires_agents: vec![],
    };
    let decision_tree = ToolSpec {
        name: "decision_tree".into(),
        inputs: vec![port("input", &["mask"], false, MaskCompressedNumpy)],
        outputs: vec![port("mask", &[], false, MaskCompressedNumpy)],
        params: params(&[("settings_yaml", true)]),
        path: "tools/reasoning/decision_tree".into(),
        trainable: false,
        param_format_rules: Ordered::new(),
        requires_agents: vec![],
    };
    let candidate_selector = ToolSpec {
        name: "candidate_selector".into(),
        inputs: vec![port("input", &["mask"], false, MaskCompressedNumpy)],
        outputs: vec![port("mask", &[], false, MaskCompressedNumpy)],
        params: vec![],
        path: "tools/reasoning/candidate_selector".into(),
        trainable: false,
        param_format_rules: Ordered::new(),
        requires_agents: vec!["decision_tree".into()],
    };
    ToolRegistry::from_specs([
        reader,
        save_image,
        resize,
        expand_channels,
        clahe,
        histeq,
        z_score,
        segmentation,
        decision_tree,
        candidate_selector,
    ])
}
