//! Property checks shared by the proptest suite and the acceptance runner.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use proptest::prelude::*;
use serde_json::{json, Map, Value};

use kgflow::executor::{execute, Blackboard, Draft, ExecError, Mode, Payload, RunBindings};
use kgflow::kg::{
    json_to_yaml, parse_json_plan, parse_yaml_plan, AgentInstance, Chunk, InputRef, KnowledgeGraph, ParamValue, SourcePath, Supernode,
};
use kgflow::registry::{builtin_registry, DataKind};
use kgflow::tools::{histeq, ImageBuffer, CLAHE_GRID};
use kgflow::verifier::{verify, Code};

// Plan round trip

pub fn param_value() -> impl Strategy<Value = ParamValue> {
    let scalar = prop_oneof![
        "[ -~]{0,12}".prop_map(ParamValue::from_text),
        (0u32..600, 0u32..600).prop_map(|(a, b)| ParamValue::from_text(format!("[{a}, {b}]"))),
        "__[a-z_]{1,8}__".prop_map(ParamValue::from_text),
        any::<i64>().prop_map(ParamValue::Integer),
        any::<f64>().prop_filter("finite", |f| f.is_finite()).prop_map(ParamValue::Float),
        any::<bool>().prop_map(ParamValue::Boolean),
        Just(ParamValue::Null),
    ];
    prop_oneof![
        4 => scalar.clone(),
        1 => prop::collection::vec(scalar, 0..4).prop_map(ParamValue::List),
    ]
}

pub fn agent() -> impl Strategy<Value = AgentInstance> {
    (
        prop::collection::vec(("p[a-z_]{0,6}", param_value()), 0..4),
        any::<bool>(),
        any::<bool>(),
    )
        .prop_map(|(params, sn, cn)| AgentInstance {
            params: params.into_iter().collect(),
            supernode_output: sn,
            chunk_output: cn,
        })
}

pub fn input_ref() -> impl Strategy<Value = InputRef> {
    prop_oneof![
        "s[a-z0-9_]{0,5}".prop_map(InputRef::Supernode),
        "c[a-z0-9_]{0,5}".prop_map(InputRef::Chunk)
    ]
}

pub fn chunk() -> impl Strategy<Value = Chunk> {
    (
        prop::collection::vec((prop::option::of(1u32..4), input_ref()), 0..3),
        prop::collection::vec(("a[a-z0-9_]{0,6}", agent()), 1..4),
    )
        .prop_map(|(inputs, agents)| Chunk {
            inputs: inputs
                .into_iter()
                .map(|(n, r)| (n.map_or_else(|| "input".to_string(), |n| format!("input_{n}")), r))
                .collect(),
            agents: agents.into_iter().collect(),
        })
}

pub fn graph() -> impl Strategy<Value = KnowledgeGraph> {
    prop::collection::vec(("s[a-z0-9_]{0,5}", prop::collection::vec(("c[a-z0-9_]{0,5}", chunk()), 1..3)), 1..4).prop_map(|sns| {
        KnowledgeGraph {
            supernodes: sns
                .into_iter()
                .map(|(n, chunks)| {
                    (
                        n,
                        Supernode {
                            chunks: chunks.into_iter().collect(),
                        },
                    )
                })
                .collect(),
        }
    })
}

fn param_json(v: &ParamValue) -> Value {
    match v {
        ParamValue::String(s) | ParamValue::StringifiedList(s) => json!(s),
        ParamValue::Integer(i) => json!(i),
        ParamValue::Float(f) => json!(f),
        ParamValue::Boolean(b) => json!(b),
        ParamValue::List(items) => Value::Array(items.iter().map(param_json).collect()),
        ParamValue::Null => Value::Null,
    }
}

/// Planner-style JSON written independently of the crate's emitters.
fn planner_json(g: &KnowledgeGraph) -> String {
    let mut root = Map::new();
    for (sn, s) in g.supernodes.iter() {
        let mut chunks = Map::new();
        for (cn, c) in s.chunks.iter() {
            let mut body = Map::new();
            for (slot, r) in c.inputs.iter() {
                let text = match r {
                    InputRef::Supernode(n) => n.clone(),
                    InputRef::Chunk(n) => format!("from {n}"),
                };
                body.insert(slot.to_string(), json!(text));
            }
            let mut agents = Map::new();
            for (an, a) in c.agents.iter() {
                let mut params: Map<String, Value> = a.params.iter().map(|(k, v)| (k.to_string(), param_json(v))).collect();
                if a.supernode_output {
                    params.insert("supernode_output".into(), json!(true));
                }
                if a.chunk_output {
                    params.insert("chunk_output".into(), json!(true));
                }
                agents.insert(an.to_string(), Value::Object(params));
            }
            body.insert("agents".into(), Value::Object(agents));
            chunks.insert(cn.to_string(), Value::Object(body));
        }
        root.insert(sn.to_string(), Value::Object(chunks));
    }
    serde_json::to_string_pretty(&json!({ "chunks": root })).unwrap()
}

pub fn check_round_trip(g: KnowledgeGraph) -> Result<(), TestCaseError> {
    let from_json = parse_json_plan(&planner_json(&g)).unwrap();
    prop_assert_eq!(&from_json, &g);
    let yaml = json_to_yaml(&g);
    let from_yaml = parse_yaml_plan(&yaml).unwrap();
    prop_assert_eq!(&from_yaml, &g, "yaml:\n{}", yaml);
    prop_assert_eq!(json_to_yaml(&from_yaml), yaml);
    Ok(())
}

// Blackboard

pub type Posts = Vec<(Vec<u64>, u8)>;

pub fn posts() -> impl Strategy<Value = Posts> {
    prop::collection::vec((prop::collection::vec(0u64..12, 0..3), 0u8..3), 1..24)
}

pub fn check_append_only(posts: Posts) -> Result<(), TestCaseError> {
    let mut bb = Blackboard::new();
    let mut history: Vec<kgflow::executor::BlackboardMessage> = Vec::new();
    for (i, (parents, tag)) in posts.into_iter().enumerate() {
        let draft = Draft {
            tag: format!("t{tag}"),
            exports: vec![],
            case: Some(i),
            kind: DataKind::FilePath,
            payload: Payload::File(PathBuf::from(format!("f{i}"))),
            producer: SourcePath::root(),
            parents: parents.clone(),
        };
        let next = bb.len() as u64 + 1;
        let valid = parents.iter().all(|p| *p >= 1 && *p < next);
        match bb.post(draft) {
            Ok(id) => {
                prop_assert!(valid);
                prop_assert_eq!(id, next);
                history.push(bb.get(id).unwrap().clone());
            }
            Err(_) => prop_assert!(!valid),
        }
        prop_assert_eq!(bb.messages(), &history[..]);
        for m in bb.messages() {
            for a in bb.ancestors(m.id) {
                prop_assert!(a.id < m.id);
            }
        }
    }
    Ok(())
}

// Verifier soundness against execution

#[derive(Debug, Clone)]
pub enum Tool {
    Resize(u32, u32, i64, bool),
    Expand(i64),
    Clahe(i64, f64),
    Histeq(i64),
    ZScore,
}

impl Tool {
    fn name(&self) -> &'static str {
        match self {
            Tool::Resize(..) => "resize",
            Tool::Expand(_) => "expand_channels",
            Tool::Clahe(..) => "clahe",
            Tool::Histeq(_) => "histeq",
            Tool::ZScore => "z_score",
        }
    }

    fn params(&self) -> Map<String, Value> {
        let mut m = Map::new();
        match self {
            Tool::Resize(h, w, order, keep) => {
                m.insert("target_shape".into(), json!(format!("[{h}, {w}]")));
                m.insert("order".into(), json!(order));
                m.insert("preserve_range".into(), json!(keep));
            }
            Tool::Expand(n) => {
                m.insert("number_of_channels".into(), json!(n));
            }
            Tool::Clahe(nbins, clip) => {
                m.insert("nbins".into(), json!(nbins));
                m.insert("clip_limit".into(), json!(clip));
                m.insert("channel".into(), json!(0));
            }
            Tool::Histeq(nbins) => {
                m.insert("nbins".into(), json!(nbins));
                m.insert("channel".into(), json!(0));
            }
            Tool::ZScore => {}
        }
        m.insert("numpy_only".into(), json!(true));
        m
    }
}

pub fn tool() -> impl Strategy<Value = Tool> {
    prop_oneof![
        (2u32..12, 2u32..12, 0i64..2, any::<bool>()).prop_map(|(h, w, o, k)| Tool::Resize(h, w, o, k)),
        (1i64..4).prop_map(Tool::Expand),
        (2i64..300, 0.001f64..1.0).prop_map(|(n, c)| Tool::Clahe(n, c)),
        (2i64..300).prop_map(Tool::Histeq),
        Just(Tool::ZScore),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Defect {
    UnknownAgent,
    MissingParam,
    ParamFormat,
    UnresolvedInput,
    Cycle,
    ReservedAsAgent,
    MissingOutputFlag,
}

impl Defect {
    fn code(self) -> Code {
        match self {
            Defect::UnknownAgent => Code::UnknownAgent,
            Defect::MissingParam => Code::MissingParam,
            Defect::ParamFormat => Code::ParamFormat,
            Defect::UnresolvedInput => Code::UnresolvedInput,
            Defect::Cycle => Code::Cycle,
            Defect::ReservedAsAgent => Code::ReservedAsAgent,
            Defect::MissingOutputFlag => Code::OutputFlag,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    /// Per supernode: upstream pick and chunks of tools.
    pub supernodes: Vec<(usize, Vec<Vec<Tool>>)>,
    pub defect: Option<Defect>,
}

pub fn pipeline() -> impl Strategy<Value = Pipeline> {
    let defect = prop_oneof![
        7 => Just(None),
        1 => Just(Some(Defect::UnknownAgent)),
        1 => Just(Some(Defect::MissingParam)),
        1 => Just(Some(Defect::ParamFormat)),
        1 => Just(Some(Defect::UnresolvedInput)),
        1 => Just(Some(Defect::Cycle)),
        1 => Just(Some(Defect::ReservedAsAgent)),
        1 => Just(Some(Defect::MissingOutputFlag)),
    ];
    let sn = (
        any::<prop::sample::Index>(),
        prop::collection::vec(prop::collection::vec(tool(), 1..4), 1..4),
    );
    (prop::collection::vec(sn, 1..4), defect).prop_map(|(sns, defect)| Pipeline {
        supernodes: sns
            .into_iter()
            .enumerate()
            .map(|(i, (up, chunks))| {
                // One agent per tool kind within a chunk.
                let chunks = chunks
                    .into_iter()
                    .map(|tools| {
                        let mut seen = Vec::new();
                        tools
                            .into_iter()
                            .filter(|t| {
                                if seen.contains(&t.name()) {
                                    false
                                } else {
                                    seen.push(t.name());
                                    true
                                }
                            })
                            .collect()
                    })
                    .collect();
                (up.index(i + 1), chunks)
            })
            .collect(),
        defect,
    })
}

fn data_csv() -> &'static PathBuf {
    static DATA: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    &DATA
        .get_or_init(|| {
            let dir = tempfile::tempdir().unwrap();
            let ds = crate::common::generate(dir.path(), 2, 0, 0.05, 5);
            let csv = ds.train_csv.clone();
            (dir, csv)
        })
        .1
}

fn pipeline_json(p: &Pipeline) -> String {
    let mut names = vec!["src".to_string()];
    let mut root = Map::new();
    root.insert(
        "src".into(),
        json!({"load": {"agents": {"reader": {"csv_path": data_csv().display().to_string(), "header_params": "image", "supernode_output": true}}}}),
    );
    for (i, (up, chunks)) in p.supernodes.iter().enumerate() {
        let name = format!("sn_{i}");
        let mut chunk_map = Map::new();
        for (j, tools) in chunks.iter().enumerate() {
            let input = if j == 0 { names[*up].clone() } else { format!("from c{}", j - 1) };
            let mut agents = Map::new();
            for (k, t) in tools.iter().enumerate() {
                let mut params = t.params();
                if j == chunks.len() - 1 && k == tools.len() - 1 {
                    params.insert("supernode_output".into(), json!(true));
                }
                agents.insert(t.name().into(), Value::Object(params));
            }
            chunk_map.insert(format!("c{j}"), json!({"input": input, "agents": agents}));
        }
        root.insert(name.clone(), Value::Object(chunk_map));
        names.push(name);
    }

    let first = root.get_mut("sn_0").unwrap().as_object_mut().unwrap();
    match p.defect {
        None => {}
        Some(Defect::UnknownAgent) => {
            first["c0"]["agents"].as_object_mut().unwrap().insert("sharpen".into(), json!({}));
        }
        Some(Defect::MissingParam) => {
            for a in first["c0"]["agents"].as_object_mut().unwrap().values_mut() {
                a.as_object_mut().unwrap().remove("numpy_only");
            }
        }
        Some(Defect::ParamFormat) => {
            let agents = first["c0"]["agents"].as_object_mut().unwrap();
            agents.insert("resize".into(), json!({"target_shape": [8, 8], "numpy_only": true}));
        }
        Some(Defect::UnresolvedInput) => {
            first["c0"]["input"] = json!("nowhere");
        }
        Some(Defect::Cycle) => {
            let n = first.len();
            first.insert(
                "loop".into(),
                json!({"input": format!("from c{}", n - 1), "agents": {"z_score": {"numpy_only": true}}}),
            );
            first["c0"]["input"] = json!("from loop");
        }
        Some(Defect::ReservedAsAgent) => {
            first["c0"]["agents"]
                .as_object_mut()
                .unwrap()
                .insert("supernode_output".into(), json!(true));
        }
        Some(Defect::MissingOutputFlag) => {
            for c in first.values_mut() {
                for a in c["agents"].as_object_mut().unwrap().values_mut() {
                    a.as_object_mut().unwrap().remove("supernode_output");
                }
            }
            // Reference sn_0 from a new consumer so the flag is needed.
            first.insert(
                "c_extra".into(),
                json!({"input": "src", "agents": {"z_score": {"numpy_only": true}}}),
            );
            root.insert(
                "consumer".into(),
                json!({"c": {"input": "sn_0", "agents": {"z_score": {"numpy_only": true, "supernode_output": true}}}}),
            );
        }
    }
    serde_json::to_string_pretty(&json!({ "chunks": root })).unwrap()
}

pub fn check_soundness(p: Pipeline) -> Result<(), TestCaseError> {
    let text = pipeline_json(&p);
    let g = parse_json_plan(&text).unwrap();
    let registry = builtin_registry();
    let report = verify(&g, &registry);
    let out = tempfile::tempdir().unwrap();
    let result = execute(&g, &registry, &RunBindings::new(Mode::Think, out.path()));
    match p.defect {
        None => {
            prop_assert!(report.passed, "{:?}\n{}", report.diagnostics, text);
            let r = result.map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
            let chunks: usize = g.supernodes.values().map(|s| s.chunks.len()).sum();
            prop_assert_eq!(r.fired.len(), chunks);
        }
        Some(d) => {
            prop_assert!(!report.passed);
            prop_assert!(report.has(d.code()), "{:?} missing from {:?}", d.code(), report.diagnostics);
            prop_assert!(matches!(result, Err(ExecError::NotVerified(_))));
        }
    }
    Ok(())
}

// Transfer functions

pub fn plane() -> impl Strategy<Value = Plane> {
    (1usize..24, 1usize..24).prop_flat_map(|(w, h)| {
        (
            Just(w),
            Just(h),
            prop::collection::vec(0u8..=255, w * h).prop_map(|v| v.into_iter().map(f64::from).collect()),
        )
    })
}

pub type Plane = (usize, usize, Vec<f64>);

pub fn check_histeq_order((w, h, px): Plane, nbins: usize) -> Result<(), TestCaseError> {
    let img = ImageBuffer {
        width: w,
        height: h,
        channels: 1,
        samples: px.clone(),
    };
    let out = histeq(&img, nbins, None);
    for i in 0..px.len() {
        for j in 0..px.len() {
            if px[i] < px[j] {
                prop_assert!(out.samples[i] <= out.samples[j]);
            }
        }
    }
    Ok(())
}

pub fn clahe_case() -> impl Strategy<Value = (Plane, usize, f64, usize, usize)> {
    (plane(), 2usize..300, 0.001f64..=1.0, 0usize..24, 0usize..24)
}

pub fn check_clahe_monotone(((w, h, px), nbins, clip, row, col): (Plane, usize, f64, usize, usize)) -> Result<(), TestCaseError> {
    let t = kgflow::tools::transform::ClaheTransfer::build(&px, w, h, nbins, clip, CLAHE_GRID);
    let (row, col) = (row % h, col % w);
    let mut prev = f64::NEG_INFINITY;
    for x in 0..=255 {
        let v = t.value_at(row, col, f64::from(x));
        prop_assert!(v >= prev - 1e-9, "x={} v={} prev={}", x, v, prev);
        prev = v;
    }
    Ok(())
}
