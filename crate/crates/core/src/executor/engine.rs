//! Chunk-by-chunk execution of a verified plan.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::binding::{bind_agent, PortSource};
use crate::kg::{resolve, AgentInstance, ChunkId, Dag, InputRef, KnowledgeGraph, ParamValue, SourcePath};
use crate::registry::{DataKind, ToolRegistry, ToolSpec};
use crate::tools::{self, ImageBuffer, MaskBuffer, ResizeOptions, SegmenterWeights, ToolError};
use crate::verifier::{render_report, verify};

use super::bindings::{substitute, BindingsError, Mode, RunBindings};
use super::blackboard::{Blackboard, BlackboardError, Draft, Payload};

pub const BLACKBOARD_FILE: &str = "blackboard.json";
pub const WEIGHTS_FILE: &str = "weights.txt";
pub const MASK_DIR: &str = "masks";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("plan does not pass verification\n{0}")]
    NotVerified(String),
    #[error(transparent)]
    Bindings(#[from] BindingsError),
    #[error("{path}: no weights at {file}{}", match .url { Some(u) => format!(" (weights_url {u} is not fetched; run learn first)"), None => " (run learn first)".to_string() })]
    MissingWeights {
        path: Box<SourcePath>,
        file: String,
        url: Option<String>,
    },
    #[error("{path}: no training pairs")]
    EmptyTrainingSet { path: Box<SourcePath> },
    #[error("{path}: {cause}")]
    ToolRuntime { path: Box<SourcePath>, cause: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl From<BlackboardError> for ExecError {
    fn from(e: BlackboardError) -> Self {
        ExecError::ToolRuntime {
            path: Box::new(SourcePath::root()),
            cause: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiceRecord {
    pub supernode: String,
    pub case: usize,
    pub dice: f64,
}

#[derive(Debug, Clone)]
pub struct ExecutionResult {
    pub mode: Mode,
    pub blackboard: Blackboard,
    /// Message ids in canonical (schedule-independent) order.
    pub canonical_order: Vec<u64>,
    /// Chunks in firing order.
    pub fired: Vec<ChunkId>,
    pub cases: usize,
    pub weights: Vec<PathBuf>,
    pub masks: Vec<PathBuf>,
    pub overlays: Vec<PathBuf>,
    pub blackboard_file: PathBuf,
    pub dice: Vec<DiceRecord>,
    pub log: Vec<String>,
}

impl ExecutionResult {
    /// Every file written by the run.
    pub fn artifacts(&self) -> Vec<PathBuf> {
        let mut out: Vec<PathBuf> = self.weights.iter().chain(&self.masks).chain(&self.overlays).cloned().collect();
        out.push(self.blackboard_file.clone());
        out
    }

    /// Mean Dice over all records, or over one supernode's.
    pub fn mean_dice(&self, supernode: Option<&str>) -> Option<f64> {
        let v: Vec<f64> = self
            .dice
            .iter()
            .filter(|d| supernode.is_none_or(|s| d.supernode == s))
            .map(|d| d.dice)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// `blackboard.json` content.
    pub fn dump(&self, root: &Path) -> String {
        self.blackboard.dump(&self.canonical_order, root)
    }
}

/// Runs a plan in the mode given by `bindings`.
pub fn execute(graph: &KnowledgeGraph, registry: &ToolRegistry, bindings: &RunBindings) -> Result<ExecutionResult, ExecError> {
    let report = verify(graph, registry);
    if !report.passed {
        return Err(ExecError::NotVerified(render_report(&report)));
    }
    let graph = substitute(graph, bindings)?;
    let dag = Dag::build(&graph).map_err(|e| ExecError::ToolRuntime {
        path: Box::new(SourcePath::root()),
        cause: e.to_string(),
    })?;
    let n = dag.nodes.len();
    let order = dag
        .linear_extension(|i| (bindings.schedule.rank(i, n), i))
        .map_err(|e| ExecError::ToolRuntime {
            path: Box::new(SourcePath::root()),
            cause: e.to_string(),
        })?;

    let mut engine = Engine {
        graph: &graph,
        registry,
        bindings,
        dag: &dag,
        board: Blackboard::new(),
        meta: Vec::new(),
        posted: BTreeMap::new(),
        refs: BTreeMap::new(),
        manifests: BTreeMap::new(),
        cases: 0,
        result_weights: Vec::new(),
        overlays: Vec::new(),
        log: Vec::new(),
    };
    let active = engine.active_nodes();
    engine.load_manifests(&active)?;
    engine.log.push(format!(
        "[{}] {} case(s), {} active chunk(s)",
        bindings.mode,
        engine.cases,
        active.iter().filter(|a| **a).count()
    ));

    let mut fired = Vec::new();
    for &node in &order {
        if !active[node] {
            continue;
        }
        fired.push(dag.nodes[node].clone());
        engine.fire(node)?;
    }

    let (masks, dice) = if bindings.mode == Mode::Think {
        engine.write_masks()?
    } else {
        (Vec::new(), Vec::new())
    };

    // Canonical order follows the authoring-tie topological order.
    let mut canon_pos = vec![0usize; n];
    for (i, node) in dag.order.iter().enumerate() {
        canon_pos[*node] = i;
    }
    let mut canonical_order: Vec<u64> = (1..=engine.board.len() as u64).collect();
    canonical_order.sort_by_key(|id| {
        let m = engine.meta[*id as usize - 1];
        (canon_pos[m.node], m.agent, m.case.map_or(0, |c| c + 1), m.side)
    });
    let blackboard_file = bindings.out_dir.join(BLACKBOARD_FILE);
    let dump = engine.board.dump(&canonical_order, &bindings.out_dir);
    write_file(&blackboard_file, dump.as_bytes())?;
    engine.log.push(format!(
        "[{}] saving blackboard to {BLACKBOARD_FILE} ({} messages)",
        bindings.mode,
        engine.board.len()
    ));
    for d in &dice {
        engine
            .log
            .push(format!("[think] dice {} case {}: {:.6}", d.supernode, d.case, d.dice));
    }

    Ok(ExecutionResult {
        mode: bindings.mode,
        blackboard: engine.board,
        canonical_order,
        fired,
        cases: engine.cases,
        weights: engine.result_weights,
        masks,
        overlays: engine.overlays,
        blackboard_file,
        dice,
        log: engine.log,
    })
}

/// Fits every trainable agent.
pub fn sm_learn(graph: &KnowledgeGraph, registry: &ToolRegistry, bindings: &RunBindings) -> Result<ExecutionResult, ExecError> {
    let mut b = bindings.clone();
    b.mode = Mode::Learn;
    execute(graph, registry, &b)
}

/// Runs inference with persisted weights.
pub fn sm_think(graph: &KnowledgeGraph, registry: &ToolRegistry, bindings: &RunBindings) -> Result<ExecutionResult, ExecError> {
    let mut b = bindings.clone();
    b.mode = Mode::Think;
    execute(graph, registry, &b)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExecError> {
    let io = |e: std::io::Error| ExecError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, bytes).map_err(io)
}

/// Where a message sits in the canonical order.
#[derive(Debug, Clone, Copy)]
struct Meta {
    node: usize,
    agent: usize,
    case: Option<usize>,
    side: u8,
}

struct Engine<'a> {
    graph: &'a KnowledgeGraph,
    registry: &'a ToolRegistry,
    bindings: &'a RunBindings,
    dag: &'a Dag,
    board: Blackboard,
    meta: Vec<Meta>,
    /// (node, agent position, case) to the agent's main message.
    posted: BTreeMap<(usize, usize, usize), u64>,
    /// (reader node, case) to the reference mask message.
    refs: BTreeMap<(usize, usize), u64>,
    manifests: BTreeMap<(usize, usize), tools::CsvManifest>,
    cases: usize,
    result_weights: Vec<PathBuf>,
    overlays: Vec<PathBuf>,
    log: Vec<String>,
}

struct AgentCtx<'g> {
    node: usize,
    pos: usize,
    sn: &'g str,
    cn: &'g str,
    name: &'g str,
    inst: &'g AgentInstance,
    spec: &'g ToolSpec,
    path: SourcePath,
    ports: Vec<Option<PortSource>>,
    exports: Vec<String>,
}

impl<'a> Engine<'a> {
    fn chunk_of(&self, node: usize) -> (&'a str, &'a str, &'a crate::kg::Chunk) {
        let id = &self.dag.nodes[node];
        let (sn, s) = self
            .graph
            .supernodes
            .iter()
            .find(|(k, _)| *k == id.supernode)
            .expect("dag node exists");
        let (cn, c) = s.chunks.iter().find(|(k, _)| *k == id.chunk).expect("dag node exists");
        (sn, cn, c)
    }

    fn is_trainable(&self, node: usize) -> bool {
        let (_, _, c) = self.chunk_of(node);
        c.agents.keys().any(|a| self.registry.get(a).is_some_and(|s| s.trainable))
    }

    /// Think runs everything; learn runs trainable chunks and their ancestors.
    fn active_nodes(&self) -> Vec<bool> {
        let n = self.dag.nodes.len();
        if self.bindings.mode == Mode::Think {
            return vec![true; n];
        }
        let mut active = vec![false; n];
        for node in (0..n).filter(|i| self.is_trainable(*i)) {
            active[node] = true;
            for a in self.dag.ancestors(node) {
                active[a] = true;
            }
        }
        active
    }

    fn load_manifests(&mut self, active: &[bool]) -> Result<(), ExecError> {
        let mut cases: Option<usize> = None;
        for node in (0..self.dag.nodes.len()).filter(|i| active[*i]) {
            let (sn, cn, c) = self.chunk_of(node);
            for (pos, (an, inst)) in c.agents.iter().enumerate().filter(|(_, (a, _))| *a == "reader") {
                let path = SourcePath::agent(sn, cn, an);
                let csv = inst
                    .param("csv_path")
                    .and_then(ParamValue::as_str)
                    .ok_or_else(|| runtime(&path, "`csv_path` must be a string"))?;
                let header = inst.param("header_params").and_then(ParamValue::as_str);
                let manifest = tools::load_manifest(&self.bindings.resolve_path(csv), header).map_err(|e| runtime(&path, e))?;
                if self.bindings.mode == Mode::Learn && !manifest.has_masks() {
                    return Err(runtime(
                        &path,
                        format!(
                            "learn mode needs a `{}` value on every manifest row",
                            manifest.mask_column.as_deref().unwrap_or("mask")
                        ),
                    ));
                }
                match cases {
                    Some(k) if k != manifest.rows.len() => {
                        return Err(runtime(
                            &path,
                            format!("manifest has {} rows but another reader has {k}", manifest.rows.len()),
                        ));
                    }
                    _ => cases = Some(manifest.rows.len()),
                }
                self.manifests.insert((node, pos), manifest);
            }
        }
        self.cases = cases.unwrap_or(0);
        Ok(())
    }

    fn post(
        &mut self,
        ctx: &AgentCtx,
        case: Option<usize>,
        side: u8,
        kind: DataKind,
        payload: Payload,
        parents: Vec<u64>,
    ) -> Result<u64, ExecError> {
        let mut parents = parents;
        parents.sort_unstable();
        parents.dedup();
        let main = side == 0 && case.is_some();
        let tag = match side {
            0 => format!("{}/{}/{}", ctx.sn, ctx.cn, ctx.name),
            _ => format!("{}/{}/{}/reference", ctx.sn, ctx.cn, ctx.name),
        };
        let id = self.board.post(Draft {
            tag,
            exports: if main { ctx.exports.clone() } else { Vec::new() },
            case,
            kind,
            payload,
            producer: ctx.path.clone(),
            parents,
        })?;
        self.meta.push(Meta {
            node: ctx.node,
            agent: ctx.pos,
            case,
            side,
        });
        if main {
            self.posted.insert((ctx.node, ctx.pos, case.unwrap()), id);
        }
        Ok(id)
    }

    fn fire(&mut self, node: usize) -> Result<(), ExecError> {
        let (sn, cn, chunk) = self.chunk_of(node);
        let slots = chunk.inputs_in_slot_order();
        let slot_names: Vec<&str> = slots.iter().map(|(s, _)| *s).collect();
        let exported = chunk.exported_agent();
        self.log.push(format!("[{}] fire {sn}/{cn}", self.bindings.mode));
        for (pos, (an, inst)) in chunk.agents.iter().enumerate() {
            let path = SourcePath::agent(sn, cn, an);
            let spec = self.registry.get(an).ok_or_else(|| runtime(&path, "agent is not registered"))?;
            let binding = bind_agent(spec, pos, &slot_names);
            let ports = (0..spec.inputs.len()).map(|i| binding.source_of(i).cloned()).collect();
            let mut exports = Vec::new();
            if exported == Some(an) {
                exports.push(format!("{sn}/{cn}"));
            }
            if inst.supernode_output {
                exports.push(sn.to_string());
            }
            let ctx = AgentCtx {
                node,
                pos,
                sn,
                cn,
                name: an,
                inst,
                spec,
                path,
                ports,
                exports,
            };
            if spec.trainable {
                self.run_trainable(&ctx)?;
            } else {
                for case in 0..self.cases {
                    self.run_agent(&ctx, case)?;
                }
            }
        }
        Ok(())
    }

    /// Message id feeding each port for one case.
    fn inputs(&self, ctx: &AgentCtx, case: usize) -> Result<Vec<Option<u64>>, ExecError> {
        let (_, _, chunk) = self.chunk_of(ctx.node);
        ctx.ports
            .iter()
            .map(|source| {
                let Some(source) = source else { return Ok(None) };
                let key = match source {
                    PortSource::Pipeline => (ctx.node, ctx.pos - 1),
                    PortSource::Slot(slot) => {
                        let input = chunk.inputs.get(slot).expect("bound slot exists");
                        self.producer_of(ctx.sn, input)
                            .ok_or_else(|| runtime(&ctx.path, format!("input `{slot}: {input}` does not resolve")))?
                    }
                };
                self.posted
                    .get(&(key.0, key.1, case))
                    .copied()
                    .map(Some)
                    .ok_or_else(|| runtime(&ctx.path, format!("input from {} was never posted", self.dag.nodes[key.0])))
            })
            .collect()
    }

    /// (node, agent position) whose message an input link delivers.
    fn producer_of(&self, from_sn: &str, input: &InputRef) -> Option<(usize, usize)> {
        let target = resolve(self.graph, from_sn, input)?;
        let node = self.dag.index_of(&target)?;
        let chunk = self.graph.chunk(&target)?;
        let pos = match input {
            InputRef::Supernode(_) => chunk.agents.iter().position(|(_, a)| a.supernode_output)?,
            InputRef::Chunk(_) => chunk.agents.position(chunk.exported_agent()?)?,
        };
        Some((node, pos))
    }

    fn image(&self, ctx: &AgentCtx, id: Option<u64>, port: usize) -> Result<Option<&ImageBuffer>, ExecError> {
        let Some(id) = id else { return Ok(None) };
        match self.board.get(id).map(|m| m.payload.as_ref()) {
            Some(Payload::Image(i)) => Ok(Some(i)),
            _ => Err(runtime(
                &ctx.path,
                format!("input `{}` expected an image", ctx.spec.inputs[port].name),
            )),
        }
    }

    fn mask(&self, ctx: &AgentCtx, id: Option<u64>, port: usize) -> Result<Option<&MaskBuffer>, ExecError> {
        let Some(id) = id else { return Ok(None) };
        match self.board.get(id).map(|m| m.payload.as_ref()) {
            Some(Payload::Mask(m)) => Ok(Some(m)),
            _ => Err(runtime(
                &ctx.path,
                format!("input `{}` expected a mask", ctx.spec.inputs[port].name),
            )),
        }
    }

    fn run_agent(&mut self, ctx: &AgentCtx, case: usize) -> Result<(), ExecError> {
        let ids = self.inputs(ctx, case)?;
        let parents: Vec<u64> = ids.iter().flatten().copied().collect();
        let p = Params {
            inst: ctx.inst,
            path: &ctx.path,
        };
        let need_image = |e: &Self| -> Result<ImageBuffer, ExecError> {
            e.image(ctx, ids.first().copied().flatten(), 0)?
                .cloned()
                .ok_or_else(|| runtime(&ctx.path, "no image input"))
        };
        let (kind, payload) = match ctx.name {
            "reader" => {
                let manifest = &self.manifests[&(ctx.node, ctx.pos)];
                let row = manifest.rows[case].clone();
                let image = tools::image::load_gray(&row.image).map_err(|e| runtime(&ctx.path, e))?;
                let id = self.post(ctx, Some(case), 0, DataKind::ImageCompressedNumpy, Payload::Image(image), parents)?;
                if let Some(mask_path) = row.mask {
                    let mask = tools::image::load_mask(&mask_path).map_err(|e| runtime(&ctx.path, e))?;
                    let ref_id = self.post(ctx, Some(case), 1, DataKind::MaskCompressedNumpy, Payload::Mask(mask), vec![id])?;
                    self.refs.insert((ctx.node, case), ref_id);
                }
                return Ok(());
            }
            "resize" => {
                let img = need_image(self)?;
                let shape = p.shape("target_shape")?;
                let opts = ResizeOptions {
                    order: p.int("order")?.unwrap_or(1).max(0) as u32,
                    preserve_range: p.boolean("preserve_range")?.unwrap_or(false),
                };
                (
                    DataKind::ImageCompressedNumpy,
                    Payload::Image(tools::resize(&img, shape.0, shape.1, opts)),
                )
            }
            "expand_channels" => {
                let img = need_image(self)?;
                let n = p.int("number_of_channels")?.unwrap_or(1);
                if n < 1 {
                    return Err(runtime(&ctx.path, "`number_of_channels` must be at least 1"));
                }
                (
                    DataKind::ImageCompressedNumpy,
                    Payload::Image(tools::expand_channels(&img, n as usize)),
                )
            }
            "clahe" | "histeq" => {
                let img = need_image(self)?;
                let nbins = p.int("nbins")?.unwrap_or(256);
                if nbins < 2 {
                    return Err(runtime(&ctx.path, "`nbins` must be at least 2"));
                }
                let channel = p.channel("channel", &img)?;
                let out = if ctx.name == "clahe" {
                    let clip = p.float("clip_limit")?.unwrap_or(0.01);
                    if !(clip > 0.0 && clip <= 1.0) {
                        return Err(runtime(&ctx.path, "`clip_limit` must lie in (0, 1]"));
                    }
                    tools::clahe(&img, nbins as usize, clip, channel)
                } else {
                    tools::histeq(&img, nbins as usize, channel)
                };
                (DataKind::ImageCompressedNumpy, Payload::Image(out))
            }
            "z_score" => {
                let img = need_image(self)?;
                let channel = p.channel("channel", &img)?;
                (DataKind::ImageCompressedNumpy, Payload::Image(tools::z_score(&img, channel)))
            }
            // Mask refinement stand-ins pass their input through.
            "decision_tree" | "candidate_selector" => {
                let m = self
                    .mask(ctx, ids.first().copied().flatten(), 0)?
                    .cloned()
                    .ok_or_else(|| runtime(&ctx.path, "no mask input"))?;
                (DataKind::MaskCompressedNumpy, Payload::Mask(m))
            }
            "save_image" => {
                let img = need_image(self)?;
                let mask = self.mask(ctx, ids.get(1).copied().flatten(), 1)?;
                let alpha = p.float("mask_alpha")?.unwrap_or(0.5);
                let name = p
                    .string("output_filename")?
                    .ok_or_else(|| runtime(&ctx.path, "`output_filename` is required"))?;
                let file = self.bindings.out_dir.join(format!("{name}_{case}.png"));
                let blended = tools::overlay(&img, mask, alpha).map_err(|e| runtime(&ctx.path, e))?;
                tools::image::save_rgb_png(&blended, &file).map_err(|e| runtime(&ctx.path, e))?;
                self.overlays.push(file.clone());
                (DataKind::FilePath, Payload::File(file))
            }
            other => return Err(runtime(&ctx.path, format!("no implementation for agent `{other}`"))),
        };
        self.post(ctx, Some(case), 0, kind, payload, parents)?;
        Ok(())
    }

    fn weights_file(&self, ctx: &AgentCtx) -> PathBuf {
        let dir = match ctx.inst.param("weights_path").and_then(ParamValue::as_str) {
            Some(p) => self.bindings.weights_dir.join(p),
            None => self.bindings.weights_dir.join(ctx.sn).join(ctx.cn).join(ctx.name),
        };
        dir.join(WEIGHTS_FILE)
    }

    /// Reference mask for a case from the nearest-authored upstream reader.
    fn reference_for(&self, node: usize, case: usize) -> Option<u64> {
        let mut up = self.dag.ancestors(node);
        up.sort_unstable();
        up.into_iter().find_map(|a| self.refs.get(&(a, case)).copied())
    }

    fn run_trainable(&mut self, ctx: &AgentCtx) -> Result<(), ExecError> {
        if ctx.name != "tf2_segmentation" {
            return Err(runtime(&ctx.path, format!("no implementation for agent `{}`", ctx.name)));
        }
        let p = Params {
            inst: ctx.inst,
            path: &ctx.path,
        };
        let pt = p
            .float("prediction_threshold")?
            .ok_or_else(|| runtime(&ctx.path, "`prediction_threshold` is required"))?;
        let file = self.weights_file(ctx);
        let per_case: Vec<Vec<Option<u64>>> = (0..self.cases).map(|c| self.inputs(ctx, c)).collect::<Result<_, _>>()?;
        let mut weight_parents: Vec<u64> = per_case.iter().flatten().flatten().copied().collect();

        let weights = match self.bindings.mode {
            Mode::Learn => {
                let mut pairs = Vec::with_capacity(self.cases);
                for (case, ids) in per_case.iter().enumerate() {
                    let img = self
                        .image(ctx, ids[0], 0)?
                        .ok_or_else(|| runtime(&ctx.path, "no image input"))?
                        .clone();
                    let ref_id = self
                        .reference_for(ctx.node, case)
                        .ok_or_else(|| runtime(&ctx.path, "no reference masks reach this agent"))?;
                    let reference = self.mask(ctx, Some(ref_id), 0)?.expect("reference id present").clone();
                    weight_parents.push(ref_id);
                    pairs.push((img, reference));
                }
                let w = tools::learn_threshold(&pairs, pt).map_err(|e| match e {
                    ToolError::EmptyTrainingSet => ExecError::EmptyTrainingSet {
                        path: Box::new(ctx.path.clone()),
                    },
                    other => runtime(&ctx.path, other),
                })?;
                write_file(&file, w.to_string().as_bytes())?;
                self.log.push(format!(
                    "[learn] {}: threshold {} from {} case(s), training dice {:.6}",
                    ctx.path, w.threshold, w.training_cases, w.mean_dice
                ));
                self.result_weights.push(file.clone());
                w
            }
            Mode::Think => {
                let text = std::fs::read_to_string(&file).map_err(|_| ExecError::MissingWeights {
                    path: Box::new(ctx.path.clone()),
                    file: file.display().to_string(),
                    url: p.string("weights_url").ok().flatten(),
                })?;
                SegmenterWeights::parse(&text).map_err(|e| runtime(&ctx.path, format!("{}: {e}", file.display())))?
            }
        };
        let weights_id = self.post(ctx, None, 0, DataKind::WeightsFile, Payload::File(file), weight_parents)?;

        for (case, ids) in per_case.iter().enumerate() {
            let img = self.image(ctx, ids[0], 0)?.ok_or_else(|| runtime(&ctx.path, "no image input"))?;
            let geometry = self.image(ctx, ids.get(1).copied().flatten(), 1)?.map(|r| (r.width, r.height));
            let mask = tools::infer_mask(img, &weights, pt, geometry);
            let mut parents = vec![weights_id];
            parents.extend(ids.iter().flatten());
            self.post(ctx, Some(case), 0, DataKind::MaskCompressedNumpy, Payload::Mask(mask), parents)?;
        }
        Ok(())
    }

    /// Writes one mask per case for every supernode exporting a mask, with
    /// Dice against upstream references when present.
    fn write_masks(&self) -> Result<(Vec<PathBuf>, Vec<DiceRecord>), ExecError> {
        let mut files = Vec::new();
        let mut dice = Vec::new();
        for (sn, _) in self.graph.supernodes.iter() {
            let Some((node, pos)) = self.producer_of(sn, &InputRef::Supernode(sn.to_string())) else {
                continue;
            };
            for case in 0..self.cases {
                let Some(id) = self.posted.get(&(node, pos, case)) else { break };
                let Some(Payload::Mask(mask)) = self.board.get(*id).map(|m| m.payload.as_ref()) else {
                    break;
                };
                let file = self.bindings.out_dir.join(MASK_DIR).join(format!("{sn}_{case}.png"));
                tools::image::save_mask_png(mask, &file).map_err(|e| ExecError::Io {
                    path: file.display().to_string(),
                    message: e.to_string(),
                })?;
                files.push(file);
                if let Some(Payload::Mask(reference)) = self
                    .reference_for(node, case)
                    .and_then(|r| self.board.get(r))
                    .map(|m| m.payload.as_ref())
                {
                    let predicted = mask.resized(reference.width, reference.height);
                    let d = tools::dice(&predicted, reference).expect("same geometry");
                    dice.push(DiceRecord {
                        supernode: sn.to_string(),
                        case,
                        dice: d,
                    });
                }
            }
        }
        Ok((files, dice))
    }
}

fn runtime(path: &SourcePath, cause: impl ToString) -> ExecError {
    ExecError::ToolRuntime {
        path: Box::new(path.clone()),
        cause: cause.to_string(),
    }
}

/// Typed access to an agent's parameters.
struct Params<'p> {
    inst: &'p AgentInstance,
    path: &'p SourcePath,
}

impl Params<'_> {
    fn bad(&self, name: &str, want: &str, v: &ParamValue) -> ExecError {
        runtime(
            &self.path.clone().with_param(name),
            format!("expected {want}, found {}", v.type_name()),
        )
    }

    fn get(&self, name: &str) -> Option<&ParamValue> {
        self.inst.param(name).filter(|v| **v != ParamValue::Null)
    }

    fn float(&self, name: &str) -> Result<Option<f64>, ExecError> {
        self.get(name)
            .map(|v| v.as_f64().ok_or_else(|| self.bad(name, "a number", v)))
            .transpose()
    }

    fn int(&self, name: &str) -> Result<Option<i64>, ExecError> {
        self.get(name)
            .map(|v| v.as_i64().ok_or_else(|| self.bad(name, "an integer", v)))
            .transpose()
    }

    fn boolean(&self, name: &str) -> Result<Option<bool>, ExecError> {
        self.get(name)
            .map(|v| v.as_bool().ok_or_else(|| self.bad(name, "a boolean", v)))
            .transpose()
    }

    fn string(&self, name: &str) -> Result<Option<String>, ExecError> {
        self.get(name)
            .map(|v| match v {
                ParamValue::Integer(i) => Ok(i.to_string()),
                other => other.as_str().map(str::to_string).ok_or_else(|| self.bad(name, "a string", v)),
            })
            .transpose()
    }

    /// `'[rows, cols]'` as two positive integers.
    fn shape(&self, name: &str) -> Result<(usize, usize), ExecError> {
        let v = self.get(name).ok_or_else(|| runtime(self.path, format!("`{name}` is required")))?;
        match v.interpret_list().as_deref() {
            Some([r, c]) if *r >= 1.0 && *c >= 1.0 && r.fract() == 0.0 && c.fract() == 0.0 => Ok((*r as usize, *c as usize)),
            _ => Err(self.bad(name, "a stringified list of two positive integers like '[512, 512]'", v)),
        }
    }

    fn channel(&self, name: &str, img: &ImageBuffer) -> Result<Option<usize>, ExecError> {
        match self.int(name)? {
            None => Ok(None),
            Some(c) if c >= 0 && (c as usize) < img.channels => Ok(Some(c as usize)),
            Some(c) => Err(runtime(
                &self.path.clone().with_param(name),
                format!("channel {c} out of range for {} channel(s)", img.channels),
            )),
        }
    }
}
