//! Command-line entry point.
//!
//! Exit status: 0 success, 1 verification failure, 2 execution or session
//! failure, 3 transport, configuration or usage failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::executor::{self, load_bindings, ExecError, ExecutionResult, Mode, RunBindings};
use crate::kg::{json_to_yaml, parse_json_plan, parse_yaml_plan, KnowledgeGraph, ParseError};
use crate::planner::{
    build_prompt, refine_loop, session_trace, write_trace_files, GeneratorBackend, PlanError, PlanSession, PromptSections, RemoteBackend,
    RemoteConfig, ScriptedBackend, DEFAULT_MAX_RETRIES,
};
use crate::registry::{builtin_registry, load_registry, ToolRegistry};
use crate::verifier::{render_report, report_to_json, verify};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_EXEC: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

/// File name of the plan written by `plan` and `run`.
pub const PLAN_FILE: &str = "example.yaml";
pub const LEARN_LOG: &str = "learn_output.txt";
pub const THINK_LOG: &str = "think_output.txt";

#[derive(Debug, Parser)]
#[command(
    name = "kgflow",
    version,
    about = "Plan, verify, learn and think with knowledge-graph vision workflows"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Remote backend configuration (JSON: base_url, model, api_key_env_var, temperature, timeout_seconds).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Tool dictionary to use instead of the built-in registry.
    #[arg(long, global = true)]
    pub registry: Option<PathBuf>,
    /// Placeholder bindings (JSON object, optional `learn`/`think` overrides).
    #[arg(long, global = true)]
    pub bindings: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, global = true, default_value_t = DEFAULT_MAX_RETRIES)]
    pub max_retries: usize,
    /// `remote` or `scripted:<path to JSON array of completions>`.
    #[arg(long, global = true, default_value = "remote")]
    pub backend: String,
    /// Omit elapsed-time prefixes from log lines.
    #[arg(long, global = true)]
    pub no_timestamps: bool,
    /// Print the equivalent shell commands instead of running.
    #[arg(long, global = true)]
    pub emit_shell: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a verified plan from a request.
    Plan { request: String },
    /// Check a YAML or JSON plan.
    Verify {
        plan: PathBuf,
        /// Print the diagnostics as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Convert a JSON plan to YAML.
    Convert {
        plan: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Fit trainable agents.
    Learn { plan: PathBuf },
    /// Run inference with learned weights.
    Think { plan: PathBuf },
    /// Plan (or load a plan), learn, then think.
    Run { request_or_plan: String },
    /// Print a session trace from its JSON sidecar.
    Trace { trace_json: PathBuf },
}

/// Log lines mirrored to a file, prefixed with elapsed seconds unless
/// timestamps are off.
struct Log {
    start: Instant,
    timestamps: bool,
    lines: Vec<String>,
}

impl Log {
    fn new(timestamps: bool) -> Self {
        Self {
            start: Instant::now(),
            timestamps,
            lines: Vec::new(),
        }
    }

    fn info(&mut self, msg: impl AsRef<str>) {
        let line = if self.timestamps {
            format!("INFO[{:04}] {}", self.start.elapsed().as_secs(), msg.as_ref())
        } else {
            format!("INFO {}", msg.as_ref())
        };
        self.lines.push(line);
    }

    fn write(&self, path: &Path) -> std::io::Result<()> {
        if let Some(d) = path.parent() {
            std::fs::create_dir_all(d)?;
        }
        let mut text = self.lines.join("\n");
        text.push('\n');
        std::fs::write(path, text)
    }
}

struct Ctx<'a> {
    g: &'a GlobalOpts,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

/// Failure carrying its exit status.
struct Fail(i32, String);

type CmdResult = Result<i32, Fail>;

fn config_fail(msg: impl ToString) -> Fail {
    Fail(EXIT_CONFIG, msg.to_string())
}

/// Parses `args` (program name first) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    let mut ctx = Ctx { g: &cli.global, out, err };
    let result = match &cli.command {
        Command::Plan { request } => cmd_plan(&mut ctx, request),
        Command::Verify { plan, json } => cmd_verify(&mut ctx, plan, *json),
        Command::Convert { plan, output } => cmd_convert(&mut ctx, plan, output.as_deref()),
        Command::Learn { plan } => cmd_exec(&mut ctx, plan, Mode::Learn),
        Command::Think { plan } => cmd_exec(&mut ctx, plan, Mode::Think),
        Command::Run { request_or_plan } => cmd_run(&mut ctx, request_or_plan),
        Command::Trace { trace_json } => cmd_trace(&mut ctx, trace_json),
    };
    match result {
        Ok(code) => code,
        Err(Fail(code, msg)) => {
            let _ = writeln!(ctx.err, "error: {msg}");
            code
        }
    }
}

fn registry(g: &GlobalOpts) -> Result<ToolRegistry, Fail> {
    match &g.registry {
        None => Ok(builtin_registry()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| config_fail(format!("{}: {e}", p.display())))?;
            load_registry(&text).map_err(|e| config_fail(format!("{}: {e}", p.display())))
        }
    }
}

fn backend(g: &GlobalOpts) -> Result<Box<dyn GeneratorBackend>, Fail> {
    if let Some(path) = g.backend.strip_prefix("scripted:") {
        return Ok(Box::new(ScriptedBackend::from_file(Path::new(path)).map_err(config_fail)?));
    }
    if g.backend != "remote" {
        return Err(config_fail(format!(
            "unknown backend `{}`; use `remote` or `scripted:<path>`",
            g.backend
        )));
    }
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| config_fail("the remote backend needs --config <file>"))?;
    Ok(Box::new(RemoteBackend::new(RemoteConfig::load(path).map_err(config_fail)?)))
}

/// Reads a plan by extension: `.json` as JSON, anything else as YAML.
fn load_plan(path: &Path) -> Result<KnowledgeGraph, Fail> {
    let text = std::fs::read_to_string(path).map_err(|e| Fail(EXIT_EXEC, format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        parse_json_plan(&text)
    } else {
        parse_yaml_plan(&text)
    };
    parsed.map_err(|e: ParseError| Fail(EXIT_EXEC, format!("{}: {e}", path.display())))
}

fn emit_shell(ctx: &mut Ctx, lines: &[String]) -> CmdResult {
    for l in lines {
        let _ = writeln!(ctx.out, "{l}");
    }
    Ok(EXIT_OK)
}

fn shell_flags(g: &GlobalOpts) -> String {
    let mut s = format!("--out-dir {}", g.out_dir.display());
    if let Some(b) = &g.bindings {
        s.push_str(&format!(" --bindings {}", b.display()));
    }
    if let Some(r) = &g.registry {
        s.push_str(&format!(" --registry {}", r.display()));
    }
    s
}

fn plan_session(ctx: &mut Ctx, request: &str, registry: &ToolRegistry) -> Result<(PlanSession, PathBuf), Fail> {
    let mut backend = backend(ctx.g)?;
    let bundle = build_prompt(PromptSections::default(), request).map_err(config_fail)?;
    let yaml_path = ctx.g.out_dir.join(PLAN_FILE);
    let session = refine_loop(&bundle, backend.as_mut(), registry, ctx.g.max_retries, Some(&yaml_path)).map_err(|e| match e {
        PlanError::Backend(b) => config_fail(b),
        PlanError::Io { .. } => Fail(EXIT_EXEC, e.to_string()),
    })?;
    write_trace_files(&session, &yaml_path).map_err(|e| Fail(EXIT_EXEC, e.to_string()))?;
    for a in &session.attempts {
        match a.failure {
            Some(c) => {
                let _ = writeln!(ctx.err, "attempt {}: {c} failure", a.index);
            }
            None => {
                let _ = writeln!(ctx.err, "attempt {}: passed", a.index);
            }
        }
    }
    Ok((session, yaml_path))
}

fn cmd_plan(ctx: &mut Ctx, request: &str) -> CmdResult {
    if ctx.g.emit_shell {
        let flags = shell_flags(ctx.g);
        return emit_shell(ctx, &[format!("kgflow plan {request:?} --backend {} {flags}", ctx.g.backend)]);
    }
    let registry = registry(ctx.g)?;
    let (session, yaml_path) = plan_session(ctx, request, &registry)?;
    if let Some(r) = session.final_report() {
        let _ = writeln!(ctx.out, "{}", render_report(r));
    }
    if session.succeeded() {
        let _ = writeln!(ctx.err, "Final YAML was saved to {}", yaml_path.display());
        Ok(EXIT_OK)
    } else {
        Err(Fail(EXIT_EXEC, format!("exhausted after {} attempts", session.attempts.len())))
    }
}

fn cmd_verify(ctx: &mut Ctx, path: &Path, json: bool) -> CmdResult {
    let registry = registry(ctx.g)?;
    let graph = load_plan(path)?;
    let report = verify(&graph, &registry);
    let text = if json { report_to_json(&report) } else { render_report(&report) };
    let _ = writeln!(ctx.out, "{text}");
    Ok(if report.passed { EXIT_OK } else { EXIT_VERIFY })
}

fn cmd_convert(ctx: &mut Ctx, path: &Path, output: Option<&Path>) -> CmdResult {
    let graph = load_plan(path)?;
    let yaml = json_to_yaml(&graph);
    match output {
        Some(o) => std::fs::write(o, &yaml).map_err(|e| Fail(EXIT_EXEC, format!("{}: {e}", o.display())))?,
        None => {
            let _ = write!(ctx.out, "{yaml}");
        }
    }
    Ok(EXIT_OK)
}

fn exec_fail(e: ExecError) -> Fail {
    match e {
        ExecError::NotVerified(report) => Fail(EXIT_VERIFY, format!("plan does not pass verification\n{report}")),
        other => Fail(EXIT_EXEC, other.to_string()),
    }
}

fn bindings(g: &GlobalOpts, mode: Mode) -> Result<RunBindings, Fail> {
    let mut b = match &g.bindings {
        Some(p) => load_bindings(p, mode, &g.out_dir).map_err(config_fail)?,
        None => RunBindings::new(mode, &g.out_dir),
    };
    b.out_dir = g.out_dir.clone();
    b.weights_dir = g.out_dir.join("weights");
    Ok(b)
}

fn execute_mode(
    ctx: &mut Ctx,
    graph: &KnowledgeGraph,
    registry: &ToolRegistry,
    mode: Mode,
    plan_path: &Path,
) -> Result<ExecutionResult, Fail> {
    let mut log = Log::new(!ctx.g.no_timestamps);
    log.info(format!(
        "{} {}",
        if mode == Mode::Learn { "learn" } else { "think" },
        plan_path.display()
    ));
    if let Ok(gpu) = std::env::var("gpu_num") {
        log.info(format!("gpu_num='{gpu}' (accepted, no effect)"));
    }
    let log_path = ctx.g.out_dir.join(if mode == Mode::Learn { LEARN_LOG } else { THINK_LOG });
    let outcome = bindings(ctx.g, mode).and_then(|b| executor::execute(graph, registry, &b).map_err(exec_fail));
    match &outcome {
        Ok(r) => {
            for line in &r.log {
                log.info(line);
            }
            if mode == Mode::Think {
                for (sn, mean) in supernode_means(r) {
                    log.info(format!("mean dice {sn}: {mean:.6}"));
                }
                if let Some(m) = r.mean_dice(None) {
                    log.info(format!("mean dice: {m:.6}"));
                }
            }
            log.info("done");
        }
        Err(Fail(_, msg)) => log.info(format!("failed: {msg}")),
    }
    log.write(&log_path)
        .map_err(|e| Fail(EXIT_EXEC, format!("{}: {e}", log_path.display())))?;
    let r = outcome?;
    match mode {
        Mode::Learn => {
            for w in &r.weights {
                let _ = writeln!(ctx.out, "weights: {}", w.display());
            }
        }
        Mode::Think => {
            let _ = writeln!(ctx.out, "masks: {}", r.masks.len());
            let _ = writeln!(ctx.out, "overlays: {}", r.overlays.len());
            for (sn, mean) in supernode_means(&r) {
                let _ = writeln!(ctx.out, "mean dice {sn}: {mean:.6}");
            }
            if let Some(m) = r.mean_dice(None) {
                let _ = writeln!(ctx.out, "mean dice: {m:.6}");
            }
        }
    }
    let _ = writeln!(ctx.out, "log: {}", log_path.display());
    Ok(r)
}

fn supernode_means(r: &ExecutionResult) -> Vec<(String, f64)> {
    let mut names: Vec<&str> = Vec::new();
    for d in &r.dice {
        if !names.contains(&d.supernode.as_str()) {
            names.push(&d.supernode);
        }
    }
    names
        .into_iter()
        .filter_map(|n| r.mean_dice(Some(n)).map(|m| (n.to_string(), m)))
        .collect()
}

fn cmd_exec(ctx: &mut Ctx, path: &Path, mode: Mode) -> CmdResult {
    if ctx.g.emit_shell {
        let flags = shell_flags(ctx.g);
        let (cmd, log) = if mode == Mode::Learn {
            ("learn", LEARN_LOG)
        } else {
            ("think", THINK_LOG)
        };
        let line = format!("kgflow {cmd} {} {flags} > {}", path.display(), ctx.g.out_dir.join(log).display());
        return emit_shell(ctx, &[line]);
    }
    let registry = registry(ctx.g)?;
    let graph = load_plan(path)?;
    execute_mode(ctx, &graph, &registry, mode, path)?;
    Ok(EXIT_OK)
}

fn cmd_run(ctx: &mut Ctx, arg: &str) -> CmdResult {
    let as_path = Path::new(arg);
    let is_plan = as_path.is_file()
        && as_path
            .extension()
            .is_some_and(|e| ["yaml", "yml", "json"].iter().any(|x| e.eq_ignore_ascii_case(x)));
    if ctx.g.emit_shell {
        let flags = shell_flags(ctx.g);
        let plan = if is_plan {
            as_path.to_path_buf()
        } else {
            ctx.g.out_dir.join(PLAN_FILE)
        };
        let mut lines = Vec::new();
        if !is_plan {
            lines.push(format!("kgflow plan {arg:?} --backend {} {flags}", ctx.g.backend));
        }
        lines.push(format!(
            "kgflow learn {} {flags} > {}",
            plan.display(),
            ctx.g.out_dir.join(LEARN_LOG).display()
        ));
        lines.push(format!(
            "kgflow think {} {flags} > {}",
            plan.display(),
            ctx.g.out_dir.join(THINK_LOG).display()
        ));
        return emit_shell(ctx, &lines);
    }
    let registry = registry(ctx.g)?;
    let (graph, plan_path) = if is_plan {
        let g = load_plan(as_path)?;
        let report = verify(&g, &registry);
        let _ = writeln!(ctx.out, "{}", render_report(&report));
        if !report.passed {
            return Ok(EXIT_VERIFY);
        }
        (g, as_path.to_path_buf())
    } else {
        let (session, yaml_path) = plan_session(ctx, arg, &registry)?;
        if let Some(r) = session.final_report() {
            let _ = writeln!(ctx.out, "{}", render_report(r));
        }
        let Some(yaml) = session.final_yaml() else {
            return Err(Fail(EXIT_EXEC, format!("exhausted after {} attempts", session.attempts.len())));
        };
        let g = parse_yaml_plan(yaml).map_err(|e| Fail(EXIT_EXEC, e.to_string()))?;
        (g, yaml_path)
    };
    execute_mode(ctx, &graph, &registry, Mode::Learn, &plan_path)?;
    execute_mode(ctx, &graph, &registry, Mode::Think, &plan_path)?;
    Ok(EXIT_OK)
}

fn cmd_trace(ctx: &mut Ctx, path: &Path) -> CmdResult {
    let text = std::fs::read_to_string(path).map_err(|e| Fail(EXIT_EXEC, format!("{}: {e}", path.display())))?;
    let session: PlanSession = serde_json::from_str(&text).map_err(|e| Fail(EXIT_EXEC, format!("{}: {e}", path.display())))?;
    let _ = write!(ctx.out, "{}", session_trace(&session));
    Ok(EXIT_OK)
}
