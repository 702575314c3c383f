//! The generate, extract, parse, convert, verify and feedback loop.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::kg::{json_to_yaml, parse_json_plan, ParseError};
use crate::registry::ToolRegistry;
use crate::verifier::{render_report, verify, VerificationReport};

use super::backend::{BackendError, GeneratorBackend, Message, Role};
use super::extract::extract_json;
use super::prompt::PromptBundle;

pub const DEFAULT_MAX_RETRIES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureCategory {
    #[serde(rename = "EXTRACTION")]
    Extraction,
    #[serde(rename = "JSON-SYNTAX")]
    JsonSyntax,
    #[serde(rename = "STRUCTURE")]
    Structure,
    #[serde(rename = "VERIFIER")]
    Verifier,
}

impl FailureCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureCategory::Extraction => "EXTRACTION",
            FailureCategory::JsonSyntax => "JSON-SYNTAX",
            FailureCategory::Structure => "STRUCTURE",
            FailureCategory::Verifier => "VERIFIER",
        }
    }

    pub fn hint(self) -> &'static str {
        match self {
            FailureCategory::Extraction => "reply with exactly one JSON object inside a ```json fenced block",
            FailureCategory::JsonSyntax => {
                "fix the JSON syntax at the reported line and column (double quotes, no trailing commas, no comments)"
            }
            FailureCategory::Structure => "keep the nesting chunks -> supernode -> chunk -> agents -> agent -> parameters",
            FailureCategory::Verifier => "fix every ERROR line below and keep the rest of the plan unchanged; WARNING lines are advisory",
        }
    }
}

impl fmt::Display for FailureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    /// 1-based.
    pub index: usize,
    pub completion: String,
    /// The extracted JSON text, or the extraction error.
    pub extraction: Result<String, String>,
    /// Set once extraction succeeded.
    pub parse: Option<Result<(), String>>,
    /// The converted plan, once parsing succeeded.
    pub yaml: Option<String>,
    pub report: Option<VerificationReport>,
    pub failure: Option<FailureCategory>,
    /// Feedback appended to the conversation after this attempt.
    pub feedback: Option<String>,
}

impl AttemptRecord {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SessionStatus {
    Success { yaml_path: Option<PathBuf> },
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSession {
    pub bundle: PromptBundle,
    pub max_retries: usize,
    pub attempts: Vec<AttemptRecord>,
    pub status: SessionStatus,
}

impl PlanSession {
    pub fn succeeded(&self) -> bool {
        matches!(self.status, SessionStatus::Success { .. })
    }

    /// YAML of the passing attempt.
    pub fn final_yaml(&self) -> Option<&str> {
        self.attempts.last().filter(|a| a.passed()).and_then(|a| a.yaml.as_deref())
    }

    pub fn final_report(&self) -> Option<&VerificationReport> {
        self.attempts.last().and_then(|a| a.report.as_ref())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Feedback text for a failed attempt.
pub fn feedback_text(index: usize, category: FailureCategory, details: &str) -> String {
    format!("Attempt {index} failed: {category}\nHint: {}\n{details}", category.hint())
}

/// Runs up to `max_retries` attempts. On the first passing plan the YAML is
/// written to `yaml_path` when given.
pub fn refine_loop(
    bundle: &PromptBundle,
    backend: &mut dyn GeneratorBackend,
    registry: &ToolRegistry,
    max_retries: usize,
    yaml_path: Option<&Path>,
) -> Result<PlanSession, PlanError> {
    let mut conversation = vec![
        Message::new(Role::System, bundle.system_text()),
        Message::new(Role::User, bundle.user_text()),
    ];
    let mut attempts = Vec::new();

    for index in 1..=max_retries {
        let completion = backend.generate(&conversation)?;
        let mut record = AttemptRecord {
            index,
            completion: completion.clone(),
            extraction: Err(String::new()),
            parse: None,
            yaml: None,
            report: None,
            failure: None,
            feedback: None,
        };
        let failure = attempt(&completion, registry, &mut record);
        match failure {
            None => {
                let yaml = record.yaml.clone().expect("passing attempt has YAML");
                if let Some(p) = yaml_path {
                    write(p, &yaml)?;
                }
                attempts.push(record);
                return Ok(PlanSession {
                    bundle: bundle.clone(),
                    max_retries,
                    attempts,
                    status: SessionStatus::Success {
                        yaml_path: yaml_path.map(Path::to_path_buf),
                    },
                });
            }
            Some((category, details)) => {
                let feedback = feedback_text(index, category, &details);
                record.failure = Some(category);
                record.feedback = Some(feedback.clone());
                conversation.push(Message::new(Role::Assistant, completion));
                conversation.push(Message::new(Role::User, feedback));
                attempts.push(record);
            }
        }
    }
    Ok(PlanSession {
        bundle: bundle.clone(),
        max_retries,
        attempts,
        status: SessionStatus::Exhausted,
    })
}

/// One attempt past generation; returns the failure and its details.
fn attempt(completion: &str, registry: &ToolRegistry, record: &mut AttemptRecord) -> Option<(FailureCategory, String)> {
    let json = match extract_json(completion) {
        Ok(j) => j,
        Err(e) => {
            record.extraction = Err(e.to_string());
            return Some((FailureCategory::Extraction, e.to_string()));
        }
    };
    record.extraction = Ok(json.clone());
    let graph = match parse_json_plan(&json) {
        Ok(g) => g,
        Err(e) => {
            record.parse = Some(Err(e.to_string()));
            let category = match e {
                ParseError::Syntax { .. } => FailureCategory::JsonSyntax,
                ParseError::Structure { .. } => FailureCategory::Structure,
            };
            return Some((category, e.to_string()));
        }
    };
    record.parse = Some(Ok(()));
    record.yaml = Some(json_to_yaml(&graph));
    let report = verify(&graph, registry);
    let rendered = render_report(&report);
    let passed = report.passed;
    record.report = Some(report);
    (!passed).then_some((FailureCategory::Verifier, rendered))
}

fn write(path: &Path, text: &str) -> Result<(), PlanError> {
    let io = |e: std::io::Error| PlanError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, text).map_err(io)
}

fn indent(text: &str) -> String {
    text.lines().map(|l| format!("    | {l}\n")).collect()
}

/// Chronological plain-text account of a session.
pub fn session_trace(session: &PlanSession) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "Plan session\nrequest: {}\nmax_retries: {}\n",
        session.bundle.request, session.max_retries
    ));
    for a in &session.attempts {
        out.push('\n');
        match a.failure {
            Some(category) => out.push_str(&format!("Attempt {}: {category} failure\n", a.index)),
            None => out.push_str(&format!("Attempt {}: passed\n", a.index)),
        }
        match &a.extraction {
            Ok(_) => out.push_str("  extraction: ok\n"),
            Err(e) => out.push_str(&format!("  extraction: failed: {e}\n")),
        }
        match &a.parse {
            Some(Ok(())) => out.push_str("  parse: ok\n"),
            Some(Err(e)) => out.push_str(&format!("  parse: failed: {e}\n")),
            None => {}
        }
        if let Some(r) = &a.report {
            out.push_str("  verifier report:\n");
            out.push_str(&indent(&render_report(r)));
        }
        if let Some(f) = &a.feedback {
            out.push_str("  feedback sent:\n");
            out.push_str(&indent(f));
        }
    }
    out.push('\n');
    match &session.status {
        SessionStatus::Success { yaml_path } => {
            let n = session.attempts.len();
            match yaml_path {
                Some(p) => out.push_str(&format!("success after {n} attempt(s); YAML saved to {}\n", p.display())),
                None => out.push_str(&format!("success after {n} attempt(s)\n")),
            }
        }
        SessionStatus::Exhausted => out.push_str(&format!("exhausted after {} attempts\n", session.attempts.len())),
    }
    out
}

pub fn session_json(session: &PlanSession) -> String {
    serde_json::to_string_pretty(session).expect("session serializes") + "\n"
}

/// Writes `<stem>.trace.txt` and `<stem>.trace.json` beside `yaml_path`.
pub fn write_trace_files(session: &PlanSession, yaml_path: &Path) -> Result<(PathBuf, PathBuf), PlanError> {
    let stem = yaml_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "plan".into());
    let dir = yaml_path.parent().unwrap_or(Path::new(""));
    let txt = dir.join(format!("{stem}.trace.txt"));
    let json = dir.join(format!("{stem}.trace.json"));
    write(&txt, &session_trace(session))?;
    write(&json, &session_json(session))?;
    Ok((txt, json))
}
