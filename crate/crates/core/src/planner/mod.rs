//! Turning a request into a verified plan.
//!
//! A [`GeneratorBackend`] proposes JSON plans; [`refine_loop`] extracts,
//! parses, converts and verifies each one and feeds the failure back until
//! a plan passes or the retry budget is spent.

pub mod backend;
pub mod extract;
pub mod prompt;
pub mod session;

pub use backend::{BackendError, GeneratorBackend, Message, RemoteBackend, RemoteConfig, Role, ScriptedBackend};
pub use extract::{extract_json, ExtractionFailed};
pub use prompt::{build_prompt, PromptBundle, PromptError, PromptSections};
pub use session::{
    feedback_text, refine_loop, session_json, session_trace, write_trace_files, AttemptRecord, FailureCategory, PlanError, PlanSession,
    SessionStatus, DEFAULT_MAX_RETRIES,
};
