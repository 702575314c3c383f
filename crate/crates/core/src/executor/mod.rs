//! Blackboard execution of verified plans.
//!
//! Chunks fire in a topological order of the dataflow graph. Each chunk runs
//! its agents in authored order for every input case, posting one message per
//! agent and case; a trainable agent sees every case before it fits (learn)
//! or loads its weights (think). Ties between ready chunks follow a
//! [`Schedule`], and `blackboard.json` is written in a canonical order so
//! the dump does not depend on it.

pub mod bindings;
pub mod blackboard;
mod engine;

pub use bindings::{load_bindings, placeholders, substitute, BindingsError, Mode, RunBindings, Schedule};
pub use blackboard::{Blackboard, BlackboardError, BlackboardMessage, Draft, Payload};
pub use engine::{execute, sm_learn, sm_think, DiceRecord, ExecError, ExecutionResult, BLACKBOARD_FILE, MASK_DIR, WEIGHTS_FILE};
