//! Plan, verify and execute knowledge-graph computer-vision workflows.
//!
//! The pipeline has three stages:
//!
//! 1. [`planner`] drives a text generator to emit a JSON plan, extracts and
//!    parses it, converts it to YAML and feeds verifier findings back until
//!    the plan passes or the retry budget runs out.
//! 2. [`verifier`] statically checks a [`kg::KnowledgeGraph`] against a
//!    [`registry::ToolRegistry`].
//! 3. [`executor`] runs a verified plan over an append-only blackboard in
//!    learn mode (fit trainable agents) or think mode (inference), using the
//!    image tools in [`tools`].

pub mod binding;
pub mod cli;
pub mod executor;
pub mod kg;
pub mod planner;
pub mod registry;
pub mod tools;
pub mod verifier;
