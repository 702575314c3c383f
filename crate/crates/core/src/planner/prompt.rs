//! Prompt sections and their rendering.

use serde::{Deserialize, Serialize};

use crate::registry::builtin_registry;

pub const INTRODUCTION_HEADER: &str = "[Prompt Introduction]";
pub const GUIDELINES_HEADER: &str = "[JSON Structure Guidelines for Pipeline Configuration]";
pub const EXAMPLE_HEADER: &str = "[json example]";
pub const DICTIONARY_HEADER: &str = "[json dictionary]";

pub const DEFAULT_INTRODUCTION: &str = include_str!("../../prompts/introduction.txt");
pub const DEFAULT_GUIDELINES: &str = include_str!("../../prompts/guidelines.txt");
pub const DEFAULT_EXAMPLE: &str = include_str!("../../fixtures/plans/trachea_chest_xr.json");
pub const DEFAULT_PREFACE: &str = include_str!("../../prompts/preface.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub introduction: String,
    pub guidelines: String,
    pub example: String,
    pub dictionary: String,
    pub preface: String,
    pub request: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("prompt section `{0}` is empty")]
    MissingSection(&'static str),
    #[error("the user request is empty")]
    EmptyRequest,
}

/// Section texts; `None` falls back to the shipped default. The default
/// dictionary is the built-in registry's.
#[derive(Debug, Clone, Default)]
pub struct PromptSections {
    pub introduction: Option<String>,
    pub guidelines: Option<String>,
    pub example: Option<String>,
    pub dictionary: Option<String>,
    pub preface: Option<String>,
}

pub fn build_prompt(sections: PromptSections, request: &str) -> Result<PromptBundle, PromptError> {
    if request.trim().is_empty() {
        return Err(PromptError::EmptyRequest);
    }
    let pick = |name: &'static str, v: Option<String>, default: &str| -> Result<String, PromptError> {
        let text = v.unwrap_or_else(|| default.to_string());
        if text.trim().is_empty() {
            return Err(PromptError::MissingSection(name));
        }
        Ok(text.trim_end().to_string())
    };
    Ok(PromptBundle {
        introduction: pick("introduction", sections.introduction, DEFAULT_INTRODUCTION)?,
        guidelines: pick("guidelines", sections.guidelines, DEFAULT_GUIDELINES)?,
        example: pick("example", sections.example, DEFAULT_EXAMPLE)?,
        dictionary: match sections.dictionary {
            Some(d) => pick("dictionary", Some(d), "")?,
            None => builtin_registry().to_dictionary(),
        },
        preface: pick("preface", sections.preface, DEFAULT_PREFACE)?,
        request: request.trim().to_string(),
    })
}

impl PromptBundle {
    /// The four reference sections under their bracketed headers.
    pub fn system_text(&self) -> String {
        [
            (INTRODUCTION_HEADER, &self.introduction),
            (GUIDELINES_HEADER, &self.guidelines),
            (EXAMPLE_HEADER, &self.example),
            (DICTIONARY_HEADER, &self.dictionary),
        ]
        .iter()
        .map(|(h, body)| format!("{h}\n{body}"))
        .collect::<Vec<_>>()
        .join("\n\n")
    }

    /// The preface followed by the request.
    pub fn user_text(&self) -> String {
        format!("{}\n{}", self.preface, self.request)
    }

    pub fn render(&self) -> String {
        format!("{}\n\n{}", self.system_text(), self.user_text())
    }
}
