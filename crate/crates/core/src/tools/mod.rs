//! Vision tools behind the registry's agent names.
//!
//! Every function here is pure over its inputs and parameters; file access
//! is confined to [`image`] and [`manifest`].

pub mod image;
pub mod manifest;
pub mod segment;
pub mod transform;

pub use image::{ImageBuffer, MaskBuffer};
pub use manifest::{load_manifest, CsvManifest, ManifestRow};
pub use segment::{dice, infer_mask, learn_threshold, overlay, quantize, SegmenterWeights};
pub use transform::{clahe, expand_channels, histeq, resize, z_score, ResizeOptions, CLAHE_GRID};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ToolError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: unreadable image: {message}")]
    Format { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Manifest { path: String, line: u64, message: String },
    #[error("{path}: manifest has no rows")]
    EmptyManifest { path: String },
    #[error("no training pairs")]
    EmptyTrainingSet,
    #[error("{what}: dimensions {left:?} and {right:?} differ")]
    DimensionMismatch {
        what: String,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("parameter `{param}`: {message}")]
    InvalidParam { param: String, message: String },
}
