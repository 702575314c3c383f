//! CSV manifests pairing images with optional reference masks.

use std::path::{Path, PathBuf};

use super::ToolError;

pub const DEFAULT_HEADER: [&str; 2] = ["image", "mask"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvManifest {
    pub path: PathBuf,
    pub image_column: String,
    pub mask_column: Option<String>,
    pub rows: Vec<ManifestRow>,
}

impl CsvManifest {
    pub fn has_masks(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.mask.is_some())
    }
}

/// Column names from a `header_params` value: `image,mask`, `[image, mask]`
/// or `['image', 'mask']`. No value means the defaults; a single name means
/// there is no mask column.
pub fn parse_header_params(text: Option<&str>) -> (String, Option<String>) {
    let names: Vec<String> = text
        .unwrap_or("")
        .trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .split(',')
        .map(|s| s.trim().trim_matches(|c| c == '\'' || c == '"').to_string())
        .filter(|s| !s.is_empty())
        .collect();
    match names.as_slice() {
        [] => (DEFAULT_HEADER[0].to_string(), Some(DEFAULT_HEADER[1].to_string())),
        [image] => (image.clone(), None),
        [image, mask, ..] => (image.clone(), Some(mask.clone())),
    }
}

/// Reads a manifest. Relative file paths resolve against the manifest's
/// directory. Every referenced file must exist.
pub fn load_manifest(path: &Path, header_params: Option<&str>) -> Result<CsvManifest, ToolError> {
    let (image_column, mask_column) = parse_header_params(header_params);
    let manifest_err = |line: u64, message: String| ToolError::Manifest {
        path: path.display().to_string(),
        line,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .quoting(false)
        .from_path(path)
        .map_err(|e| ToolError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    let headers = reader.headers().map_err(|e| manifest_err(1, e.to_string()))?.clone();
    let image_idx = headers
        .iter()
        .position(|h| h == image_column)
        .ok_or_else(|| manifest_err(1, format!("header has no `{image_column}` column")))?;
    let mask_idx = mask_column.as_deref().and_then(|m| headers.iter().position(|h| h == m));

    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| manifest_err(line, e.to_string()))?;
        let image = record
            .get(image_idx)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| manifest_err(line, format!("empty `{image_column}` field")))?;
        let image = resolve(image);
        let mask = mask_idx.and_then(|m| record.get(m)).filter(|s| !s.is_empty()).map(resolve);
        for file in std::iter::once(&image).chain(mask.as_ref()) {
            if !file.is_file() {
                return Err(manifest_err(line, format!("file not found: {}", file.display())));
            }
        }
        rows.push(ManifestRow { image, mask });
    }
    if rows.is_empty() {
        return Err(ToolError::EmptyManifest {
            path: path.display().to_string(),
        });
    }
    Ok(CsvManifest {
        path: path.to_path_buf(),
        image_column,
        mask_column,
        rows,
    })
}
