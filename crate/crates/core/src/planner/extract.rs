//! Pulling a JSON candidate out of free-form completion text.

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no JSON object found in the completion (no ```json block and no balanced {{...}} span)")]
pub struct ExtractionFailed;

/// The first fenced block tagged `json`; otherwise the longest balanced
/// top-level `{...}` span (the earliest on ties).
pub fn extract_json(completion: &str) -> Result<String, ExtractionFailed> {
    if let Some(block) = first_json_fence(completion) {
        return Ok(block);
    }
    longest_object(completion).map(str::to_string).ok_or(ExtractionFailed)
}

fn first_json_fence(text: &str) -> Option<String> {
    let mut rest = text;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        let line_end = after.find('\n')?;
        let tag = after[..line_end].trim();
        let body = &after[line_end + 1..];
        let close = body.find("```")?;
        if tag.eq_ignore_ascii_case("json") {
            return Some(body[..close].trim().to_string());
        }
        rest = &body[close + 3..];
    }
    None
}

/// Balanced `{...}` spans at nesting depth zero, skipping braces in strings.
fn longest_object(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'{' {
            i += 1;
            continue;
        }
        match matching_brace(bytes, i) {
            Some(end) => {
                if best.is_none_or(|(s, e)| end + 1 - i > e - s) {
                    best = Some((i, end + 1));
                }
                i = end + 1;
            }
            None => i += 1,
        }
    }
    best.map(|(s, e)| &text[s..e])
}

fn matching_brace(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (j, b) in bytes.iter().enumerate().skip(open) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(j);
                }
            }
            _ => {}
        }
    }
    None
}
