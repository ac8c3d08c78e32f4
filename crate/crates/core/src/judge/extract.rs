//! Tolerant JSON extraction from judge replies. Models routinely wrap the
//! object in code fences or lead with prose despite "only return JSON", so
//! the parser takes the first balanced top-level object, honoring string
//! literals and escapes.

/// The first balanced `{...}` object in `text`, if any.
pub fn extract_first_json_object(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + offset + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Extract and parse the first JSON object.
pub fn parse_first_json_object(text: &str) -> Option<serde_json::Value> {
    let candidate = extract_first_json_object(text)?;
    serde_json::from_str(candidate).ok()
}
