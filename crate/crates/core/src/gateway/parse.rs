//! Strict parsers for model replies, and step-marker handling for rationales.

use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot parse reply: {0}")]
pub struct ParseError(pub String);

/// Parses a reply that must be exactly a JSON array of integers, optionally
/// surrounded by whitespace. Returns the indices sorted and de-duplicated.
pub fn parse_index_array(reply: &str) -> Result<Vec<i64>, ParseError> {
    let trimmed = reply.trim();
    if !trimmed.starts_with('[') || !trimmed.ends_with(']') {
        return Err(ParseError(format!("not a bare JSON array: {trimmed:?}")));
    }
    let mut indices: Vec<i64> =
        serde_json::from_str(trimmed).map_err(|e| ParseError(format!("{e}: {trimmed:?}")))?;
    indices.sort_unstable();
    indices.dedup();
    Ok(indices)
}

/// Lenient variant: parses the first `[...]` span found anywhere in the reply.
pub fn parse_index_array_lenient(reply: &str) -> Result<Vec<i64>, ParseError> {
    let open = reply
        .find('[')
        .ok_or_else(|| ParseError(format!("no array in {reply:?}")))?;
    let close = reply[open..]
        .find(']')
        .ok_or_else(|| ParseError(format!("unterminated array in {reply:?}")))?;
    parse_index_array(&reply[open..open + close + 1])
}

/// `true` for "yes", `false` for "no": the first whitespace-separated token,
/// stripped of surrounding punctuation, compared case-insensitively.
pub fn parse_yes_no(reply: &str) -> Result<bool, ParseError> {
    let token = reply
        .split_whitespace()
        .next()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .unwrap_or("");
    if token.eq_ignore_ascii_case("yes") {
        Ok(true)
    } else if token.eq_ignore_ascii_case("no") {
        Ok(false)
    } else {
        Err(ParseError(format!("expected Yes or No, got {reply:?}")))
    }
}

fn step_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"Step ([0-9]+):").expect("valid regex"))
}

/// Step numbers of every `Step k:` marker, in order of appearance.
pub fn step_numbers(text: &str) -> Vec<u64> {
    step_marker()
        .captures_iter(text)
        .filter_map(|c| c[1].parse().ok())
        .collect()
}

/// Removes every `Step k:` marker together with one following space. When
/// the removal leaves two spaces side by side one of them is dropped, and
/// the result is trimmed. Text without markers is returned unchanged.
pub fn strip_step_markers(text: &str) -> String {
    let mut current = text.to_string();
    // Removing a marker can splice together a new one ("StStep 1: ep 2:").
    while step_marker().is_match(&current) {
        current = strip_once(&current);
    }
    current
}

fn strip_once(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for m in step_marker().find_iter(text) {
        out.push_str(&text[last..m.start()]);
        let mut end = m.end();
        if text[end..].starts_with(' ') {
            end += 1;
        }
        if out.ends_with(' ') && text[end..].starts_with(' ') {
            end += 1;
        }
        last = end;
    }
    out.push_str(&text[last..]);
    out.trim().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_arrays() {
        assert_eq!(parse_index_array("[2, 5]").unwrap(), vec![2, 5]);
        assert_eq!(parse_index_array(" \n[5, 2, 2]\n").unwrap(), vec![2, 5]);
        assert_eq!(parse_index_array("[]").unwrap(), Vec::<i64>::new());
        assert!(parse_index_array("```json [2]```").is_err());
        assert!(parse_index_array("Here you go: [2]").is_err());
        assert!(parse_index_array("[2] done").is_err());
        assert!(parse_index_array("[1.5]").is_err());
        assert!(parse_index_array("[\"1\"]").is_err());
        assert!(parse_index_array("{\"a\": 1}").is_err());
    }

    #[test]
    fn lenient_index_arrays() {
        assert_eq!(
            parse_index_array_lenient("```json [3, 1]```").unwrap(),
            vec![1, 3]
        );
        assert!(parse_index_array_lenient("none").is_err());
    }

    #[test]
    fn yes_no() {
        assert!(parse_yes_no("Yes").unwrap());
        assert!(!parse_yes_no("no.").unwrap());
        assert!(parse_yes_no("  \"YES\", because").unwrap());
        assert!(parse_yes_no("Maybe").is_err());
        assert!(parse_yes_no("It depends").is_err());
        assert!(parse_yes_no("").is_err());
    }

    #[test]
    fn markers_are_counted_in_order() {
        assert_eq!(
            step_numbers("Step 1: a Step 2: b Step 10: c"),
            vec![1, 2, 10]
        );
        assert!(step_numbers("Step one: a").is_empty());
    }

    #[test]
    fn stripping_handles_spliced_markers() {
        assert_eq!(strip_step_markers("StStep 1: ep 2: x"), "x");
        assert_eq!(strip_step_markers("Step 1:"), "");
    }
}
