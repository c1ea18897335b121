//! Answer extraction from free-form agent output.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFormat {
    MultipleChoice,
    Numeric,
}

fn mc_patterns() -> &'static [Regex] {
    static PATTERNS: OnceLock<Vec<Regex>> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        vec![
            // "the answer is (B)", "Answer: C", "final answer: (d)"
            Regex::new(r"(?i:answer)\s*(?:(?i:is)\s*)?:?\s*(?:\(([A-Za-z])\)|([A-Z])\b)").unwrap(),
            // bare "(B)" anywhere; the last one wins
            Regex::new(r"\(([A-Z])\)").unwrap(),
        ]
    })
}

fn numeric_patterns() -> &'static [Regex] {
    static PATTERNS: OnceLock<Vec<Regex>> = OnceLock::new();
    const NUM: &str = r"([-+]?\$?\s*(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|[-+]?\.\d+)";
    PATTERNS.get_or_init(|| {
        vec![
            Regex::new(&format!(r"(?i:answer)\s*(?:(?i:is)\s*)?:?\s*{NUM}")).unwrap(),
            Regex::new(&format!(r"####\s*{NUM}")).unwrap(),
            Regex::new(NUM).unwrap(),
        ]
    })
}

/// Extracts the final answer. Multiple choice gives a single uppercase
/// letter; numeric gives a canonical decimal string. `None` when nothing
/// matches.
pub fn extract_answer(raw_output: &str, format: TaskFormat) -> Option<String> {
    match format {
        TaskFormat::MultipleChoice => mc_patterns().iter().find_map(|re| {
            re.captures_iter(raw_output).last().and_then(|c| {
                c.get(1)
                    .or_else(|| c.get(2))
                    .map(|m| m.as_str().to_ascii_uppercase())
            })
        }),
        TaskFormat::Numeric => numeric_patterns().iter().find_map(|re| {
            re.captures_iter(raw_output)
                .last()
                .and_then(|c| canonicalize_number(c.get(1)?.as_str()))
        }),
    }
}

/// Canonical decimal form: no thousands separators, sign only when negative,
/// no leading zeros, no trailing fractional zeros. `"1,234.50"` → `"1234.5"`.
pub fn canonicalize_number(text: &str) -> Option<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| !matches!(c, ',' | '$' | ' '))
        .collect();
    let (negative, body) = match cleaned.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, cleaned.strip_prefix('+').unwrap_or(&cleaned)),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if (int_part.is_empty() && frac_part.is_empty())
        || !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let int_part = int_part.trim_start_matches('0');
    let frac_part = frac_part.trim_end_matches('0');
    let int_part = if int_part.is_empty() { "0" } else { int_part };
    let is_zero = int_part == "0" && frac_part.is_empty();
    let mut out = String::new();
    if negative && !is_zero {
        out.push('-');
    }
    out.push_str(int_part);
    if !frac_part.is_empty() {
        out.push('.');
        out.push_str(frac_part);
    }
    Some(out)
}
