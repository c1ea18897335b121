//! Benchmark tasks in the common JSONL shape `{"id", "question", "choices"?, "answer"}`.

use serde::{Deserialize, Serialize};

use super::extract::{canonicalize_number, TaskFormat};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

/// Letter for a zero-based choice index.
pub fn choice_letter(index: usize) -> char {
    (b'A' + (index % 26) as u8) as char
}

impl Task {
    pub fn format(&self) -> TaskFormat {
        match &self.choices {
            Some(c) if !c.is_empty() => TaskFormat::MultipleChoice,
            _ => TaskFormat::Numeric,
        }
    }

    /// Gold answer in the same canonical form `extract_answer` produces.
    /// For multiple choice the answer may be given as a letter, a `(X)` form
    /// or the full text of a choice.
    pub fn gold(&self) -> Option<String> {
        let raw = self.answer.as_deref()?.trim();
        match self.format() {
            TaskFormat::MultipleChoice => {
                let choices = self.choices.as_deref().unwrap_or_default();
                let stripped = raw.trim_start_matches('(').trim_end_matches(')');
                if stripped.len() == 1 && stripped.chars().all(|c| c.is_ascii_alphabetic()) {
                    return Some(stripped.to_ascii_uppercase());
                }
                choices
                    .iter()
                    .position(|c| c.trim() == raw)
                    .map(|i| choice_letter(i).to_string())
            }
            TaskFormat::Numeric => canonicalize_number(raw).or_else(|| Some(raw.to_string())),
        }
    }

    pub fn prompt(&self) -> String {
        let mut text = self.question.trim().to_string();
        match self.choices.as_deref() {
            Some(choices) if !choices.is_empty() => {
                text.push('\n');
                for (i, c) in choices.iter().enumerate() {
                    text.push_str(&format!("\n({}) {}", choice_letter(i), c));
                }
                text.push_str(
                    "\n\nExplain your reasoning, then finish with \"The answer is (X)\" where X is the letter of your choice.",
                );
            }
            _ => text.push_str(
                "\n\nExplain your reasoning, then finish with \"Answer: <number>\".",
            ),
        }
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mc(answer: &str) -> Task {
        Task {
            id: "t".into(),
            question: "Pick".into(),
            choices: Some(vec!["red".into(), "green".into(), "blue".into()]),
            answer: Some(answer.into()),
        }
    }

    #[test]
    fn gold_forms() {
        assert_eq!(mc("b").gold().as_deref(), Some("B"));
        assert_eq!(mc("(C)").gold().as_deref(), Some("C"));
        assert_eq!(mc("green").gold().as_deref(), Some("B"));
        assert_eq!(mc("purple").gold(), None);
        let num = Task {
            id: "n".into(),
            question: "How many".into(),
            choices: None,
            answer: Some("1,200.0".into()),
        };
        assert_eq!(num.format(), TaskFormat::Numeric);
        assert_eq!(num.gold().as_deref(), Some("1200"));
    }

    #[test]
    fn prompt_lists_choices() {
        let p = mc("A").prompt();
        assert!(p.contains("(A) red\n(B) green\n(C) blue"));
        assert!(p.contains("The answer is (X)"));
    }
}
