//! Deterministic offline backend for tests and dry runs.
//!
//! Answers are a pure function of `(seed, task, type label, replica index,
//! round)`, so re-running a plan reproduces every byte and reordering agents
//! only permutes the answer multiset. Output text mixes words fixed by the
//! agent type, words fixed by the chosen answer, and per-call filler, which
//! gives the embeddings a realistic redundancy structure.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::backend::{BackendError, CallContext, ChatBackend, ChatRequest, EmbeddingBackend};
use super::extract::{extract_answer, TaskFormat};
use super::task::choice_letter;
use super::workflow::{majority, OTHER_AGENTS_HEADER};

const VOCAB: &[&str] = &[
    "consider", "therefore", "because", "assume", "compute", "total", "remaining", "factor",
    "evidence", "premise", "likely", "unlikely", "check", "verify", "estimate", "ratio",
    "balance", "option", "eliminate", "compare", "rule", "case", "carefully", "first", "next",
    "finally", "thus", "hence", "principle", "value", "result", "derive", "observe", "recall",
    "definition", "context", "detail", "pattern", "symmetry", "count", "sum", "difference",
    "product", "order", "reason", "argument", "claim", "support", "counter", "example",
];

/// 64-bit FNV-1a; stable across platforms and toolchains.
pub fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // separator so ("ab","c") and ("a","bc") differ
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn words(rng: &mut ChaCha8Rng, count: usize) -> Vec<&'static str> {
    (0..count).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockBackend {
    seed: u64,
    default_accuracy: f64,
    model_accuracy: BTreeMap<String, f64>,
    script: Option<Vec<String>>,
    herd: bool,
    fail_all: bool,
    fail_agents: BTreeSet<usize>,
    embedding_dim: usize,
    max_batch: usize,
}

impl MockBackend {
    pub const DEFAULT_EMBEDDING_DIM: usize = 64;

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            default_accuracy: 0.6,
            model_accuracy: BTreeMap::new(),
            script: None,
            herd: false,
            fail_all: false,
            fail_agents: BTreeSet::new(),
            embedding_dim: Self::DEFAULT_EMBEDDING_DIM,
            max_batch: 16,
        }
    }

    /// Agent `i` answers `answers[i % len]` in every round (unless herding).
    pub fn scripted<S: Into<String>>(answers: impl IntoIterator<Item = S>) -> Self {
        Self {
            script: Some(answers.into_iter().map(Into::into).collect()),
            ..Self::new(0)
        }
    }

    pub fn with_accuracy(mut self, accuracy: f64) -> Self {
        self.default_accuracy = accuracy.clamp(0.0, 1.0);
        self
    }

    pub fn with_model_accuracy(mut self, model: impl Into<String>, accuracy: f64) -> Self {
        self.model_accuracy.insert(model.into(), accuracy.clamp(0.0, 1.0));
        self
    }

    /// From round 2 on, every agent copies the majority of the previous round.
    pub fn with_herding(mut self, herd: bool) -> Self {
        self.herd = herd;
        self
    }

    pub fn failing_all(mut self) -> Self {
        self.fail_all = true;
        self
    }

    pub fn failing_agents(mut self, agents: impl IntoIterator<Item = usize>) -> Self {
        self.fail_agents.extend(agents);
        self
    }

    pub fn with_embedding_dim(mut self, dim: usize) -> Self {
        self.embedding_dim = dim.max(2);
        self
    }

    pub fn with_max_batch(mut self, max_batch: usize) -> Self {
        self.max_batch = max_batch.max(1);
        self
    }

    fn accuracy_for(&self, model: &str) -> f64 {
        self.model_accuracy
            .get(model)
            .copied()
            .unwrap_or(self.default_accuracy)
    }

    fn call_rng(&self, ctx: &CallContext<'_>) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(fnv1a(&[
            &self.seed.to_le_bytes(),
            ctx.task.id.as_bytes(),
            ctx.type_label.as_bytes(),
            &(ctx.replica_index as u64).to_le_bytes(),
            &ctx.round.to_le_bytes(),
        ]))
    }

    fn herd_answer(request: &ChatRequest, format: TaskFormat) -> Option<String> {
        let prompt = &request.messages.last()?.content;
        let (_, block) = prompt.split_once(OTHER_AGENTS_HEADER)?;
        let answers: Vec<String> = block
            .lines()
            .filter_map(|line| {
                let rest = line.strip_prefix("Agent ")?;
                let (_, output) = rest.split_once(": ")?;
                extract_answer(output, format)
            })
            .collect();
        majority(answers.iter().map(String::as_str)).map(|(a, _)| a)
    }

    fn seeded_answer(&self, ctx: &CallContext<'_>, model: &str, rng: &mut ChaCha8Rng) -> String {
        let correct = rng.random_bool(self.accuracy_for(model));
        let gold = ctx.task.gold();
        match ctx.task.format() {
            TaskFormat::MultipleChoice => {
                let n = ctx.task.choices.as_ref().map_or(4, Vec::len).max(2);
                let gold_idx = gold
                    .as_deref()
                    .and_then(|g| g.chars().next())
                    .map(|c| (c as u8).saturating_sub(b'A') as usize)
                    .filter(|&i| i < n);
                let idx = match (correct, gold_idx) {
                    (true, Some(g)) => g,
                    (false, Some(g)) => (g + rng.random_range(1..n)) % n,
                    (_, None) => rng.random_range(0..n),
                };
                choice_letter(idx).to_string()
            }
            TaskFormat::Numeric => match gold.as_deref().and_then(|g| g.parse::<i64>().ok()) {
                Some(g) if correct => g.to_string(),
                Some(g) => {
                    let offset = rng.random_range(1..=5i64);
                    let sign = if rng.random_bool(0.5) { 1 } else { -1 };
                    (g + sign * offset).to_string()
                }
                None => gold
                    .filter(|_| correct)
                    .unwrap_or_else(|| rng.random_range(0..100).to_string()),
            },
        }
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, ctx: &CallContext<'_>, request: &ChatRequest) -> Result<String, BackendError> {
        if self.fail_all || self.fail_agents.contains(&ctx.agent_index) {
            return Err(BackendError::Transport("mock backend: injected failure".into()));
        }
        let format = ctx.task.format();
        let mut rng = self.call_rng(ctx);
        let herded = if self.herd && ctx.round > 1 {
            Self::herd_answer(request, format)
        } else {
            None
        };
        let answer = herded.unwrap_or_else(|| match &self.script {
            Some(script) if !script.is_empty() => script[ctx.agent_index % script.len()].clone(),
            _ => self.seeded_answer(ctx, &request.model, &mut rng),
        });

        let mut style_rng = ChaCha8Rng::seed_from_u64(fnv1a(&[ctx.type_label.as_bytes()]));
        let mut answer_rng =
            ChaCha8Rng::seed_from_u64(fnv1a(&[ctx.task.id.as_bytes(), answer.as_bytes()]));
        let style = words(&mut style_rng, 8).join(" ");
        let reasoning = words(&mut answer_rng, 8).join(" ");
        let filler = words(&mut rng, 4).join(" ");
        let closing = match format {
            TaskFormat::MultipleChoice => format!("The answer is ({answer})."),
            TaskFormat::Numeric => format!("Answer: {answer}"),
        };
        Ok(format!(
            "[{} as {}] {style}. {reasoning}. {filler}. {closing}",
            request.model,
            ctx.persona_id.unwrap_or("default"),
        ))
    }
}

impl EmbeddingBackend for MockBackend {
    /// Signed hashed bag of words plus a constant bias coordinate.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        let dim = self.embedding_dim;
        Ok(texts
            .iter()
            .map(|text| {
                let mut v = vec![0.0; dim];
                v[0] = 0.25;
                for token in text
                    .split(|c: char| !c.is_alphanumeric())
                    .filter(|t| !t.is_empty())
                {
                    let h = fnv1a(&[token.to_lowercase().as_bytes()]);
                    let slot = 1 + (h % (dim as u64 - 1)) as usize;
                    v[slot] += if h >> 63 == 0 { 1.0 } else { -1.0 };
                }
                v
            })
            .collect())
    }

    fn max_batch(&self) -> usize {
        self.max_batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::backend::{fetch_embeddings, RetryPolicy};

    #[test]
    fn fnv_is_stable() {
        // Reference values of 64-bit FNV-1a for "" and "a" before the separator step.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in b"a" {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        assert_eq!(h, 0xaf63_dc4c_8601_ec8c);
        assert_ne!(fnv1a(&[b"ab", b"c"]), fnv1a(&[b"a", b"bc"]));
    }

    #[test]
    fn embeddings_have_fixed_dim() {
        let mock = MockBackend::new(1);
        let texts: Vec<String> = ["alpha beta", "gamma", "delta delta"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let v = fetch_embeddings(&texts, &mock, &RetryPolicy::no_delay(0)).unwrap();
        assert_eq!(v.len(), 3);
        assert!(v.iter().all(|x| x.len() == MockBackend::DEFAULT_EMBEDDING_DIM));
    }

    #[test]
    fn chunking_matches_single_shot() {
        let texts: Vec<String> = (0..37).map(|i| format!("text number {i} with words")).collect();
        let small = MockBackend::new(1).with_max_batch(5);
        let chunked = fetch_embeddings(&texts, &small, &RetryPolicy::no_delay(0)).unwrap();
        let single = MockBackend::new(1).with_max_batch(1000).embed_batch(&texts).unwrap();
        assert_eq!(chunked, single);
    }

    #[test]
    fn empty_list_is_rejected() {
        let err = fetch_embeddings(&[], &MockBackend::new(1), &RetryPolicy::no_delay(0));
        assert!(matches!(err, Err(crate::harness::HarnessError::EmptyInput)));
    }
}
