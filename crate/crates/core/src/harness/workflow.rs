//! Vote and Debate workflows and the transcript record they produce.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::agents::{AgentConfig, DiversityPlan, Layer};
use super::backend::{CallContext, ChatBackend, ChatMessage, ChatRequest, RetryPolicy};
use super::extract::{extract_answer, TaskFormat};
use super::task::Task;
use super::HarnessError;

pub const TRANSCRIPT_SCHEMA: u32 = 1;
pub const DEFAULT_DEBATE_ROUNDS: u32 = 4;
pub const OTHER_AGENTS_HEADER: &str = "Other agents answered:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkflowKind {
    Vote,
    Debate,
}

impl fmt::Display for WorkflowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WorkflowKind::Vote => "vote",
            WorkflowKind::Debate => "debate",
        })
    }
}

impl FromStr for WorkflowKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vote" => Ok(WorkflowKind::Vote),
            "debate" => Ok(WorkflowKind::Debate),
            _ => Err(HarnessError::InvalidConfig(format!("unknown workflow {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowSpec {
    pub kind: WorkflowKind,
    pub num_agents: usize,
    pub rounds: u32,
}

impl WorkflowSpec {
    pub fn vote(num_agents: usize) -> Self {
        Self {
            kind: WorkflowKind::Vote,
            num_agents,
            rounds: 1,
        }
    }

    pub fn debate(num_agents: usize, rounds: u32) -> Self {
        Self {
            kind: WorkflowKind::Debate,
            num_agents,
            rounds,
        }
    }

    pub fn call_budget(&self) -> usize {
        self.num_agents * self.rounds as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub call_index: usize,
    pub agent_index: usize,
    pub agent_type_label: String,
    pub round: u32,
    pub raw_output: String,
    pub extracted_answer: Option<String>,
    pub latency_ms: u64,
    pub attempts: u32,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub schema: u32,
    pub dataset: String,
    pub task_id: String,
    pub question: String,
    pub gold_answer: Option<String>,
    pub task_format: TaskFormat,
    pub workflow: WorkflowKind,
    pub layer: Layer,
    pub n_agents: usize,
    pub rounds: u32,
    pub call_budget: usize,
    pub agents: Vec<AgentConfig>,
    pub calls: Vec<CallRecord>,
    pub final_answer: Option<String>,
    pub tie: bool,
    pub valid: bool,
    pub config_hash: Option<String>,
    pub seed: u64,
    pub timestamp: String,
}

impl Transcript {
    pub fn is_correct(&self) -> bool {
        self.valid && self.final_answer.is_some() && self.final_answer == self.gold_answer
    }

    pub fn failed_calls(&self) -> usize {
        self.calls.iter().filter(|c| c.error.is_some()).count()
    }

    /// Calls of the last round, which carry the final answer.
    pub fn final_round_calls(&self) -> impl Iterator<Item = &CallRecord> {
        let last = self.rounds;
        self.calls.iter().filter(move |c| c.round == last)
    }
}

/// Majority over answers. Ties go to the lexicographically smallest tied
/// answer and set the flag. `None` when there are no answers.
pub fn majority<'a>(answers: impl IntoIterator<Item = &'a str>) -> Option<(String, bool)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for a in answers {
        *counts.entry(a).or_default() += 1;
    }
    let best = *counts.values().max()?;
    let mut tied = counts.iter().filter(|(_, &c)| c == best).map(|(a, _)| *a);
    let winner = tied.next()?;
    Some((winner.to_string(), tied.next().is_some()))
}

pub trait Clock: Send + Sync {
    fn timestamp(&self) -> String;
    fn now_ms(&self) -> u64;
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn timestamp(&self) -> String {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
    }

    fn now_ms(&self) -> u64 {
        self.origin.elapsed().as_millis() as u64
    }
}

/// Frozen clock for reproducible transcripts: constant timestamp, zero latency.
pub struct FixedClock(pub String);

impl Default for FixedClock {
    fn default() -> Self {
        Self("1970-01-01T00:00:00Z".into())
    }
}

impl Clock for FixedClock {
    fn timestamp(&self) -> String {
        self.0.clone()
    }

    fn now_ms(&self) -> u64 {
        0
    }
}

/// Runs workflows against one chat backend. Shareable across threads, so
/// several tasks may be in flight at once.
pub struct Harness<'a> {
    pub backend: &'a dyn ChatBackend,
    pub clock: &'a dyn Clock,
    pub retry: RetryPolicy,
    /// Maximum concurrent calls within one round.
    pub concurrency: usize,
    pub dataset: String,
    pub seed: u64,
    pub config_hash: Option<String>,
}

impl<'a> Harness<'a> {
    pub fn new(backend: &'a dyn ChatBackend, clock: &'a dyn Clock, seed: u64) -> Self {
        Self {
            backend,
            clock,
            retry: RetryPolicy::default(),
            concurrency: 8,
            dataset: String::new(),
            seed,
            config_hash: None,
        }
    }

    pub fn run_vote(
        &self,
        task: &Task,
        plan: &DiversityPlan,
        n_agents: usize,
    ) -> Result<Transcript, HarnessError> {
        let agents = plan.agents(n_agents)?;
        self.run_workflow(task, plan.layer, &agents, WorkflowSpec::vote(n_agents))
    }

    pub fn run_debate(
        &self,
        task: &Task,
        plan: &DiversityPlan,
        n_agents: usize,
        rounds: u32,
    ) -> Result<Transcript, HarnessError> {
        let agents = plan.agents(n_agents)?;
        self.run_workflow(task, plan.layer, &agents, WorkflowSpec::debate(n_agents, rounds))
    }

    /// Runs `spec` with an explicit agent list. Calls are indexed
    /// `(round - 1) · N + agent`; failed calls stay in place with their error.
    pub fn run_workflow(
        &self,
        task: &Task,
        layer: Layer,
        agents: &[AgentConfig],
        spec: WorkflowSpec,
    ) -> Result<Transcript, HarnessError> {
        if agents.is_empty() || agents.len() != spec.num_agents {
            return Err(HarnessError::InvalidConfig(format!(
                "workflow declares {} agents but {} were supplied",
                spec.num_agents,
                agents.len()
            )));
        }
        if spec.rounds == 0 || (spec.kind == WorkflowKind::Vote && spec.rounds != 1) {
            return Err(HarnessError::InvalidConfig(format!(
                "{} cannot run {} rounds",
                spec.kind, spec.rounds
            )));
        }

        let mut replica = Vec::with_capacity(agents.len());
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for a in agents {
            let slot = seen.entry(a.type_label.as_str()).or_default();
            replica.push(*slot);
            *slot += 1;
        }

        let format = task.format();
        let base_prompt = task.prompt();
        let mut calls: Vec<CallRecord> = Vec::with_capacity(spec.call_budget());
        for round in 1..=spec.rounds {
            let user_prompt = if round == 1 {
                base_prompt.clone()
            } else {
                let previous = &calls[calls.len() - agents.len()..];
                debate_prompt(&base_prompt, previous)
            };
            let round_calls = self.run_round(task, agents, &replica, round, &user_prompt, format);
            calls.extend(round_calls);
        }

        let failed = calls.iter().filter(|c| c.error.is_some()).count();
        let valid = 2 * failed <= calls.len();
        let (final_answer, tie) = if valid {
            let last: Vec<&str> = calls[calls.len() - agents.len()..]
                .iter()
                .filter_map(|c| c.extracted_answer.as_deref())
                .collect();
            match majority(last) {
                Some((a, t)) => (Some(a), t),
                None => (None, false),
            }
        } else {
            (None, false)
        };

        Ok(Transcript {
            schema: TRANSCRIPT_SCHEMA,
            dataset: self.dataset.clone(),
            task_id: task.id.clone(),
            question: task.question.clone(),
            gold_answer: task.gold(),
            task_format: format,
            workflow: spec.kind,
            layer,
            n_agents: agents.len(),
            rounds: spec.rounds,
            call_budget: spec.call_budget(),
            agents: agents.to_vec(),
            calls,
            final_answer,
            tie,
            valid,
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            timestamp: self.clock.timestamp(),
        })
    }

    fn run_round(
        &self,
        task: &Task,
        agents: &[AgentConfig],
        replica: &[usize],
        round: u32,
        user_prompt: &str,
        format: TaskFormat,
    ) -> Vec<CallRecord> {
        let n = agents.len();
        let call = |i: usize| -> CallRecord {
            let agent = &agents[i];
            let call_index = (round as usize - 1) * n + i;
            let ctx = CallContext {
                task,
                agent_index: i,
                type_label: &agent.type_label,
                persona_id: agent.persona_id.as_deref(),
                replica_index: replica[i],
                round,
                call_index,
            };
            let request = ChatRequest {
                model: agent.model_id.clone(),
                messages: vec![
                    ChatMessage::system(agent.system_prompt.clone()),
                    ChatMessage::user(user_prompt),
                ],
                temperature: agent.decoding.temperature,
                top_p: agent.decoding.top_p,
                max_tokens: agent.decoding.max_tokens,
            };
            let start = self.clock.now_ms();
            let (result, attempts) = self.retry.run(|| self.backend.complete(&ctx, &request));
            let latency_ms = self.clock.now_ms().saturating_sub(start);
            let (raw_output, error) = match result {
                Ok(text) => (text, None),
                Err(e) => {
                    log::warn!("task {} call {call_index} failed: {e}", task.id);
                    (String::new(), Some(e.to_string()))
                }
            };
            CallRecord {
                call_index,
                agent_index: i,
                agent_type_label: agent.type_label.clone(),
                round,
                extracted_answer: error
                    .is_none()
                    .then(|| extract_answer(&raw_output, format))
                    .flatten(),
                raw_output,
                latency_ms,
                attempts,
                error,
            }
        };

        let workers = self.concurrency.clamp(1, n);
        if workers == 1 {
            return (0..n).map(call).collect();
        }
        let slots: Vec<Mutex<Option<CallRecord>>> = (0..n).map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let record = call(i);
                    *slots[i].lock().expect("slot lock") = Some(record);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().expect("slot lock").expect("every slot filled"))
            .collect()
    }
}

fn debate_prompt(base: &str, previous: &[CallRecord]) -> String {
    let mut text = format!("{base}\n\n{OTHER_AGENTS_HEADER}\n");
    for c in previous {
        let body = if c.error.is_some() {
            "(no response)".to_string()
        } else {
            c.raw_output.replace('\n', " ")
        };
        text.push_str(&format!("Agent {}: {}\n", c.agent_index + 1, body));
    }
    text.push_str("\nUse these responses as additional advice and give your updated answer.");
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::agents::{Decoding, Persona};
    use crate::harness::mock::MockBackend;

    fn task() -> Task {
        Task {
            id: "q1".into(),
            question: "Which?".into(),
            choices: Some(vec!["a".into(), "b".into(), "c".into(), "d".into()]),
            answer: Some("A".into()),
        }
    }

    fn homogeneous(n: usize) -> Vec<AgentConfig> {
        vec![AgentConfig::new("m1", None, Decoding::default()); n]
    }

    fn run(mock: &MockBackend, spec: WorkflowSpec) -> Transcript {
        let clock = FixedClock::default();
        let mut h = Harness::new(mock, &clock, 0);
        h.retry = RetryPolicy::no_delay(0);
        h.run_workflow(&task(), Layer::L1, &homogeneous(spec.num_agents), spec)
            .unwrap()
    }

    #[test]
    fn majority_and_tie_break() {
        assert_eq!(majority(["A", "A", "B"]), Some(("A".into(), false)));
        assert_eq!(majority(["B", "A"]), Some(("A".into(), true)));
        assert_eq!(majority(["C", "B", "C", "B", "A"]), Some(("B".into(), true)));
        assert_eq!(majority(Vec::<&str>::new()), None);
    }

    #[test]
    fn scripted_vote() {
        let t = run(&MockBackend::scripted(["A", "A", "B"]), WorkflowSpec::vote(3));
        assert_eq!(t.final_answer.as_deref(), Some("A"));
        assert!(!t.tie && t.valid && t.is_correct());
        assert_eq!(t.calls.len(), 3);

        let t = run(&MockBackend::scripted(["B", "A"]), WorkflowSpec::vote(2));
        assert_eq!(t.final_answer.as_deref(), Some("A"));
        assert!(t.tie);
    }

    #[test]
    fn all_failures_invalidate() {
        let t = run(&MockBackend::new(1).failing_all(), WorkflowSpec::vote(3));
        assert!(!t.valid);
        assert_eq!(t.final_answer, None);
        assert_eq!(t.calls.len(), 3);
        assert!(t.calls.iter().all(|c| c.error.is_some()));
    }

    #[test]
    fn half_failures_stay_valid() {
        let t = run(&MockBackend::scripted(["C"]).failing_agents([0, 1]), WorkflowSpec::vote(4));
        assert!(t.valid);
        assert_eq!(t.final_answer.as_deref(), Some("C"));
        let t = run(&MockBackend::scripted(["C"]).failing_agents([0, 1, 2]), WorkflowSpec::vote(4));
        assert!(!t.valid);
    }

    #[test]
    fn herding_debate_converges() {
        let mock = MockBackend::scripted(["A", "A", "B"]).with_herding(true);
        let t = run(&mock, WorkflowSpec::debate(3, 2));
        assert_eq!(t.call_budget, 6);
        let last: Vec<_> = t.final_round_calls().map(|c| c.extracted_answer.clone()).collect();
        assert_eq!(last, vec![Some("A".to_string()); 3]);
        assert_eq!(t.final_answer.as_deref(), Some("A"));
        assert!(t.calls[3].round == 2 && t.calls[3].call_index == 3);
    }

    #[test]
    fn single_round_debate_matches_vote() {
        let mock = MockBackend::new(9);
        let v = run(&mock, WorkflowSpec::vote(5));
        let d = run(&mock, WorkflowSpec::debate(5, 1));
        assert_eq!(v.calls, d.calls);
        assert_eq!(v.final_answer, d.final_answer);
    }

    #[test]
    fn budget_counts_rounds() {
        let t = run(&MockBackend::new(2), WorkflowSpec::debate(2, 4));
        assert_eq!(t.call_budget, 8);
        assert_eq!(t.calls.len(), 8);
    }

    #[test]
    fn concurrency_does_not_change_transcript() {
        let mock = MockBackend::new(5);
        let clock = FixedClock::default();
        let plan = DiversityPlan {
            layer: Layer::L4,
            model_pool: vec!["m1".into(), "m2".into(), "m3".into()],
            persona_pool: (0..3)
                .map(|i| Persona {
                    id: format!("p{i}"),
                    text: format!("persona {i}"),
                })
                .collect(),
            decoding: Decoding::default(),
        };
        let mut h = Harness::new(&mock, &clock, 5);
        h.concurrency = 1;
        let serial = h.run_debate(&task(), &plan, 8, 3).unwrap();
        h.concurrency = 6;
        let parallel = h.run_debate(&task(), &plan, 8, 3).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn debate_prompt_lists_previous_round() {
        let prev = vec![
            CallRecord {
                call_index: 0,
                agent_index: 0,
                agent_type_label: "x".into(),
                round: 1,
                raw_output: "The answer is (B).".into(),
                extracted_answer: Some("B".into()),
                latency_ms: 0,
                attempts: 1,
                error: None,
            },
            CallRecord {
                call_index: 1,
                agent_index: 1,
                agent_type_label: "x".into(),
                round: 1,
                raw_output: String::new(),
                extracted_answer: None,
                latency_ms: 0,
                attempts: 4,
                error: Some("down".into()),
            },
        ];
        let p = debate_prompt("Q", &prev);
        assert!(p.contains("Other agents answered:\nAgent 1: The answer is (B).\nAgent 2: (no response)\n"));
    }
}
