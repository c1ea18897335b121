//! Per-configuration summaries of transcript stores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::exec::Execution;
use crate::harness::{Layer, Transcript, WorkflowKind};
use crate::spectral::{k_star, k_star_conditioned, mean_pairwise_cosine, EmbeddingSet};

/// How K*_c and K*_w are aggregated over the questions of a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KStarMode {
    /// Unweighted mean over questions whose subset is nonempty.
    #[default]
    PerQuestion,
    /// Mean over questions weighted by subset size.
    Pooled,
}

/// A transcript and the embeddings of its successful calls, keyed by call index.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptEntry {
    pub transcript: Transcript,
    pub embeddings: Option<BTreeMap<usize, Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset: String,
    pub layer: Layer,
    pub workflow: WorkflowKind,
    pub n_agents: usize,
    pub rounds: u32,
    pub task_count: usize,
    pub correct_count: usize,
    pub invalid_count: usize,
    pub accuracy: f64,
    pub k_star: Option<f64>,
    pub k_star_c: Option<f64>,
    pub k_star_w: Option<f64>,
    pub mean_cosine: Option<f64>,
    pub kstar_mode: KStarMode,
}

pub type ConfigKey = (String, Layer, WorkflowKind, usize);

#[derive(Debug, Clone, Copy, PartialEq)]
struct TaskSpectra {
    k_star: f64,
    k_star_c: Option<(f64, usize)>,
    k_star_w: Option<(f64, usize)>,
    mean_cosine: Option<f64>,
}

fn task_spectra(entry: &TranscriptEntry) -> Result<Option<TaskSpectra>, AnalysisError> {
    let Some(emb) = &entry.embeddings else {
        return Ok(None);
    };
    let t = &entry.transcript;
    let calls: Vec<_> = t.calls.iter().filter(|c| c.error.is_none()).collect();
    if calls.is_empty() {
        return Ok(None);
    }
    let mut raw = Vec::with_capacity(calls.len());
    for c in &calls {
        match emb.get(&c.call_index) {
            Some(v) => raw.push(v.clone()),
            None => return Err(AnalysisError::MissingEmbeddings(t.task_id.clone())),
        }
    }
    let set = EmbeddingSet::normalize(&raw)?;
    let mask: Vec<bool> = calls
        .iter()
        .map(|c| c.extracted_answer.is_some() && c.extracted_answer == t.gold_answer)
        .collect();
    let correct = mask.iter().filter(|&&m| m).count();
    let cond = k_star_conditioned(&set, &mask)?;
    Ok(Some(TaskSpectra {
        k_star: k_star(&set)?.k_star,
        k_star_c: cond.k_star_c.map(|k| (k, correct)),
        k_star_w: cond.k_star_w.map(|k| (k, mask.len() - correct)),
        mean_cosine: if set.len() >= 2 {
            Some(mean_pairwise_cosine(&set)?.mean_pairwise_cosine)
        } else {
            None
        },
    }))
}

fn aggregate(values: &[(f64, usize)], mode: KStarMode) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(match mode {
        KStarMode::PerQuestion => values.iter().map(|(v, _)| v).sum::<f64>() / values.len() as f64,
        KStarMode::Pooled => {
            let w: usize = values.iter().map(|(_, n)| n).sum();
            values.iter().map(|(v, n)| v * *n as f64).sum::<f64>() / w as f64
        }
    })
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// One summary per (dataset, layer, workflow, N), in key order. Accuracy is
/// recomputed from task counts; invalid transcripts count as incorrect.
/// Spectral columns are absent for groups without embeddings.
pub fn summarize_runs(
    entries: &[TranscriptEntry],
    mode: KStarMode,
    exec: Execution,
) -> Result<Vec<RunSummary>, AnalysisError> {
    let spectra: Vec<Option<TaskSpectra>> = exec
        .map_slice(entries, task_spectra)
        .into_iter()
        .collect::<Result<_, _>>()?;

    let mut groups: BTreeMap<ConfigKey, Vec<usize>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        let t = &e.transcript;
        groups
            .entry((t.dataset.clone(), t.layer, t.workflow, t.n_agents))
            .or_default()
            .push(i);
    }

    Ok(groups
        .into_iter()
        .map(|((dataset, layer, workflow, n_agents), idx)| {
            let ts: Vec<&Transcript> = idx.iter().map(|&i| &entries[i].transcript).collect();
            let sp: Vec<TaskSpectra> = idx.iter().filter_map(|&i| spectra[i]).collect();
            let correct_count = ts.iter().filter(|t| t.is_correct()).count();
            let kc: Vec<(f64, usize)> = sp.iter().filter_map(|s| s.k_star_c).collect();
            let kw: Vec<(f64, usize)> = sp.iter().filter_map(|s| s.k_star_w).collect();
            RunSummary {
                dataset,
                layer,
                workflow,
                n_agents,
                rounds: ts.iter().map(|t| t.rounds).max().unwrap_or(1),
                task_count: ts.len(),
                correct_count,
                invalid_count: ts.iter().filter(|t| !t.valid).count(),
                accuracy: correct_count as f64 / ts.len() as f64,
                k_star: mean_of(sp.iter().map(|s| s.k_star)),
                k_star_c: aggregate(&kc, mode),
                k_star_w: aggregate(&kw, mode),
                mean_cosine: mean_of(sp.iter().filter_map(|s| s.mean_cosine)),
                kstar_mode: mode,
            }
        })
        .collect())
}

/// Per-agent accuracy change between consecutive points.
pub fn marginal_gains(series: &[(usize, f64)]) -> Result<Vec<(usize, f64)>, AnalysisError> {
    if series.len() < 2 {
        return Err(AnalysisError::NeedTwoPoints);
    }
    series
        .windows(2)
        .map(|w| {
            let ((n0, a0), (n1, a1)) = (w[0], w[1]);
            if n1 <= n0 {
                return Err(AnalysisError::DegenerateInput(format!(
                    "agent counts must be strictly increasing ({n0} then {n1})"
                )));
            }
            Ok((n1, (a1 - a0) / (n1 - n0) as f64))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentsToMatch {
    pub baseline_n: usize,
    pub baseline_accuracy: f64,
    pub n_match: Option<usize>,
    pub accuracy_at_match: Option<f64>,
}

/// Smallest candidate N whose accuracy reaches the baseline's accuracy at
/// the baseline's largest N.
pub fn agents_to_match(
    baseline: &[(usize, f64)],
    candidate: &[(usize, f64)],
) -> Result<AgentsToMatch, AnalysisError> {
    let &(baseline_n, baseline_accuracy) = baseline
        .iter()
        .max_by_key(|(n, _)| *n)
        .ok_or(AnalysisError::EmptySeries)?;
    if candidate.is_empty() {
        return Err(AnalysisError::EmptySeries);
    }
    let mut sorted = candidate.to_vec();
    sorted.sort_by_key(|(n, _)| *n);
    let hit = sorted.iter().find(|(_, a)| *a >= baseline_accuracy);
    Ok(AgentsToMatch {
        baseline_n,
        baseline_accuracy,
        n_match: hit.map(|(n, _)| *n),
        accuracy_at_match: hit.map(|(_, a)| *a),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "correct-dominant")]
    CorrectDominant,
    #[serde(rename = "wrong-dominant")]
    WrongDominant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub dataset: String,
    pub layer: Layer,
    pub workflow: WorkflowKind,
    pub n_agents: usize,
    pub k_star_c: f64,
    pub k_star_w: f64,
    pub side: Side,
    /// Set when `k_star_c == k_star_w`.
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub rows: Vec<BoundaryRow>,
    pub skipped: usize,
}

/// Correct-dominant iff K*_c > K*_w strictly. Summaries missing either
/// component are skipped and counted.
pub fn boundary_classification(summaries: &[RunSummary]) -> BoundaryReport {
    let mut rows = Vec::new();
    let mut skipped = 0;
    for s in summaries {
        match (s.k_star_c, s.k_star_w) {
            (Some(c), Some(w)) => rows.push(BoundaryRow {
                dataset: s.dataset.clone(),
                layer: s.layer,
                workflow: s.workflow,
                n_agents: s.n_agents,
                k_star_c: c,
                k_star_w: w,
                side: if c > w {
                    Side::CorrectDominant
                } else {
                    Side::WrongDominant
                },
                tie: c == w,
            }),
            _ => skipped += 1,
        }
    }
    BoundaryReport { rows, skipped }
}
