use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use effchan::harness::openai::{OpenAiChat, OpenAiConfig, OpenAiEmbeddings};
use effchan::harness::{
    fetch_embeddings, ChatBackend, Clock, DiversityPlan, EmbeddingBackend, FixedClock, Harness,
    HarnessError, MockBackend, RetryPolicy, SystemClock, Task, Transcript, WorkflowKind,
    WorkflowSpec,
};
use effchan::store::{
    append_jsonl, call_embedding_id, embeddings_path, read_jsonl, read_transcripts,
    transcript_file_name, EmbeddingRecord,
};
use serde::Serialize;

use crate::config::{self, BackendKind, LoadedConfig, ENV_CHAT_URL, ENV_EMBED_MODEL, ENV_EMBED_URL};
use crate::error::{CliError, CliResult};
use crate::output::to_json;

pub const MANIFEST_NAME: &str = "run_manifest.json";

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: PathBuf,
    pub layer: String,
    pub workflow: WorkflowKind,
    pub n_agents: usize,
    pub rounds: u32,
    pub tasks_written: usize,
    pub tasks_skipped: usize,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_path: PathBuf,
    pub config_hash: String,
    pub seed: u64,
    pub dataset: String,
    pub backend: BackendKind,
    pub started_at: String,
    pub elapsed_ms: u64,
    pub files: Vec<FileEntry>,
}

struct Backends {
    chat: Box<dyn ChatBackend>,
    embed: Option<Box<dyn EmbeddingBackend>>,
    clock: Box<dyn Clock>,
}

fn secret(env_name: Option<&str>) -> CliResult<Option<String>> {
    match env_name {
        None => Ok(None),
        Some(name) => std::env::var(name).map(Some).map_err(|_| {
            CliError::backend(format!("environment variable {name} is not set"))
        }),
    }
}

fn build_backends(cfg: &LoadedConfig, seed: u64) -> CliResult<Backends> {
    let c = &cfg.config;
    match c.backend.kind {
        BackendKind::Mock => {
            let mut mock = MockBackend::new(seed)
                .with_accuracy(c.mock.accuracy)
                .with_herding(c.mock.herd)
                .with_embedding_dim(c.mock.embedding_dim)
                .with_max_batch(c.backend.embed_batch);
            for (m, a) in &c.mock.model_accuracy {
                mock = mock.with_model_accuracy(m.clone(), *a);
            }
            Ok(Backends {
                chat: Box::new(mock.clone()),
                embed: c.embed.then(|| Box::new(mock) as Box<dyn EmbeddingBackend>),
                clock: Box::new(FixedClock::default()),
            })
        }
        BackendKind::Openai => {
            let timeout = Duration::from_secs(c.backend.timeout_s);
            let chat_url = std::env::var(ENV_CHAT_URL)
                .ok()
                .or_else(|| c.backend.chat_url.clone())
                .ok_or_else(|| CliError::validation("backend.chat_url is required for kind = \"openai\""))?;
            let chat = OpenAiChat::new(OpenAiConfig {
                base_url: chat_url.clone(),
                api_key: secret(c.backend.chat_api_key_env.as_deref())?,
                timeout,
            })
            .map_err(CliError::backend)?
            .with_model_override(c.backend.chat_model.clone());
            let embed: Option<Box<dyn EmbeddingBackend>> = if c.embed {
                let url = std::env::var(ENV_EMBED_URL)
                    .ok()
                    .or_else(|| c.backend.embed_url.clone())
                    .unwrap_or(chat_url);
                let model = std::env::var(ENV_EMBED_MODEL)
                    .ok()
                    .or_else(|| c.backend.embed_model.clone())
                    .ok_or_else(|| CliError::validation("backend.embed_model is required when embed = true"))?;
                let key_env = c.backend.embed_api_key_env.as_deref().or(c.backend.chat_api_key_env.as_deref());
                Some(Box::new(
                    OpenAiEmbeddings::new(
                        OpenAiConfig {
                            base_url: url,
                            api_key: secret(key_env)?,
                            timeout,
                        },
                        model,
                        c.backend.embed_batch,
                    )
                    .map_err(CliError::backend)?,
                ))
            } else {
                None
            };
            Ok(Backends {
                chat: Box::new(chat),
                embed,
                clock: Box::new(SystemClock::default()),
            })
        }
    }
}

fn load_tasks(path: &Path, limit: Option<usize>) -> CliResult<Vec<Task>> {
    let mut tasks: Vec<Task> = read_jsonl(path).map_err(CliError::validation)?;
    if tasks.is_empty() {
        return Err(CliError::validation(format!("{}: no tasks", path.display())));
    }
    let mut ids = BTreeSet::new();
    for t in &tasks {
        if !ids.insert(t.id.as_str()) {
            return Err(CliError::validation(format!(
                "{}: duplicate task id {:?}",
                path.display(),
                t.id
            )));
        }
    }
    if let Some(n) = limit {
        tasks.truncate(n);
    }
    Ok(tasks)
}

/// Task ids already present in `path`; errors if any was written under a
/// different config hash.
fn completed_ids(path: &Path, hash: &str) -> CliResult<BTreeSet<String>> {
    if !path.exists() {
        return Ok(BTreeSet::new());
    }
    let existing = read_transcripts(path).map_err(CliError::validation)?;
    if let Some(t) = existing.iter().find(|t| t.config_hash.as_deref() != Some(hash)) {
        return Err(CliError::validation(format!(
            "{} holds task {:?} from a different config (hash {}); use a fresh output_dir",
            path.display(),
            t.task_id,
            t.config_hash.as_deref().unwrap_or("none")
        )));
    }
    Ok(existing.into_iter().map(|t| t.task_id).collect())
}

fn harness_err(e: HarnessError) -> CliError {
    match e {
        HarnessError::Backend(b) => CliError::backend(b),
        other => CliError::validation(other),
    }
}

fn all_calls_failed(t: &Transcript) -> Option<&str> {
    if !t.calls.is_empty() && t.calls.iter().all(|c| c.error.is_some()) {
        t.calls[0].error.as_deref()
    } else {
        None
    }
}

pub fn run(config_path: &Path, seed_override: Option<u64>, output_override: Option<&Path>) -> CliResult<Vec<u8>> {
    let started = Instant::now();
    let mut cfg = config::load(config_path)?;
    if let Some(dir) = output_override {
        cfg.output_dir = dir.to_path_buf();
    }
    let seed = seed_override.unwrap_or(cfg.config.seed);
    if seed != cfg.config.seed {
        // the seed is part of the experiment identity
        cfg.config.seed = seed;
        cfg.hash = config::config_hash(&cfg.config);
    }
    let personas = match &cfg.persona_catalog_path {
        Some(p) => config::load_personas(p)?,
        None => Vec::new(),
    };
    let tasks = load_tasks(&cfg.dataset_path, cfg.config.max_tasks)?;

    // validate every pool before issuing any call
    let mut jobs = Vec::new();
    for &layer in &cfg.layers {
        let plan = DiversityPlan {
            layer,
            model_pool: cfg.config.model_pool.clone(),
            persona_pool: personas.clone(),
            decoding: cfg.config.decoding,
        };
        for &workflow in &cfg.workflows {
            for &n in &cfg.config.n_agents_list {
                let agents = plan.agents(n).map_err(harness_err)?;
                let rounds = match workflow {
                    WorkflowKind::Vote => 1,
                    WorkflowKind::Debate => cfg.config.rounds,
                };
                let spec = WorkflowSpec {
                    kind: workflow,
                    num_agents: n,
                    rounds,
                };
                jobs.push((layer, agents, spec));
            }
        }
    }

    let backends = build_backends(&cfg, seed)?;
    let mut harness = Harness::new(backends.chat.as_ref(), backends.clock.as_ref(), seed);
    harness.retry = RetryPolicy {
        max_retries: cfg.config.backend.max_retries,
        base_delay: Duration::from_millis(cfg.config.backend.retry_base_ms),
    };
    harness.concurrency = cfg.config.concurrency_limit;
    harness.dataset = cfg.dataset_name.clone();
    harness.config_hash = Some(cfg.hash.clone());

    let started_at = backends.clock.timestamp();
    let mut files = Vec::new();
    for (layer, agents, spec) in jobs {
        let path = cfg
            .output_dir
            .join(transcript_file_name(&cfg.dataset_name, layer, spec.kind, spec.num_agents));
        let done = completed_ids(&path, &cfg.hash)?;
        let mut entry = FileEntry {
            path: path.clone(),
            layer: layer.to_string(),
            workflow: spec.kind,
            n_agents: spec.num_agents,
            rounds: spec.rounds,
            tasks_written: 0,
            tasks_skipped: 0,
        };
        for task in &tasks {
            if done.contains(&task.id) {
                entry.tasks_skipped += 1;
                continue;
            }
            let transcript = harness
                .run_workflow(task, layer, &agents, spec)
                .map_err(harness_err)?;
            if let Some(err) = all_calls_failed(&transcript) {
                return Err(CliError::backend(format!(
                    "every call for task {:?} failed after retries: {err}",
                    task.id
                )));
            }
            if let Some(embedder) = &backends.embed {
                let ok: Vec<_> = transcript.calls.iter().filter(|c| c.error.is_none()).collect();
                let texts: Vec<String> = ok.iter().map(|c| c.raw_output.clone()).collect();
                let vectors = fetch_embeddings(&texts, embedder.as_ref(), &harness.retry)
                    .map_err(harness_err)?;
                let records: Vec<EmbeddingRecord> = ok
                    .iter()
                    .zip(vectors)
                    .map(|(c, vector)| EmbeddingRecord {
                        id: call_embedding_id(&task.id, c.call_index),
                        vector,
                    })
                    .collect();
                append_jsonl(&embeddings_path(&path), &records).map_err(CliError::backend)?;
            }
            append_jsonl(&path, std::slice::from_ref(&transcript)).map_err(CliError::backend)?;
            entry.tasks_written += 1;
        }
        log::info!(
            "{}: {} written, {} skipped",
            path.display(),
            entry.tasks_written,
            entry.tasks_skipped
        );
        files.push(entry);
    }

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_path: config_path.to_path_buf(),
        config_hash: cfg.hash.clone(),
        seed,
        dataset: cfg.dataset_name.clone(),
        backend: cfg.config.backend.kind,
        started_at,
        elapsed_ms: started.elapsed().as_millis() as u64,
        files,
    };
    let bytes = to_json(&manifest)?;
    std::fs::create_dir_all(&cfg.output_dir)
        .and_then(|_| std::fs::write(cfg.output_dir.join(MANIFEST_NAME), &bytes))
        .map_err(|e| CliError::backend(format!("{}: {e}", cfg.output_dir.display())))?;
    Ok(bytes)
}
