//! Experiment configuration file and persona catalog.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use effchan::harness::{Decoding, Layer, Persona, WorkflowKind, DEFAULT_DEBATE_ROUNDS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const ENV_CHAT_URL: &str = "EFFCHAN_CHAT_URL";
pub const ENV_EMBED_URL: &str = "EFFCHAN_EMBED_URL";
pub const ENV_EMBED_MODEL: &str = "EFFCHAN_EMBED_MODEL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Openai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub kind: BackendKind,
    pub chat_url: Option<String>,
    /// Name of the environment variable holding the chat API key.
    pub chat_api_key_env: Option<String>,
    /// Send this model name instead of each agent's model id.
    pub chat_model: Option<String>,
    pub embed_url: Option<String>,
    pub embed_model: Option<String>,
    pub embed_api_key_env: Option<String>,
    #[serde(default = "default_embed_batch")]
    pub embed_batch: usize,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
}

fn default_embed_batch() -> usize {
    64
}
fn default_retries() -> u32 {
    3
}
fn default_retry_base_ms() -> u64 {
    1000
}
fn default_timeout_s() -> u64 {
    120
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            chat_url: None,
            chat_api_key_env: None,
            chat_model: None,
            embed_url: None,
            embed_model: None,
            embed_api_key_env: None,
            embed_batch: default_embed_batch(),
            max_retries: default_retries(),
            retry_base_ms: default_retry_base_ms(),
            timeout_s: default_timeout_s(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockConfig {
    #[serde(default = "default_accuracy")]
    pub accuracy: f64,
    #[serde(default)]
    pub model_accuracy: BTreeMap<String, f64>,
    #[serde(default)]
    pub herd: bool,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
}

fn default_accuracy() -> f64 {
    0.6
}
fn default_embedding_dim() -> usize {
    64
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            accuracy: default_accuracy(),
            model_accuracy: BTreeMap::new(),
            herd: false,
            embedding_dim: default_embedding_dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset_path: PathBuf,
    pub dataset_name: Option<String>,
    pub workflow: OneOrMany<String>,
    pub layer: OneOrMany<String>,
    pub n_agents_list: Vec<usize>,
    #[serde(default = "default_rounds")]
    pub rounds: u32,
    pub model_pool: Vec<String>,
    pub persona_catalog_path: Option<PathBuf>,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_concurrency")]
    pub concurrency_limit: usize,
    /// Run only the first `max_tasks` tasks of the dataset.
    pub max_tasks: Option<usize>,
    /// Embed every call output and write the sibling embeddings file.
    #[serde(default = "default_true")]
    pub embed: bool,
    #[serde(default)]
    pub decoding: Decoding,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub mock: MockConfig,
}

fn default_rounds() -> u32 {
    DEFAULT_DEBATE_ROUNDS
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}
fn default_concurrency() -> usize {
    8
}
fn default_true() -> bool {
    true
}

/// A validated config with paths resolved against the config file's directory.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub hash: String,
    pub dataset_name: String,
    pub dataset_path: PathBuf,
    pub persona_catalog_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub layers: Vec<Layer>,
    pub workflows: Vec<WorkflowKind>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// SHA-256 over the canonical JSON form of the parsed config, defaults
/// included, so formatting and comments do not matter.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_vec(cfg).expect("config serializes");
    Sha256::digest(&canonical)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn load(path: &Path) -> CliResult<LoadedConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let config: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let hash = config_hash(&config);
    let base = path.parent().unwrap_or(Path::new("."));

    let layers = config
        .layer
        .to_vec()
        .iter()
        .map(|s| s.parse::<Layer>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::validation)?;
    let workflows = config
        .workflow
        .to_vec()
        .iter()
        .map(|s| s.parse::<WorkflowKind>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::validation)?;
    if layers.is_empty() || workflows.is_empty() {
        return Err(CliError::validation("layer and workflow lists must be nonempty"));
    }
    if config.n_agents_list.is_empty() {
        return Err(CliError::validation("n_agents_list must be nonempty"));
    }
    if config.n_agents_list.contains(&0) {
        return Err(CliError::validation("n_agents_list entries must be >= 1"));
    }
    if config.rounds == 0 {
        return Err(CliError::validation("rounds must be >= 1"));
    }
    if config.model_pool.is_empty() {
        return Err(CliError::validation("model_pool must be nonempty"));
    }
    if config.concurrency_limit == 0 {
        return Err(CliError::validation("concurrency_limit must be >= 1"));
    }
    config.decoding.validate().map_err(CliError::validation)?;

    let dataset_path = resolve(base, &config.dataset_path);
    if !dataset_path.is_file() {
        return Err(CliError::validation(format!(
            "dataset_path {} does not exist",
            dataset_path.display()
        )));
    }
    let persona_catalog_path = config.persona_catalog_path.as_deref().map(|p| resolve(base, p));
    if let Some(p) = &persona_catalog_path {
        if !p.is_file() {
            return Err(CliError::validation(format!(
                "persona_catalog_path {} does not exist",
                p.display()
            )));
        }
    }
    let dataset_name = config.dataset_name.clone().unwrap_or_else(|| {
        dataset_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    });
    let output_dir = resolve(base, &config.output_dir);
    Ok(LoadedConfig {
        hash,
        dataset_name,
        dataset_path,
        persona_catalog_path,
        output_dir,
        layers,
        workflows,
        config,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Catalog {
    #[serde(default)]
    persona: Vec<Persona>,
}

/// Reads a `[[persona]]` TOML catalog. Ids must be unique.
pub fn load_personas(path: &Path) -> CliResult<Vec<Persona>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let catalog: Catalog = toml::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let mut seen = std::collections::BTreeSet::new();
    for p in &catalog.persona {
        if !seen.insert(p.id.as_str()) {
            return Err(CliError::validation(format!(
                "{}: duplicate persona id {:?}",
                path.display(),
                p.id
            )));
        }
    }
    Ok(catalog.persona)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
dataset_path = "tasks.jsonl"
workflow = "vote"
layer = ["L1", "L3"]
n_agents_list = [2, 4]
model_pool = ["m1", "m2"]
seed = 7
"#;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn loads_and_fills_defaults() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "tasks.jsonl", "");
        let cfg = load(&write(dir.path(), "c.toml", MINIMAL)).unwrap();
        assert_eq!(cfg.layers, vec![Layer::L1, Layer::L3]);
        assert_eq!(cfg.workflows, vec![WorkflowKind::Vote]);
        assert_eq!(cfg.config.rounds, 4);
        assert_eq!(cfg.config.decoding, Decoding::default());
        assert_eq!(cfg.dataset_name, "tasks");
        assert_eq!(cfg.output_dir, dir.path().join("runs"));
        assert_eq!(cfg.hash.len(), 64);
    }

    #[test]
    fn hash_ignores_formatting_but_not_values() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "tasks.jsonl", "");
        let a = load(&write(dir.path(), "a.toml", MINIMAL)).unwrap();
        let spaced = format!("# comment\n{}", MINIMAL.replace("seed = 7", "seed=7"));
        let b = load(&write(dir.path(), "b.toml", &spaced)).unwrap();
        let c = load(&write(dir.path(), "c.toml", &MINIMAL.replace("seed = 7", "seed = 8"))).unwrap();
        assert_eq!(a.hash, b.hash);
        assert_ne!(a.hash, c.hash);
    }

    #[test]
    fn rejects_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "tasks.jsonl", "");
        for bad in [
            MINIMAL.replace("\"L3\"", "\"L9\""),
            MINIMAL.replace("seed = 7", ""),
            MINIMAL.replace("[2, 4]", "[]"),
            MINIMAL.replace("tasks.jsonl", "missing.jsonl"),
            format!("{MINIMAL}\nunknown_field = 1\n"),
        ] {
            let err = load(&write(dir.path(), "bad.toml", &bad)).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad}");
        }
    }

    #[test]
    fn persona_catalog() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "p.toml",
            "[[persona]]\nid = \"a\"\ntext = \"A\"\n[[persona]]\nid = \"b\"\ntext = \"B\"\n",
        );
        assert_eq!(load_personas(&p).unwrap().len(), 2);
        let dup = write(
            dir.path(),
            "d.toml",
            "[[persona]]\nid = \"a\"\ntext = \"A\"\n[[persona]]\nid = \"a\"\ntext = \"B\"\n",
        );
        assert!(load_personas(&dup).is_err());
    }
}
