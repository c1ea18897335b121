//! Append-only JSONL stores for transcripts and embeddings.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::workflow::{Transcript, WorkflowKind, TRANSCRIPT_SCHEMA};
use crate::harness::Layer;

pub const EMBEDDINGS_SUFFIX: &str = ".embeddings.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Appends one JSON line per record, creating the file and parent directory.
pub fn append_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), StoreError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| StoreError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Reads every non-blank line; errors carry the 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| StoreError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct SchemaProbe {
    schema: Option<u32>,
}

/// Reads transcripts, rejecting lines whose `schema` is missing or unknown.
pub fn read_transcripts(path: &Path) -> Result<Vec<Transcript>, StoreError> {
    let probes: Vec<SchemaProbe> = read_jsonl(path)?;
    if let Some(i) = probes.iter().position(|p| p.schema != Some(TRANSCRIPT_SCHEMA)) {
        return Err(StoreError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!(
                "unsupported transcript schema {:?}, expected {TRANSCRIPT_SCHEMA}",
                probes[i].schema
            ),
        });
    }
    read_jsonl(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub vector: Vec<f64>,
}

/// Id of the embedding of one call in one task.
pub fn call_embedding_id(task_id: &str, call_index: usize) -> String {
    format!("{task_id}:{call_index}")
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>, StoreError> {
    read_jsonl(path)
}

/// Id → vector; a repeated id keeps its last occurrence.
pub fn read_embedding_map(path: &Path) -> Result<BTreeMap<String, Vec<f64>>, StoreError> {
    Ok(read_embeddings(path)?
        .into_iter()
        .map(|r| (r.id, r.vector))
        .collect())
}

pub fn transcript_file_name(dataset: &str, layer: Layer, workflow: WorkflowKind, n_agents: usize) -> String {
    let safe: String = dataset
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    format!("{safe}_{layer}_{workflow}_N{n_agents}.jsonl")
}

/// `runs/x.jsonl` → `runs/x.embeddings.jsonl`.
pub fn embeddings_path(transcript_path: &Path) -> PathBuf {
    let name = transcript_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = name.strip_suffix(".jsonl").unwrap_or(&name);
    transcript_path.with_file_name(format!("{stem}{EMBEDDINGS_SUFFIX}"))
}

/// Transcript files in `dir` (not recursive), sorted by name.
pub fn list_transcript_files(dir: &Path) -> Result<Vec<PathBuf>, StoreError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            p.is_file() && name.ends_with(".jsonl") && !name.ends_with(EMBEDDINGS_SUFFIX)
        })
        .collect();
    files.sort();
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/e.jsonl");
        let a = EmbeddingRecord {
            id: "t:0".into(),
            vector: vec![0.1, -2.5],
        };
        let b = EmbeddingRecord {
            id: "t:0".into(),
            vector: vec![1.0, 0.0],
        };
        append_jsonl(&path, std::slice::from_ref(&a)).unwrap();
        append_jsonl(&path, std::slice::from_ref(&b)).unwrap();
        assert_eq!(read_embeddings(&path).unwrap(), vec![a, b.clone()]);
        assert_eq!(read_embedding_map(&path).unwrap()["t:0"], b.vector);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        fs::write(&path, "{\"id\":\"a\",\"vector\":[1]}\n\n{\"id\":\"b\",\"vector\":[1,}\n").unwrap();
        match read_embeddings(&path).unwrap_err() {
            StoreError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn schema_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        fs::write(&path, "{\"schema\":2}\n").unwrap();
        let err = read_transcripts(&path).unwrap_err();
        assert!(err.to_string().contains("schema"));
    }

    #[test]
    fn naming() {
        let name = transcript_file_name("gsm 8k", Layer::L3, WorkflowKind::Debate, 12);
        assert_eq!(name, "gsm_8k_L3_debate_N12.jsonl");
        assert_eq!(
            embeddings_path(Path::new("runs/gsm_L1_vote_N2.jsonl")),
            PathBuf::from("runs/gsm_L1_vote_N2.embeddings.jsonl")
        );
    }
}
