use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use effchan::spectral::{k_star, k_star_conditioned, mean_pairwise_cosine, EmbeddingSet};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::output::{opt, to_csv, to_json, Format};

/// One line of an embeddings file: `{"id": .., "vector": [..]}` or a bare array.
#[derive(Deserialize)]
#[serde(untagged)]
enum Row {
    Record { id: String, vector: Vec<f64> },
    Bare(Vec<f64>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MaskFile {
    List(Vec<bool>),
    ById(BTreeMap<String, bool>),
}

#[derive(Debug, Serialize)]
pub struct KStarOutput {
    pub n: usize,
    pub dim: usize,
    pub eigenvalues: Vec<f64>,
    pub entropy_bits: f64,
    pub k_star: f64,
    pub mean_pairwise_cosine: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditioned: Option<Conditioned>,
}

#[derive(Debug, Serialize)]
pub struct Conditioned {
    pub n_correct: usize,
    pub n_wrong: usize,
    pub k_star_c: Option<f64>,
    pub k_star_w: Option<f64>,
}

fn read_rows(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut expected_dim = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let row: Row = serde_json::from_str(line)
            .map_err(|e| CliError::validation(format!("{}:{lineno}: {e}", path.display())))?;
        let (id, v) = match row {
            Row::Record { id, vector } => (id, vector),
            Row::Bare(v) => (rows.len().to_string(), v),
        };
        let dim = *expected_dim.get_or_insert(v.len());
        if v.len() != dim {
            return Err(CliError::validation(format!(
                "{}:{lineno}: vector has dimension {}, expected {dim}",
                path.display(),
                v.len()
            )));
        }
        if v.iter().all(|x| *x == 0.0) || v.iter().any(|x| !x.is_finite()) {
            return Err(CliError::validation(format!(
                "{}:{lineno}: vector must be finite and nonzero",
                path.display()
            )));
        }
        ids.push(id);
        rows.push(v);
    }
    if rows.is_empty() {
        return Err(CliError::validation(format!("{}: no vectors", path.display())));
    }
    Ok((ids, rows))
}

fn read_mask(path: &Path, ids: &[String]) -> CliResult<Vec<bool>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let mask: MaskFile = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    match mask {
        MaskFile::List(v) if v.len() == ids.len() => Ok(v),
        MaskFile::List(v) => Err(CliError::validation(format!(
            "{}: mask has {} entries for {} vectors",
            path.display(),
            v.len(),
            ids.len()
        ))),
        MaskFile::ById(map) => ids
            .iter()
            .map(|id| {
                map.get(id).copied().ok_or_else(|| {
                    CliError::validation(format!("{}: no mask entry for id {id:?}", path.display()))
                })
            })
            .collect(),
    }
}

pub fn run(embeddings: &Path, mask: Option<&Path>, format: Format) -> CliResult<Vec<u8>> {
    let (ids, rows) = read_rows(embeddings)?;
    let set = EmbeddingSet::normalize_with_ids(&rows, ids.clone()).map_err(CliError::validation)?;
    let summary = k_star(&set).map_err(CliError::validation)?;
    let cosine = mean_pairwise_cosine(&set).ok().map(|r| r.mean_pairwise_cosine);
    let conditioned = match mask {
        Some(p) => {
            let m = read_mask(p, &ids)?;
            let c = k_star_conditioned(&set, &m).map_err(CliError::validation)?;
            let n_correct = m.iter().filter(|&&b| b).count();
            Some(Conditioned {
                n_correct,
                n_wrong: m.len() - n_correct,
                k_star_c: c.k_star_c,
                k_star_w: c.k_star_w,
            })
        }
        None => None,
    };
    let out = KStarOutput {
        n: set.len(),
        dim: set.dim(),
        eigenvalues: summary.eigenvalues,
        entropy_bits: summary.entropy_bits,
        k_star: summary.k_star,
        mean_pairwise_cosine: cosine,
        conditioned,
    };
    match format {
        Format::Json => to_json(&out),
        Format::Csv => to_csv(
            &["n", "dim", "entropy_bits", "k_star", "mean_pairwise_cosine", "k_star_c", "k_star_w"],
            &[vec![
                out.n.to_string(),
                out.dim.to_string(),
                out.entropy_bits.to_string(),
                out.k_star.to_string(),
                opt(out.mean_pairwise_cosine),
                opt(out.conditioned.as_ref().and_then(|c| c.k_star_c)),
                opt(out.conditioned.as_ref().and_then(|c| c.k_star_w)),
            ]],
        ),
    }
}
