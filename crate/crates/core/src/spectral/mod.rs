//! Effective channel count of a set of agent outputs.
//!
//! Rows are unit-normalized embeddings; their cosine Gram matrix `G` is
//! trace-normalized to a density-like matrix `ρ = G / Tr(G)` and K* is the
//! exponential (base 2) of the von Neumann entropy of `ρ`.

mod eigen;

pub use eigen::{
    jacobi_eigenvalues, SymmetricMatrix, OFF_DIAGONAL_TOLERANCE, SWEEP_BUDGET,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;

/// Rows whose norm falls below this are rejected.
pub const MIN_ROW_NORM: f64 = 1e-12;

/// Eigenvalues of `ρ` in `[-NEGATIVE_EIGEN_TOLERANCE, 0)` are clipped to zero.
pub const NEGATIVE_EIGEN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("no rows supplied")]
    Empty,
    #[error("row {0} has (near) zero norm")]
    ZeroNormVector(usize),
    #[error("row {row} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {0} contains a non-finite value")]
    NonFinite(usize),
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("Jacobi solver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },
    #[error("eigenvalue {0:e} is below the clipping tolerance; input is not a valid Gram matrix")]
    NegativeEigenvalue(f64),
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("mask has length {found}, expected {expected}")]
    MaskLength { expected: usize, found: usize },
}

/// Unit-normalized embedding rows, one per agent call.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    rows: Vec<Vec<f64>>,
    ids: Vec<String>,
}

impl EmbeddingSet {
    /// Normalizes raw vectors; ids default to the row index.
    pub fn normalize(raw: &[Vec<f64>]) -> Result<Self, SpectralError> {
        let ids = (0..raw.len()).map(|i| i.to_string()).collect();
        Self::normalize_with_ids(raw, ids)
    }

    pub fn normalize_with_ids(raw: &[Vec<f64>], ids: Vec<String>) -> Result<Self, SpectralError> {
        if raw.is_empty() {
            return Err(SpectralError::Empty);
        }
        if ids.len() != raw.len() {
            return Err(SpectralError::MaskLength {
                expected: raw.len(),
                found: ids.len(),
            });
        }
        let dim = raw[0].len();
        let mut rows = Vec::with_capacity(raw.len());
        for (i, v) in raw.iter().enumerate() {
            if v.len() != dim || dim == 0 {
                return Err(SpectralError::DimensionMismatch {
                    row: i,
                    expected: dim.max(1),
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(SpectralError::NonFinite(i));
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < MIN_ROW_NORM {
                return Err(SpectralError::ZeroNormVector(i));
            }
            rows.push(v.iter().map(|x| x / norm).collect());
        }
        Ok(Self { rows, ids })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Sub-set of rows at `indices`, or `None` when `indices` is empty.
    pub fn select(&self, indices: &[usize]) -> Option<Self> {
        if indices.is_empty() {
            return None;
        }
        Some(Self {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity matrix of an [`EmbeddingSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    matrix: SymmetricMatrix,
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn as_symmetric(&self) -> &SymmetricMatrix {
        &self.matrix
    }
}

pub fn gram_matrix(emb: &EmbeddingSet) -> GramMatrix {
    let n = emb.len();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let g = dot(&emb.rows[i], &emb.rows[j]);
            data[i * n + j] = g;
            data[j * n + i] = g;
        }
    }
    GramMatrix {
        matrix: SymmetricMatrix::from_symmetric_data(n, data),
    }
}

/// Eigenvalues of a Gram matrix, descending.
pub fn symmetric_eigenvalues(g: &GramMatrix) -> Result<Vec<f64>, SpectralError> {
    jacobi_eigenvalues(&g.matrix)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    /// Spectrum of `ρ`, descending, negatives within tolerance clipped to 0.
    pub eigenvalues: Vec<f64>,
    pub entropy_bits: f64,
    pub k_star: f64,
}

/// Shannon entropy in bits of a probability vector, with `0·log 0 = 0`.
pub fn entropy_bits(probabilities: &[f64]) -> f64 {
    probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

pub fn k_star(emb: &EmbeddingSet) -> Result<SpectralSummary, SpectralError> {
    let n = emb.len();
    if n == 1 {
        return Ok(SpectralSummary {
            eigenvalues: vec![1.0],
            entropy_bits: 0.0,
            k_star: 1.0,
        });
    }
    let g = gram_matrix(emb);
    let trace = g.trace();
    let mut eigenvalues = symmetric_eigenvalues(&g)?;
    for lambda in eigenvalues.iter_mut() {
        *lambda /= trace;
        if *lambda < 0.0 {
            if *lambda < -NEGATIVE_EIGEN_TOLERANCE {
                return Err(SpectralError::NegativeEigenvalue(*lambda));
            }
            *lambda = 0.0;
        }
    }
    let entropy = entropy_bits(&eigenvalues).max(0.0);
    let k = entropy.exp2().clamp(1.0, n as f64);
    Ok(SpectralSummary {
        eigenvalues,
        entropy_bits: entropy,
        k_star: k,
    })
}

/// K* over many independent sets, in input order.
pub fn k_star_batch(
    sets: &[EmbeddingSet],
    exec: Execution,
) -> Vec<Result<SpectralSummary, SpectralError>> {
    exec.map_slice(sets, k_star)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionedKStar {
    pub k_star_c: Option<f64>,
    pub k_star_w: Option<f64>,
}

/// K* restricted to the rows flagged correct and to the remaining rows.
/// An empty side is reported as `None`.
pub fn k_star_conditioned(
    emb: &EmbeddingSet,
    correct_mask: &[bool],
) -> Result<ConditionedKStar, SpectralError> {
    if correct_mask.len() != emb.len() {
        return Err(SpectralError::MaskLength {
            expected: emb.len(),
            found: correct_mask.len(),
        });
    }
    let (correct, wrong): (Vec<usize>, Vec<usize>) =
        (0..emb.len()).partition(|&i| correct_mask[i]);
    let side = |idx: &[usize]| -> Result<Option<f64>, SpectralError> {
        match emb.select(idx) {
            Some(sub) => Ok(Some(k_star(&sub)?.k_star)),
            None => Ok(None),
        }
    };
    Ok(ConditionedKStar {
        k_star_c: side(&correct)?,
        k_star_w: side(&wrong)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RedundancyScore {
    pub mean_pairwise_cosine: f64,
    pub pair_count: usize,
}

pub fn mean_pairwise_cosine(emb: &EmbeddingSet) -> Result<RedundancyScore, SpectralError> {
    let n = emb.len();
    if n < 2 {
        return Err(SpectralError::TooFewRows(n));
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += dot(&emb.rows[i], &emb.rows[j]);
        }
    }
    let pair_count = n * (n - 1) / 2;
    Ok(RedundancyScore {
        mean_pairwise_cosine: (sum / pair_count as f64).clamp(-1.0, 1.0),
        pair_count,
    })
}
