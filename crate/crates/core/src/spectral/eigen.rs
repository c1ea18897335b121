//! Cyclic Jacobi eigenvalue solver for small dense symmetric matrices.
//!
//! Agent pools are at most a few dozen calls, so the O(n³) per sweep cost is
//! irrelevant and the rotation sequence is easy to audit.

use super::SpectralError;

/// Maximum number of full cyclic sweeps before giving up.
pub const SWEEP_BUDGET: usize = 100;

/// Off-diagonal Frobenius norm threshold, scaled by `n`.
pub const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;

/// Dense symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    /// Builds a matrix from rows. Mirror entries must agree to within `1e-12`
    /// (relative to the larger magnitude); the stored matrix takes their mean
    /// so it is exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, SpectralError> {
        let n = rows.len();
        if n == 0 {
            return Err(SpectralError::Empty);
        }
        let mut data = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(SpectralError::DimensionMismatch {
                    row: i,
                    expected: n,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(SpectralError::NonFinite(i));
            }
            data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (data[i * n + j], data[j * n + i]);
                let scale = a.abs().max(b.abs()).max(1.0);
                if (a - b).abs() > 1e-12 * scale {
                    return Err(SpectralError::NotSymmetric { row: i, col: j });
                }
                let mean = 0.5 * (a + b);
                data[i * n + j] = mean;
                data[j * n + i] = mean;
            }
        }
        Ok(Self { n, data })
    }

    /// Assumes `data` is already exactly symmetric.
    pub(crate) fn from_symmetric_data(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(<[f64]>::to_vec).collect()
    }
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[i * n + j] * a[i * n + j];
            }
        }
    }
    sum.sqrt()
}

/// Eigenvalues of a symmetric matrix in descending order.
pub fn jacobi_eigenvalues(matrix: &SymmetricMatrix) -> Result<Vec<f64>, SpectralError> {
    let n = matrix.n;
    let mut a = matrix.data.clone();
    let tolerance = OFF_DIAGONAL_TOLERANCE * n as f64;

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&a, n);
        if off < tolerance {
            break;
        }
        if sweeps == SWEEP_BUDGET {
            return Err(SpectralError::NoConvergence {
                sweeps,
                off_norm: off,
            });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                // A <- A J
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                // A <- Jᵀ A
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
            }
        }
        sweeps += 1;
    }

    let mut eigenvalues: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eigenvalues.sort_by(|x, y| y.total_cmp(x));
    Ok(eigenvalues)
}
