//! Ordinary least squares with an intercept, and incremental R².

use serde::{Deserialize, Serialize};

use super::stats::mean;
use super::AnalysisError;

/// Ridge jitter added to the diagonal of the (column-scaled) Gram matrix.
pub const RIDGE_JITTER: f64 = 1e-10;

/// Named feature columns, stored row-major.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, AnalysisError> {
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != names.len()) {
            return Err(AnalysisError::DegenerateInput(format!(
                "row {i} has {} columns, expected {}",
                r.len(),
                names.len()
            )));
        }
        Ok(Self { names, rows })
    }

    /// A matrix with `n_rows` rows and no columns.
    pub fn empty(n_rows: usize) -> Self {
        Self {
            names: Vec::new(),
            rows: vec![Vec::new(); n_rows],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    /// Columns of `self` followed by columns of `other`.
    pub fn hstack(&self, other: &FeatureMatrix) -> Result<Self, AnalysisError> {
        if self.n_rows() != other.n_rows() {
            return Err(AnalysisError::DegenerateInput(format!(
                "row count mismatch: {} vs {}",
                self.n_rows(),
                other.n_rows()
            )));
        }
        Ok(Self {
            names: self.names.iter().chain(&other.names).cloned().collect(),
            rows: self
                .rows
                .iter()
                .zip(&other.rows)
                .map(|(a, b)| a.iter().chain(b).copied().collect())
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub intercept: f64,
    /// `(name, coefficient)` in column order.
    pub coefficients: Vec<(String, f64)>,
    pub r2: f64,
    /// Absent when the fit has no residual degrees of freedom.
    pub adj_r2: Option<f64>,
    pub rss: f64,
    pub n_obs: usize,
}

impl OlsFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .map(|((_, b), x)| b * x)
                .sum::<f64>()
    }
}

/// In-place Cholesky factorization of a row-major SPD matrix (lower factor).
fn cholesky(a: &mut [f64], p: usize) -> Result<(), AnalysisError> {
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= a[j * p + k] * a[j * p + k];
        }
        if d.is_nan() || d <= 0.0 || d.is_infinite() {
            return Err(AnalysisError::SingularDesign);
        }
        let d = d.sqrt();
        a[j * p + j] = d;
        for i in (j + 1)..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = s / d;
        }
    }
    Ok(())
}

fn cholesky_solve(l: &[f64], p: usize, b: &mut [f64]) {
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * b[k];
        }
        b[i] = s / l[i * p + i];
    }
    for i in (0..p).rev() {
        let mut s = b[i];
        for k in (i + 1)..p {
            s -= l[k * p + i] * b[k];
        }
        b[i] = s / l[i * p + i];
    }
}

/// OLS with intercept via the normal equations on centered, unit-norm
/// columns plus a `1e-10` ridge on the diagonal.
pub fn ols_fit(features: &FeatureMatrix, target: &[f64]) -> Result<OlsFit, AnalysisError> {
    let n = target.len();
    let p = features.n_cols();
    if features.n_rows() != n {
        return Err(AnalysisError::DegenerateInput(format!(
            "{} feature rows for {n} targets",
            features.n_rows()
        )));
    }
    if n < p + 1 || n < 2 {
        return Err(AnalysisError::DegenerateInput(format!(
            "{n} observations cannot support {p} features plus an intercept"
        )));
    }
    if target.iter().chain(features.rows.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(AnalysisError::DegenerateInput("non-finite value".into()));
    }
    let y_mean = mean(target);
    let yc: Vec<f64> = target.iter().map(|y| y - y_mean).collect();
    let sst: f64 = yc.iter().map(|v| v * v).sum();
    if sst == 0.0 {
        return Err(AnalysisError::DegenerateInput("target has zero variance".into()));
    }

    let col_mean: Vec<f64> = (0..p)
        .map(|j| features.rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mut xc: Vec<Vec<f64>> = (0..p)
        .map(|j| features.rows.iter().map(|r| r[j] - col_mean[j]).collect())
        .collect();
    let mut scale = vec![1.0; p];
    for (j, col) in xc.iter_mut().enumerate() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(AnalysisError::DegenerateInput(format!(
                "column {:?} is constant",
                features.names[j]
            )));
        }
        col.iter_mut().for_each(|v| *v /= norm);
        scale[j] = norm;
    }

    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    for a in 0..p {
        for b in a..p {
            let v: f64 = xc[a].iter().zip(&xc[b]).map(|(u, w)| u * w).sum();
            gram[a * p + b] = v;
            gram[b * p + a] = v;
        }
        gram[a * p + a] += RIDGE_JITTER;
        rhs[a] = xc[a].iter().zip(&yc).map(|(u, w)| u * w).sum();
    }
    cholesky(&mut gram, p)?;
    cholesky_solve(&gram, p, &mut rhs);

    let beta: Vec<f64> = rhs.iter().zip(&scale).map(|(b, s)| b / s).collect();
    let intercept = y_mean - beta.iter().zip(&col_mean).map(|(b, m)| b * m).sum::<f64>();
    let mut fit = OlsFit {
        intercept,
        coefficients: features.names.iter().cloned().zip(beta).collect(),
        r2: 0.0,
        adj_r2: None,
        rss: 0.0,
        n_obs: n,
    };
    fit.rss = features
        .rows
        .iter()
        .zip(target)
        .map(|(r, y)| (y - fit.predict(r)).powi(2))
        .sum();
    fit.r2 = (1.0 - fit.rss / sst).clamp(0.0, 1.0);
    fit.adj_r2 = (n > p + 1).then(|| 1.0 - (1.0 - fit.r2) * (n - 1) as f64 / (n - p - 1) as f64);
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub r2_baseline: f64,
    pub r2_augmented: f64,
    pub delta_r2: f64,
    pub adj_r2_baseline: Option<f64>,
    pub adj_r2_augmented: Option<f64>,
    /// Coefficients of the augmented model, intercept first.
    pub coefficients: Vec<(String, f64)>,
    pub n_obs: usize,
}

/// R² of `target` on the base features, then on base + extra.
pub fn ols_incremental_r2(
    base: &FeatureMatrix,
    extra: &FeatureMatrix,
    target: &[f64],
) -> Result<RegressionReport, AnalysisError> {
    let baseline = ols_fit(base, target)?;
    let augmented = ols_fit(&base.hstack(extra)?, target)?;
    let mut coefficients = vec![("intercept".to_string(), augmented.intercept)];
    coefficients.extend(augmented.coefficients.iter().cloned());
    Ok(RegressionReport {
        r2_baseline: baseline.r2,
        r2_augmented: augmented.r2,
        delta_r2: augmented.r2 - baseline.r2,
        adj_r2_baseline: baseline.adj_r2,
        adj_r2_augmented: augmented.adj_r2,
        coefficients,
        n_obs: target.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(names: &[&str], rows: Vec<Vec<f64>>) -> FeatureMatrix {
        FeatureMatrix::new(names.iter().map(|s| s.to_string()).collect(), rows).unwrap()
    }

    #[test]
    fn exact_fit_on_extra_feature() {
        // base column orthogonal to the extra one after centering
        let base = matrix(&["b"], vec![vec![1.0], vec![-1.0], vec![1.0], vec![-1.0], vec![0.0]]);
        let extra = matrix(&["e"], vec![vec![1.0], vec![1.0], vec![-1.0], vec![-1.0], vec![0.0]]);
        let y: Vec<f64> = extra.rows.iter().map(|r| 3.0 * r[0] + 2.0).collect();
        let rep = ols_incremental_r2(&base, &extra, &y).unwrap();
        assert!((rep.r2_augmented - 1.0).abs() < 1e-12);
        assert!(rep.r2_baseline.abs() < 1e-12);
        assert!((rep.delta_r2 - (1.0 - rep.r2_baseline)).abs() < 1e-12);
    }

    #[test]
    fn duplicated_feature_adds_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] - 2.0 * r[1] + rng.random::<f64>()).collect();
        let base = matrix(&["a", "b"], rows.clone());
        let extra = matrix(&["a_copy"], rows.iter().map(|r| vec![r[0]]).collect());
        let rep = ols_incremental_r2(&base, &extra, &y).unwrap();
        assert!(rep.delta_r2 <= 1e-9, "{rep:?}");
        assert!(rep.delta_r2 >= -1e-9);
    }

    #[test]
    fn intercept_only_baseline() {
        let y = [1.0, 2.0, 4.0];
        let fit = ols_fit(&FeatureMatrix::empty(3), &y).unwrap();
        assert_eq!(fit.r2, 0.0);
        assert!((fit.intercept - 7.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_designs() {
        let base = matrix(&["c"], vec![vec![2.0]; 5]);
        assert!(ols_fit(&base, &[1.0, 2.0, 3.0, 4.0, 5.0]).is_err());
        let base = matrix(&["a", "b"], vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(ols_fit(&base, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cholesky_flags_indefinite() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        assert!(matches!(cholesky(&mut a, 2), Err(AnalysisError::SingularDesign)));
    }
}
