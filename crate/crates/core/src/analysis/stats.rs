//! Correlation measures and the permutation test.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::exec::Execution;

fn check_pair(x: &[f64], y: &[f64], min_len: usize) -> Result<(), AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::DegenerateInput(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < min_len {
        return Err(AnalysisError::DegenerateInput(format!(
            "need at least {min_len} observations, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(AnalysisError::DegenerateInput("non-finite value".into()));
    }
    Ok(())
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalysisError::DegenerateInput("zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Sample Pearson correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    check_pair(x, y, 3)?;
    pearson_unchecked(x, y)
}

/// 1-based ranks with ties sharing the average of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their mean rank
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation: Pearson r of average ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    check_pair(x, y, 3)?;
    pearson_unchecked(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationReport {
    pub observed_r: f64,
    pub null_mean: f64,
    pub null_std: f64,
    pub z_score: f64,
    pub p_value: f64,
    pub shuffles: usize,
    pub seed: u64,
}

/// Permutation test for Pearson r. Shuffle `s` draws from its own ChaCha
/// stream, so results do not depend on the execution strategy.
pub fn permutation_test(
    x: &[f64],
    y: &[f64],
    shuffles: usize,
    seed: u64,
) -> Result<PermutationReport, AnalysisError> {
    permutation_test_with(x, y, shuffles, seed, Execution::default())
}

pub fn permutation_test_with(
    x: &[f64],
    y: &[f64],
    shuffles: usize,
    seed: u64,
    exec: Execution,
) -> Result<PermutationReport, AnalysisError> {
    check_pair(x, y, 5)?;
    if shuffles == 0 {
        return Err(AnalysisError::DegenerateInput("shuffles must be positive".into()));
    }
    let observed_r = pearson_unchecked(x, y)?;
    let null: Vec<f64> = exec.map_indexed(shuffles, |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64);
        let mut shuffled = y.to_vec();
        shuffled.shuffle(&mut rng);
        // variance is permutation invariant, so this cannot fail
        pearson_unchecked(x, &shuffled).unwrap_or(0.0)
    });
    let null_mean = mean(&null);
    let null_std = if shuffles > 1 {
        (null.iter().map(|r| (r - null_mean).powi(2)).sum::<f64>() / (shuffles - 1) as f64).sqrt()
    } else {
        0.0
    };
    if null_std == 0.0 {
        return Err(AnalysisError::DegenerateInput(
            "null distribution has zero spread".into(),
        ));
    }
    let extreme = null.iter().filter(|r| r.abs() >= observed_r.abs()).count();
    Ok(PermutationReport {
        observed_r,
        null_mean,
        null_std,
        z_score: (observed_r - null_mean) / null_std,
        p_value: (extreme + 1) as f64 / (shuffles + 1) as f64,
        shuffles,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pearson_fixtures() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let up: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let down: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &up).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_r(&x, &down).unwrap() + 1.0).abs() < 1e-15);

        // direct evaluation: sxy = 8, sxx = syy = 10
        let y = [2.0, 1.0, 4.0, 3.0, 5.0];
        let expected = 8.0 / (10.0f64 * 10.0).sqrt();
        assert!((pearson_r(&x, &y).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn pearson_rejects_degenerate() {
        assert!(pearson_r(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(pearson_r(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(pearson_r(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 30.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(average_ranks(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
        let x = [10.0, 20.0, 20.0, 30.0];
        let y = [1.0, 2.0, 3.0, 4.0];
        let hand = pearson_r(&[1.0, 2.5, 2.5, 4.0], &y).unwrap();
        assert_eq!(spearman_rho(&x, &y).unwrap(), hand);
    }

    #[test]
    fn spearman_extremes() {
        let x = [0.5, 1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| v.powi(3)).collect();
        assert_eq!(spearman_rho(&x, &y).unwrap(), 1.0);
        let rev: Vec<f64> = x.iter().rev().cloned().collect();
        assert_eq!(spearman_rho(&x, &rev).unwrap(), -1.0);
    }

    #[test]
    fn permutation_on_identical_series() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let rep = permutation_test(&x, &x, 1000, 3).unwrap();
        assert!(rep.p_value <= 0.002, "{rep:?}");
        assert!((rep.z_score - (rep.observed_r - rep.null_mean) / rep.null_std).abs() < 1e-12);
        assert!(permutation_test(&x, &x, 0, 3).is_err());
    }

    #[test]
    fn permutation_is_execution_independent() {
        let x: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).sin()).collect();
        let y: Vec<f64> = (0..30).map(|i| (i as f64 * 1.3).cos()).collect();
        let a = permutation_test_with(&x, &y, 500, 11, Execution::Sequential).unwrap();
        let b = permutation_test_with(&x, &y, 500, 11, Execution::default()).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn pearson_symmetry_and_scale(
            pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..30),
            a in prop_oneof![-50.0f64..-0.1, 0.1f64..50.0],
            b in -100.0f64..100.0,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            if let (Ok(rxy), Ok(ryx)) = (pearson_r(&x, &y), pearson_r(&y, &x)) {
                prop_assert!((rxy - ryx).abs() <= 1e-12);
                let scaled: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                let rs = pearson_r(&scaled, &y).unwrap();
                prop_assert!((rs - a.signum() * rxy).abs() <= 1e-9);
            }
        }

        #[test]
        fn spearman_monotone_invariance(
            pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..30),
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let fx: Vec<f64> = x.iter().map(|v| v.exp() + 3.0 * v).collect();
            match (spearman_rho(&x, &y), spearman_rho(&fx, &y)) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "{other:?}"),
            }
        }
    }
}
