//! Evidence-coverage model: `M` independent evidence bits, each revealed by
//! every effective channel independently with probability `α`.
//!
//! The simulator estimates the expected residual entropy fraction after `K`
//! channels, which the model predicts to be `(1−α)^K`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;

/// Trials reduced together before chunk results are combined in order.
const TRIALS_PER_CHUNK: usize = 1024;

pub const DEFAULT_TRIALS: usize = 100_000;
pub const DEFAULT_NUM_BITS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverageError {
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("bad curve: {0}")]
    BadCurve(String),
    #[error("all recovered fractions are equal; alpha is not identifiable")]
    DegenerateCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageParams {
    /// `H(U_j | X)` per bit, in bits.
    pub bit_entropies: Vec<f64>,
    /// `H(Y | X)`; must equal the sum of `bit_entropies`.
    pub h_y_given_x: f64,
    pub alpha: f64,
    /// Largest channel count simulated; the curve covers `0..=num_channels`.
    pub num_channels: u32,
    pub seed: u64,
}

impl CoverageParams {
    pub fn new(
        bit_entropies: Vec<f64>,
        h_y_given_x: f64,
        alpha: f64,
        num_channels: u32,
        seed: u64,
    ) -> Result<Self, CoverageError> {
        let params = Self {
            bit_entropies,
            h_y_given_x,
            alpha,
            num_channels,
            seed,
        };
        params.validate()?;
        Ok(params)
    }

    /// `num_bits` bits of equal entropy summing to `h_y_given_x`.
    pub fn uniform(
        num_bits: usize,
        h_y_given_x: f64,
        alpha: f64,
        num_channels: u32,
        seed: u64,
    ) -> Result<Self, CoverageError> {
        if num_bits == 0 {
            return Err(CoverageError::BadParams("need at least one evidence bit".into()));
        }
        let per_bit = h_y_given_x / num_bits as f64;
        let bits = vec![per_bit; num_bits];
        let total: f64 = bits.iter().sum();
        Self::new(bits, total, alpha, num_channels, seed)
    }

    pub fn num_bits(&self) -> usize {
        self.bit_entropies.len()
    }

    pub fn validate(&self) -> Result<(), CoverageError> {
        let bad = |m: String| Err(CoverageError::BadParams(m));
        if self.bit_entropies.is_empty() {
            return bad("need at least one evidence bit".into());
        }
        if self.bit_entropies.iter().any(|h| !h.is_finite() || *h < 0.0) {
            return bad("bit entropies must be finite and nonnegative".into());
        }
        let total = self.total_entropy();
        if total <= 0.0 {
            return bad("total evidence entropy must be positive".into());
        }
        let consistent = (total - self.h_y_given_x).abs() <= 1e-9 * self.h_y_given_x.abs().max(1.0);
        if !consistent {
            return bad(format!(
                "bit entropies sum to {total}, but H(Y|X) is {}",
                self.h_y_given_x
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        Ok(())
    }

    fn total_entropy(&self) -> f64 {
        self.bit_entropies.iter().sum()
    }
}

/// State of one trial after all channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageOutcome {
    pub residual_bits: f64,
    pub covered_mask: Vec<bool>,
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Runs one trial; `residuals[k]` receives the uncovered entropy after `k` channels.
fn run_trial(params: &CoverageParams, trial: u64, residuals: &mut [f64], covered: &mut [bool]) {
    let mut rng = trial_rng(params.seed, trial);
    covered.iter_mut().for_each(|c| *c = false);
    let uncovered_sum = |covered: &[bool]| -> f64 {
        params
            .bit_entropies
            .iter()
            .zip(covered)
            .filter(|(_, c)| !**c)
            .map(|(h, _)| *h)
            .sum()
    };
    residuals[0] = uncovered_sum(covered);
    for slot in residuals.iter_mut().skip(1) {
        for c in covered.iter_mut() {
            // one draw per (channel, bit) so the stream layout never depends on state
            let hit = rng.random::<f64>() < params.alpha;
            *c |= hit;
        }
        *slot = uncovered_sum(covered);
    }
}

/// Outcome of a single trial with `params.num_channels` channels.
pub fn coverage_trial(params: &CoverageParams, trial: u64) -> Result<CoverageOutcome, CoverageError> {
    params.validate()?;
    let mut residuals = vec![0.0; params.num_channels as usize + 1];
    let mut covered = vec![false; params.num_bits()];
    run_trial(params, trial, &mut residuals, &mut covered);
    Ok(CoverageOutcome {
        residual_bits: *residuals.last().expect("at least K = 0"),
        covered_mask: covered,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionCurve {
    pub alpha: f64,
    pub k_values: Vec<u32>,
    pub mean_residual_fraction: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `(1−α)^K`
    pub bound_fraction: Vec<f64>,
    /// `e^{−αK}`
    pub exp_bound_fraction: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl ContractionCurve {
    /// CSV with header `k,mean_residual_fraction,stderr,geo_bound,exp_bound`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "mean_residual_fraction", "stderr", "geo_bound", "exp_bound"])?;
        for i in 0..self.k_values.len() {
            w.serialize((
                self.k_values[i],
                self.mean_residual_fraction[i],
                self.stderr[i],
                self.bound_fraction[i],
                self.exp_bound_fraction[i],
            ))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn simulate_coverage(params: &CoverageParams, trials: usize) -> Result<ContractionCurve, CoverageError> {
    simulate_coverage_with(params, trials, Execution::default())
}

pub fn simulate_coverage_with(
    params: &CoverageParams,
    trials: usize,
    exec: Execution,
) -> Result<ContractionCurve, CoverageError> {
    params.validate()?;
    if trials == 0 {
        return Err(CoverageError::BadParams("trials must be >= 1".into()));
    }
    let points = params.num_channels as usize + 1;
    let total = params.total_entropy();
    let chunks = trials.div_ceil(TRIALS_PER_CHUNK);

    let partials: Vec<(Vec<f64>, Vec<f64>)> = exec.map_indexed(chunks, |chunk| {
        let start = chunk * TRIALS_PER_CHUNK;
        let end = (start + TRIALS_PER_CHUNK).min(trials);
        let mut sum = vec![0.0; points];
        let mut sum_sq = vec![0.0; points];
        let mut residuals = vec![0.0; points];
        let mut covered = vec![false; params.num_bits()];
        for trial in start..end {
            run_trial(params, trial as u64, &mut residuals, &mut covered);
            for k in 0..points {
                let f = residuals[k] / total;
                sum[k] += f;
                sum_sq[k] += f * f;
            }
        }
        (sum, sum_sq)
    });

    let mut sum = vec![0.0; points];
    let mut sum_sq = vec![0.0; points];
    for (s, sq) in &partials {
        for k in 0..points {
            sum[k] += s[k];
            sum_sq[k] += sq[k];
        }
    }

    let n = trials as f64;
    let mut mean = Vec::with_capacity(points);
    let mut stderr = Vec::with_capacity(points);
    for k in 0..points {
        let m = sum[k] / n;
        let var = if trials > 1 {
            ((sum_sq[k] - n * m * m) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        mean.push(m);
        stderr.push((var / n).sqrt());
    }

    let k_values: Vec<u32> = (0..=params.num_channels).collect();
    let (bound_fraction, exp_bound_fraction) = k_values
        .iter()
        .map(|&k| analytic_bounds(params.alpha, k))
        .unzip();
    Ok(ContractionCurve {
        alpha: params.alpha,
        k_values,
        mean_residual_fraction: mean,
        stderr,
        bound_fraction,
        exp_bound_fraction,
        trials,
        seed: params.seed,
    })
}

/// `((1−α)^k, e^{−αk})` for `0 < α < 1`.
///
/// The geometric term is evaluated as `exp(k·ln(1−α))`, which keeps the
/// ordering `geo <= expo` intact in floating point.
pub fn analytic_bounds(alpha: f64, k: u32) -> (f64, f64) {
    let k = f64::from(k);
    ((k * (-alpha).ln_1p()).exp(), (-alpha * k).exp())
}

/// `(1−e^{−α})·e^{−αk}`: information gained by channel `k + 1` (normalized).
pub fn marginal_gain(alpha: f64, k: u32) -> f64 {
    -(-alpha).exp_m1() * (-alpha * f64::from(k)).exp()
}

/// Recovered-information lower bound `H·(1−e^{−αK})`.
pub fn recovery_lower_bound(alpha: f64, k: f64, h_y_given_x: f64) -> f64 {
    -h_y_given_x * (-alpha * k).exp_m1()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub label: String,
    pub alpha: f64,
    /// Effective channel count; real-valued so measured K* can be used directly.
    pub k: f64,
}

impl Design {
    pub fn new(label: impl Into<String>, alpha: f64, k: f64) -> Self {
        Self {
            label: label.into(),
            alpha,
            k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Winner {
    First,
    Second,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignComparison {
    pub lb_a: f64,
    pub lb_b: f64,
    pub winner: Winner,
    /// Label of the winning design, or `"tie"`.
    pub winner_label: String,
}

/// Ties in `αK` within this absolute tolerance are reported as [`Winner::Tie`].
pub const PRODUCT_TIE_TOLERANCE: f64 = 1e-12;

pub fn compare_designs(a: &Design, b: &Design, h_y_given_x: f64) -> DesignComparison {
    let (pa, pb) = (a.alpha * a.k, b.alpha * b.k);
    let winner = if (pa - pb).abs() <= PRODUCT_TIE_TOLERANCE {
        Winner::Tie
    } else if pa > pb {
        Winner::First
    } else {
        Winner::Second
    };
    let winner_label = match winner {
        Winner::First => a.label.clone(),
        Winner::Second => b.label.clone(),
        Winner::Tie => "tie".to_string(),
    };
    DesignComparison {
        lb_a: recovery_lower_bound(a.alpha, a.k, h_y_given_x),
        lb_b: recovery_lower_bound(b.alpha, b.k, h_y_given_x),
        winner,
        winner_label,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaFit {
    pub alpha_hat: f64,
    pub rss: f64,
    /// Always `"model fit"`: the value is a least-squares fit of the coverage
    /// curve, not a direct measurement.
    pub label: String,
}

const FIT_GRID_POINTS: usize = 400;
const FIT_ALPHA_MIN: f64 = 1e-4;
const FIT_ALPHA_MAX: f64 = 1.0;

fn fit_rss(points: &[(f64, f64)], alpha: f64) -> f64 {
    points
        .iter()
        .map(|&(k, f)| {
            let r = f + (-alpha * k).exp_m1();
            r * r
        })
        .sum()
}

/// Least-squares fit of `1 − e^{−αk}` to `(k, recovered_fraction)` points:
/// log-spaced grid search followed by golden-section refinement.
pub fn fit_alpha(points: &[(f64, f64)]) -> Result<AlphaFit, CoverageError> {
    if points.len() < 2 {
        return Err(CoverageError::BadCurve("need at least 2 points".into()));
    }
    for (i, &(k, f)) in points.iter().enumerate() {
        if !k.is_finite() || k < 0.0 {
            return Err(CoverageError::BadCurve(format!("point {i}: k must be finite and >= 0")));
        }
        if !(0.0..=1.0).contains(&f) {
            return Err(CoverageError::BadCurve(format!(
                "point {i}: fraction {f} outside [0, 1]"
            )));
        }
        if points[..i].iter().any(|&(k2, _)| k2 == k) {
            return Err(CoverageError::BadCurve(format!("duplicate k = {k}")));
        }
    }
    if points.iter().all(|&(_, f)| f == points[0].1) {
        return Err(CoverageError::DegenerateCurve);
    }

    let ratio = (FIT_ALPHA_MAX / FIT_ALPHA_MIN).ln() / (FIT_GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..FIT_GRID_POINTS)
        .map(|i| FIT_ALPHA_MIN * (ratio * i as f64).exp())
        .collect();
    let best = grid
        .iter()
        .enumerate()
        .map(|(i, &a)| (i, fit_rss(points, a)))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(i, _)| i)
        .expect("nonempty grid");

    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(grid.len() - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (fit_rss(points, c), fit_rss(points, d));
    for _ in 0..200 {
        if hi - lo < 1e-14 {
            break;
        }
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = fit_rss(points, c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = fit_rss(points, d);
        }
    }
    let mut alpha_hat = 0.5 * (lo + hi);
    let mut rss = fit_rss(points, alpha_hat);
    // keep the grid point if refinement wandered off a flat region
    let grid_rss = fit_rss(points, grid[best]);
    if grid_rss < rss {
        alpha_hat = grid[best];
        rss = grid_rss;
    }
    Ok(AlphaFit {
        alpha_hat,
        rss,
        label: "model fit".to_string(),
    })
}
