//! Exact information quantities on small finite joint distributions.
//!
//! A [`DiscreteJoint`] is a dense probability table over `(X, Y, Z_1, …, Z_n)`:
//! task input, answer, and the outputs of `n` agent calls. Everything here is
//! computed by enumeration, in bits.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest product-space size accepted.
pub const MAX_TABLE_SIZE: usize = 10_000_000;

/// Tolerance on the total probability mass.
pub const MASS_TOLERANCE: f64 = 1e-10;

/// Information values in `[-NEGATIVE_INFO_TOLERANCE, 0)` are clipped to zero.
pub const NEGATIVE_INFO_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfoError {
    #[error("invalid variable: {0}")]
    InvalidVariable(String),
    #[error("alphabet sizes must all be >= 1 and there must be at least X and Y")]
    BadAlphabets,
    #[error("product space has {0} cells, limit is {MAX_TABLE_SIZE}")]
    TooLarge(usize),
    #[error("table has {found} entries, alphabets imply {expected}")]
    WrongLength { expected: usize, found: usize },
    #[error("probability at cell {0} is negative or not finite")]
    BadProbability(usize),
    #[error("probabilities sum to {0}, expected 1")]
    BadMass(f64),
    #[error("information value {0:e} is negative beyond rounding tolerance")]
    NegativeInformation(f64),
    #[error("joint has {available} calls, {requested} requested")]
    NotEnoughCalls { available: usize, requested: usize },
    #[error("type profile: {0}")]
    BadProfile(String),
}

/// A random variable of the joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    X,
    Y,
    /// Output of call `i` (0-based).
    Z(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    alphabets: Vec<usize>,
    probs: Vec<f64>,
}

/// JSON layout: `{"alphabets": [|X|, |Y|, |Z_1|, ...], "probs": [...]}`, row-major
/// with the last variable varying fastest. Optional `"types"` labels each call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointFile {
    pub alphabets: Vec<usize>,
    pub probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub types: Option<Vec<String>>,
}

impl DiscreteJoint {
    pub fn new(alphabets: Vec<usize>, probs: Vec<f64>) -> Result<Self, InfoError> {
        if alphabets.len() < 2 || alphabets.contains(&0) {
            return Err(InfoError::BadAlphabets);
        }
        let mut size: usize = 1;
        for &a in &alphabets {
            size = size
                .checked_mul(a)
                .filter(|&s| s <= MAX_TABLE_SIZE)
                .ok_or(InfoError::TooLarge(size.saturating_mul(a)))?;
        }
        if probs.len() != size {
            return Err(InfoError::WrongLength {
                expected: size,
                found: probs.len(),
            });
        }
        if let Some(i) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(InfoError::BadProbability(i));
        }
        let mass: f64 = probs.iter().sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(InfoError::BadMass(mass));
        }
        Ok(Self { alphabets, probs })
    }

    pub fn from_file(file: &JointFile) -> Result<Self, InfoError> {
        Self::new(file.alphabets.clone(), file.probs.clone())
    }

    pub fn to_file(&self) -> JointFile {
        JointFile {
            alphabets: self.alphabets.clone(),
            probs: self.probs.clone(),
            types: None,
        }
    }

    pub fn alphabets(&self) -> &[usize] {
        &self.alphabets
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_calls(&self) -> usize {
        self.alphabets.len() - 2
    }

    pub fn alphabet(&self, var: Var) -> Result<usize, InfoError> {
        Ok(self.alphabets[self.axis(var)?])
    }

    fn axis(&self, var: Var) -> Result<usize, InfoError> {
        match var {
            Var::X => Ok(0),
            Var::Y => Ok(1),
            Var::Z(i) if i < self.num_calls() => Ok(2 + i),
            Var::Z(i) => Err(InfoError::InvalidVariable(format!(
                "Z({i}) but joint has {} calls",
                self.num_calls()
            ))),
        }
    }

    fn axes(&self, vars: &[Var]) -> Result<Vec<usize>, InfoError> {
        let mut axes = vars
            .iter()
            .map(|&v| self.axis(v))
            .collect::<Result<Vec<_>, _>>()?;
        axes.sort_unstable();
        axes.dedup();
        Ok(axes)
    }

    /// Calls `visit(cell_index, digits)` for every cell, digits in axis order.
    fn for_each_cell(&self, mut visit: impl FnMut(usize, &[usize])) {
        let mut digits = vec![0usize; self.alphabets.len()];
        for cell in 0..self.probs.len() {
            visit(cell, &digits);
            for axis in (0..digits.len()).rev() {
                digits[axis] += 1;
                if digits[axis] < self.alphabets[axis] {
                    break;
                }
                digits[axis] = 0;
            }
        }
    }

    fn marginal_axes(&self, axes: &[usize]) -> Vec<f64> {
        let size: usize = axes.iter().map(|&a| self.alphabets[a]).product();
        let mut out = vec![0.0; size];
        self.for_each_cell(|cell, digits| {
            let mut idx = 0;
            for &a in axes {
                idx = idx * self.alphabets[a] + digits[a];
            }
            out[idx] += self.probs[cell];
        });
        out
    }

    /// Marginal table over `vars` (in canonical axis order X, Y, Z_1, …).
    pub fn marginal(&self, vars: &[Var]) -> Result<Vec<f64>, InfoError> {
        Ok(self.marginal_axes(&self.axes(vars)?))
    }

    /// Joint entropy `H(vars)` in bits.
    pub fn entropy(&self, vars: &[Var]) -> Result<f64, InfoError> {
        let axes = self.axes(vars)?;
        if axes.is_empty() {
            return Ok(0.0);
        }
        Ok(crate::spectral::entropy_bits(&self.marginal_axes(&axes)))
    }

    /// The joint conditioned on `Z_j = z_j` for each `(j, z_j)`; `None` when
    /// that event has probability zero.
    pub fn condition_on_calls(&self, assignment: &[(usize, usize)]) -> Result<Option<Self>, InfoError> {
        let fixed = assignment
            .iter()
            .map(|&(j, z)| Ok((self.axis(Var::Z(j))?, z)))
            .collect::<Result<Vec<_>, InfoError>>()?;
        let mut probs = vec![0.0; self.probs.len()];
        let mut mass = 0.0;
        self.for_each_cell(|cell, digits| {
            if fixed.iter().all(|&(axis, z)| digits[axis] == z) {
                probs[cell] = self.probs[cell];
                mass += self.probs[cell];
            }
        });
        if mass <= 0.0 {
            return Ok(None);
        }
        probs.iter_mut().for_each(|p| *p /= mass);
        Ok(Some(Self {
            alphabets: self.alphabets.clone(),
            probs,
        }))
    }

    /// The joint extended with a call that exactly copies call `i`.
    pub fn with_copy_of_call(&self, i: usize) -> Result<Self, InfoError> {
        let axis = self.axis(Var::Z(i))?;
        let a = self.alphabets[axis];
        let mut alphabets = self.alphabets.clone();
        alphabets.push(a);
        let size = self.probs.len() * a;
        if size > MAX_TABLE_SIZE {
            return Err(InfoError::TooLarge(size));
        }
        let mut probs = vec![0.0; size];
        self.for_each_cell(|cell, digits| {
            probs[cell * a + digits[axis]] = self.probs[cell];
        });
        Ok(Self { alphabets, probs })
    }

    /// Joint of `(X, Y, W)` with `W = f(Z_1, …, Z_n)` taking values in `0..w_size`.
    pub fn post_process(
        &self,
        w_size: usize,
        f: impl Fn(&[usize]) -> usize,
    ) -> Result<Self, InfoError> {
        if w_size == 0 {
            return Err(InfoError::BadAlphabets);
        }
        let (ax, ay) = (self.alphabets[0], self.alphabets[1]);
        let mut probs = vec![0.0; ax * ay * w_size];
        let mut bad = None;
        self.for_each_cell(|cell, digits| {
            let w = f(&digits[2..]);
            if w >= w_size {
                bad = Some(w);
                return;
            }
            probs[(digits[0] * ay + digits[1]) * w_size + w] += self.probs[cell];
        });
        if let Some(w) = bad {
            return Err(InfoError::InvalidVariable(format!(
                "post-processing produced {w}, alphabet is {w_size}"
            )));
        }
        Ok(Self {
            alphabets: vec![ax, ay, w_size],
            probs,
        })
    }

    /// Seeded random joint: uniform draws normalized to unit mass.
    pub fn random(alphabets: Vec<usize>, seed: u64) -> Result<Self, InfoError> {
        let size = alphabets.iter().try_fold(1usize, |acc, &a| acc.checked_mul(a));
        let size = size.ok_or(InfoError::TooLarge(usize::MAX))?;
        if size > MAX_TABLE_SIZE {
            return Err(InfoError::TooLarge(size));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut probs: Vec<f64> = (0..size).map(|_| rng.random::<f64>()).collect();
        renormalize(&mut probs);
        Self::new(alphabets, probs)
    }

    /// Builds a joint in which the calls are conditionally independent given
    /// `(X, Y)`: `p(x, y) · Π_i K_i(z_i | x, y)`.
    pub fn conditionally_independent(
        x_size: usize,
        y_size: usize,
        p_xy: &[f64],
        kernels: &[Kernel],
    ) -> Result<Self, InfoError> {
        if p_xy.len() != x_size * y_size {
            return Err(InfoError::WrongLength {
                expected: x_size * y_size,
                found: p_xy.len(),
            });
        }
        let mut alphabets = vec![x_size, y_size];
        for k in kernels {
            if k.x_size != x_size || k.y_size != y_size {
                return Err(InfoError::BadAlphabets);
            }
            alphabets.push(k.z_size);
        }
        let size: usize = alphabets.iter().product();
        if size > MAX_TABLE_SIZE {
            return Err(InfoError::TooLarge(size));
        }
        let shell = Self {
            alphabets: alphabets.clone(),
            probs: vec![0.0; size],
        };
        let mut probs = vec![0.0; size];
        shell.for_each_cell(|cell, d| {
            let mut p = p_xy[d[0] * y_size + d[1]];
            for (i, k) in kernels.iter().enumerate() {
                p *= k.prob(d[0], d[1], d[2 + i]);
            }
            probs[cell] = p;
        });
        Self::new(alphabets, probs)
    }
}

fn renormalize(probs: &mut [f64]) {
    let mass: f64 = probs.iter().sum();
    if mass > 0.0 {
        probs.iter_mut().for_each(|p| *p /= mass);
    }
}

/// Channel `K(z | x, y)` stored as `[x][y][z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    x_size: usize,
    y_size: usize,
    z_size: usize,
    table: Vec<f64>,
}

impl Kernel {
    pub fn new(x_size: usize, y_size: usize, z_size: usize, table: Vec<f64>) -> Result<Self, InfoError> {
        if x_size == 0 || y_size == 0 || z_size == 0 {
            return Err(InfoError::BadAlphabets);
        }
        if table.len() != x_size * y_size * z_size {
            return Err(InfoError::WrongLength {
                expected: x_size * y_size * z_size,
                found: table.len(),
            });
        }
        for (row, chunk) in table.chunks(z_size).enumerate() {
            if chunk.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(InfoError::BadProbability(row));
            }
            let mass: f64 = chunk.iter().sum();
            if (mass - 1.0).abs() > MASS_TOLERANCE {
                return Err(InfoError::BadMass(mass));
            }
        }
        Ok(Self {
            x_size,
            y_size,
            z_size,
            table,
        })
    }

    /// Binary symmetric view of a binary answer: `Z = Y` flipped with
    /// probability `flip`, independent of `X`.
    pub fn binary_symmetric(x_size: usize, flip: f64) -> Result<Self, InfoError> {
        let mut table = Vec::with_capacity(x_size * 4);
        for _ in 0..x_size {
            table.extend_from_slice(&[1.0 - flip, flip, flip, 1.0 - flip]);
        }
        Self::new(x_size, 2, 2, table)
    }

    /// Seeded random kernel with rows normalized from uniform draws.
    pub fn random(x_size: usize, y_size: usize, z_size: usize, seed: u64) -> Result<Self, InfoError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = Vec::with_capacity(x_size * y_size * z_size);
        for _ in 0..x_size * y_size {
            let mut row: Vec<f64> = (0..z_size).map(|_| rng.random::<f64>()).collect();
            renormalize(&mut row);
            table.extend(row);
        }
        Self::new(x_size, y_size, z_size, table)
    }

    fn prob(&self, x: usize, y: usize, z: usize) -> f64 {
        self.table[(x * self.y_size + y) * self.z_size + z]
    }
}

fn check_disjoint(sets: &[&[Var]]) -> Result<(), InfoError> {
    let mut seen = std::collections::BTreeSet::new();
    for set in sets {
        for v in *set {
            if !seen.insert(*v) {
                return Err(InfoError::InvalidVariable(format!(
                    "{v:?} appears in more than one argument"
                )));
            }
        }
    }
    Ok(())
}

fn clip(value: f64) -> Result<f64, InfoError> {
    if value < -NEGATIVE_INFO_TOLERANCE {
        Err(InfoError::NegativeInformation(value))
    } else {
        Ok(value.max(0.0))
    }
}

/// `H(target | given)` in bits.
pub fn conditional_entropy(joint: &DiscreteJoint, target: &[Var], given: &[Var]) -> Result<f64, InfoError> {
    check_disjoint(&[target, given])?;
    let all: Vec<Var> = target.iter().chain(given).copied().collect();
    clip(joint.entropy(&all)? - joint.entropy(given)?)
}

/// `I(a; b | given)` in bits.
pub fn conditional_mutual_information(
    joint: &DiscreteJoint,
    a: &[Var],
    b: &[Var],
    given: &[Var],
) -> Result<f64, InfoError> {
    check_disjoint(&[a, b, given])?;
    let with = |s: &[Var]| -> Vec<Var> { s.iter().chain(given).copied().collect() };
    let abc: Vec<Var> = a.iter().chain(b).chain(given).copied().collect();
    let value = joint.entropy(&with(a))? + joint.entropy(&with(b))?
        - joint.entropy(&abc)?
        - joint.entropy(given)?;
    clip(value)
}

fn calls(range: std::ops::Range<usize>) -> Vec<Var> {
    range.map(Var::Z).collect()
}

/// `Δ_i = I(Z_i; Y | X, Z_{<i})`.
pub fn increment(joint: &DiscreteJoint, i: usize) -> Result<f64, InfoError> {
    let mut given = vec![Var::X];
    given.extend(calls(0..i));
    conditional_mutual_information(joint, &[Var::Z(i)], &[Var::Y], &given)
}

/// `I(Z_{1:n}; Y | X)` computed directly.
pub fn transcript_information(joint: &DiscreteJoint, n_calls: usize) -> Result<f64, InfoError> {
    ensure_calls(joint, n_calls)?;
    conditional_mutual_information(joint, &calls(0..n_calls), &[Var::Y], &[Var::X])
}

fn ensure_calls(joint: &DiscreteJoint, requested: usize) -> Result<(), InfoError> {
    if requested > joint.num_calls() {
        return Err(InfoError::NotEnoughCalls {
            available: joint.num_calls(),
            requested,
        });
    }
    Ok(())
}

/// Per-type call statistics used by the ceilings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeStats {
    pub label: String,
    pub count: usize,
    /// `I_b`, single-call information in bits.
    pub single_call_info: f64,
    /// `I_b^max`, largest per-step contribution in bits.
    pub max_step_info: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeProfile {
    pub types: Vec<TypeStats>,
}

impl TypeProfile {
    /// Validated profile: values nonnegative and `I_b <= I_b^max`.
    pub fn new(types: Vec<TypeStats>) -> Result<Self, InfoError> {
        let profile = Self::with_override(types)?;
        for t in &profile.types {
            if t.single_call_info > t.max_step_info + 1e-12 {
                return Err(InfoError::BadProfile(format!(
                    "type {}: I_b = {} exceeds I_b^max = {}",
                    t.label, t.single_call_info, t.max_step_info
                )));
            }
        }
        Ok(profile)
    }

    /// Accepts `I_b > I_b^max`, which happens when the two are measured separately.
    pub fn with_override(types: Vec<TypeStats>) -> Result<Self, InfoError> {
        for t in &types {
            if !(t.single_call_info >= 0.0 && t.max_step_info >= 0.0) {
                return Err(InfoError::BadProfile(format!(
                    "type {} has negative or undefined information",
                    t.label
                )));
            }
        }
        let mut labels: Vec<&str> = types.iter().map(|t| t.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(InfoError::BadProfile("duplicate type label".into()));
        }
        Ok(Self { types })
    }

    pub fn total_calls(&self) -> usize {
        self.types.iter().map(|t| t.count).sum()
    }
}

/// `min(H(Y|X), Σ_b m_b I_b)`.
pub fn parallel_ceiling(profile: &TypeProfile, h_y_given_x: f64) -> f64 {
    let sum: f64 = profile
        .types
        .iter()
        .map(|t| t.count as f64 * t.single_call_info)
        .sum();
    h_y_given_x.min(sum)
}

/// `min(H(Y|X), Σ_b m_b I_b^max)`.
pub fn sequential_ceiling(profile: &TypeProfile, h_y_given_x: f64) -> f64 {
    let sum: f64 = profile
        .types
        .iter()
        .map(|t| t.count as f64 * t.max_step_info)
        .sum();
    h_y_given_x.min(sum)
}

/// `sup_{z_{<i}} I(Z_i; Y | X, Z_{<i} = z_{<i})` over assignments of positive probability.
pub fn max_step_information(joint: &DiscreteJoint, i: usize) -> Result<f64, InfoError> {
    ensure_calls(joint, i + 1)?;
    let sizes: Vec<usize> = (0..i).map(|j| joint.alphabets[2 + j]).collect();
    let combos: usize = sizes.iter().product();
    let mut best: f64 = 0.0;
    let mut digits = vec![0usize; i];
    for _ in 0..combos {
        let assignment: Vec<(usize, usize)> = digits.iter().copied().enumerate().collect();
        if let Some(cond) = joint.condition_on_calls(&assignment)? {
            let value = conditional_mutual_information(&cond, &[Var::Z(i)], &[Var::Y], &[Var::X])?;
            best = best.max(value);
        }
        for axis in (0..i).rev() {
            digits[axis] += 1;
            if digits[axis] < sizes[axis] {
                break;
            }
            digits[axis] = 0;
        }
    }
    Ok(best)
}

/// Type profile measured on a joint. `labels[i]` is the type of call `i`;
/// without labels every call is its own type. `I_b` is the largest single-call
/// information among calls of type `b`.
pub fn type_profile_from_joint(
    joint: &DiscreteJoint,
    n_calls: usize,
    labels: Option<&[String]>,
) -> Result<TypeProfile, InfoError> {
    ensure_calls(joint, n_calls)?;
    let labels: Vec<String> = match labels {
        Some(l) if l.len() >= n_calls => l[..n_calls].to_vec(),
        Some(l) => {
            return Err(InfoError::BadProfile(format!(
                "{} type labels for {n_calls} calls",
                l.len()
            )))
        }
        None => (1..=n_calls).map(|i| format!("z{i}")).collect(),
    };
    let mut by_label: BTreeMap<&str, TypeStats> = BTreeMap::new();
    let mut order = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        let single = conditional_mutual_information(joint, &[Var::Z(i)], &[Var::Y], &[Var::X])?;
        let step = max_step_information(joint, i)?;
        let entry = by_label.entry(label.as_str()).or_insert_with(|| {
            order.push(label.clone());
            TypeStats {
                label: label.clone(),
                count: 0,
                single_call_info: 0.0,
                max_step_info: 0.0,
            }
        });
        entry.count += 1;
        entry.single_call_info = entry.single_call_info.max(single);
        entry.max_step_info = entry.max_step_info.max(step);
    }
    let types = order
        .iter()
        .map(|l| by_label.remove(l.as_str()).expect("label recorded"))
        .collect();
    TypeProfile::with_override(types)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub h_y_given_x: f64,
    pub i_mas: f64,
    pub increments: Vec<f64>,
    pub ceiling_parallel: f64,
    pub ceiling_sequential: f64,
    pub profile: TypeProfile,
}

/// Usable evidence of the first `n_calls` calls with every call its own type.
pub fn usable_evidence(joint: &DiscreteJoint, n_calls: usize) -> Result<BudgetReport, InfoError> {
    budget_report(joint, n_calls, None)
}

pub fn budget_report(
    joint: &DiscreteJoint,
    n_calls: usize,
    labels: Option<&[String]>,
) -> Result<BudgetReport, InfoError> {
    ensure_calls(joint, n_calls)?;
    let h = conditional_entropy(joint, &[Var::Y], &[Var::X])?;
    let increments = (0..n_calls)
        .map(|i| increment(joint, i))
        .collect::<Result<Vec<_>, _>>()?;
    let i_mas = increments.iter().sum();
    let profile = type_profile_from_joint(joint, n_calls, labels)?;
    Ok(BudgetReport {
        h_y_given_x: h,
        i_mas,
        increments,
        ceiling_parallel: parallel_ceiling(&profile, h),
        ceiling_sequential: sequential_ceiling(&profile, h),
        profile,
    })
}

/// Both sides of the three-way decomposition of an increment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RedundancyIdentity {
    /// `I(Z_i; Y | X, Z_{<i})`
    pub lhs: f64,
    /// `I(Z_i; Y | X) + I(Z_i; Z_{<i} | X, Y) − I(Z_i; Z_{<i} | X)`
    pub rhs: f64,
    pub gap: f64,
    pub single_call: f64,
    /// `I(Z_i; Z_{<i} | X, Y)`; zero when calls are conditionally independent.
    pub synergy: f64,
    /// `I(Z_i; Z_{<i} | X)`
    pub redundancy: f64,
}

pub fn redundancy_identity_check(joint: &DiscreteJoint, i: usize) -> Result<RedundancyIdentity, InfoError> {
    ensure_calls(joint, i + 1)?;
    let zi = [Var::Z(i)];
    let prev = calls(0..i);
    let lhs = increment(joint, i)?;
    let single_call = conditional_mutual_information(joint, &zi, &[Var::Y], &[Var::X])?;
    let synergy = conditional_mutual_information(joint, &zi, &prev, &[Var::X, Var::Y])?;
    let redundancy = conditional_mutual_information(joint, &zi, &prev, &[Var::X])?;
    let rhs = single_call + synergy - redundancy;
    Ok(RedundancyIdentity {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
        single_call,
        synergy,
        redundancy,
    })
}
