//! Selective execution: label sampled programs as correct or not while
//! running test cases only for the uncertain ones.
//!
//! A seeded draw phase picks `h` programs uniformly with replacement and
//! executes each with probability `ω_i`. The importance-weighted losses give
//! an upper confidence bound `L̂^u` on the fraction of programs that have
//! score `≤ u` and fail their tests. The threshold `û` is the largest
//! observed score whose bound is at most `ε`; programs scoring below `û`
//! are accepted as correct unexecuted, the rest are executed.
//!
//! Scores follow the "higher is more uncertain" convention. The loss of a
//! program is 1 when it fails its tests.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exact::ExactSum;
use crate::stats::normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundKind {
    #[default]
    Hoeffding,
    Clt,
}

/// Number of draws, either absolute or as a fraction of the pool size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DrawCount {
    Absolute(usize),
    FractionOfPool(f64),
}

impl DrawCount {
    /// A fraction is rounded up, with at least one draw.
    pub fn resolve(self, pool: usize) -> Result<usize, SelectiveError> {
        match self {
            DrawCount::Absolute(0) => Err(SelectiveError::InvalidDrawCount),
            DrawCount::Absolute(h) => Ok(h),
            DrawCount::FractionOfPool(f) if f > 0.0 && f <= 1.0 => {
                Ok((libm::ceil(f * pool as f64) as usize).max(1))
            }
            DrawCount::FractionOfPool(_) => Err(SelectiveError::InvalidDrawCount),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplingWeights {
    Uniform(f64),
    PerProgram(Vec<f64>),
}

impl SamplingWeights {
    fn get(&self, i: usize) -> f64 {
        match self {
            SamplingWeights::Uniform(w) => *w,
            SamplingWeights::PerProgram(ws) => ws[i],
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            SamplingWeights::Uniform(w) => *w,
            SamplingWeights::PerProgram(ws) => ws.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    fn validate(&self, pool: usize) -> Result<(), SelectiveError> {
        let ok = |w: f64| w > 0.0 && w <= 1.0;
        match self {
            SamplingWeights::Uniform(w) if ok(*w) => Ok(()),
            SamplingWeights::PerProgram(ws) if ws.len() == pool && ws.iter().all(|&w| ok(w)) => {
                Ok(())
            }
            _ => Err(SelectiveError::InvalidWeights),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveConfig {
    pub h: DrawCount,
    pub epsilon: f64,
    pub gamma: f64,
    pub weights: SamplingWeights,
    pub bound: BoundKind,
    pub seed: u64,
}

impl Default for SelectiveConfig {
    fn default() -> Self {
        Self {
            h: DrawCount::FractionOfPool(0.1),
            epsilon: 0.1,
            gamma: 0.01,
            weights: SamplingWeights::Uniform(1.0),
            bound: BoundKind::Hoeffding,
            seed: 0,
        }
    }
}

impl SelectiveConfig {
    pub fn validate(&self, pool: usize) -> Result<(), SelectiveError> {
        if !(self.epsilon >= 0.0 && self.epsilon < 1.0) {
            return Err(SelectiveError::InvalidEpsilon(self.epsilon));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(SelectiveError::InvalidGamma(self.gamma));
        }
        self.weights.validate(pool)?;
        self.h.resolve(pool).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("executing program {index}: {reason}")]
pub struct ExecutionError {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SelectiveError {
    #[error("no programs to label")]
    EmptyPool,
    #[error("epsilon must lie in [0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("gamma must lie in (0, 1), got {0}")]
    InvalidGamma(f64),
    #[error("sampling weights must lie in (0, 1], one per program")]
    InvalidWeights,
    #[error("draw count must be positive (a fraction must lie in (0, 1])")]
    InvalidDrawCount,
    #[error("score of program {0} is not finite")]
    InvalidScore(usize),
    #[error("the clt bound needs at least two draws")]
    TooFewDraws,
    #[error(transparent)]
    Execution(#[from] ExecutionError),
}

/// Runs the test cases of a program: `true` when they all pass.
pub trait Executor {
    fn execute(&mut self, index: usize) -> Result<bool, ExecutionError>;

    /// Results in the order of `indices`. Implementations may run the
    /// batch concurrently.
    fn execute_batch(&mut self, indices: &[usize]) -> Result<Vec<bool>, ExecutionError> {
        indices.iter().map(|&i| self.execute(i)).collect()
    }
}

impl<F: FnMut(usize) -> Result<bool, ExecutionError>> Executor for F {
    fn execute(&mut self, index: usize) -> Result<bool, ExecutionError> {
        self(index)
    }
}

/// Executor backed by known outcomes; counts how often it is called.
#[derive(Debug, Clone)]
pub struct KnownOutcomes<'a> {
    outcomes: &'a [bool],
    pub calls: usize,
}

impl<'a> KnownOutcomes<'a> {
    pub fn new(outcomes: &'a [bool]) -> Self {
        Self { outcomes, calls: 0 }
    }
}

impl Executor for KnownOutcomes<'_> {
    fn execute(&mut self, index: usize) -> Result<bool, ExecutionError> {
        self.calls += 1;
        self.outcomes.get(index).copied().ok_or_else(|| ExecutionError {
            index,
            reason: "index out of range".into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveSample {
    pub j: usize,
    pub index: usize,
    pub score: f64,
    pub xi: bool,
    pub executed_loss: Option<u8>,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// No threshold qualified: every program is executed.
    ExecuteAll,
    Value(f64),
}

impl Threshold {
    /// Whether a program with this score is accepted without execution.
    pub fn accepts(self, score: f64) -> bool {
        match self {
            Threshold::ExecuteAll => false,
            Threshold::Value(u) => score < u,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveOutcome {
    pub u_hat: Threshold,
    pub labels: Vec<u8>,
    /// Ascending indices of programs whose tests ran.
    pub executed: Vec<usize>,
    /// `(u, L̂^u)` over the distinct observed scores, ascending in `u`.
    pub bound_curve: Vec<(f64, f64)>,
    pub fraction_saved: f64,
    pub samples: Vec<SelectiveSample>,
    /// Programs whose score equals another program's score.
    pub tied: usize,
}

/// `sqrt(ln(2/γ) / 2h) / ω_min`.
pub fn hoeffding_delta(h: usize, gamma: f64, omega_min: f64) -> f64 {
    libm::sqrt(libm::log(2.0 / gamma) / (2.0 * h as f64)) / omega_min
}

/// Mean of `Z_j(u)` plus the configured deviation term.
pub fn error_upper_bound(
    samples: &[SelectiveSample],
    u: f64,
    cfg: &SelectiveConfig,
) -> Result<f64, SelectiveError> {
    let mut sum = ExactSum::new();
    let mut squares = ExactSum::new();
    for s in samples.iter().filter(|s| s.score <= u) {
        sum.add(s.z);
        squares.add(s.z * s.z);
    }
    finish_bound(&sum, &squares, samples.len(), cfg)
}

fn finish_bound(
    sum: &ExactSum,
    squares: &ExactSum,
    h: usize,
    cfg: &SelectiveConfig,
) -> Result<f64, SelectiveError> {
    if h == 0 {
        return Err(SelectiveError::InvalidDrawCount);
    }
    let n = h as f64;
    let mean = sum.value() / n;
    match cfg.bound {
        BoundKind::Hoeffding => Ok(mean + hoeffding_delta(h, cfg.gamma, cfg.weights.min())),
        BoundKind::Clt => {
            if h < 2 {
                return Err(SelectiveError::TooFewDraws);
            }
            let var = (squares.value() / n - mean * mean).max(0.0);
            let z = normal_quantile(1.0 - cfg.gamma).map_err(|_| SelectiveError::InvalidGamma(cfg.gamma))?;
            Ok(mean + z * libm::sqrt(var) / libm::sqrt(n))
        }
    }
}

/// Bound at every threshold in `thresholds` (ascending), in one sweep.
/// Agrees exactly with [`error_upper_bound`] at each point.
pub fn bound_curve(
    samples: &[SelectiveSample],
    thresholds: &[f64],
    cfg: &SelectiveConfig,
) -> Result<Vec<(f64, f64)>, SelectiveError> {
    let mut by_score: Vec<&SelectiveSample> = samples.iter().collect();
    by_score.sort_by(|a, b| a.score.total_cmp(&b.score));
    let mut sum = ExactSum::new();
    let mut squares = ExactSum::new();
    let mut next = 0;
    let mut curve = Vec::with_capacity(thresholds.len());
    for &u in thresholds {
        while next < by_score.len() && by_score[next].score <= u {
            sum.add(by_score[next].z);
            squares.add(by_score[next].z * by_score[next].z);
            next += 1;
        }
        curve.push((u, finish_bound(&sum, &squares, samples.len(), cfg)?));
    }
    Ok(curve)
}

/// Largest `u` on the curve whose bound is at most `ε`. `ε = 0` always
/// executes everything.
pub fn select_threshold(curve: &[(f64, f64)], epsilon: f64) -> Threshold {
    if epsilon <= 0.0 {
        return Threshold::ExecuteAll;
    }
    curve
        .iter()
        .rev()
        .find(|&&(_, bound)| bound <= epsilon)
        .map_or(Threshold::ExecuteAll, |&(u, _)| Threshold::Value(u))
}

/// Seeded draw phase: for each draw an index, then a coin for `ξ`.
/// Returns `(index, ξ)` pairs.
pub fn draw(pool: usize, h: usize, weights: &SamplingWeights, seed: u64) -> Vec<(usize, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..h)
        .map(|_| {
            let i = rng.random_range(0..pool);
            let coin: f64 = rng.random();
            (i, coin < weights.get(i))
        })
        .collect()
}

pub fn run_selective_execution(
    scores: &[f64],
    executor: &mut dyn Executor,
    cfg: &SelectiveConfig,
) -> Result<SelectiveOutcome, SelectiveError> {
    let m = scores.len();
    if m == 0 {
        return Err(SelectiveError::EmptyPool);
    }
    cfg.validate(m)?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(SelectiveError::InvalidScore(i));
    }
    let h = cfg.h.resolve(m)?;
    let draws = draw(m, h, &cfg.weights, cfg.seed);

    let mut passed: Vec<Option<bool>> = vec![None; m];
    let mut wanted = vec![false; m];
    let mut batch = Vec::new();
    for &(i, xi) in &draws {
        if xi && !wanted[i] {
            wanted[i] = true;
            batch.push(i);
        }
    }
    run_batch(executor, &batch, &mut passed)?;

    let samples: Vec<SelectiveSample> = draws
        .iter()
        .enumerate()
        .map(|(j, &(i, xi))| {
            let executed_loss = if xi { passed[i].map(|ok| u8::from(!ok)) } else { None };
            let z = executed_loss.map_or(0.0, |l| f64::from(l) / cfg.weights.get(i));
            SelectiveSample { j, index: i, score: scores[i], xi, executed_loss, z }
        })
        .collect();

    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    let tied = count_tied(&distinct);
    distinct.dedup();
    let curve = bound_curve(&samples, &distinct, cfg)?;
    let u_hat = select_threshold(&curve, cfg.epsilon);

    let rest: Vec<usize> =
        (0..m).filter(|&i| !u_hat.accepts(scores[i]) && passed[i].is_none()).collect();
    run_batch(executor, &rest, &mut passed)?;

    let mut labels = Vec::with_capacity(m);
    let mut saved = 0usize;
    for i in 0..m {
        if u_hat.accepts(scores[i]) {
            saved += 1;
            labels.push(1);
        } else {
            labels.push(u8::from(passed[i] == Some(true)));
        }
    }
    let executed = (0..m).filter(|&i| passed[i].is_some()).collect();
    Ok(SelectiveOutcome {
        u_hat,
        labels,
        executed,
        bound_curve: curve,
        fraction_saved: saved as f64 / m as f64,
        samples,
        tied,
    })
}

fn run_batch(
    executor: &mut dyn Executor,
    indices: &[usize],
    passed: &mut [Option<bool>],
) -> Result<(), SelectiveError> {
    if indices.is_empty() {
        return Ok(());
    }
    let results = executor.execute_batch(indices)?;
    for (&i, ok) in indices.iter().zip(results) {
        passed[i] = Some(ok);
    }
    Ok(())
}

fn count_tied(sorted: &[f64]) -> usize {
    let mut tied = 0;
    let mut start = 0;
    for k in 1..=sorted.len() {
        if k == sorted.len() || sorted[k] != sorted[start] {
            if k - start > 1 {
                tied += k - start;
            }
            start = k;
        }
    }
    tied
}
