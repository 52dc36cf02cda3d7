//! Learn-Then-Test calibration of the pruning budget.
//!
//! For every budget `λ_k` on the grid: prune each calibration tree, measure
//! the empirical structured risk, turn it into a binomial-tail p-value for
//! the null "risk(λ_k) > α", and hand the p-values to an FWER procedure at
//! level δ. The largest surviving budget prunes the least, so it is the one
//! returned; no survivor means abstention.

use alloc::string::String;
use alloc::vec::Vec;

use crate::ast::AnnotatedAst;
use crate::fwer::{self, FwerMethod};
use crate::prune::{Deadline, NoDeadline, PruneConfig, PruneError, RemovalSet, TreeIndex};
use crate::risk::{prune_with, set_loss, CalibrationRecord, PartialProgram, Strategy};
use crate::stats::{binomial_tail_pvalue_count, StatsError};

/// Grid resolution used when none is given.
pub const DEFAULT_GRID_STEP: f64 = 0.02;
/// Upper bound on the number of fixed-sequence starts.
pub const DEFAULT_FST_STARTS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("grid must be a non-empty, strictly increasing list of non-negative numbers")]
    InvalidGrid,
    #[error("grid step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("t_max must be at least 1")]
    InvalidTMax,
    #[error("fixed-sequence start count must be at least 1")]
    InvalidStarts,
    #[error("calibration needs at least one record")]
    NoRecords,
    #[error("pruning record {task_id}: {source}")]
    Prune { task_id: String, source: PruneError },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Candidate budgets, stored ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self, CalibrationError> {
        let ok = !values.is_empty()
            && values.iter().all(|v| v.is_finite() && *v >= 0.0)
            && values.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(Self { values })
        } else {
            Err(CalibrationError::InvalidGrid)
        }
    }

    /// `0, step, 2·step, …` up to the first point at or above `max`.
    pub fn uniform(step: f64, max: f64) -> Result<Self, CalibrationError> {
        if !(step.is_finite() && step > 0.0) {
            return Err(CalibrationError::InvalidStep(step));
        }
        if !(max.is_finite() && max >= 0.0) {
            return Err(CalibrationError::InvalidGrid);
        }
        let points = libm::ceil(max / step) as usize;
        Self::new((0..=points).map(|k| k as f64 * step).collect())
    }

    /// Uniform grid covering the heaviest generated tree in `records`.
    pub fn covering(records: &[CalibrationRecord], step: f64) -> Result<Self, CalibrationError> {
        let max = records.iter().map(|r| r.generated.total_weight()).fold(0.0, f64::max);
        Self::uniform(step, max)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LttConfig {
    pub grid: LambdaGrid,
    pub alpha: f64,
    pub delta: f64,
    pub t_max: usize,
    pub fwer: FwerMethod,
    /// Number of fixed-sequence starts; capped at the grid size.
    pub fst_starts: usize,
    pub strategy: Strategy,
}

impl LttConfig {
    pub fn new(grid: LambdaGrid, alpha: f64, delta: f64) -> Self {
        Self {
            grid,
            alpha,
            delta,
            t_max: 1,
            fwer: FwerMethod::FixedSequence,
            fst_starts: DEFAULT_FST_STARTS,
            strategy: Strategy::Exact,
        }
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CalibrationError::InvalidAlpha(self.alpha));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(CalibrationError::InvalidDelta(self.delta));
        }
        if self.t_max == 0 {
            return Err(CalibrationError::InvalidTMax);
        }
        if self.fst_starts == 0 {
            return Err(CalibrationError::InvalidStarts);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub grid: Vec<f64>,
    pub pvalues: Vec<f64>,
    /// Ascending grid indices of the risk-controlling budgets.
    pub valid: Vec<usize>,
    /// `None` means abstention.
    pub lambda_hat: Option<f64>,
    pub risk: Vec<f64>,
    /// Mean fraction of nodes removed per record, for each budget.
    pub removal: Vec<f64>,
}

impl CalibrationResult {
    pub fn valid_lambdas(&self) -> Vec<f64> {
        self.valid.iter().map(|&k| self.grid[k]).collect()
    }

    pub fn abstained(&self) -> bool {
        self.lambda_hat.is_none()
    }
}

/// Loss and removal count of one record at every grid budget.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSweep {
    pub losses: Vec<u8>,
    pub removed: Vec<usize>,
    pub nodes: usize,
}

/// Prunes one record at each grid budget. Consecutive budgets that produce
/// the same removal reuse the membership result.
pub fn sweep_record(
    record: &CalibrationRecord,
    cfg: &LttConfig,
    deadline: &dyn Deadline,
) -> Result<RecordSweep, CalibrationError> {
    let ast = &record.generated;
    let index = TreeIndex::new(ast);
    let mut losses = Vec::with_capacity(cfg.grid.len());
    let mut removed = Vec::with_capacity(cfg.grid.len());
    let mut last: Option<(RemovalSet, u8)> = None;
    for &lambda in cfg.grid.values() {
        let prune_cfg = PruneConfig { lambda, t_max: cfg.t_max };
        let removal = match cfg.strategy {
            Strategy::Exact => index.prune_exact(&prune_cfg, deadline),
            Strategy::Greedy => prune_with(ast, &prune_cfg, Strategy::Greedy, deadline),
        }
        .map_err(|source| CalibrationError::Prune { task_id: record.task_id.clone(), source })?;
        let loss = match &last {
            Some((prev, loss)) if *prev == removal => *loss,
            _ => {
                let partial = PartialProgram { base: ast, removal: removal.clone() };
                set_loss(&partial, record.labels())
            }
        };
        removed.push(removal.removal_count());
        losses.push(loss);
        last = Some((removal, loss));
    }
    Ok(RecordSweep { losses, removed, nodes: ast.len() })
}

/// Combines per-record sweeps (in record order) into p-values, the valid
/// set and the selected budget.
pub fn finish(sweeps: &[RecordSweep], cfg: &LttConfig) -> Result<CalibrationResult, CalibrationError> {
    let n = sweeps.len();
    if n == 0 {
        return Err(CalibrationError::NoRecords);
    }
    let grid = cfg.grid.values().to_vec();
    let mut pvalues = Vec::with_capacity(grid.len());
    let mut risk = Vec::with_capacity(grid.len());
    let mut removal = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let losses: usize = sweeps.iter().map(|s| usize::from(s.losses[k])).sum();
        let frac: f64 = sweeps.iter().map(|s| s.removed[k] as f64 / s.nodes as f64).sum();
        pvalues.push(binomial_tail_pvalue_count(n, cfg.alpha, losses)?);
        risk.push(losses as f64 / n as f64);
        removal.push(frac / n as f64);
    }
    let valid = fwer::apply(cfg.fwer, &pvalues, cfg.delta, cfg.fst_starts);
    let lambda_hat = valid.last().map(|&k| grid[k]);
    Ok(CalibrationResult { grid, pvalues, valid, lambda_hat, risk, removal })
}

pub fn calibrate(
    records: &[CalibrationRecord],
    cfg: &LttConfig,
) -> Result<CalibrationResult, CalibrationError> {
    calibrate_with(records, cfg, &NoDeadline)
}

pub fn calibrate_with(
    records: &[CalibrationRecord],
    cfg: &LttConfig,
    deadline: &dyn Deadline,
) -> Result<CalibrationResult, CalibrationError> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(CalibrationError::NoRecords);
    }
    let sweeps = records
        .iter()
        .map(|r| sweep_record(r, cfg, deadline))
        .collect::<Result<Vec<_>, _>>()?;
    finish(&sweeps, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction<'a> {
    Abstain,
    Partial(PartialProgram<'a>),
}

/// Prunes a new tree at the calibrated budget.
pub fn predict<'a>(
    ast: &'a AnnotatedAst,
    result: &CalibrationResult,
    t_max: usize,
) -> Result<Prediction<'a>, PruneError> {
    predict_with(ast, result, t_max, Strategy::Exact, &NoDeadline)
}

pub fn predict_with<'a>(
    ast: &'a AnnotatedAst,
    result: &CalibrationResult,
    t_max: usize,
    strategy: Strategy,
    deadline: &dyn Deadline,
) -> Result<Prediction<'a>, PruneError> {
    let Some(lambda) = result.lambda_hat else {
        return Ok(Prediction::Abstain);
    };
    let cfg = PruneConfig::new(lambda, t_max)?;
    let removal = prune_with(ast, &cfg, strategy, deadline)?;
    Ok(Prediction::Partial(PartialProgram { base: ast, removal }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::from_parents;
    use crate::ast::tests::tiny;
    use alloc::vec;
    use core::f64::consts::E;

    fn self_labeled(i: usize) -> CalibrationRecord {
        let t = tiny();
        CalibrationRecord::new(alloc::format!("t{i}"), t.clone(), vec![t], None).unwrap()
    }

    fn adversarial(i: usize) -> CalibrationRecord {
        let label = from_parents("other", &[None], &["Z"], &[0.0]).unwrap();
        CalibrationRecord::new(alloc::format!("a{i}"), tiny(), vec![label], None).unwrap()
    }

    #[test]
    fn grid_construction() {
        let g = LambdaGrid::uniform(0.02, 0.1).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.values()[5], 5.0 * 0.02);
        assert_eq!(LambdaGrid::uniform(0.5, 0.0).unwrap().values(), &[0.0]);
        assert_eq!(LambdaGrid::new(vec![]), Err(CalibrationError::InvalidGrid));
        assert_eq!(LambdaGrid::new(vec![0.1, 0.1]), Err(CalibrationError::InvalidGrid));
        assert_eq!(LambdaGrid::new(vec![-0.1]), Err(CalibrationError::InvalidGrid));
        assert_eq!(LambdaGrid::uniform(0.0, 1.0), Err(CalibrationError::InvalidStep(0.0)));
        let covering = LambdaGrid::covering(&[self_labeled(0)], 0.02).unwrap();
        assert!(*covering.values().last().unwrap() >= 3.9);
    }

    #[test]
    fn self_labeled_records_select_largest_budget() {
        let records: Vec<_> = (0..200).map(self_labeled).collect();
        let cfg = LttConfig::new(LambdaGrid::new(vec![100.0]).unwrap(), 0.1, 0.1);
        let result = calibrate(&records, &cfg).unwrap();
        assert_eq!(result.risk, vec![0.0]);
        let expected = E * libm::pow(0.9, 200.0);
        assert!((result.pvalues[0] - expected).abs() < 1e-20);
        assert!(expected < 2e-9);
        assert_eq!(result.lambda_hat, Some(100.0));
        assert_eq!(result.removal, vec![0.0]);
    }

    #[test]
    fn adversarial_records_abstain() {
        let records: Vec<_> = (0..50).map(adversarial).collect();
        let cfg = LttConfig::new(LambdaGrid::new(vec![1e6]).unwrap(), 0.1, 0.1);
        let result = calibrate(&records, &cfg).unwrap();
        assert_eq!(result.risk, vec![1.0]);
        assert_eq!(result.pvalues, vec![1.0]);
        assert!(result.abstained());
        assert!(result.valid.is_empty());
    }

    #[test]
    fn zero_budget_is_always_safe() {
        let records: Vec<_> = (0..100).map(adversarial).collect();
        let cfg = LttConfig::new(LambdaGrid::uniform(0.5, 4.0).unwrap(), 0.1, 0.1);
        let result = calibrate(&records, &cfg).unwrap();
        assert_eq!(result.risk[0], 0.0);
        assert_eq!(result.removal[0], 1.0);
        // Below 1.9 no single cut fits, so the whole tree goes and nothing is lost.
        assert_eq!(result.lambda_hat, Some(1.5));
        assert_eq!(result.risk[4], 1.0);
    }

    #[test]
    fn calibration_is_deterministic() {
        let mut records: Vec<_> = (0..30).map(self_labeled).collect();
        records.extend((0..5).map(adversarial));
        let cfg = LttConfig::new(LambdaGrid::uniform(0.1, 4.0).unwrap(), 0.2, 0.1);
        let a = calibrate(&records, &cfg).unwrap();
        let b = calibrate(&records, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_and_input_errors() {
        let grid = LambdaGrid::new(vec![1.0]).unwrap();
        let mut cfg = LttConfig::new(grid.clone(), 1.0, 0.1);
        assert_eq!(calibrate(&[self_labeled(0)], &cfg), Err(CalibrationError::InvalidAlpha(1.0)));
        cfg = LttConfig::new(grid.clone(), 0.1, 0.0);
        assert_eq!(calibrate(&[self_labeled(0)], &cfg), Err(CalibrationError::InvalidDelta(0.0)));
        cfg = LttConfig::new(grid, 0.1, 0.1);
        assert_eq!(calibrate(&[], &cfg), Err(CalibrationError::NoRecords));
    }

    #[test]
    fn prediction_follows_lambda_hat() {
        let t = tiny();
        let mut result = CalibrationResult {
            grid: vec![0.0, 5.0],
            pvalues: vec![0.0, 0.0],
            valid: vec![0, 1],
            lambda_hat: Some(5.0),
            risk: vec![0.0, 0.0],
            removal: vec![1.0, 0.0],
        };
        match predict(&t, &result, 1).unwrap() {
            Prediction::Partial(p) => assert_eq!(p.removal.removal_count(), 0),
            Prediction::Abstain => panic!("expected a partial program"),
        }
        result.lambda_hat = Some(0.0);
        match predict(&t, &result, 1).unwrap() {
            Prediction::Partial(p) => assert_eq!(p.removal.removal_count(), 4),
            Prediction::Abstain => panic!("expected a partial program"),
        }
        result.lambda_hat = None;
        assert_eq!(predict(&t, &result, 1).unwrap(), Prediction::Abstain);
    }
}
