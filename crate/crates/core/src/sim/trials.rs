//! Monte-Carlo trials: fresh data, random calibration/test split, calibrate,
//! measure the realized risk on the test half.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    derive_seed, generate_tasks, SimError, SyntheticConfig, SyntheticTask, STREAM_DATA,
    STREAM_SELECT, STREAM_SPLIT,
};
use crate::ltt::{self, sweep_record, CalibrationError, LambdaGrid, LttConfig};
use crate::prune::{NoDeadline, PruneConfig};
use crate::risk::{prune_with, set_loss, CalibrationRecord, PartialProgram};
use crate::selective::{run_selective_execution, KnownOutcomes, SelectiveConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSettings {
    pub ltt: LttConfig,
    /// Fraction of tasks used for calibration.
    pub split: f64,
    /// When set, each trial replaces the grid with a uniform one of this
    /// step covering its calibration trees.
    pub grid_step: Option<f64>,
}

impl TrialSettings {
    pub fn new(ltt: LttConfig) -> Self {
        Self { ltt, split: 0.5, grid_step: Some(crate::ltt::DEFAULT_GRID_STEP) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub lambda_hat: Option<f64>,
    /// Fraction of test tasks whose set misses every correct program.
    /// Abstention counts as 0 (the whole tree is a hole).
    pub test_risk: f64,
    /// Mean fraction of nodes removed per test tree; 1 on abstention.
    pub removal_fraction: f64,
    pub covered: bool,
    pub fraction_saved: Option<f64>,
    /// Fraction of pooled samples whose selective label is wrong.
    pub label_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregates {
    pub trials: usize,
    pub alpha: f64,
    /// Coverage of a trial is `1 - test_risk`.
    pub coverage_mean: f64,
    pub coverage_sd: f64,
    pub removal_mean: f64,
    pub removal_sd: f64,
    /// Fraction of trials with `test_risk <= alpha`.
    pub satisfied_rate: f64,
    pub abstain_rate: f64,
    pub saved_mean: Option<f64>,
    pub saved_sd: Option<f64>,
    pub label_error_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub rows: Vec<TrialRow>,
    pub aggregates: Aggregates,
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, libm::sqrt(ss / (n - 1) as f64))
}

/// Means and sample standard deviations over trials, in row order.
pub fn aggregate(rows: &[TrialRow], alpha: f64) -> Aggregates {
    let n = rows.len().max(1) as f64;
    let (coverage_mean, coverage_sd) = mean_sd(rows.iter().map(|r| 1.0 - r.test_risk));
    let (removal_mean, removal_sd) = mean_sd(rows.iter().map(|r| r.removal_fraction));
    let selective = !rows.is_empty() && rows.iter().all(|r| r.fraction_saved.is_some());
    let (saved_mean, saved_sd) = if selective {
        let (m, s) = mean_sd(rows.iter().filter_map(|r| r.fraction_saved));
        (Some(m), Some(s))
    } else {
        (None, None)
    };
    let label_error_mean =
        selective.then(|| mean_sd(rows.iter().filter_map(|r| r.label_error)).0);
    Aggregates {
        trials: rows.len(),
        alpha,
        coverage_mean,
        coverage_sd,
        removal_mean,
        removal_sd,
        satisfied_rate: rows.iter().filter(|r| r.covered).count() as f64 / n,
        abstain_rate: rows.iter().filter(|r| r.lambda_hat.is_none()).count() as f64 / n,
        saved_mean,
        saved_sd,
        label_error_mean,
    }
}

fn validate(settings: &TrialSettings) -> Result<(), SimError> {
    if !(settings.split > 0.0 && settings.split < 1.0) {
        return Err(SimError::InvalidSettings("split must lie in (0, 1)"));
    }
    settings.ltt.validate().map_err(|source| SimError::Calibration { seed: 0, source })
}

struct TrialData {
    seed: u64,
    tasks: Vec<SyntheticTask>,
    calibration: Vec<usize>,
    test: Vec<usize>,
}

fn prepare(cfg: &SyntheticConfig, settings: &TrialSettings, trial: usize) -> Result<TrialData, SimError> {
    validate(settings)?;
    let seed = derive_seed(cfg.seed, STREAM_DATA, trial as u64);
    let tasks = generate_tasks(&SyntheticConfig { seed, ..cfg.clone() })?;
    let n = tasks.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_SPLIT, trial as u64)));
    let n_cal = (libm::round(n as f64 * settings.split) as usize).clamp(1, n - 1);
    let mut calibration = order[..n_cal].to_vec();
    let mut test = order[n_cal..].to_vec();
    calibration.sort_unstable();
    test.sort_unstable();
    Ok(TrialData { seed, tasks, calibration, test })
}

fn evaluate(
    data: &TrialData,
    test: &[CalibrationRecord],
    lambda: f64,
    ltt: &LttConfig,
) -> Result<(f64, f64), SimError> {
    let prune = PruneConfig { lambda, t_max: ltt.t_max };
    let mut losses = 0usize;
    let mut removed = 0.0;
    for record in test {
        let removal = prune_with(&record.generated, &prune, ltt.strategy, &NoDeadline).map_err(
            |source| SimError::Calibration {
                seed: data.seed,
                source: CalibrationError::Prune { task_id: record.task_id.clone(), source },
            },
        )?;
        let partial = PartialProgram { base: &record.generated, removal };
        removed += partial.removed_fraction();
        losses += usize::from(set_loss(&partial, record.labels()));
    }
    let n = test.len() as f64;
    Ok((losses as f64 / n, removed / n))
}

/// Calibrates once per level in `alphas` (the pruning sweep is shared) and
/// evaluates each selected budget on the test half.
fn finish(
    data: &TrialData,
    cfg: &SyntheticConfig,
    settings: &TrialSettings,
    trial: usize,
    records: &[CalibrationRecord],
    alphas: &[f64],
) -> Result<Vec<TrialRow>, SimError> {
    let seed = data.seed;
    let fail = |source| SimError::Calibration { seed, source };
    let mut ltt = settings.ltt.clone();
    if let Some(step) = settings.grid_step {
        ltt.grid = LambdaGrid::covering(records, step).map_err(fail)?;
    }
    for &alpha in alphas {
        LttConfig { alpha, ..ltt.clone() }.validate().map_err(fail)?;
    }
    let sweeps = records
        .iter()
        .map(|r| sweep_record(r, &ltt, &NoDeadline))
        .collect::<Result<Vec<_>, _>>()
        .map_err(fail)?;
    let test = data
        .test
        .iter()
        .map(|&i| data.tasks[i].record(cfg.label_model.include_reference))
        .collect::<Result<Vec<_>, _>>()?;

    let mut evaluated: Vec<(f64, (f64, f64))> = Vec::new();
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        ltt.alpha = alpha;
        let result = ltt::finish(&sweeps, &ltt).map_err(fail)?;
        let (test_risk, removal_fraction) = match result.lambda_hat {
            None => (0.0, 1.0),
            Some(lambda) => match evaluated.iter().find(|(l, _)| *l == lambda) {
                Some(&(_, v)) => v,
                None => {
                    let v = evaluate(data, &test, lambda, &ltt)?;
                    evaluated.push((lambda, v));
                    v
                }
            },
        };
        rows.push(TrialRow {
            trial,
            seed,
            lambda_hat: result.lambda_hat,
            test_risk,
            removal_fraction,
            covered: test_risk <= alpha,
            fraction_saved: None,
            label_error: None,
        });
    }
    Ok(rows)
}

fn exhaustive_records(data: &TrialData, cfg: &SyntheticConfig) -> Result<Vec<CalibrationRecord>, SimError> {
    data.calibration
        .iter()
        .map(|&i| data.tasks[i].record(cfg.label_model.include_reference).map_err(SimError::from))
        .collect()
}

/// One trial per level in `alphas`, sharing data, split and pruning sweep.
pub fn run_alpha_sweep_trial(
    cfg: &SyntheticConfig,
    settings: &TrialSettings,
    alphas: &[f64],
    trial: usize,
) -> Result<Vec<TrialRow>, SimError> {
    let data = prepare(cfg, settings, trial)?;
    let records = exhaustive_records(&data, cfg)?;
    finish(&data, cfg, settings, trial, &records, alphas)
}

/// One trial with calibration labels from exhaustive execution.
pub fn run_trial(cfg: &SyntheticConfig, settings: &TrialSettings, trial: usize) -> Result<TrialRow, SimError> {
    let data = prepare(cfg, settings, trial)?;
    let records = exhaustive_records(&data, cfg)?;
    let mut rows = finish(&data, cfg, settings, trial, &records, &[settings.ltt.alpha])?;
    Ok(rows.remove(0))
}

/// One trial whose calibration labels come from selective execution over
/// all samples of the calibration tasks.
pub fn run_selective_trial(
    cfg: &SyntheticConfig,
    sel: &SelectiveConfig,
    settings: &TrialSettings,
    trial: usize,
) -> Result<TrialRow, SimError> {
    let data = prepare(cfg, settings, trial)?;
    let mut scores = Vec::new();
    let mut truth = Vec::new();
    for &i in &data.calibration {
        for s in &data.tasks[i].samples {
            scores.push(s.score);
            truth.push(s.correct);
        }
    }
    let sel = SelectiveConfig { seed: derive_seed(sel.seed, STREAM_SELECT, trial as u64), ..sel.clone() };
    let outcome = run_selective_execution(&scores, &mut KnownOutcomes::new(&truth), &sel)
        .map_err(|source| SimError::Selective { seed: data.seed, source })?;

    let mut offset = 0;
    let mut records = Vec::with_capacity(data.calibration.len());
    for &i in &data.calibration {
        let task = &data.tasks[i];
        let labels = &outcome.labels[offset..offset + task.samples.len()];
        records.push(task.record_with(cfg.label_model.include_reference, |j| labels[j] == 1)?);
        offset += task.samples.len();
    }
    let wrong = outcome.labels.iter().zip(&truth).filter(|&(&l, &t)| (l == 1) != t).count();

    let mut row = finish(&data, cfg, settings, trial, &records, &[settings.ltt.alpha])?.remove(0);
    row.fraction_saved = Some(outcome.fraction_saved);
    row.label_error = Some(wrong as f64 / truth.len() as f64);
    Ok(row)
}

pub fn run_trials(
    cfg: &SyntheticConfig,
    settings: &TrialSettings,
    n_trials: usize,
) -> Result<TrialReport, SimError> {
    if n_trials == 0 {
        return Err(SimError::InvalidSettings("n_trials must be at least 1"));
    }
    let rows = (0..n_trials).map(|t| run_trial(cfg, settings, t)).collect::<Result<Vec<_>, _>>()?;
    Ok(report(rows, settings.ltt.alpha))
}

/// Reports per level in `alphas`, in the same order.
pub fn run_alpha_sweep(
    cfg: &SyntheticConfig,
    settings: &TrialSettings,
    alphas: &[f64],
    n_trials: usize,
) -> Result<Vec<TrialReport>, SimError> {
    if n_trials == 0 {
        return Err(SimError::InvalidSettings("n_trials must be at least 1"));
    }
    let mut per_alpha: Vec<Vec<TrialRow>> = alphas.iter().map(|_| Vec::with_capacity(n_trials)).collect();
    for t in 0..n_trials {
        for (k, row) in run_alpha_sweep_trial(cfg, settings, alphas, t)?.into_iter().enumerate() {
            per_alpha[k].push(row);
        }
    }
    Ok(alphas.iter().zip(per_alpha).map(|(&a, rows)| report(rows, a)).collect())
}

/// Wraps rows with their aggregates.
pub fn report(rows: Vec<TrialRow>, alpha: f64) -> TrialReport {
    TrialReport { aggregates: aggregate(&rows, alpha), rows }
}

pub fn run_selective_trials(
    cfg: &SyntheticConfig,
    sel: &SelectiveConfig,
    settings: &TrialSettings,
    n_trials: usize,
) -> Result<TrialReport, SimError> {
    if n_trials == 0 {
        return Err(SimError::InvalidSettings("n_trials must be at least 1"));
    }
    let rows = (0..n_trials)
        .map(|t| run_selective_trial(cfg, sel, settings, t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(report(rows, settings.ltt.alpha))
}
