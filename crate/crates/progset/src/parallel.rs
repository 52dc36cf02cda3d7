//! Multi-threaded drivers. Work is split by record or by trial and joined in
//! input order, so results do not depend on the number of threads.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use progset_core::ltt::{finish, sweep_record, CalibrationError, CalibrationResult, LttConfig};
use progset_core::prune::{Deadline, NoDeadline};
use progset_core::risk::CalibrationRecord;
use progset_core::selective::SelectiveConfig;
use progset_core::sim::{
    report, run_alpha_sweep_trial, run_selective_trial, run_trial, SimError, SyntheticConfig, TrialReport,
    TrialRow, TrialSettings,
};

/// Wall-clock limit starting at construction.
#[derive(Debug, Clone, Copy)]
pub struct TimeLimit {
    end: Instant,
}

impl TimeLimit {
    pub fn new(limit: Duration) -> Self {
        Self { end: Instant::now() + limit }
    }
}

impl Deadline for TimeLimit {
    fn expired(&self) -> bool {
        Instant::now() >= self.end
    }
}

/// A pool with `jobs` threads; 0 means one per CPU.
pub fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().expect("thread pool")
}

/// Calibration with the records pruned in parallel. `solver_timeout`, when
/// set, bounds the exact solver on each record's whole grid sweep.
pub fn calibrate(
    records: &[CalibrationRecord],
    cfg: &LttConfig,
    solver_timeout: Option<Duration>,
    jobs: usize,
) -> Result<CalibrationResult, CalibrationError> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(CalibrationError::NoRecords);
    }
    let sweeps = pool(jobs).install(|| {
        records
            .par_iter()
            .map(|r| match solver_timeout {
                Some(limit) => sweep_record(r, cfg, &TimeLimit::new(limit)),
                None => sweep_record(r, cfg, &NoDeadline),
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    finish(&sweeps, cfg)
}

fn collect_trials<T: Send>(
    n_trials: usize,
    jobs: usize,
    f: impl Fn(usize) -> Result<T, SimError> + Sync,
) -> Result<Vec<T>, SimError> {
    if n_trials == 0 {
        return Err(SimError::InvalidSettings("n_trials must be at least 1"));
    }
    let results: Vec<_> = pool(jobs).install(|| (0..n_trials).into_par_iter().map(&f).collect());
    results.into_iter().collect()
}

pub fn run_trials(
    cfg: &SyntheticConfig,
    settings: &TrialSettings,
    n_trials: usize,
    jobs: usize,
) -> Result<TrialReport, SimError> {
    let rows = collect_trials(n_trials, jobs, |t| run_trial(cfg, settings, t))?;
    Ok(report(rows, settings.ltt.alpha))
}

/// One report per level in `alphas`, the trials sharing data across levels.
pub fn run_alpha_sweep(
    cfg: &SyntheticConfig,
    settings: &TrialSettings,
    alphas: &[f64],
    n_trials: usize,
    jobs: usize,
) -> Result<Vec<TrialReport>, SimError> {
    let per_trial = collect_trials(n_trials, jobs, |t| run_alpha_sweep_trial(cfg, settings, alphas, t))?;
    let mut per_alpha: Vec<Vec<TrialRow>> = alphas.iter().map(|_| Vec::with_capacity(n_trials)).collect();
    for rows in per_trial {
        for (k, row) in rows.into_iter().enumerate() {
            per_alpha[k].push(row);
        }
    }
    Ok(alphas.iter().zip(per_alpha).map(|(&a, rows)| report(rows, a)).collect())
}

pub fn run_selective_trials(
    cfg: &SyntheticConfig,
    sel: &SelectiveConfig,
    settings: &TrialSettings,
    n_trials: usize,
    jobs: usize,
) -> Result<TrialReport, SimError> {
    let rows = collect_trials(n_trials, jobs, |t| run_selective_trial(cfg, sel, settings, t))?;
    Ok(report(rows, settings.ltt.alpha))
}
