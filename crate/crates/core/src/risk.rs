//! Prediction-set membership and the empirical structured risk.
//!
//! A partial program contains a complete program when every retained node
//! has a node at the same [`NodePath`](crate::ast::NodePath) in the
//! candidate. Because the retained part is top-closed, this is checked by
//! walking both trees from the root in lock step.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::ast::AnnotatedAst;
use crate::prune::{
    prune_greedy, Deadline, NoDeadline, PruneConfig, PruneError, RemovalSet, TreeIndex,
};

#[derive(Debug, Clone, PartialEq)]
pub struct PartialProgram<'a> {
    pub base: &'a AnnotatedAst,
    pub removal: RemovalSet,
}

impl<'a> PartialProgram<'a> {
    pub fn new(base: &'a AnnotatedAst, removal: RemovalSet) -> Result<Self, PruneError> {
        if !removal.is_consistent_with(base) {
            return Err(PruneError::Mismatch {
                expected: base.task_id().into(),
                found: removal.task_id().into(),
            });
        }
        Ok(Self { base, removal })
    }

    pub fn identity(base: &'a AnnotatedAst) -> Self {
        Self { base, removal: RemovalSet::empty(base) }
    }

    pub fn removed_fraction(&self) -> f64 {
        self.removal.removal_count() as f64 / self.base.len() as f64
    }

    pub fn contains(&self, candidate: &AnnotatedAst) -> bool {
        contains(self, candidate)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecordError {
    #[error("record {0} has no labels")]
    NoLabels(String),
    #[error("record {task_id}: score must be finite and non-negative")]
    InvalidScore { task_id: String },
}

/// One calibration task: the generated tree and the set of correct programs.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord {
    pub task_id: String,
    pub generated: AnnotatedAst,
    labels: Vec<AnnotatedAst>,
    pub score: Option<f64>,
}

impl CalibrationRecord {
    /// Labels are deduplicated by canonical form, keeping the first copy.
    pub fn new(
        task_id: impl Into<String>,
        generated: AnnotatedAst,
        labels: Vec<AnnotatedAst>,
        score: Option<f64>,
    ) -> Result<Self, RecordError> {
        let task_id = task_id.into();
        if labels.is_empty() {
            return Err(RecordError::NoLabels(task_id));
        }
        if score.is_some_and(|s| !s.is_finite() || s < 0.0) {
            return Err(RecordError::InvalidScore { task_id });
        }
        let mut seen: Vec<String> = Vec::with_capacity(labels.len());
        let mut unique = Vec::with_capacity(labels.len());
        for label in labels {
            let key = label.canonical_serialization();
            if !seen.contains(&key) {
                seen.push(key);
                unique.push(label);
            }
        }
        Ok(Self { task_id, generated, labels: unique, score })
    }

    pub fn labels(&self) -> &[AnnotatedAst] {
        &self.labels
    }
}

/// Which pruner builds the partial programs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    #[default]
    Exact,
    Greedy,
}

pub fn contains(partial: &PartialProgram<'_>, candidate: &AnnotatedAst) -> bool {
    let base = partial.base;
    let removal = &partial.removal;
    if removal.is_removed(base.root()) {
        return true;
    }
    if base.label(base.root()) != candidate.label(candidate.root()) {
        return false;
    }
    let mut stack = vec![(base.root(), candidate.root())];
    while let Some((v, w)) = stack.pop() {
        let theirs = candidate.children(w);
        for (i, &c) in base.children(v).iter().enumerate() {
            if removal.is_removed(c) {
                continue;
            }
            match theirs.get(i) {
                Some(&d) if base.label(c) == candidate.label(d) => stack.push((c, d)),
                _ => return false,
            }
        }
    }
    true
}

/// 0 when some label lies in the set, 1 otherwise.
pub fn set_loss(partial: &PartialProgram<'_>, labels: &[AnnotatedAst]) -> u8 {
    u8::from(!labels.iter().any(|y| contains(partial, y)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub risk: f64,
    pub losses: Vec<u8>,
    pub mean_removal_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("pruning record {task_id}: {source}")]
pub struct RiskError {
    pub task_id: String,
    pub source: PruneError,
}

pub fn empirical_risk(
    records: &[CalibrationRecord],
    cfg: &PruneConfig,
    strategy: Strategy,
) -> Result<RiskReport, RiskError> {
    empirical_risk_with(records, cfg, strategy, &NoDeadline)
}

pub fn empirical_risk_with(
    records: &[CalibrationRecord],
    cfg: &PruneConfig,
    strategy: Strategy,
    deadline: &dyn Deadline,
) -> Result<RiskReport, RiskError> {
    let mut losses = Vec::with_capacity(records.len());
    let mut removal_sum = 0.0;
    for rec in records {
        let removal = prune_with(&rec.generated, cfg, strategy, deadline)
            .map_err(|source| RiskError { task_id: rec.task_id.clone(), source })?;
        let partial = PartialProgram { base: &rec.generated, removal };
        removal_sum += partial.removed_fraction();
        losses.push(set_loss(&partial, rec.labels()));
    }
    let n = records.len().max(1) as f64;
    let risk = losses.iter().map(|&l| f64::from(l)).sum::<f64>() / n;
    Ok(RiskReport { risk, losses, mean_removal_fraction: removal_sum / n })
}

pub(crate) fn prune_with(
    ast: &AnnotatedAst,
    cfg: &PruneConfig,
    strategy: Strategy,
    deadline: &dyn Deadline,
) -> Result<RemovalSet, PruneError> {
    match strategy {
        Strategy::Exact => TreeIndex::new(ast).prune_exact(cfg, deadline),
        Strategy::Greedy => prune_greedy(ast, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::from_parents;
    use crate::ast::tests::tiny;

    /// A -> {E, C -> {D}}: B swapped for E in place.
    fn swapped() -> AnnotatedAst {
        from_parents("y", &[None, Some(0), Some(0), Some(2)], &["A", "E", "C", "D"], &[0.0; 4])
            .unwrap()
    }

    /// A -> {C -> {D}}: C moved to child index 0.
    fn shifted() -> AnnotatedAst {
        from_parents("y", &[None, Some(0), Some(1)], &["A", "C", "D"], &[0.0; 3]).unwrap()
    }

    #[test]
    fn identity_partial_contains_itself() {
        let t = tiny();
        assert!(PartialProgram::identity(&t).contains(&t));
        assert!(!PartialProgram::identity(&t).contains(&swapped()));
    }

    #[test]
    fn empty_partial_contains_anything() {
        let t = tiny();
        let p = PartialProgram::new(&t, RemovalSet::full(&t)).unwrap();
        assert!(p.contains(&shifted()));
        assert!(p.contains(&from_parents("z", &[None], &["Q"], &[1.0]).unwrap()));
        assert_eq!(set_loss(&p, &[shifted()]), 0);
    }

    #[test]
    fn membership_is_positional() {
        let t = tiny();
        let p = PartialProgram::new(&t, RemovalSet::from_roots(&t, &[1])).unwrap();
        assert!(p.contains(&swapped()));
        assert!(!p.contains(&shifted()));
        assert_eq!(set_loss(&p, &[shifted()]), 1);
        assert_eq!(set_loss(&p, &[shifted(), swapped()]), 0);
    }

    #[test]
    fn records_deduplicate_labels() {
        let t = tiny();
        // Same shape and labels as tiny, different weights.
        let heavier = from_parents(
            "t2",
            &[None, Some(0), Some(0), Some(2)],
            &["A", "B", "C", "D"],
            &[1.0; 4],
        )
        .unwrap();
        let rec = CalibrationRecord::new("t", t.clone(), vec![t.clone(), heavier, swapped()], None)
            .unwrap();
        assert_eq!(rec.labels().len(), 2);
        assert_eq!(
            CalibrationRecord::new("t", t.clone(), vec![], None),
            Err(RecordError::NoLabels("t".into()))
        );
        assert!(CalibrationRecord::new("t", t, vec![swapped()], Some(-1.0)).is_err());
    }

    #[test]
    fn empirical_risk_edges() {
        let t = tiny();
        let own = CalibrationRecord::new("a", t.clone(), vec![t.clone()], None).unwrap();
        let other = CalibrationRecord::new("b", t.clone(), vec![shifted()], None).unwrap();
        let cfg = PruneConfig::new(10.0, 1).unwrap();
        let r = empirical_risk(&[own.clone(), other.clone(), own.clone()], &cfg, Strategy::Exact)
            .unwrap();
        assert_eq!(r.losses, vec![0, 1, 0]);
        assert!((r.risk - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.mean_removal_fraction, 0.0);

        let zero = PruneConfig::new(0.0, 1).unwrap();
        let r = empirical_risk(&[own, other], &zero, Strategy::Greedy).unwrap();
        assert_eq!(r.risk, 0.0);
        assert_eq!(r.mean_removal_fraction, 1.0);
    }
}
