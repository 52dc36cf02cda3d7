//! Partial-program construction.
//!
//! Given a tree and a budget `λ`, remove as few nodes as possible so that the
//! retained weight is at most `λ`, where removals are whole subtrees (SC1)
//! and at most `t_max` subtrees are cut (SC2). Removing the tree root is
//! always feasible: it empties the tree and, having no incoming edge, does
//! not count against `t_max`.
//!
//! Retained weights are exact sums rounded once (see [`crate::exact`]), and
//! ties between equally small removals go to the lexicographically smallest
//! sorted list of removal-root ids.

mod brute;
mod exact;
mod greedy;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::ast::{AnnotatedAst, NodeId};
use crate::exact::ExactSum;

pub use brute::{prune_bruteforce, BRUTE_FORCE_MAX_NODES};
pub use exact::{prune_exact, prune_exact_with};
pub use greedy::prune_greedy;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PruneError {
    #[error("budget must be a non-negative number, got {0}")]
    InvalidLambda(f64),
    #[error("t_max must be at least 1")]
    InvalidTMax,
    #[error("brute force refuses trees with {nodes} nodes (limit {limit})")]
    TooLarge { nodes: usize, limit: usize },
    #[error("solver time limit expired")]
    TimedOut,
    #[error("removal set for {found} does not match tree {expected}")]
    Mismatch { expected: String, found: String },
}

/// Budget and structure limit for one pruning problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneConfig {
    pub lambda: f64,
    pub t_max: usize,
}

impl PruneConfig {
    pub fn new(lambda: f64, t_max: usize) -> Result<Self, PruneError> {
        let cfg = Self { lambda, t_max };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PruneError> {
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(PruneError::InvalidLambda(self.lambda));
        }
        if self.t_max == 0 {
            return Err(PruneError::InvalidTMax);
        }
        Ok(())
    }
}

/// Cooperative time limit for the exact solver.
pub trait Deadline {
    fn expired(&self) -> bool;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoDeadline;

impl Deadline for NoDeadline {
    fn expired(&self) -> bool {
        false
    }
}

impl<F: Fn() -> bool> Deadline for F {
    fn expired(&self) -> bool {
        self()
    }
}

/// Which nodes are removed (`β_v = 1`) from a particular tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RemovalSet {
    task_id: String,
    removed: Vec<bool>,
}

impl RemovalSet {
    pub fn empty(ast: &AnnotatedAst) -> Self {
        Self { task_id: ast.task_id().into(), removed: vec![false; ast.len()] }
    }

    pub fn full(ast: &AnnotatedAst) -> Self {
        Self { task_id: ast.task_id().into(), removed: vec![true; ast.len()] }
    }

    /// Removes the subtree under every listed node.
    pub fn from_roots(ast: &AnnotatedAst, roots: &[NodeId]) -> Self {
        let mut out = Self::empty(ast);
        let mut stack: Vec<NodeId> = roots.to_vec();
        while let Some(v) = stack.pop() {
            if !out.removed[v] {
                out.removed[v] = true;
                stack.extend_from_slice(ast.children(v));
            }
        }
        out
    }

    /// Builds a set from an explicit list of removed ids. The list is taken
    /// as is; use [`RemovalSet::check`] to verify SC1/SC2.
    pub fn from_removed(ast: &AnnotatedAst, removed: &[NodeId]) -> Result<Self, PruneError> {
        let mut out = Self::empty(ast);
        for &v in removed {
            if v >= ast.len() {
                return Err(PruneError::Mismatch {
                    expected: ast.task_id().into(),
                    found: out.task_id,
                });
            }
            out.removed[v] = true;
        }
        Ok(out)
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn node_count(&self) -> usize {
        self.removed.len()
    }

    pub fn is_removed(&self, id: NodeId) -> bool {
        self.removed[id]
    }

    pub fn mask(&self) -> &[bool] {
        &self.removed
    }

    pub fn removal_count(&self) -> usize {
        self.removed.iter().filter(|&&r| r).count()
    }

    pub fn removed_ids(&self) -> Vec<NodeId> {
        (0..self.removed.len()).filter(|&v| self.removed[v]).collect()
    }

    /// Removed nodes whose parent is retained, plus the tree root when it is
    /// removed. Sorted by id.
    pub fn removal_roots(&self, ast: &AnnotatedAst) -> Vec<NodeId> {
        (0..self.removed.len())
            .filter(|&v| {
                self.removed[v] && ast.parent(v).is_none_or(|p| !self.removed[p])
            })
            .collect()
    }

    /// Number of cut edges, i.e. the quantity bounded by `t_max`.
    pub fn cut_count(&self, ast: &AnnotatedAst) -> usize {
        self.removal_roots(ast).into_iter().filter(|&v| v != ast.root()).count()
    }

    pub fn is_consistent_with(&self, ast: &AnnotatedAst) -> bool {
        self.task_id == ast.task_id() && self.removed.len() == ast.len()
    }

    fn ensure_consistent(&self, ast: &AnnotatedAst) -> Result<(), PruneError> {
        if self.is_consistent_with(ast) {
            Ok(())
        } else {
            Err(PruneError::Mismatch { expected: ast.task_id().into(), found: self.task_id.clone() })
        }
    }

    /// Verifies downward closure, the cut limit and the budget.
    pub fn check(&self, ast: &AnnotatedAst, cfg: &PruneConfig) -> Result<(), Violation> {
        if !self.is_consistent_with(ast) {
            return Err(Violation::Mismatch);
        }
        for v in 0..ast.len() {
            if self.removed[v] {
                if let Some(&c) = ast.children(v).iter().find(|&&c| !self.removed[c]) {
                    return Err(Violation::NotDownwardClosed { parent: v, child: c });
                }
            }
        }
        let cuts = self.cut_count(ast);
        if cuts > cfg.t_max {
            return Err(Violation::TooManyCuts { cuts, t_max: cfg.t_max });
        }
        let retained = retained_weight(ast, self).map_err(|_| Violation::Mismatch)?;
        if retained > cfg.lambda {
            return Err(Violation::OverBudget { retained, lambda: cfg.lambda });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Mismatch,
    NotDownwardClosed { parent: NodeId, child: NodeId },
    TooManyCuts { cuts: usize, t_max: usize },
    OverBudget { retained: f64, lambda: f64 },
}

/// Exact sum of the weights of nodes not removed, rounded once.
pub fn retained_weight(ast: &AnnotatedAst, removal: &RemovalSet) -> Result<f64, PruneError> {
    removal.ensure_consistent(ast)?;
    Ok(ExactSum::of(
        ast.nodes().iter().filter(|n| !removal.removed[n.id]).map(|n| n.weight),
    )
    .value())
}

pub fn removal_count(removal: &RemovalSet) -> usize {
    removal.removal_count()
}

/// Per-tree data shared by the solvers: subtree sizes and exact subtree
/// weights, plus pre-order intervals for ancestor tests.
#[derive(Debug, Clone)]
pub struct TreeIndex<'a> {
    ast: &'a AnnotatedAst,
    order: Vec<NodeId>,
    enter: Vec<usize>,
    exit: Vec<usize>,
    size: Vec<usize>,
    subtree_weight: Vec<ExactSum>,
    total: ExactSum,
    /// Non-root nodes sorted by (subtree size, id) with the retained weight
    /// after removing each one alone.
    singles: Vec<(NodeId, f64)>,
}

impl<'a> TreeIndex<'a> {
    pub fn new(ast: &'a AnnotatedAst) -> Self {
        let n = ast.len();
        let order = ast.preorder();
        let mut enter = vec![0; n];
        for (pos, &v) in order.iter().enumerate() {
            enter[v] = pos;
        }
        let mut size = vec![1usize; n];
        let mut subtree_weight: Vec<ExactSum> =
            (0..n).map(|v| ExactSum::of([ast.weight(v)])).collect();
        for &v in order.iter().rev() {
            if let Some(p) = ast.parent(v) {
                size[p] += size[v];
                let w = subtree_weight[v].clone();
                subtree_weight[p].add_sum(&w);
            }
        }
        let exit: Vec<usize> = (0..n).map(|v| enter[v] + size[v]).collect();
        let total = subtree_weight[ast.root()].clone();

        let mut singles: Vec<(NodeId, f64)> = (0..n)
            .filter(|&v| v != ast.root())
            .map(|v| (v, total.minus(&subtree_weight[v]).value()))
            .collect();
        singles.sort_by_key(|&(v, _)| (size[v], v));

        Self { ast, order, enter, exit, size, subtree_weight, total, singles }
    }

    pub fn ast(&self) -> &'a AnnotatedAst {
        self.ast
    }

    /// True when `a` is `b` or one of its ancestors.
    pub fn is_ancestor_or_self(&self, a: NodeId, b: NodeId) -> bool {
        self.enter[a] <= self.enter[b] && self.exit[b] <= self.exit[a]
    }

    pub fn subtree_size(&self, v: NodeId) -> usize {
        self.size[v]
    }

    fn fits(&self, removed: &ExactSum, lambda: f64) -> bool {
        self.total.minus(removed).value() <= lambda
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::ast::tests::tiny;

    #[test]
    fn removal_accounting_on_tiny() {
        let t = tiny();
        let empty = RemovalSet::empty(&t);
        assert_eq!(retained_weight(&t, &empty).unwrap(), t.total_weight());
        assert_eq!(removal_count(&empty), 0);
        let full = RemovalSet::full(&t);
        assert_eq!(retained_weight(&t, &full).unwrap(), 0.0);
        assert_eq!(removal_count(&full), 4);
        assert_eq!(full.removal_roots(&t), vec![0]);
        assert_eq!(full.cut_count(&t), 0);
        let bd = RemovalSet::from_roots(&t, &[1, 3]);
        assert_eq!(retained_weight(&t, &bd).unwrap(), 0.4);
        assert_eq!(removal_count(&bd), 2);
        assert_eq!(bd.cut_count(&t), 2);
    }

    #[test]
    fn mismatched_removal_is_an_error() {
        let t = tiny();
        let other = crate::ast::from_parents("other", &[None], &["A"], &[0.0]).unwrap();
        let r = RemovalSet::empty(&other);
        assert!(matches!(retained_weight(&t, &r), Err(PruneError::Mismatch { .. })));
    }

    #[test]
    fn check_reports_each_violation() {
        let t = tiny();
        let cfg = PruneConfig::new(10.0, 1).unwrap();
        let open = RemovalSet::from_removed(&t, &[2]).unwrap();
        assert_eq!(open.check(&t, &cfg), Err(Violation::NotDownwardClosed { parent: 2, child: 3 }));
        let two = RemovalSet::from_roots(&t, &[1, 3]);
        assert_eq!(two.check(&t, &cfg), Err(Violation::TooManyCuts { cuts: 2, t_max: 1 }));
        let tight = PruneConfig::new(0.1, 2).unwrap();
        assert!(matches!(two.check(&t, &tight), Err(Violation::OverBudget { .. })));
        assert_eq!(RemovalSet::full(&t).check(&t, &PruneConfig::new(0.0, 1).unwrap()), Ok(()));
    }

    #[test]
    fn config_validation() {
        assert_eq!(PruneConfig::new(-1.0, 1), Err(PruneError::InvalidLambda(-1.0)));
        assert!(PruneConfig::new(f64::NAN, 1).is_err());
        assert_eq!(PruneConfig::new(1.0, 0), Err(PruneError::InvalidTMax));
        assert!(PruneConfig::new(f64::INFINITY, 3).is_ok());
    }
}
