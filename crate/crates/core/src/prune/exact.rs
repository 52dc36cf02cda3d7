//! Exact solver: tree knapsack over removal-root antichains.
//!
//! `table[k][c]` holds the largest removed weight reachable inside a subtree
//! with at most `k` cuts and exactly `c` removed nodes. The root table gives
//! the optimal removal count `c*`; the lexicographic tie-break is then built
//! one root at a time, asking the same DP whether the prefix still extends to
//! a feasible `c*`-node solution.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{Deadline, NoDeadline, PruneConfig, PruneError, RemovalSet, TreeIndex};
use crate::ast::{AnnotatedAst, NodeId};
use crate::exact::ExactSum;

type Table = Vec<Vec<Option<ExactSum>>>;

pub fn prune_exact(ast: &AnnotatedAst, cfg: &PruneConfig) -> Result<RemovalSet, PruneError> {
    prune_exact_with(ast, cfg, &NoDeadline)
}

pub fn prune_exact_with(
    ast: &AnnotatedAst,
    cfg: &PruneConfig,
    deadline: &dyn Deadline,
) -> Result<RemovalSet, PruneError> {
    TreeIndex::new(ast).prune_exact(cfg, deadline)
}

fn keep_max(slot: &mut Option<ExactSum>, candidate: ExactSum) {
    match slot {
        Some(cur) if cur.cmp_exact(&candidate) != Ordering::Less => {}
        _ => *slot = Some(candidate),
    }
}

fn zero_table(max_roots: usize) -> Table {
    vec![vec![Some(ExactSum::new())]; max_roots + 1]
}

impl TreeIndex<'_> {
    pub fn prune_exact(
        &self,
        cfg: &PruneConfig,
        deadline: &dyn Deadline,
    ) -> Result<RemovalSet, PruneError> {
        cfg.validate()?;
        let ast = self.ast;
        if self.fits(&ExactSum::new(), cfg.lambda) {
            return Ok(RemovalSet::empty(ast));
        }
        if cfg.t_max == 1 {
            return Ok(self.best_single(cfg.lambda));
        }

        let n = ast.len();
        let root = ast.root();
        let can_root: Vec<bool> = (0..n).map(|v| v != root).collect();
        let skip = vec![false; n];
        let best = self.removal_frontier(&can_root, &skip, cfg.t_max, n - 1, deadline)?;
        let target = match (1..best.len())
            .find(|&c| best[c].as_ref().is_some_and(|w| self.fits(w, cfg.lambda)))
        {
            Some(c) => c,
            None => return Ok(RemovalSet::full(ast)),
        };

        let mut chosen: Vec<NodeId> = Vec::new();
        let mut count = 0;
        let mut weight = ExactSum::new();
        loop {
            if count == target && self.fits(&weight, cfg.lambda) {
                return Ok(RemovalSet::from_roots(ast, &chosen));
            }
            let start = chosen.last().map_or(0, |&v| v + 1);
            let mut extended = false;
            for r in start..n {
                if r == root
                    || count + self.size[r] > target
                    || chosen.iter().any(|&p| {
                        self.is_ancestor_or_self(p, r) || self.is_ancestor_or_self(r, p)
                    })
                {
                    continue;
                }
                chosen.push(r);
                let w = weight.plus(&self.subtree_weight[r]);
                if self.extends(&chosen, count + self.size[r], &w, target, cfg, deadline)? {
                    count += self.size[r];
                    weight = w;
                    extended = true;
                    break;
                }
                chosen.pop();
            }
            // The prefix was extendable when chosen, so some next root works.
            debug_assert!(extended, "tie-break search lost feasibility");
            if !extended {
                return Ok(RemovalSet::full(ast));
            }
        }
    }

    /// `t_max = 1`: the first feasible single subtree in (size, id) order.
    fn best_single(&self, lambda: f64) -> RemovalSet {
        self.singles
            .iter()
            .find(|&&(_, retained)| retained <= lambda)
            .map_or_else(
                || RemovalSet::full(self.ast),
                |&(v, _)| RemovalSet::from_roots(self.ast, &[v]),
            )
    }

    /// Can the sorted root prefix `chosen` be completed, using only larger
    /// ids, into a feasible solution with exactly `target` removed nodes?
    fn extends(
        &self,
        chosen: &[NodeId],
        count: usize,
        weight: &ExactSum,
        target: usize,
        cfg: &PruneConfig,
        deadline: &dyn Deadline,
    ) -> Result<bool, PruneError> {
        if count == target {
            return Ok(self.fits(weight, cfg.lambda));
        }
        let spare_roots = cfg.t_max - chosen.len();
        if spare_roots == 0 {
            return Ok(false);
        }
        let n = self.ast.len();
        let last = *chosen.last().expect("non-empty prefix");
        let skip: Vec<bool> =
            (0..n).map(|v| chosen.iter().any(|&p| self.is_ancestor_or_self(p, v))).collect();
        let can_root: Vec<bool> = (0..n)
            .map(|v| {
                v != self.ast.root()
                    && v > last
                    && !skip[v]
                    && !chosen.iter().any(|&p| self.is_ancestor_or_self(v, p))
            })
            .collect();
        let rest = target - count;
        let best = self.removal_frontier(&can_root, &skip, spare_roots, rest, deadline)?;
        Ok(best
            .get(rest)
            .and_then(Option::as_ref)
            .is_some_and(|extra| self.fits(&weight.plus(extra), cfg.lambda)))
    }

    /// Root-level row of the DP at `max_roots` cuts: entry `c` is the largest
    /// removable weight with exactly `c` removed nodes, if any.
    fn removal_frontier(
        &self,
        can_root: &[bool],
        skip: &[bool],
        max_roots: usize,
        max_count: usize,
        deadline: &dyn Deadline,
    ) -> Result<Vec<Option<ExactSum>>, PruneError> {
        let ast = self.ast;
        let mut tables: Vec<Option<Table>> = vec![None; ast.len()];
        for &v in self.order.iter().rev() {
            if deadline.expired() {
                return Err(PruneError::TimedOut);
            }
            if skip[v] {
                tables[v] = Some(zero_table(max_roots));
                continue;
            }
            let mut table = zero_table(max_roots);
            for &c in ast.children(v) {
                let child = tables[c].take().expect("children are finished first");
                table = merge(&table, &child, max_roots, max_count);
            }
            let sz = self.size[v];
            if can_root[v] && sz <= max_count {
                for row in table.iter_mut().skip(1) {
                    if row.len() <= sz {
                        row.resize(sz + 1, None);
                    }
                    keep_max(&mut row[sz], self.subtree_weight[v].clone());
                }
            }
            tables[v] = Some(table);
        }
        let mut table = tables[ast.root()].take().expect("root table");
        Ok(table.swap_remove(max_roots))
    }
}

fn merge(a: &Table, b: &Table, max_roots: usize, max_count: usize) -> Table {
    let la = a.iter().map(Vec::len).max().unwrap_or(1);
    let lb = b.iter().map(Vec::len).max().unwrap_or(1);
    let len = (la + lb - 1).min(max_count + 1);
    let mut out: Table = vec![vec![None; len]; max_roots + 1];
    for (ka, row_a) in a.iter().enumerate() {
        for (ca, wa) in row_a.iter().enumerate() {
            let Some(wa) = wa else { continue };
            for (kb, row_b) in b.iter().enumerate().take(max_roots - ka + 1) {
                for (cb, wb) in row_b.iter().enumerate() {
                    let Some(wb) = wb else { continue };
                    if ca + cb >= len {
                        break;
                    }
                    keep_max(&mut out[ka + kb][ca + cb], wa.plus(wb));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::tests::tiny;
    use crate::ast::from_parents;

    fn cfg(lambda: f64, t_max: usize) -> PruneConfig {
        PruneConfig::new(lambda, t_max).unwrap()
    }

    #[test]
    fn tiny_single_cut_removes_everything() {
        let t = tiny();
        let r = prune_exact(&t, &cfg(1.0, 1)).unwrap();
        assert_eq!(r.removal_count(), 4);
    }

    #[test]
    fn tiny_two_cuts_removes_b_and_d() {
        let t = tiny();
        let r = prune_exact(&t, &cfg(1.0, 2)).unwrap();
        assert_eq!(r.removed_ids(), vec![1, 3]);
        assert_eq!(super::super::retained_weight(&t, &r).unwrap(), 0.4);
    }

    #[test]
    fn generous_budget_removes_nothing() {
        let t = tiny();
        for t_max in 1..4 {
            assert_eq!(prune_exact(&t, &cfg(3.9, t_max)).unwrap().removal_count(), 0);
            assert_eq!(prune_exact(&t, &cfg(100.0, t_max)).unwrap().removal_count(), 0);
        }
    }

    #[test]
    fn zero_budget_prunes_whole_tree() {
        let t = tiny();
        for t_max in 1..4 {
            let r = prune_exact(&t, &cfg(0.0, t_max)).unwrap();
            assert_eq!(r, RemovalSet::full(&t));
        }
    }

    #[test]
    fn zero_weight_root_keeps_root() {
        // With a weightless root, cutting below it always meets a zero budget.
        let t = from_parents("z", &[None, Some(0), Some(1)], &["M", "F", "x"], &[0.0, 0.5, 0.5])
            .unwrap();
        let r = prune_exact(&t, &cfg(0.0, 1)).unwrap();
        assert_eq!(r.removed_ids(), vec![1, 2]);
    }

    #[test]
    fn ties_go_to_smallest_root_ids() {
        // Three equal leaves; removing any two satisfies the budget.
        let t = from_parents(
            "tie",
            &[None, Some(0), Some(0), Some(0)],
            &["r", "a", "b", "c"],
            &[0.0, 1.0, 1.0, 1.0],
        )
        .unwrap();
        let r = prune_exact(&t, &cfg(1.0, 2)).unwrap();
        assert_eq!(r.removed_ids(), vec![1, 2]);
        let r = prune_exact(&t, &cfg(2.0, 1)).unwrap();
        assert_eq!(r.removed_ids(), vec![1]);
    }

    #[test]
    fn expired_deadline_is_reported() {
        let t = tiny();
        let expired = || true;
        assert_eq!(prune_exact_with(&t, &cfg(1.0, 2), &expired), Err(PruneError::TimedOut));
    }
}
