//! Greedy baseline: repeatedly cut the subtree that lowers the retained
//! negative log-likelihood the most.

use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{PruneConfig, PruneError, RemovalSet};
use crate::ast::{AnnotatedAst, NodeId};
use crate::exact::ExactSum;

/// Each step considers every retained non-root node whose cut keeps the
/// number of cuts within `t_max` (a cut may absorb earlier cuts below it) and
/// takes the one removing the most retained weight, smallest id on ties.
/// When no cut helps any more the whole tree is removed.
pub fn prune_greedy(ast: &AnnotatedAst, cfg: &PruneConfig) -> Result<RemovalSet, PruneError> {
    cfg.validate()?;
    let n = ast.len();
    let mut removal = RemovalSet::empty(ast);
    let order = ast.preorder();

    loop {
        let retained = ExactSum::of((0..n).filter(|&v| !removal.removed[v]).map(|v| ast.weight(v)));
        if retained.value() <= cfg.lambda {
            return Ok(removal);
        }

        // Retained weight below each node and cuts strictly inside its subtree.
        let mut gain: Vec<ExactSum> = (0..n)
            .map(|v| {
                if removal.removed[v] {
                    ExactSum::new()
                } else {
                    ExactSum::of([ast.weight(v)])
                }
            })
            .collect();
        let mut cuts_below = alloc::vec![0usize; n];
        for &v in order.iter().rev() {
            if let Some(p) = ast.parent(v) {
                let g = gain[v].clone();
                gain[p].add_sum(&g);
                let is_cut = removal.removed[v] && !removal.removed[p];
                cuts_below[p] += cuts_below[v] + usize::from(is_cut);
            }
        }
        let total_cuts = removal.cut_count(ast);

        let mut best: Option<NodeId> = None;
        for v in 0..n {
            if v == ast.root() || removal.removed[v] {
                continue;
            }
            if total_cuts - cuts_below[v] + 1 > cfg.t_max {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => gain[v].cmp_exact(&gain[b]) == Ordering::Greater,
            };
            if better {
                best = Some(v);
            }
        }

        match best {
            Some(v) if gain[v].value() > 0.0 => {
                removal = removal.with_subtree(ast, v);
            }
            _ => return Ok(RemovalSet::full(ast)),
        }
    }
}

impl RemovalSet {
    fn with_subtree(mut self, ast: &AnnotatedAst, v: NodeId) -> Self {
        let mut stack = alloc::vec![v];
        while let Some(u) = stack.pop() {
            self.removed[u] = true;
            stack.extend_from_slice(ast.children(u));
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::ast::tests::tiny;
    use crate::prune::{prune_exact, retained_weight};

    #[test]
    fn tiny_cuts_heaviest_subtree_first() {
        let t = tiny();
        let r = prune_greedy(&t, &PruneConfig::new(1.9, 1).unwrap()).unwrap();
        assert_eq!(r.removed_ids(), vec![1]);
        assert_eq!(retained_weight(&t, &r).unwrap(), 1.9);
    }

    #[test]
    fn generous_budget_is_untouched() {
        let t = tiny();
        assert_eq!(prune_greedy(&t, &PruneConfig::new(3.9, 1).unwrap()).unwrap().removal_count(), 0);
    }

    #[test]
    fn falls_back_to_full_removal() {
        let t = tiny();
        let cfg = PruneConfig::new(1.0, 1).unwrap();
        let r = prune_greedy(&t, &cfg).unwrap();
        assert_eq!(r.removal_count(), 4);
        assert!(r.removal_count() >= prune_exact(&t, &cfg).unwrap().removal_count());
    }

    #[test]
    fn second_cut_when_allowed() {
        let t = tiny();
        let cfg = PruneConfig::new(0.5, 2).unwrap();
        let r = prune_greedy(&t, &cfg).unwrap();
        // B (2.0) first, then C's subtree (1.8): 0.1 retained.
        assert_eq!(r.removed_ids(), vec![1, 2, 3]);
        assert_eq!(r.check(&t, &cfg), Ok(()));
    }
}
