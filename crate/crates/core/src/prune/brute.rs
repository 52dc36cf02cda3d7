//! Exhaustive reference solver for small trees.

use alloc::vec;
use alloc::vec::Vec;

use super::{retained_weight, PruneConfig, PruneError, RemovalSet};
use crate::ast::{AnnotatedAst, NodeId};

pub const BRUTE_FORCE_MAX_NODES: usize = 20;

/// Enumerates every antichain of at most `t_max` non-root nodes, plus the
/// whole-tree removal, and keeps the smallest feasible removal (ties by the
/// sorted root list).
pub fn prune_bruteforce(ast: &AnnotatedAst, cfg: &PruneConfig) -> Result<RemovalSet, PruneError> {
    cfg.validate()?;
    let n = ast.len();
    if n > BRUTE_FORCE_MAX_NODES {
        return Err(PruneError::TooLarge { nodes: n, limit: BRUTE_FORCE_MAX_NODES });
    }
    let mut search = Search {
        ast,
        cfg,
        chosen: Vec::new(),
        best: (n, vec![ast.root()], RemovalSet::full(ast)),
    };
    search.visit(0);
    Ok(search.best.2)
}

struct Search<'a> {
    ast: &'a AnnotatedAst,
    cfg: &'a PruneConfig,
    chosen: Vec<NodeId>,
    best: (usize, Vec<NodeId>, RemovalSet),
}

impl Search<'_> {
    fn visit(&mut self, start: NodeId) {
        let removal = RemovalSet::from_roots(self.ast, &self.chosen);
        let count = removal.removal_count();
        let retained = retained_weight(self.ast, &removal).expect("same tree");
        if retained <= self.cfg.lambda && (count, &self.chosen) < (self.best.0, &self.best.1) {
            self.best = (count, self.chosen.clone(), removal.clone());
        }
        if self.chosen.len() == self.cfg.t_max {
            return;
        }
        for r in start..self.ast.len() {
            if r == self.ast.root() || self.chosen.iter().any(|&p| self.related(p, r)) {
                continue;
            }
            self.chosen.push(r);
            self.visit(r + 1);
            self.chosen.pop();
        }
    }

    fn related(&self, a: NodeId, b: NodeId) -> bool {
        self.descends(a, b) || self.descends(b, a)
    }

    fn descends(&self, mut v: NodeId, ancestor: NodeId) -> bool {
        loop {
            if v == ancestor {
                return true;
            }
            match self.ast.parent(v) {
                Some(p) => v = p,
                None => return false,
            }
        }
    }
}
