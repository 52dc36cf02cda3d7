//! Uncertainty-annotated abstract syntax trees.
//!
//! Every node carries a weight: the model's negative log-probability (in
//! nats) of the node given its ancestors. Trees are validated once on
//! construction and are immutable afterwards.
//!
//! Nodes of *different* trees are identified by their [`NodePath`]: the
//! sequence of `(child index, label)` steps from the root. Two distinct
//! nodes of one tree never share a path because sibling indices differ.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::exact::ExactSum;

pub type NodeId = usize;

/// Trees whose total weight exceeds this are rejected, which keeps every
/// partial sum finite.
pub const MAX_TOTAL_WEIGHT: f64 = 1e300;

#[derive(Debug, Clone, PartialEq)]
pub struct AstNode {
    pub id: NodeId,
    pub label: String,
    pub children: Vec<NodeId>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AstError {
    #[error("empty tree: at least one node is required")]
    Empty,
    #[error("node ids must be 0..{expected} without gaps or duplicates (offending id {id})")]
    NonDenseIds { id: NodeId, expected: usize },
    #[error("root id {0} does not refer to a node")]
    UnknownRoot(NodeId),
    #[error("negative weight {weight} on node {id}")]
    NegativeWeight { id: NodeId, weight: f64 },
    #[error("non-finite weight on node {id}")]
    NonFiniteWeight { id: NodeId },
    #[error("total weight exceeds {MAX_TOTAL_WEIGHT}")]
    WeightOverflow,
    #[error("node {id} lists unknown child {child}")]
    UnknownChild { id: NodeId, child: NodeId },
    #[error("node {id} lists child {child} more than once")]
    DuplicateChild { id: NodeId, child: NodeId },
    #[error("root {0} must not have a parent")]
    RootHasParent(NodeId),
    #[error("node {0} has more than one parent")]
    MultipleParents(NodeId),
    #[error("node {0} is unreachable from the root")]
    Unreachable(NodeId),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
}

impl AstError {
    /// Short name of the violated rule.
    pub fn rule(&self) -> &'static str {
        match self {
            AstError::Empty => "non-empty",
            AstError::NonDenseIds { .. } => "dense ids",
            AstError::UnknownRoot(_) => "root exists",
            AstError::NegativeWeight { .. } => "negative weight",
            AstError::NonFiniteWeight { .. } => "finite weight",
            AstError::WeightOverflow => "finite total weight",
            AstError::UnknownChild { .. } => "children exist",
            AstError::DuplicateChild { .. } => "distinct children",
            AstError::RootHasParent(_) => "single root",
            AstError::MultipleParents(_) => "single parent",
            AstError::Unreachable(_) => "connected",
            AstError::UnknownNode(_) => "known node",
        }
    }
}

/// One step of a [`NodePath`]: the child index under the parent and the
/// node's label. The root step has no index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodePath {
    pub root_label: String,
    pub steps: Vec<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedAst {
    task_id: String,
    root: NodeId,
    nodes: Vec<AstNode>,
    parent: Vec<Option<NodeId>>,
}

impl AnnotatedAst {
    /// Validates and builds a tree. `nodes` may come in any order; they are
    /// stored indexed by id.
    pub fn new(
        task_id: impl Into<String>,
        root: NodeId,
        mut nodes: Vec<AstNode>,
    ) -> Result<Self, AstError> {
        let n = nodes.len();
        if n == 0 {
            return Err(AstError::Empty);
        }
        let mut seen = vec![false; n];
        for node in &nodes {
            if node.id >= n || seen[node.id] {
                return Err(AstError::NonDenseIds { id: node.id, expected: n });
            }
            seen[node.id] = true;
        }
        nodes.sort_by_key(|node| node.id);
        if root >= n {
            return Err(AstError::UnknownRoot(root));
        }

        let mut total = ExactSum::new();
        for node in &nodes {
            if !node.weight.is_finite() {
                return Err(AstError::NonFiniteWeight { id: node.id });
            }
            if node.weight < 0.0 {
                return Err(AstError::NegativeWeight { id: node.id, weight: node.weight });
            }
            total.add(node.weight);
        }
        if total.value() > MAX_TOTAL_WEIGHT {
            return Err(AstError::WeightOverflow);
        }

        let mut parent = vec![None; n];
        for node in &nodes {
            for (i, &child) in node.children.iter().enumerate() {
                if child >= n {
                    return Err(AstError::UnknownChild { id: node.id, child });
                }
                if node.children[..i].contains(&child) {
                    return Err(AstError::DuplicateChild { id: node.id, child });
                }
                if child == root {
                    return Err(AstError::RootHasParent(root));
                }
                if parent[child].is_some() {
                    return Err(AstError::MultipleParents(child));
                }
                parent[child] = Some(node.id);
            }
        }

        // Single parent per node plus reachability rules out cycles.
        let mut reached = vec![false; n];
        let mut stack = vec![root];
        reached[root] = true;
        while let Some(v) = stack.pop() {
            for &c in &nodes[v].children {
                if !reached[c] {
                    reached[c] = true;
                    stack.push(c);
                }
            }
        }
        if let Some(v) = reached.iter().position(|r| !r) {
            return Err(AstError::Unreachable(v));
        }

        Ok(Self { task_id: task_id.into(), root, nodes, parent })
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[AstNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &AstNode {
        &self.nodes[id]
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parent[id]
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.nodes[id].label
    }

    pub fn weight(&self, id: NodeId) -> f64 {
        self.nodes[id].weight
    }

    /// Sum of all node weights, summed exactly and rounded once.
    pub fn total_weight(&self) -> f64 {
        ExactSum::of(self.nodes.iter().map(|n| n.weight)).value()
    }

    /// Nodes in depth-first pre-order (children in their listed order).
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            out.push(v);
            stack.extend(self.nodes[v].children.iter().rev());
        }
        out
    }

    pub fn node_path(&self, id: NodeId) -> Result<NodePath, AstError> {
        if id >= self.len() {
            return Err(AstError::UnknownNode(id));
        }
        let mut steps = Vec::new();
        let mut v = id;
        while let Some(p) = self.parent[v] {
            let idx = self.nodes[p]
                .children
                .iter()
                .position(|&c| c == v)
                .expect("parent lists its child");
            steps.push((idx, self.nodes[v].label.clone()));
            v = p;
        }
        steps.reverse();
        Ok(NodePath { root_label: self.nodes[self.root].label.clone(), steps })
    }

    /// Deterministic text form of the tree's labels and shape. Weights and
    /// node ids are excluded, so two trees serialize equally iff they are
    /// label-and-shape identical.
    pub fn canonical_serialization(&self) -> String {
        let mut out = String::new();
        self.write_canonical(self.root, &mut out);
        out
    }

    fn write_canonical(&self, v: NodeId, out: &mut String) {
        // Length-prefixed labels make the encoding injective for any label text.
        let label = &self.nodes[v].label;
        let _ = write!(out, "{}:{}", label.len(), label);
        let children = &self.nodes[v].children;
        if !children.is_empty() {
            out.push('(');
            for &c in children {
                self.write_canonical(c, out);
            }
            out.push(')');
        }
    }
}

/// Convenience constructor used by tests and the synthetic harness:
/// `parents[i]` is the parent of node `i` (`None` for the root), and children
/// are ordered by id.
pub fn from_parents(
    task_id: &str,
    parents: &[Option<NodeId>],
    labels: &[&str],
    weights: &[f64],
) -> Result<AnnotatedAst, AstError> {
    let n = parents.len();
    let mut nodes: Vec<AstNode> = (0..n)
        .map(|i| AstNode {
            id: i,
            label: labels.get(i).copied().unwrap_or("n").into(),
            children: Vec::new(),
            weight: weights[i],
        })
        .collect();
    let mut root = None;
    for (i, p) in parents.iter().enumerate() {
        match p {
            Some(p) if *p < n => nodes[*p].children.push(i),
            Some(p) => return Err(AstError::UnknownChild { id: *p, child: i }),
            None => root = Some(i),
        }
    }
    let root = root.ok_or(AstError::Empty)?;
    AnnotatedAst::new(task_id, root, nodes)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// A:0.1 -> {B:2.0, C:0.3 -> {D:1.5}}
    pub(crate) fn tiny() -> AnnotatedAst {
        from_parents(
            "tiny",
            &[None, Some(0), Some(0), Some(2)],
            &["A", "B", "C", "D"],
            &[0.1, 2.0, 0.3, 1.5],
        )
        .unwrap()
    }

    #[test]
    fn single_node_tree() {
        let t = from_parents("m", &[None], &["Module"], &[0.0]).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.total_weight(), 0.0);
    }

    #[test]
    fn tiny_fixture_shape_and_weight() {
        let t = tiny();
        assert_eq!(t.len(), 4);
        assert_eq!(t.label(t.root()), "A");
        assert_eq!(t.children(0), &[1, 2]);
        assert_eq!(t.parent(3), Some(2));
        assert_eq!(t.total_weight(), 3.9);
    }

    #[test]
    fn unit_weights_sum_to_node_count() {
        let parents: Vec<Option<usize>> =
            (0..17).map(|i| if i == 0 { None } else { Some((i - 1) / 2) }).collect();
        let t = from_parents("u", &parents, &[], &[1.0; 17]).unwrap();
        assert_eq!(t.total_weight(), 17.0);
    }

    #[test]
    fn rejects_negative_weight() {
        let err = from_parents("x", &[None], &["A"], &[-0.5]).unwrap_err();
        assert_eq!(err.rule(), "negative weight");
        assert!(alloc::string::ToString::to_string(&err).contains("negative weight"));
    }

    #[test]
    fn rejects_structural_violations() {
        let node = |id, children: Vec<usize>| AstNode {
            id,
            label: "x".into(),
            children,
            weight: 0.0,
        };
        let gap = AnnotatedAst::new("t", 0, vec![node(0, vec![]), node(2, vec![])]);
        assert!(matches!(gap, Err(AstError::NonDenseIds { .. })));
        let two_parents = AnnotatedAst::new(
            "t",
            0,
            vec![node(0, vec![1, 2]), node(1, vec![2]), node(2, vec![])],
        );
        assert_eq!(two_parents, Err(AstError::MultipleParents(2)));
        let dup = AnnotatedAst::new("t", 0, vec![node(0, vec![1, 1]), node(1, vec![])]);
        assert_eq!(dup, Err(AstError::DuplicateChild { id: 0, child: 1 }));
        let cycle = AnnotatedAst::new(
            "t",
            0,
            vec![node(0, vec![]), node(1, vec![2]), node(2, vec![1])],
        );
        assert!(matches!(cycle, Err(AstError::Unreachable(_))));
        let back_to_root = AnnotatedAst::new("t", 0, vec![node(0, vec![1]), node(1, vec![0])]);
        assert_eq!(back_to_root, Err(AstError::RootHasParent(0)));
        let unknown = AnnotatedAst::new("t", 0, vec![node(0, vec![5])]);
        assert_eq!(unknown, Err(AstError::UnknownChild { id: 0, child: 5 }));
        let mut inf = node(0, vec![]);
        inf.weight = f64::INFINITY;
        assert_eq!(AnnotatedAst::new("t", 0, vec![inf]), Err(AstError::NonFiniteWeight { id: 0 }));
    }

    #[test]
    fn node_paths() {
        let t = tiny();
        let root = t.node_path(0).unwrap();
        assert_eq!(root.root_label, "A");
        assert!(root.steps.is_empty());
        let d = t.node_path(3).unwrap();
        assert_eq!(d.steps, vec![(1, "C".into()), (0, "D".into())]);
        assert_eq!(t.node_path(9), Err(AstError::UnknownNode(9)));

        let twins = from_parents("s", &[None, Some(0), Some(0)], &["A", "X", "X"], &[0.0; 3])
            .unwrap();
        let (a, b) = (twins.node_path(1).unwrap(), twins.node_path(2).unwrap());
        assert_ne!(a, b);
        assert_eq!(a.steps[0].1, b.steps[0].1);
        assert_ne!(a.steps[0].0, b.steps[0].0);
    }

    #[test]
    fn canonical_form_ignores_weights_not_labels() {
        let t = tiny();
        assert_eq!(t.canonical_serialization(), tiny().canonical_serialization());
        let heavier = from_parents(
            "tiny",
            &[None, Some(0), Some(0), Some(2)],
            &["A", "B", "C", "D"],
            &[0.2, 4.0, 0.6, 3.0],
        )
        .unwrap();
        assert_eq!(t.canonical_serialization(), heavier.canonical_serialization());
        let relabeled = from_parents(
            "tiny",
            &[None, Some(0), Some(0), Some(2)],
            &["A", "B", "C", "E"],
            &[0.1, 2.0, 0.3, 1.5],
        )
        .unwrap();
        assert_ne!(t.canonical_serialization(), relabeled.canonical_serialization());
    }

    #[test]
    fn canonical_form_is_independent_of_node_numbering() {
        // Same tree as tiny() with ids permuted.
        let permuted = AnnotatedAst::new(
            "p",
            3,
            vec![
                AstNode { id: 3, label: "A".into(), children: vec![2, 0], weight: 0.1 },
                AstNode { id: 2, label: "B".into(), children: vec![], weight: 2.0 },
                AstNode { id: 0, label: "C".into(), children: vec![1], weight: 0.3 },
                AstNode { id: 1, label: "D".into(), children: vec![], weight: 1.5 },
            ],
        )
        .unwrap();
        assert_eq!(permuted.canonical_serialization(), tiny().canonical_serialization());
    }
}
