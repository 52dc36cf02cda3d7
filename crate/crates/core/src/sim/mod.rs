//! Synthetic tasks standing in for a code model.
//!
//! Each task has a generated tree shaped like a parsed function: a
//! zero-weight `Module` root with a single `FunctionDef` child over a random
//! recursive tree. A few disjoint subtrees are marked wrong and get their
//! weights raised by `wrong_shift`; log-normal noise of scale
//! `miscalibration` then blurs the link between weight and wrongness.
//!
//! The model's `m` samples are copies of the generated tree in which every
//! wrong subtree is fixed in place with probability `fix_prob` and, with
//! probability `rewrite_prob`, one harmless subtree is rewritten. A sample is
//! correct when all wrong subtrees were fixed. The reference solution fixes
//! each wrong subtree coarsely, by rewriting the whole statement holding it,
//! so it only matches heavily pruned trees; this is what makes larger `m`
//! useful. "Adversarial" tasks have no correct program sharing the generated
//! root, so their loss is 1 at every budget.
//!
//! Every task and every sample draws from its own derived seed: the tasks do
//! not depend on `m`, and sample `j` is the same for every `m > j`.

mod trials;

pub use trials::{
    aggregate, report, run_alpha_sweep, run_alpha_sweep_trial, run_selective_trial,
    run_selective_trials, run_trial, run_trials, Aggregates, TrialReport, TrialRow, TrialSettings,
};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto, StandardNormal};

use crate::ast::{from_parents, AnnotatedAst, AstError, NodeId};
use crate::ltt::CalibrationError;
use crate::risk::{CalibrationRecord, RecordError};
use crate::selective::SelectiveError;

pub const ROOT_LABEL: &str = "Module";
pub const ADVERSARIAL_ROOT_LABEL: &str = "Script";
pub const BODY_LABEL: &str = "FunctionDef";
pub const VOCAB: [&str; 10] =
    ["Assign", "Call", "Name", "BinOp", "If", "Return", "Compare", "Attribute", "Constant", "For"];

const STREAM_TASK: u64 = 1;
const STREAM_SAMPLE: u64 = 2;
pub(crate) const STREAM_DATA: u64 = 3;
pub(crate) const STREAM_SPLIT: u64 = 4;
pub(crate) const STREAM_SELECT: u64 = 5;

/// Independent 64-bit seed for item `index` of stream `stream`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(seed) ^ stream) ^ index)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightModel {
    Uniform { low: f64, high: f64 },
    /// Pareto with shape 2, shifted so the minimum is 0.
    HeavyTail { scale: f64 },
}

impl WeightModel {
    fn validate(&self) -> Result<(), SimError> {
        let ok = match *self {
            WeightModel::Uniform { low, high } => low.is_finite() && high.is_finite() && 0.0 <= low && low <= high,
            WeightModel::HeavyTail { scale } => scale.is_finite() && scale > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidConfig("weight model parameters"))
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            WeightModel::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            WeightModel::HeavyTail { scale } => {
                let pareto = Pareto::new(scale, 2.0).expect("validated scale");
                pareto.sample(rng) - scale
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelModel {
    /// Attempts at placing a wrong subtree, each succeeding with `wrong_prob`.
    pub max_wrong: usize,
    pub wrong_prob: f64,
    pub wrong_shift: f64,
    pub fix_prob: f64,
    pub rewrite_prob: f64,
    /// Put the reference solution in every label set. Without it, a task with
    /// no correct sample still falls back to the reference.
    pub include_reference: bool,
    pub adversarial_rate: f64,
}

impl Default for LabelModel {
    fn default() -> Self {
        Self {
            max_wrong: 2,
            wrong_prob: 0.35,
            wrong_shift: 1.0,
            fix_prob: 0.5,
            rewrite_prob: 0.2,
            include_reference: true,
            adversarial_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_tasks: usize,
    /// Inclusive node-count range of generated trees.
    pub tree_size_range: (usize, usize),
    pub weight_model: WeightModel,
    pub label_model: LabelModel,
    pub miscalibration: f64,
    pub m: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_tasks: 200,
            tree_size_range: (8, 30),
            weight_model: WeightModel::Uniform { low: 0.0, high: 0.3 },
            label_model: LabelModel::default(),
            miscalibration: 0.0,
            m: 20,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_tasks < 2 {
            return Err(SimError::InvalidConfig("n_tasks must be at least 2"));
        }
        let (lo, hi) = self.tree_size_range;
        if lo < 3 || lo > hi {
            return Err(SimError::InvalidConfig("tree_size_range must satisfy 3 <= min <= max"));
        }
        self.weight_model.validate()?;
        let lm = &self.label_model;
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !(prob(lm.wrong_prob) && prob(lm.fix_prob) && prob(lm.rewrite_prob) && prob(lm.adversarial_rate)) {
            return Err(SimError::InvalidConfig("label model probabilities must lie in [0, 1]"));
        }
        if !(lm.wrong_shift.is_finite() && lm.wrong_shift >= 0.0) {
            return Err(SimError::InvalidConfig("wrong_shift must be finite and non-negative"));
        }
        if !(self.miscalibration.is_finite() && self.miscalibration >= 0.0) {
            return Err(SimError::InvalidConfig("miscalibration must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(&'static str),
    #[error("invalid trial settings: {0}")]
    InvalidSettings(&'static str),
    #[error("trial with seed {seed}: {source}")]
    Calibration { seed: u64, source: CalibrationError },
    #[error("trial with seed {seed}: {source}")]
    Selective { seed: u64, source: SelectiveError },
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Ast(#[from] AstError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub tree: AnnotatedAst,
    pub correct: bool,
    /// Perplexity-style uncertainty: `exp` of the mean non-root weight.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub task_id: String,
    pub generated: AnnotatedAst,
    pub wrong_roots: Vec<NodeId>,
    pub adversarial: bool,
    pub reference: AnnotatedAst,
    pub samples: Vec<SyntheticSample>,
}

impl SyntheticTask {
    /// Record whose labels are the samples for which `accept` holds, plus
    /// the reference when configured or when nothing else is accepted.
    pub fn record_with(
        &self,
        include_reference: bool,
        mut accept: impl FnMut(usize) -> bool,
    ) -> Result<CalibrationRecord, RecordError> {
        let mut labels = Vec::new();
        if include_reference {
            labels.push(self.reference.clone());
        }
        for (j, s) in self.samples.iter().enumerate() {
            if accept(j) {
                labels.push(s.tree.clone());
            }
        }
        if labels.is_empty() {
            labels.push(self.reference.clone());
        }
        CalibrationRecord::new(self.task_id.clone(), self.generated.clone(), labels, None)
    }

    /// Record labeled with the true correctness of every sample.
    pub fn record(&self, include_reference: bool) -> Result<CalibrationRecord, RecordError> {
        self.record_with(include_reference, |j| self.samples[j].correct)
    }
}

/// A small replacement subtree; node 0 is its root.
struct Fresh {
    parents: Vec<Option<usize>>,
    labels: Vec<&'static str>,
    weights: Vec<f64>,
}

impl Fresh {
    fn draw(rng: &mut ChaCha8Rng, avoid: &str, weights: &WeightModel) -> Self {
        let size = rng.random_range(1..=3usize);
        let mut parents = vec![None];
        for v in 1..size {
            parents.push(Some(rng.random_range(0..v)));
        }
        let mut labels = Vec::with_capacity(size);
        loop {
            let l = VOCAB[rng.random_range(0..VOCAB.len())];
            if l != avoid {
                labels.push(l);
                break;
            }
        }
        for _ in 1..size {
            labels.push(VOCAB[rng.random_range(0..VOCAB.len())]);
        }
        let weights = (0..size).map(|_| weights.draw(rng)).collect();
        Self { parents, labels, weights }
    }
}

/// Copies `base`, swapping in replacement subtrees and optionally a new
/// root label.
fn splice(
    base: &AnnotatedAst,
    task_id: &str,
    replacements: &BTreeMap<NodeId, Fresh>,
    root_label: Option<&str>,
) -> Result<AnnotatedAst, AstError> {
    let mut parents: Vec<Option<usize>> = Vec::with_capacity(base.len());
    let mut labels: Vec<&str> = Vec::with_capacity(base.len());
    let mut weights: Vec<f64> = Vec::with_capacity(base.len());
    let mut stack = vec![(base.root(), None)];
    while let Some((v, parent)) = stack.pop() {
        if let Some(f) = replacements.get(&v) {
            let offset = parents.len();
            for k in 0..f.labels.len() {
                parents.push(f.parents[k].map(|p| p + offset).or(parent));
                labels.push(f.labels[k]);
                weights.push(f.weights[k]);
            }
            continue;
        }
        let id = parents.len();
        parents.push(parent);
        labels.push(if parent.is_none() { root_label.unwrap_or(base.label(v)) } else { base.label(v) });
        weights.push(base.weight(v));
        for &c in base.children(v).iter().rev() {
            stack.push((c, Some(id)));
        }
    }
    from_parents(task_id, &parents, &labels, &weights)
}

fn perplexity(tree: &AnnotatedAst) -> f64 {
    let n = tree.len() - 1;
    if n == 0 {
        return 1.0;
    }
    let sum: f64 = (0..tree.len()).filter(|&v| v != tree.root()).map(|v| tree.weight(v)).sum();
    libm::exp(sum / n as f64)
}

pub fn generate_task(cfg: &SyntheticConfig, index: usize) -> Result<SyntheticTask, SimError> {
    let task_seed = derive_seed(cfg.seed, STREAM_TASK, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(task_seed);
    let lm = &cfg.label_model;
    let task_id = format!("task-{index:05}");

    let (lo, hi) = cfg.tree_size_range;
    let n = rng.random_range(lo..=hi);
    let mut parents = vec![None, Some(0)];
    let mut depth = vec![0usize, 1];
    for v in 2..n {
        let p = rng.random_range(1..v);
        parents.push(Some(p));
        depth.push(depth[p] + 1);
    }
    let mut labels = vec![ROOT_LABEL, BODY_LABEL];
    labels.extend((2..n).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]));
    let mut weights = vec![0.0];
    weights.extend((1..n).map(|_| cfg.weight_model.draw(&mut rng)));
    let adversarial = rng.random::<f64>() < lm.adversarial_rate;

    let ancestor_or_self = |a: usize, mut v: usize| loop {
        if v == a {
            return true;
        }
        match parents[v] {
            Some(p) => v = p,
            None => return false,
        }
    };
    let mut wrong_roots: Vec<usize> = Vec::new();
    for _ in 0..lm.max_wrong {
        if rng.random::<f64>() >= lm.wrong_prob {
            continue;
        }
        let eligible: Vec<usize> = (2..n)
            .filter(|&v| {
                wrong_roots.iter().all(|&r| !ancestor_or_self(r, v) && !ancestor_or_self(v, r))
            })
            .collect();
        if !eligible.is_empty() {
            wrong_roots.push(eligible[rng.random_range(0..eligible.len())]);
        }
    }
    wrong_roots.sort_unstable();
    let wrong: Vec<bool> =
        (0..n).map(|v| wrong_roots.iter().any(|&r| ancestor_or_self(r, v))).collect();
    for v in 1..n {
        let noise: f64 = StandardNormal.sample(&mut rng);
        if wrong[v] {
            weights[v] += lm.wrong_shift;
        }
        weights[v] *= libm::exp(cfg.miscalibration * noise);
    }
    let generated = from_parents(&task_id, &parents, &labels, &weights)?;

    // The statement (child of FunctionDef) holding each wrong root.
    let statement = |mut v: usize| {
        while depth[v] > 2 {
            v = parents[v].expect("non-root");
        }
        v
    };
    let mut coarse = BTreeMap::new();
    for &r in &wrong_roots {
        let s = statement(r);
        coarse.entry(s).or_insert_with(|| Fresh::draw(&mut rng, labels[s], &cfg.weight_model));
    }
    let root_label = adversarial.then_some(ADVERSARIAL_ROOT_LABEL);
    let reference = splice(&generated, &format!("{task_id}#ref"), &coarse, root_label)?;

    let harmless: Vec<usize> = (2..n)
        .filter(|&v| wrong_roots.iter().all(|&r| !ancestor_or_self(r, v) && !ancestor_or_self(v, r)))
        .collect();
    let mut samples = Vec::with_capacity(cfg.m);
    for j in 0..cfg.m {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(task_seed, STREAM_SAMPLE, j as u64));
        let mut edits = BTreeMap::new();
        let mut fixed_all = true;
        for &r in &wrong_roots {
            if rng.random::<f64>() < lm.fix_prob {
                edits.insert(r, Fresh::draw(&mut rng, labels[r], &cfg.weight_model));
            } else {
                fixed_all = false;
            }
        }
        if !harmless.is_empty() && rng.random::<f64>() < lm.rewrite_prob {
            let v = harmless[rng.random_range(0..harmless.len())];
            edits.insert(v, Fresh::draw(&mut rng, labels[v], &cfg.weight_model));
        }
        // Edits are disjoint: wrong roots are pairwise unrelated and the
        // rewrite target is unrelated to all of them.
        let tree = splice(&generated, &format!("{task_id}#s{j}"), &edits, None)?;
        let score = perplexity(&tree);
        samples.push(SyntheticSample { tree, correct: fixed_all && !adversarial, score });
    }

    Ok(SyntheticTask { task_id, generated, wrong_roots, adversarial, reference, samples })
}

pub fn generate_tasks(cfg: &SyntheticConfig) -> Result<Vec<SyntheticTask>, SimError> {
    cfg.validate()?;
    (0..cfg.n_tasks).map(|i| generate_task(cfg, i)).collect()
}

/// Records labeled with the ground truth.
pub fn generate_synthetic_set(cfg: &SyntheticConfig) -> Result<Vec<CalibrationRecord>, SimError> {
    generate_tasks(cfg)?
        .iter()
        .map(|t| t.record(cfg.label_model.include_reference).map_err(SimError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prune::{prune_exact, PruneConfig, RemovalSet};
    use crate::risk::{set_loss, PartialProgram};

    fn small() -> SyntheticConfig {
        SyntheticConfig { n_tasks: 40, m: 5, seed: 11, ..SyntheticConfig::default() }
    }

    #[test]
    fn tasks_are_well_formed() {
        let cfg = small();
        for t in generate_tasks(&cfg).unwrap() {
            let g = &t.generated;
            let (lo, hi) = cfg.tree_size_range;
            assert!((lo..=hi).contains(&g.len()));
            assert_eq!(g.label(g.root()), ROOT_LABEL);
            assert_eq!(g.weight(g.root()), 0.0);
            assert_eq!(g.children(g.root()).len(), 1);
            assert_eq!(t.samples.len(), cfg.m);
            for &r in &t.wrong_roots {
                assert!(g.node_path(r).unwrap().steps.len() >= 2);
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_nested_in_m() {
        let cfg = small();
        let a = generate_tasks(&cfg).unwrap();
        assert_eq!(a, generate_tasks(&cfg).unwrap());
        let more = generate_tasks(&SyntheticConfig { m: 9, ..cfg.clone() }).unwrap();
        for (x, y) in a.iter().zip(&more) {
            assert_eq!(x.generated, y.generated);
            assert_eq!(x.reference, y.reference);
            assert_eq!(x.samples[..], y.samples[..cfg.m]);
        }
        let other = generate_tasks(&SyntheticConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn full_removal_is_always_satisfying() {
        for rec in generate_synthetic_set(&small()).unwrap() {
            let p = PartialProgram::new(&rec.generated, RemovalSet::full(&rec.generated)).unwrap();
            assert_eq!(set_loss(&p, rec.labels()), 0);
        }
    }

    #[test]
    fn correctness_matches_wrong_roots() {
        for t in generate_tasks(&small()).unwrap() {
            let own = PartialProgram::identity(&t.generated);
            if t.adversarial {
                assert!(t.samples.iter().all(|s| !s.correct));
            }
            // The generated tree is correct exactly when nothing is wrong.
            if t.wrong_roots.is_empty() && !t.adversarial {
                assert!(own.contains(&t.reference));
            } else {
                assert!(!own.contains(&t.reference));
            }
        }
    }

    /// Without noise and with a large shift, the wrong nodes are exactly the
    /// heavy ones: pruning down to the weight of the correct part removes
    /// them all, and a precise fix then lies in the set.
    #[test]
    fn calibrated_weights_rank_wrong_subtrees() {
        let cfg = SyntheticConfig {
            n_tasks: 60,
            label_model: LabelModel {
                wrong_shift: 100.0,
                fix_prob: 1.0,
                rewrite_prob: 0.0,
                ..LabelModel::default()
            },
            m: 1,
            ..small()
        };
        for t in generate_tasks(&cfg).unwrap() {
            let rec = t.record(false).unwrap();
            let g = &t.generated;
            let correct_weight: f64 = (0..g.len())
                .filter(|&v| t.wrong_roots.iter().all(|&r| !is_ancestor_or_self(g, r, v)))
                .map(|v| g.weight(v))
                .sum();
            let t_max = t.wrong_roots.len().max(1);
            let removal = prune_exact(g, &PruneConfig::new(correct_weight + 1e-9, t_max).unwrap()).unwrap();
            let p = PartialProgram::new(g, removal).unwrap();
            assert_eq!(set_loss(&p, rec.labels()), 0, "{}", t.task_id);
        }
    }

    fn is_ancestor_or_self(g: &AnnotatedAst, a: NodeId, mut v: NodeId) -> bool {
        loop {
            if v == a {
                return true;
            }
            match g.parent(v) {
                Some(p) => v = p,
                None => return false,
            }
        }
    }

    #[test]
    fn adversarial_tasks_lose_at_every_budget() {
        let cfg = SyntheticConfig {
            label_model: LabelModel { adversarial_rate: 1.0, ..LabelModel::default() },
            ..small()
        };
        for rec in generate_synthetic_set(&cfg).unwrap() {
            for lambda in [0.0, 0.5, 3.0, 1e9] {
                let removal = prune_exact(&rec.generated, &PruneConfig::new(lambda, 1).unwrap()).unwrap();
                let p = PartialProgram::new(&rec.generated, removal).unwrap();
                assert_eq!(set_loss(&p, rec.labels()), 1);
            }
        }
    }

    #[test]
    fn wrong_samples_look_more_uncertain() {
        let cfg = SyntheticConfig { n_tasks: 200, ..small() };
        let (mut good, mut bad) = (Vec::new(), Vec::new());
        for t in generate_tasks(&cfg).unwrap() {
            for s in t.samples {
                if s.correct { good.push(s.score) } else { bad.push(s.score) }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(!good.is_empty() && !bad.is_empty());
        assert!(mean(&bad) > mean(&good));
    }

    #[test]
    fn config_errors() {
        let bad = |c: SyntheticConfig| generate_tasks(&c).is_err();
        assert!(bad(SyntheticConfig { n_tasks: 0, ..small() }));
        assert!(bad(SyntheticConfig { tree_size_range: (2, 5), ..small() }));
        assert!(bad(SyntheticConfig { tree_size_range: (9, 5), ..small() }));
        assert!(bad(SyntheticConfig { miscalibration: -1.0, ..small() }));
        assert!(bad(SyntheticConfig {
            weight_model: WeightModel::HeavyTail { scale: 0.0 },
            ..small()
        }));
        let heavy = SyntheticConfig { weight_model: WeightModel::HeavyTail { scale: 0.1 }, ..small() };
        assert!(generate_tasks(&heavy).is_ok());
    }

    #[test]
    fn derived_seeds_differ() {
        let s = [derive_seed(1, 1, 0), derive_seed(1, 1, 1), derive_seed(1, 2, 0), derive_seed(2, 1, 0)];
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                assert_ne!(s[i], s[j]);
            }
        }
    }
}
