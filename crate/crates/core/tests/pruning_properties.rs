use proptest::prelude::*;
use proptest::sample::Index;

use progset_core::ast::from_parents;
use progset_core::prune::retained_weight;
use progset_core::{
    prune_bruteforce, prune_exact, prune_greedy, AnnotatedAst, PartialProgram, PruneConfig,
    RemovalSet,
};

const LABELS: [&str; 4] = ["a", "b", "c", "d"];

/// Quantized weights make ties and exact-boundary budgets common.
fn weight() -> impl Strategy<Value = f64> {
    prop_oneof![(0u8..8).prop_map(|k| f64::from(k) * 0.25), 0.0..2.0f64]
}

fn tree(max_nodes: usize) -> impl Strategy<Value = AnnotatedAst> {
    (1..=max_nodes)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(any::<Index>(), n - 1),
                prop::collection::vec(0..LABELS.len(), n),
                prop::collection::vec(weight(), n),
            )
        })
        .prop_map(|(picks, labels, weights)| {
            let mut parents = vec![None];
            parents.extend(picks.iter().enumerate().map(|(i, ix)| Some(ix.index(i + 1))));
            let labels: Vec<&str> = labels.iter().map(|&l| LABELS[l]).collect();
            from_parents("prop", &parents, &labels, &weights).unwrap()
        })
}

/// A tree plus a budget: either a quarter-step value (hits sums of
/// quantized weights exactly) or a fraction of the total weight.
fn instance(max_nodes: usize) -> impl Strategy<Value = (AnnotatedAst, f64, usize)> {
    (tree(max_nodes), any::<bool>(), 0u8..=12, 0.0..1.1f64, 1..=3usize).prop_map(
        |(t, quantized, k, f, t_max)| {
            let lambda = if quantized { f64::from(k) * 0.25 } else { f * t.total_weight() };
            (t, lambda, t_max)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn exact_matches_bruteforce((t, lambda, t_max) in instance(12)) {
        let cfg = PruneConfig::new(lambda, t_max).unwrap();
        let exact = prune_exact(&t, &cfg).unwrap();
        let brute = prune_bruteforce(&t, &cfg).unwrap();
        prop_assert_eq!(exact.removal_count(), brute.removal_count());
        prop_assert_eq!(&exact, &brute);
        prop_assert_eq!(retained_weight(&t, &exact).unwrap(), retained_weight(&t, &brute).unwrap());
    }

    #[test]
    fn solutions_are_feasible((t, lambda, t_max) in instance(25)) {
        let cfg = PruneConfig::new(lambda, t_max).unwrap();
        prop_assert_eq!(prune_exact(&t, &cfg).unwrap().check(&t, &cfg), Ok(()));
        prop_assert_eq!(prune_greedy(&t, &cfg).unwrap().check(&t, &cfg), Ok(()));
    }

    #[test]
    fn greedy_never_beats_exact((t, lambda, t_max) in instance(25)) {
        let cfg = PruneConfig::new(lambda, t_max).unwrap();
        let greedy = prune_greedy(&t, &cfg).unwrap().removal_count();
        prop_assert!(greedy >= prune_exact(&t, &cfg).unwrap().removal_count());
    }

    #[test]
    fn removal_shrinks_as_budget_grows(t in tree(30), t_max in 1..=3usize) {
        let total = t.total_weight();
        let mut last = usize::MAX;
        for k in 0..=40 {
            let lambda = total * (f64::from(k) / 40.0);
            let count = prune_exact(&t, &PruneConfig::new(lambda, t_max).unwrap()).unwrap().removal_count();
            prop_assert!(count <= last);
            last = count;
        }
        prop_assert_eq!(last, 0);
    }

    #[test]
    fn node_paths_are_injective(t in tree(50)) {
        let mut paths: Vec<_> = (0..t.len()).map(|v| t.node_path(v).unwrap()).collect();
        paths.sort();
        paths.dedup();
        prop_assert_eq!(paths.len(), t.len());
    }

    #[test]
    fn pruning_more_never_loses_membership(
        t in tree(15),
        y in tree(15),
        picks in prop::collection::vec(any::<Index>(), 1..4),
    ) {
        let roots: Vec<usize> = picks.iter().map(|ix| ix.index(t.len())).collect();
        let coarse = RemovalSet::from_roots(&t, &roots);
        let fine = RemovalSet::from_roots(&t, &roots[..1]);
        let fine = PartialProgram::new(&t, fine).unwrap();
        let coarse = PartialProgram::new(&t, coarse).unwrap();
        for candidate in [&t, &y] {
            if fine.contains(candidate) {
                prop_assert!(coarse.contains(candidate));
            }
        }
        prop_assert!(PartialProgram::identity(&t).contains(&t));
    }

    #[test]
    fn canonical_form_identifies_shape_and_labels(a in tree(8), b in tree(8)) {
        let same = a.canonical_serialization() == b.canonical_serialization();
        let structural = a.len() == b.len()
            && PartialProgram::identity(&a).contains(&b)
            && PartialProgram::identity(&b).contains(&a);
        prop_assert_eq!(same, structural);
    }
}
