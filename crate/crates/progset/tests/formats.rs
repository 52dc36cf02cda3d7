use proptest::prelude::*;
use proptest::sample::Index;

use progset::formats::{ast_to_json, parse_ast_json, read_records, write_records, RemovalJson};
use progset_core::ast::from_parents;
use progset_core::prune::prune_exact;
use progset_core::risk::CalibrationRecord;
use progset_core::{AnnotatedAst, PruneConfig};

/// Non-negative weights up to 1e6, including subnormals and values with
/// long decimal expansions.
fn weight() -> impl Strategy<Value = f64> {
    prop_oneof![
        (0u64..1.0e6f64.to_bits()).prop_map(f64::from_bits),
        (0u32..100).prop_map(|k| f64::from(k) * 0.1),
    ]
}

fn label() -> impl Strategy<Value = String> {
    prop_oneof!["[A-Za-z_]{1,8}", "\\PC{0,6}", Just("\"quoted\\\"\n".to_owned())]
}

fn tree(max_nodes: usize) -> impl Strategy<Value = AnnotatedAst> {
    (1..=max_nodes)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(any::<Index>(), n - 1),
                prop::collection::vec(label(), n),
                prop::collection::vec(weight(), n),
            )
        })
        .prop_map(|(picks, labels, weights)| {
            let mut parents = vec![None];
            parents.extend(picks.iter().enumerate().map(|(i, ix)| Some(ix.index(i + 1))));
            let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
            from_parents("prop", &parents, &labels, &weights).unwrap()
        })
}

proptest! {
    #[test]
    fn ast_round_trips_bit_exact(t in tree(20)) {
        let back = parse_ast_json(ast_to_json(&t).as_bytes()).unwrap();
        prop_assert_eq!(back.len(), t.len());
        for (a, b) in t.nodes().iter().zip(back.nodes()) {
            prop_assert_eq!(a.weight.to_bits(), b.weight.to_bits());
        }
        prop_assert_eq!(back, t);
    }

    #[test]
    fn records_round_trip(
        trees in prop::collection::vec((tree(8), prop::collection::vec(tree(8), 1..3), prop::option::of(0.0..1.0f64)), 0..5)
    ) {
        let records: Vec<CalibrationRecord> = trees
            .into_iter()
            .enumerate()
            .map(|(i, (g, labels, score))| CalibrationRecord::new(format!("task{i}"), g, labels, score).unwrap())
            .collect();
        let text = write_records(&records);
        prop_assert_eq!(text.lines().count(), records.len());
        prop_assert_eq!(read_records(text.as_bytes()).unwrap(), records);
    }

    #[test]
    fn removal_round_trips(t in tree(15), frac in 0.0..1.0f64, t_max in 1..=3usize) {
        let cfg = PruneConfig::new(frac * t.total_weight(), t_max).unwrap();
        let removal = prune_exact(&t, &cfg).unwrap();
        let json = serde_json::to_string(&RemovalJson::from_removal(&removal)).unwrap();
        let parsed: RemovalJson = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(parsed.into_removal(&t).unwrap(), removal);
    }
}

#[test]
fn blank_lines_are_skipped_and_numbering_is_physical() {
    let t = from_parents("t", &[None], &["A"], &[1.0]).unwrap();
    let rec = CalibrationRecord::new("t", t.clone(), vec![t], None).unwrap();
    let line = write_records(std::slice::from_ref(&rec));
    let text = format!("\n{line}\n{line}{{\"task_id\": 3}}\n");
    let err = read_records(text.as_bytes()).unwrap_err();
    assert_eq!(err.line(), Some(5));
    let ok = format!("\n{line}\n\n{line}");
    assert_eq!(read_records(ok.as_bytes()).unwrap(), vec![rec.clone(), rec]);
}
