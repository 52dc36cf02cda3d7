//! Acceptance run: one PASS/FAIL line per criterion 1 to 9, each followed by
//! its individual checks. Statistical checks use the full budget of the
//! `validate` command; set `PROGSET_ACCEPTANCE_QUICK=1` for a smoke run.
//!
//! Criteria 1, 2 and 7 are also checked against oracles written here from
//! first principles, independent of the library code.

use std::collections::BTreeMap;
use std::process::ExitCode;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use progset::validation::{run_suite, Budget, Check, Options, Relation, Suite};
use progset_core::ast::from_parents;
use progset_core::prune::retained_weight;
use progset_core::selective::hoeffding_delta;
use progset_core::sim::SyntheticConfig;
use progset_core::stats::{binomial_tail_pvalue, binomial_tail_pvalue_count};
use progset_core::{prune_exact, PruneConfig};

const TITLES: [&str; 9] = [
    "exact pruner is optimal",
    "binomial-tail p-values",
    "risk control on scenario S1",
    "FWER control and abstention",
    "node removal monotone in the budget",
    "exact never worse than greedy",
    "selective-execution error bound",
    "combined guarantee",
    "simulation trends",
];

/// Minimum removal count over every removal mask of the tree, by plain
/// enumeration of all 2^n subsets.
fn enumerate_min_removal(parents: &[Option<usize>], weights: &[f64], lambda: f64, t_max: usize) -> usize {
    let n = parents.len();
    let total: f64 = weights.iter().sum();
    let mut best = n;
    for mask in 0u32..(1 << n) {
        let removed = |v: usize| mask & (1 << v) != 0;
        // Whole subtrees only: a kept node may not sit under a removed one.
        let closed = (0..n).all(|v| match parents[v] {
            Some(p) => !removed(p) || removed(v),
            None => true,
        });
        if !closed {
            continue;
        }
        let cuts = (0..n).filter(|&v| removed(v) && parents[v].is_some_and(|p| !removed(p))).count();
        if cuts > t_max && !removed(0) {
            continue;
        }
        let retained = total - (0..n).filter(|&v| removed(v)).map(|v| weights[v]).sum::<f64>();
        if retained <= lambda {
            best = best.min(mask.count_ones() as usize);
        }
    }
    best
}

fn oracle_pruner(instances: usize) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0AC1E);
    let mut mismatches = 0usize;
    let mut cases = 0usize;
    for _ in 0..instances {
        let n = rng.random_range(1..=12usize);
        let parents: Vec<Option<usize>> = (0..n).map(|i| (i > 0).then(|| rng.random_range(0..i))).collect();
        // Quarter steps keep every partial sum exact in binary.
        let weights: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0u8..8)) * 0.25).collect();
        let labels: Vec<String> = (0..n).map(|i| format!("n{}", i % 3)).collect();
        let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
        let tree = from_parents("oracle", &parents, &labels, &weights).unwrap();
        let t_max = rng.random_range(1..=3usize);
        let steps = (weights.iter().sum::<f64>() * 4.0) as u32 + 1;
        for k in 0..=steps {
            let lambda = f64::from(k) * 0.25;
            let removal = prune_exact(&tree, &PruneConfig::new(lambda, t_max).unwrap()).unwrap();
            let feasible = retained_weight(&tree, &removal).unwrap() <= lambda;
            if !feasible || removal.removal_count() != enumerate_min_removal(&parents, &weights, lambda, t_max) {
                mismatches += 1;
            }
            cases += 1;
        }
    }
    vec![Check::new(
        1,
        format!("exact vs in-test subset enumeration, mismatches over {cases} (tree, budget) pairs"),
        mismatches as f64,
        Relation::AtMost,
        0.0,
    )]
}

fn choose(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `e * P(Bin(n, α) <= k)` summed term by term.
fn closed_form_pvalue(n: u64, alpha: f64, k: u64) -> f64 {
    let cdf: f64 = (0..=k).map(|j| choose(n, j) * alpha.powi(j as i32) * (1.0 - alpha).powi((n - j) as i32)).sum();
    (std::f64::consts::E * cdf).min(1.0)
}

fn oracle_pvalues() -> Vec<Check> {
    let mut checks = Vec::new();
    for (n, alpha, k) in [(20u64, 0.2, 0u64), (50, 0.1, 1), (100, 0.1, 5), (100, 0.1, 20), (1000, 0.05, 40)] {
        let want = closed_form_pvalue(n, alpha, k);
        let got = binomial_tail_pvalue(n as usize, alpha, k as f64 / n as f64).unwrap();
        checks.push(Check::new(
            2,
            format!("p-value n={n} alpha={alpha} losses={k} vs in-test binomial sum {want}"),
            got,
            Relation::Within(1e-6),
            want,
        ));
    }
    let worst = (0..=60u64)
        .map(|k| (binomial_tail_pvalue_count(60, 0.15, k as usize).unwrap() - closed_form_pvalue(60, 0.15, k)).abs())
        .fold(0.0, f64::max);
    checks.push(Check::new(2, "largest |p - binomial sum| over every loss count, n=60 alpha=0.15", worst, Relation::AtMost, 1e-9));
    checks
}

fn oracle_hoeffding() -> Vec<Check> {
    [(1000usize, 0.05, 1.0), (200, 0.01, 0.5), (5000, 0.1, 0.2)]
        .into_iter()
        .map(|(h, gamma, omega)| {
            let want = ((2.0f64 / gamma).ln() / (2.0 * h as f64)).sqrt() / omega;
            Check::new(
                7,
                format!("hoeffding_delta(h={h}, gamma={gamma}, omega_min={omega}) vs in-test formula"),
                hoeffding_delta(h, gamma, omega),
                Relation::Within(1e-7),
                want,
            )
        })
        .collect()
}

fn main() -> ExitCode {
    let quick = std::env::var("PROGSET_ACCEPTANCE_QUICK").is_ok_and(|v| v == "1");
    let opts = Options {
        seed: SyntheticConfig::default().seed,
        jobs: 0,
        budget: if quick { Budget::quick() } else { Budget::full() },
    };
    let mut checks = match run_suite(Suite::All, &opts) {
        Ok(checks) => checks,
        Err(e) => {
            println!("FAIL acceptance suite errored: {e}");
            return ExitCode::FAILURE;
        }
    };
    checks.extend(oracle_pruner(if quick { 40 } else { 300 }));
    checks.extend(oracle_pvalues());
    checks.extend(oracle_hoeffding());

    let mut by_criterion: BTreeMap<u8, Vec<&Check>> = (1..=9).map(|c| (c, Vec::new())).collect();
    for c in &checks {
        by_criterion.entry(c.criterion).or_default().push(c);
    }
    let mut failed = 0;
    for (criterion, list) in &by_criterion {
        let pass = !list.is_empty() && list.iter().all(|c| c.pass);
        failed += usize::from(!pass);
        let title = TITLES.get(usize::from(*criterion) - 1).copied().unwrap_or("");
        println!(
            "{} criterion {criterion}: {title} ({} checks)",
            if pass { "PASS" } else { "FAIL" },
            list.len()
        );
        for c in list {
            println!("    {c}");
        }
    }
    println!("{} of {} criteria passed", by_criterion.len() - failed, by_criterion.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
