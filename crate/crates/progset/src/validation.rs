//! Statistical and oracle checks behind `progset validate`.
//!
//! Each check records the criterion it belongs to, the measured value, the
//! bound it is held to and the verdict. Simulated probabilities are compared
//! with a band of three binomial standard errors.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use progset_core::ast::{from_parents, AnnotatedAst};
use progset_core::fwer::{self, FwerMethod};
use progset_core::ltt::{sweep_record, LambdaGrid, LttConfig};
use progset_core::prune::{prune_bruteforce, prune_exact, prune_greedy, NoDeadline, PruneConfig};
use progset_core::selective::{
    error_upper_bound, hoeffding_delta, run_selective_execution, BoundKind, DrawCount, KnownOutcomes,
    SamplingWeights, SelectiveConfig, SelectiveSample,
};
use progset_core::sim::{derive_seed, generate_synthetic_set, LabelModel, SimError, SyntheticConfig, TrialSettings};
use progset_core::stats::binomial_tail_pvalue;

use crate::parallel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    PrunerOracle,
    Pvalues,
    Fwer,
    Coverage,
    Selective,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
    Above,
    Within(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub criterion: u8,
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub relation: Relation,
    pub pass: bool,
}

impl Check {
    pub fn new(criterion: u8, name: impl Into<String>, measured: f64, relation: Relation, bound: f64) -> Self {
        let pass = match relation {
            Relation::AtMost => measured <= bound,
            Relation::AtLeast => measured >= bound,
            Relation::Above => measured > bound,
            Relation::Within(tol) => (measured - bound).abs() <= tol,
        };
        Self { criterion, name: name.into(), measured, bound, relation, pass }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let rel = match self.relation {
            Relation::AtMost => "<=".to_string(),
            Relation::AtLeast => ">=".to_string(),
            Relation::Above => ">".to_string(),
            Relation::Within(tol) => format!("within {tol:e} of"),
        };
        write!(
            f,
            "[{verdict}] criterion {} {}: measured {} {rel} {}",
            self.criterion, self.name, self.measured, self.bound
        )
    }
}

/// Replication counts for every check.
#[derive(Debug, Clone, PartialEq)]
pub struct Budget {
    pub oracle_instances: usize,
    pub oracle_max_nodes: usize,
    pub greedy_instances: usize,
    pub greedy_max_nodes: usize,
    pub monotone_tasks: usize,
    pub pvalue_draws: usize,
    pub fwer_trials: usize,
    pub holm_vectors: usize,
    pub coverage_trials: usize,
    pub m_trials: usize,
    pub abstain_trials: usize,
    pub bound_reps: usize,
    pub unbiased_reps: usize,
    pub combined_trials: usize,
    pub exact_trials: usize,
    pub epsilon_trials: usize,
}

impl Budget {
    pub fn full() -> Self {
        Self {
            oracle_instances: 500,
            oracle_max_nodes: 12,
            greedy_instances: 500,
            greedy_max_nodes: 25,
            monotone_tasks: 200,
            pvalue_draws: 20_000,
            fwer_trials: 2_000,
            holm_vectors: 1_000,
            coverage_trials: 200,
            m_trials: 60,
            abstain_trials: 100,
            bound_reps: 2_000,
            unbiased_reps: 10_000,
            combined_trials: 300,
            exact_trials: 20,
            epsilon_trials: 50,
        }
    }

    /// Small counts for smoke runs; verdicts are not meaningful at this size.
    pub fn quick() -> Self {
        Self {
            oracle_instances: 50,
            oracle_max_nodes: 10,
            greedy_instances: 50,
            greedy_max_nodes: 20,
            monotone_tasks: 20,
            pvalue_draws: 2_000,
            fwer_trials: 200,
            holm_vectors: 100,
            coverage_trials: 6,
            m_trials: 4,
            abstain_trials: 6,
            bound_reps: 200,
            unbiased_reps: 500,
            combined_trials: 6,
            exact_trials: 3,
            epsilon_trials: 4,
        }
    }
}

/// Options shared by all suites.
#[derive(Debug, Clone)]
pub struct Options {
    pub seed: u64,
    pub jobs: usize,
    pub budget: Budget,
}

const STREAM_ORACLE: u64 = 101;
const STREAM_GREEDY: u64 = 102;
const STREAM_MONOTONE: u64 = 103;
const STREAM_PVALUE: u64 = 104;
const STREAM_FWER: u64 = 105;
const STREAM_HOLM: u64 = 106;
const STREAM_COVERAGE: u64 = 107;
const STREAM_BOUND: u64 = 108;
const STREAM_COMBINED: u64 = 109;

/// Three binomial standard errors for a rate near `p` over `n` trials.
pub fn three_se(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

pub fn run_suite(suite: Suite, opts: &Options) -> Result<Vec<Check>, SimError> {
    Ok(match suite {
        Suite::PrunerOracle => pruner_checks(opts),
        Suite::Pvalues => pvalue_checks(opts),
        Suite::Fwer => fwer_checks(opts),
        Suite::Coverage => coverage_checks(opts)?,
        Suite::Selective => selective_checks(opts)?,
        Suite::All => {
            let mut all = pruner_checks(opts);
            all.extend(pvalue_checks(opts));
            all.extend(fwer_checks(opts));
            all.extend(coverage_checks(opts)?);
            all.extend(selective_checks(opts)?);
            all
        }
    })
}

const LABELS: [&str; 4] = ["a", "b", "c", "d"];

/// A random tree of at most `max_nodes` nodes. Half of the trees get
/// quarter-step weights, which makes ties and exact budget hits common.
pub fn random_tree(rng: &mut impl Rng, max_nodes: usize, task_id: &str) -> AnnotatedAst {
    let n = rng.random_range(1..=max_nodes);
    let parents: Vec<Option<usize>> =
        (0..n).map(|i| if i == 0 { None } else { Some(rng.random_range(0..i)) }).collect();
    let labels: Vec<&str> = (0..n).map(|_| LABELS[rng.random_range(0..LABELS.len())]).collect();
    let quantized = rng.random_bool(0.5);
    let weights: Vec<f64> = (0..n)
        .map(|_| if quantized { f64::from(rng.random_range(0u8..8)) * 0.25 } else { rng.random_range(0.0..2.0) })
        .collect();
    from_parents(task_id, &parents, &labels, &weights).expect("valid random tree")
}

/// A random tree with a budget and `t_max ∈ {1, 2, 3}`.
pub fn random_instance(rng: &mut impl Rng, max_nodes: usize) -> (AnnotatedAst, PruneConfig) {
    let tree = random_tree(rng, max_nodes, "random");
    let lambda = if rng.random_bool(0.5) {
        f64::from(rng.random_range(0u8..=12)) * 0.25
    } else {
        rng.random_range(0.0..1.1) * tree.total_weight()
    };
    let t_max = rng.random_range(1..=3);
    (tree, PruneConfig { lambda, t_max })
}

fn pruner_checks(opts: &Options) -> Vec<Check> {
    let b = &opts.budget;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, STREAM_ORACLE, 0));
    let mut mismatches = 0;
    for _ in 0..b.oracle_instances {
        let (tree, cfg) = random_instance(&mut rng, b.oracle_max_nodes);
        let exact = prune_exact(&tree, &cfg).expect("valid instance");
        let brute = prune_bruteforce(&tree, &cfg).expect("small instance");
        if exact != brute {
            mismatches += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, STREAM_GREEDY, 0));
    let mut beaten = 0;
    for _ in 0..b.greedy_instances {
        let (tree, cfg) = random_instance(&mut rng, b.greedy_max_nodes);
        let greedy = prune_greedy(&tree, &cfg).expect("valid instance");
        let exact = prune_exact(&tree, &cfg).expect("valid instance");
        if greedy.removal_count() < exact.removal_count() || greedy.check(&tree, &cfg).is_err() {
            beaten += 1;
        }
    }

    vec![
        Check::new(
            1,
            format!("exact vs brute-force mismatches over {} trees", b.oracle_instances),
            mismatches as f64,
            Relation::AtMost,
            0.0,
        ),
        monotonicity_check(opts),
        Check::new(
            6,
            format!("instances where greedy removes fewer nodes than exact, of {}", b.greedy_instances),
            beaten as f64,
            Relation::AtMost,
            0.0,
        ),
    ]
}

/// Removal counts along the grid on synthetic instances, `t_max ∈ {1, 2}`.
fn monotonicity_check(opts: &Options) -> Check {
    let cfg = SyntheticConfig {
        n_tasks: opts.budget.monotone_tasks.max(2),
        seed: derive_seed(opts.seed, STREAM_MONOTONE, 0),
        ..SyntheticConfig::default()
    };
    let records = generate_synthetic_set(&cfg).expect("valid synthetic config");
    let grid = LambdaGrid::covering(&records, 0.02).expect("valid grid");
    let mut violations = 0;
    let mut pairs = 0;
    for t_max in [1, 2] {
        let ltt = LttConfig { t_max, ..LttConfig::new(grid.clone(), 0.1, 0.1) };
        for r in &records {
            let sweep = sweep_record(r, &ltt, &NoDeadline).expect("no deadline");
            for w in sweep.removed.windows(2) {
                pairs += 1;
                if w[1] > w[0] {
                    violations += 1;
                }
            }
        }
    }
    Check::new(
        5,
        format!("removal increases across {pairs} adjacent grid pairs"),
        violations as f64,
        Relation::AtMost,
        0.0,
    )
}

fn pvalue_checks(opts: &Options) -> Vec<Check> {
    let e = std::f64::consts::E;
    let mut checks = vec![
        Check::new(
            2,
            "p-value n=20 alpha=0.2 risk=0 vs e*0.8^20",
            binomial_tail_pvalue(20, 0.2, 0.0).expect("valid"),
            Relation::Within(1e-6),
            e * 0.8f64.powi(20),
        ),
        Check::new(
            2,
            "p-value n=50 alpha=0.1 risk=0.02 vs e*(0.9^50 + 5*0.9^49)",
            binomial_tail_pvalue(50, 0.1, 0.02).expect("valid"),
            Relation::Within(1e-6),
            e * (0.9f64.powi(50) + 5.0 * 0.9f64.powi(49)),
        ),
    ];

    // Losses at the null boundary: true risk exactly alpha.
    let (n, alpha) = (100, 0.1);
    let draws = opts.budget.pvalue_draws;
    let bin = Binomial::new(n as u64, alpha).expect("valid binomial");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, STREAM_PVALUE, 0));
    let pvalues: Vec<f64> = (0..draws)
        .map(|_| {
            let losses = bin.sample(&mut rng) as f64;
            binomial_tail_pvalue(n, alpha, losses / n as f64).expect("valid")
        })
        .collect();
    for u in [0.01, 0.05, 0.1, 0.25, 0.5] {
        let rate = pvalues.iter().filter(|&&p| p <= u).count() as f64 / draws as f64;
        checks.push(Check::new(
            2,
            format!("P(p <= {u}) at the null boundary over {draws} draws"),
            rate,
            Relation::AtMost,
            u + three_se(u, draws),
        ));
    }
    checks
}

fn fwer_checks(opts: &Options) -> Vec<Check> {
    let b = &opts.budget;
    let (n, alpha, delta, grid) = (100, 0.1, 0.1, 50);
    // Every hypothesis is null: true risk just above alpha.
    let bin = Binomial::new(n as u64, alpha + 0.002).expect("valid binomial");
    let mut checks = Vec::new();
    for (k, (method, name)) in
        [(FwerMethod::Bonferroni, "bonferroni"), (FwerMethod::Holm, "holm"), (FwerMethod::FixedSequence, "fst")]
            .into_iter()
            .enumerate()
    {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, STREAM_FWER, k as u64));
        let mut rejected_any = 0;
        for _ in 0..b.fwer_trials {
            let pvalues: Vec<f64> = (0..grid)
                .map(|_| binomial_tail_pvalue(n, alpha, bin.sample(&mut rng) as f64 / n as f64).expect("valid"))
                .collect();
            if !fwer::apply(method, &pvalues, delta, 10).is_empty() {
                rejected_any += 1;
            }
        }
        checks.push(Check::new(
            4,
            format!("{name}: all-null trials with a non-empty valid set, of {}", b.fwer_trials),
            rejected_any as f64 / b.fwer_trials as f64,
            Relation::AtMost,
            delta + three_se(delta, b.fwer_trials),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, STREAM_HOLM, 0));
    let mut violations = 0;
    for _ in 0..b.holm_vectors {
        let len = rng.random_range(1..=60);
        let scale = [1.0, 0.1, 0.01][rng.random_range(0..3)];
        let pvalues: Vec<f64> = (0..len).map(|_| scale * rng.random::<f64>()).collect();
        let delta = rng.random_range(0.01..0.5);
        let holm = fwer::holm_bonferroni(&pvalues, delta);
        if fwer::bonferroni(&pvalues, delta).iter().any(|k| !holm.contains(k)) {
            violations += 1;
        }
    }
    checks.push(Check::new(
        4,
        format!("p-vectors where Holm misses a Bonferroni rejection, of {}", b.holm_vectors),
        violations as f64,
        Relation::AtMost,
        0.0,
    ));
    checks
}

/// Synthetic scenario S1: 200 tasks, 50/50 split, t_max 1, FST, grid step 0.02.
pub fn scenario_s1(seed: u64) -> (SyntheticConfig, TrialSettings) {
    let cfg = SyntheticConfig { seed, ..SyntheticConfig::default() };
    let grid = LambdaGrid::uniform(0.02, 1.0).expect("valid grid");
    (cfg, TrialSettings::new(LttConfig::new(grid, 0.1, 0.1)))
}

pub const ALPHAS: [f64; 6] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3];
pub const MS: [usize; 4] = [1, 5, 20, 80];
pub const EPSILONS: [f64; 4] = [0.05, 0.1, 0.2, 0.3];

fn coverage_checks(opts: &Options) -> Result<Vec<Check>, SimError> {
    let b = &opts.budget;
    let (cfg, settings) = scenario_s1(derive_seed(opts.seed, STREAM_COVERAGE, 0));
    let mut checks = Vec::new();

    let reports = parallel::run_alpha_sweep(&cfg, &settings, &ALPHAS, b.coverage_trials, opts.jobs)?;
    let at = ALPHAS.iter().position(|&a| a == 0.1).expect("0.1 in sweep");
    let rate = reports[at].aggregates.satisfied_rate;
    checks.push(Check::new(
        3,
        format!("S1 alpha=0.1: trials with test risk <= alpha, of {}", b.coverage_trials),
        rate,
        Relation::AtLeast,
        0.9 - three_se(0.9, b.coverage_trials),
    ));
    let margin = ALPHAS
        .iter()
        .zip(&reports)
        .map(|(&a, r)| r.aggregates.coverage_mean - (1.0 - a))
        .fold(f64::INFINITY, f64::min);
    checks.push(Check::new(
        9,
        "smallest gap of mean coverage above 1-alpha over alpha in 0.05..0.3",
        margin,
        Relation::AtLeast,
        0.0,
    ));

    let mut removal = Vec::new();
    for (k, &m) in MS.iter().enumerate() {
        let cfg = SyntheticConfig { m, seed: derive_seed(opts.seed, STREAM_COVERAGE, 1 + k as u64), ..cfg.clone() };
        let a = parallel::run_trials(&cfg, &settings, b.m_trials, opts.jobs)?.aggregates;
        removal.push((a.removal_mean, a.removal_sd / (a.trials as f64).sqrt()));
    }
    let worst_rise = removal
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) - (w[0].1 * w[0].1 + w[1].1 * w[1].1).sqrt())
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::new(
        9,
        format!(
            "largest rise of mean removal between adjacent m in {MS:?} beyond 1 SE (means {:?})",
            removal.iter().map(|r| round4(r.0)).collect::<Vec<_>>()
        ),
        worst_rise,
        Relation::AtMost,
        0.0,
    ));

    // A fifth of the tasks can never be satisfied, so every budget is null.
    let null_cfg = SyntheticConfig {
        m: 5,
        label_model: LabelModel { adversarial_rate: 0.2, ..LabelModel::default() },
        seed: derive_seed(opts.seed, STREAM_COVERAGE, 10),
        ..cfg.clone()
    };
    let abstain = parallel::run_trials(&null_cfg, &settings, b.abstain_trials, opts.jobs)?.aggregates.abstain_rate;
    checks.push(Check::new(
        4,
        format!("all-null synthetic scenario: abstention rate over {} trials", b.abstain_trials),
        abstain,
        Relation::AtLeast,
        0.9 - three_se(0.9, b.abstain_trials),
    ));
    Ok(checks)
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// A fixed pool: scores uniform on [0, 1], failure probability equal to the
/// score.
fn bound_pool(seed: u64, size: usize) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores: Vec<f64> = (0..size).map(|_| rng.random::<f64>()).collect();
    let passed = scores.iter().map(|&s| rng.random::<f64>() >= s).collect();
    (scores, passed)
}

/// Fraction of the pool with score `<= u` that fails.
fn true_loss(scores: &[f64], passed: &[bool], u: f64) -> f64 {
    scores.iter().zip(passed).filter(|&(&s, &p)| s <= u && !p).count() as f64 / scores.len() as f64
}

/// Draw-phase samples for one replication. `ε` close to 1 keeps the
/// labeling phase small; only the draws matter here.
fn draw_samples(scores: &[f64], passed: &[bool], cfg: &SelectiveConfig) -> (Vec<SelectiveSample>, bool) {
    let outcome = run_selective_execution(scores, &mut KnownOutcomes::new(passed), cfg).expect("valid pool");
    let monotone = outcome.bound_curve.windows(2).all(|w| w[1].1 >= w[0].1);
    (outcome.samples, monotone)
}

fn selective_checks(opts: &Options) -> Result<Vec<Check>, SimError> {
    let b = &opts.budget;
    let mut checks = vec![Check::new(
        7,
        "hoeffding_delta(h=1000, gamma=0.05, omega_min=1) vs sqrt(ln(2/gamma)/2h)",
        hoeffding_delta(1000, 0.05, 1.0),
        Relation::Within(1e-7),
        ((2.0f64 / 0.05).ln() / 2000.0).sqrt(),
    )];

    let (scores, passed) = bound_pool(derive_seed(opts.seed, STREAM_BOUND, 0), 2000);
    let u = 0.7;
    let loss = true_loss(&scores, &passed, u);
    let gamma = 0.05;
    let setups = [
        ("hoeffding h=1000 omega=1", BoundKind::Hoeffding, 1000, 1.0),
        ("hoeffding h=1000 omega=0.5", BoundKind::Hoeffding, 1000, 0.5),
        ("clt h=200 omega=1", BoundKind::Clt, 200, 1.0),
        ("clt h=1000 omega=1", BoundKind::Clt, 1000, 1.0),
    ];
    for (k, (name, bound, h, omega)) in setups.into_iter().enumerate() {
        let mut covered = 0;
        for rep in 0..b.bound_reps {
            let cfg = SelectiveConfig {
                h: DrawCount::Absolute(h),
                epsilon: 0.999,
                gamma,
                weights: SamplingWeights::Uniform(omega),
                bound,
                seed: derive_seed(opts.seed, STREAM_BOUND, (1 + k as u64) << 32 | rep as u64),
            };
            let (samples, _) = draw_samples(&scores, &passed, &cfg);
            if error_upper_bound(&samples, u, &cfg).expect("enough draws") >= loss {
                covered += 1;
            }
        }
        checks.push(Check::new(
            7,
            format!("{name}: P(bound >= L(u)) over {} replications", b.bound_reps),
            covered as f64 / b.bound_reps as f64,
            Relation::AtLeast,
            1.0 - gamma - three_se(1.0 - gamma, b.bound_reps),
        ));
    }

    let us = [0.1, 0.3, 0.5, 0.7, 0.9];
    let h = 200;
    let mut sums = [0.0; 5];
    let mut squares = [0.0; 5];
    let mut non_monotone = 0;
    for rep in 0..b.unbiased_reps {
        let cfg = SelectiveConfig {
            h: DrawCount::Absolute(h),
            epsilon: 0.999,
            gamma,
            weights: SamplingWeights::Uniform(0.5),
            bound: BoundKind::Hoeffding,
            seed: derive_seed(opts.seed, STREAM_BOUND, 99 << 32 | rep as u64),
        };
        let (samples, monotone) = draw_samples(&scores, &passed, &cfg);
        non_monotone += usize::from(!monotone);
        for (k, &u) in us.iter().enumerate() {
            let mean = samples.iter().filter(|s| s.score <= u).map(|s| s.z).sum::<f64>() / h as f64;
            sums[k] += mean;
            squares[k] += mean * mean;
        }
    }
    let reps = b.unbiased_reps as f64;
    let worst = us
        .iter()
        .enumerate()
        .map(|(k, &u)| {
            let grand = sums[k] / reps;
            let sd = ((squares[k] / reps - grand * grand) * reps / (reps - 1.0)).max(0.0).sqrt();
            (grand - true_loss(&scores, &passed, u)).abs() / (sd / reps.sqrt())
        })
        .fold(0.0, f64::max);
    checks.push(Check::new(
        7,
        format!("largest |mean Z(u) - L(u)| in standard errors over {} replications, 5 values of u", b.unbiased_reps),
        worst,
        Relation::AtMost,
        3.0,
    ));
    checks.push(Check::new(
        7,
        "replications with a decreasing bound curve",
        non_monotone as f64,
        Relation::AtMost,
        0.0,
    ));

    checks.extend(combined_checks(opts)?);
    Ok(checks)
}

fn combined_checks(opts: &Options) -> Result<Vec<Check>, SimError> {
    let b = &opts.budget;
    let (cfg, settings) = scenario_s1(derive_seed(opts.seed, STREAM_COMBINED, 0));
    let (alpha, delta, epsilon, gamma) = (0.1, 0.1, 0.1, 0.05);
    let sel = SelectiveConfig { epsilon, gamma, seed: derive_seed(opts.seed, STREAM_COMBINED, 1), ..SelectiveConfig::default() };
    let mut checks = Vec::new();

    let report = parallel::run_selective_trials(&cfg, &sel, &settings, b.combined_trials, opts.jobs)?;
    let limit = alpha + epsilon * (1.0 - alpha);
    let within = report.rows.iter().filter(|r| r.test_risk <= limit).count() as f64 / report.rows.len() as f64;
    let target = (1.0 - gamma) * (1.0 - delta);
    checks.push(Check::new(
        8,
        format!("trials with test risk <= alpha + eps(1-alpha) = {limit}, of {}", b.combined_trials),
        within,
        Relation::AtLeast,
        target - three_se(target, b.combined_trials),
    ));
    checks.push(Check::new(
        8,
        "mean fraction saved at eps=0.1",
        report.aggregates.saved_mean.unwrap_or(0.0),
        Relation::Above,
        0.0,
    ));

    let exact_cfg = SyntheticConfig { m: 5, ..cfg.clone() };
    let zero = SelectiveConfig { epsilon: 0.0, ..sel.clone() };
    let selective = parallel::run_selective_trials(&exact_cfg, &zero, &settings, b.exact_trials, opts.jobs)?;
    let exhaustive = parallel::run_trials(&exact_cfg, &settings, b.exact_trials, opts.jobs)?;
    let mut mismatches = selective
        .rows
        .iter()
        .zip(&exhaustive.rows)
        .filter(|(s, e)| {
            s.lambda_hat.map(f64::to_bits) != e.lambda_hat.map(f64::to_bits)
                || s.test_risk.to_bits() != e.test_risk.to_bits()
                || s.removal_fraction.to_bits() != e.removal_fraction.to_bits()
                || s.covered != e.covered
                || s.fraction_saved != Some(0.0)
                || s.label_error != Some(0.0)
        })
        .count();
    let (sa, ea) = (&selective.aggregates, &exhaustive.aggregates);
    let same_aggregates = [
        (sa.coverage_mean, ea.coverage_mean),
        (sa.coverage_sd, ea.coverage_sd),
        (sa.removal_mean, ea.removal_mean),
        (sa.removal_sd, ea.removal_sd),
        (sa.satisfied_rate, ea.satisfied_rate),
        (sa.abstain_rate, ea.abstain_rate),
    ]
    .iter()
    .all(|(x, y)| x.to_bits() == y.to_bits());
    mismatches += usize::from(!same_aggregates);
    checks.push(Check::new(
        8,
        format!("eps=0 vs exhaustive labeling: differing rows or aggregates over {} trials", b.exact_trials),
        mismatches as f64,
        Relation::AtMost,
        0.0,
    ));

    let mut saved = Vec::new();
    for &eps in &EPSILONS {
        let sel = SelectiveConfig { epsilon: eps, ..sel.clone() };
        let r = parallel::run_selective_trials(&cfg, &sel, &settings, b.epsilon_trials, opts.jobs)?;
        saved.push(r.aggregates.saved_mean.unwrap_or(0.0));
    }
    let smallest_step = saved.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    checks.push(Check::new(
        9,
        format!(
            "smallest increase of mean fraction saved between adjacent eps in {EPSILONS:?} (means {:?})",
            saved.iter().map(|&s| round4(s)).collect::<Vec<_>>()
        ),
        smallest_step,
        Relation::Above,
        0.0,
    ));
    Ok(checks)
}
