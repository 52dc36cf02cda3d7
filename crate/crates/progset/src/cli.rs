//! Command-line front end.
//!
//! Exit codes: 0 ok, 1 other failure (including failed validation checks),
//! 2 input error, 3 abstention, 4 executor failure.

use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use progset_core::ast::AnnotatedAst;
use progset_core::ltt::{predict_with, CalibrationResult, Prediction};
use progset_core::prune::PruneError;
use progset_core::risk::PartialProgram;
use progset_core::selective::{run_selective_execution, SamplingWeights, SelectiveError, Threshold};
use progset_core::sim::{SimError, TrialReport};

use crate::config::{BoundName, Config, ConfigError, DrawCountSpec, FwerName, StrategyName, WeightsSpec};
use crate::executor::SubprocessExecutor;
use crate::formats::{self, CalibrationJson, OutcomeJson, RemovalJson};
use crate::parallel::{self, TimeLimit};
use crate::report::{ReportError, SweepParam, SweepReport};
use crate::validation::{self, Budget, Suite};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_ABSTAIN: i32 = 3;
pub const EXIT_EXECUTOR: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "progset", version, about = "Risk-controlling partial programs: calibrate, predict, validate, simulate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,

    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (0 = one per CPU). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate the pruning budget on JSON-lines records.
    Calibrate {
        /// JSON lines, one calibration record per line
        #[arg(long)]
        records: PathBuf,
        #[command(flatten)]
        ltt: LttArgs,
        /// Time limit of the exact solver per record, 0 for none.
        #[arg(long, default_value_t = 24_000)]
        solver_timeout_ms: u64,
    },
    /// Prune a tree at a calibrated budget.
    Predict {
        /// Annotated tree JSON
        #[arg(long)]
        ast: PathBuf,
        /// calibration.json written by `calibrate`
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        tmax: Option<usize>,
        #[arg(long, value_enum)]
        strategy: Option<StrategyName>,
        #[arg(long, default_value_t = 24_000)]
        solver_timeout_ms: u64,
    },
    /// Run a validation suite and print every check.
    Validate {
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        /// Small replication counts, for smoke runs.
        #[arg(long)]
        quick: bool,
    },
    /// Label programs, executing tests only for uncertain ones.
    SelectiveExec {
        /// JSON lines `{"score", "payload", "weight"?}`.
        #[arg(long)]
        programs: PathBuf,
        /// Shell command; reads a payload on stdin, prints 1 or 0.
        #[arg(long)]
        executor: String,
        #[command(flatten)]
        sel: SelectiveArgs,
        #[arg(long, default_value_t = 10_000)]
        timeout_ms: u64,
    },
    /// Monte-Carlo trials on synthetic data.
    Simulate {
        #[arg(long, value_enum, default_value = "none")]
        sweep: SweepKind,
        /// Label calibration tasks by selective execution.
        #[arg(long)]
        selective: bool,
        /// Trials per level [default: 100]
        #[arg(long)]
        trials: Option<usize>,
        #[command(flatten)]
        ltt: LttArgs,
        #[command(flatten)]
        sel: SelectiveArgs,
    },
    /// Render a simulation report as json, csv or svg.
    Report {
        /// simulation.json written by `simulate`
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: ReportFormat,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    None,
    Alpha,
    M,
    Epsilon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Args)]
pub struct LttArgs {
    /// Target risk [default: 0.1]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Allowed calibration failure probability [default: 0.1]
    #[arg(long)]
    pub delta: Option<f64>,
    /// Maximum number of subtrees cut per tree [default: 1]
    #[arg(long)]
    pub tmax: Option<usize>,
    /// Spacing of the budget grid [default: 0.02]
    #[arg(long)]
    pub grid_step: Option<f64>,
    /// [default: fst]
    #[arg(long, value_enum)]
    pub fwer: Option<FwerName>,
    /// Start points for fixed-sequence testing [default: 10]
    #[arg(long)]
    pub fst_starts: Option<usize>,
    /// Pruner used for calibration and prediction [default: exact]
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyName>,
}

#[derive(Debug, Args)]
pub struct SelectiveArgs {
    /// Labeling error allowed [default: 0.1]
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Failure probability of the error bound [default: 0.01]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Draws: an integer, a fraction of the pool, or a percentage like 10%.
    #[arg(long, value_parser = DrawCountSpec::parse)]
    pub h: Option<DrawCountSpec>,
    /// [default: hoeffding]
    #[arg(long, value_enum)]
    pub bound: Option<BoundName>,
}

impl LttArgs {
    fn apply(&self, c: &mut Config) {
        let l = &mut c.ltt;
        set(&mut l.alpha, self.alpha);
        set(&mut l.delta, self.delta);
        set(&mut l.t_max, self.tmax);
        set(&mut l.fwer, self.fwer);
        set(&mut l.fst_starts, self.fst_starts);
        set(&mut l.strategy, self.strategy);
        if let Some(step) = self.grid_step {
            l.grid_step = step;
            l.grid = None;
        }
    }
}

impl SelectiveArgs {
    fn apply(&self, c: &mut Config) {
        let s = &mut c.selective;
        set(&mut s.epsilon, self.epsilon);
        set(&mut s.gamma, self.gamma);
        set(&mut s.h, self.h);
        set(&mut s.bound, self.bound);
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl ToString) -> Self {
        Self { code: EXIT_INPUT, message: message.to_string() }
    }

    fn failure(message: impl ToString) -> Self {
        Self { code: EXIT_FAILURE, message: message.to_string() }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::input(e)
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Parse { .. } | ReportError::NoData => Self::input(e),
            _ => Self::failure(e),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) | SimError::InvalidSettings(_) => Self::input(e),
            _ => Self::failure(e),
        }
    }
}

/// Parses arguments, runs the command and returns the exit code. Errors go
/// to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let _ = env_logger::Builder::new().filter_level(cli.log_level).try_init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32, CliError> {
    let mut config = Config::load_or_default(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.synthetic.seed = seed;
        config.selective.seed = seed;
    }
    fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::input(format!("output directory {}: {e}", cli.out.display())))?;
    match &cli.command {
        Command::Calibrate { records, ltt, solver_timeout_ms } => {
            ltt.apply(&mut config);
            calibrate(cli, &config, records, *solver_timeout_ms)
        }
        Command::Predict { ast, result, tmax, strategy, solver_timeout_ms } => {
            set(&mut config.ltt.t_max, *tmax);
            set(&mut config.ltt.strategy, *strategy);
            predict(cli, &config, ast, result, *solver_timeout_ms)
        }
        Command::Validate { suite, quick } => validate(cli, &config, *suite, *quick),
        Command::SelectiveExec { programs, executor, sel, timeout_ms } => {
            sel.apply(&mut config);
            selective_exec(cli, &config, programs, executor, *timeout_ms)
        }
        Command::Simulate { sweep, selective, trials, ltt, sel } => {
            ltt.apply(&mut config);
            sel.apply(&mut config);
            set(&mut config.simulation.n_trials, *trials);
            simulate(cli, &config, *sweep, *selective)
        }
        Command::Report { input, format } => report(cli, input, *format),
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::failure(format!("{}: {e}", path.display())))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn timeout(ms: u64) -> Option<Duration> {
    (ms > 0).then(|| Duration::from_millis(ms))
}

fn calibrate(cli: &Cli, config: &Config, path: &Path, solver_timeout_ms: u64) -> Result<i32, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let records = formats::read_records(BufReader::new(file))
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let ltt = config.ltt.to_config(&records).map_err(CliError::input)?;
    info!("calibrating on {} records over {} budgets", records.len(), ltt.grid.len());
    let result = parallel::calibrate(&records, &ltt, timeout(solver_timeout_ms), cli.jobs).map_err(|e| match e {
        progset_core::CalibrationError::Prune { .. } => CliError::failure(e),
        _ => CliError::input(e),
    })?;
    let json = serde_json::to_string_pretty(&CalibrationJson::from_result(&result)).expect("serializes");
    write_file(&cli.out.join("calibration.json"), &(json + "\n"))?;
    print!("{}", calibration_summary(&result));
    Ok(if result.abstained() { EXIT_ABSTAIN } else { EXIT_OK })
}

/// `λ̂` (or ABSTAIN) followed by the per-budget table.
pub fn calibration_summary(result: &CalibrationResult) -> String {
    let mut s = String::new();
    match result.lambda_hat {
        Some(l) => {
            let _ = writeln!(s, "lambda_hat {l}");
        }
        None => s.push_str("ABSTAIN\n"),
    }
    let _ = writeln!(s, "{:>10} {:>8} {:>8} {:>12} valid", "lambda", "risk", "removal", "p_value");
    for k in 0..result.grid.len() {
        let valid = if result.valid.contains(&k) { "*" } else { "" };
        let _ = writeln!(
            s,
            "{:>10.4} {:>8.4} {:>8.4} {:>12.4e} {valid}",
            result.grid[k], result.risk[k], result.removal[k], result.pvalues[k]
        );
    }
    s
}

fn predict(cli: &Cli, config: &Config, ast_path: &Path, result_path: &Path, solver_timeout_ms: u64) -> Result<i32, CliError> {
    let ast = formats::parse_ast_json(&read_file(ast_path)?)
        .map_err(|e| CliError::input(format!("{}: {e}", ast_path.display())))?;
    let result = formats::parse_calibration_json(&read_file(result_path)?)
        .map_err(|e| CliError::input(format!("{}: {e}", result_path.display())))?;
    let prediction = match timeout(solver_timeout_ms) {
        Some(limit) => predict_with(&ast, &result, config.ltt.t_max, config.ltt.strategy.into(), &TimeLimit::new(limit)),
        None => predict_with(&ast, &result, config.ltt.t_max, config.ltt.strategy.into(), &progset_core::NoDeadline),
    }
    .map_err(|e| match e {
        PruneError::TimedOut => CliError::failure(e),
        _ => CliError::input(e),
    })?;
    match prediction {
        Prediction::Abstain => {
            println!("ABSTAIN");
            Ok(EXIT_ABSTAIN)
        }
        Prediction::Partial(partial) => {
            let json = serde_json::to_string_pretty(&RemovalJson::from_removal(&partial.removal)).expect("serializes");
            write_file(&cli.out.join("removal.json"), &(json + "\n"))?;
            print!("{}", render_partial(&partial));
            Ok(EXIT_OK)
        }
    }
}

/// Indented tree; each removed subtree is one `??` hole line.
pub fn render_partial(partial: &PartialProgram<'_>) -> String {
    fn walk(ast: &AnnotatedAst, partial: &PartialProgram<'_>, v: usize, depth: usize, out: &mut String) {
        let indent = "  ".repeat(depth);
        if partial.removal.is_removed(v) {
            let (count, weight) = subtree(ast, v);
            let _ = writeln!(out, "{indent}?? ({count} nodes, weight {weight})");
            return;
        }
        let _ = writeln!(out, "{indent}{} [{}]", ast.label(v), ast.weight(v));
        for &c in ast.children(v) {
            walk(ast, partial, c, depth + 1, out);
        }
    }
    fn subtree(ast: &AnnotatedAst, v: usize) -> (usize, f64) {
        let mut stack = vec![v];
        let (mut count, mut weight) = (0, 0.0);
        while let Some(x) = stack.pop() {
            count += 1;
            weight += ast.weight(x);
            stack.extend_from_slice(ast.children(x));
        }
        (count, weight)
    }
    let mut out = String::new();
    walk(partial.base, partial, partial.base.root(), 0, &mut out);
    let _ = writeln!(
        out,
        "removed {} of {} nodes",
        partial.removal.removal_count(),
        partial.base.len()
    );
    out
}

fn validate(cli: &Cli, config: &Config, suite: Suite, quick: bool) -> Result<i32, CliError> {
    let opts = validation::Options {
        seed: config.synthetic.seed,
        jobs: cli.jobs,
        budget: if quick { Budget::quick() } else { Budget::full() },
    };
    let checks = validation::run_suite(suite, &opts)?;
    for c in &checks {
        println!("{c}");
    }
    let json = serde_json::to_string_pretty(&checks).expect("serializes");
    write_file(&cli.out.join("validation.json"), &(json + "\n"))?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    println!("{} checks, {failed} failed", checks.len());
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILURE })
}

fn selective_exec(cli: &Cli, config: &Config, path: &Path, command: &str, timeout_ms: u64) -> Result<i32, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let programs = formats::read_programs(BufReader::new(file))
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut sel = config.selective.to_config()?;
    if programs.iter().any(|p| p.weight.is_some()) {
        sel.weights = SamplingWeights::PerProgram(programs.iter().map(|p| p.weight.unwrap_or(1.0)).collect());
    } else if let WeightsSpec::PerProgram(w) = &config.selective.weights {
        if w.len() != programs.len() {
            return Err(CliError::input(format!("{} weights for {} programs", w.len(), programs.len())));
        }
    }
    let scores: Vec<f64> = programs.iter().map(|p| p.score).collect();
    let payloads = programs.into_iter().map(|p| p.payload).collect();
    let limit = Duration::from_millis(timeout_ms.max(1));
    let mut executor = SubprocessExecutor::new(command, payloads, limit, cli.jobs);
    let outcome = run_selective_execution(&scores, &mut executor, &sel).map_err(|e| match e {
        SelectiveError::Execution(e) => CliError {
            code: EXIT_EXECUTOR,
            message: format!("executor failed on program {}: {}", e.index, e.reason),
        },
        other => CliError::input(other),
    })?;
    let json = serde_json::to_string_pretty(&OutcomeJson::from_outcome(&outcome)).expect("serializes");
    write_file(&cli.out.join("outcome.json"), &(json + "\n"))?;
    match outcome.u_hat {
        Threshold::ExecuteAll => println!("u_hat exec_all"),
        Threshold::Value(u) => println!("u_hat {u}"),
    }
    println!("executed {} of {}", outcome.executed.len(), scores.len());
    println!("fraction_saved {}", outcome.fraction_saved);
    Ok(EXIT_OK)
}

fn simulate(cli: &Cli, config: &Config, sweep: SweepKind, selective: bool) -> Result<i32, CliError> {
    let synthetic = config.synthetic.to_config();
    synthetic.validate()?;
    let settings = config.trial_settings(1.0).map_err(CliError::input)?;
    let sel = config.selective.to_config()?;
    let n = config.simulation.n_trials;
    let jobs = cli.jobs;
    let alpha = config.ltt.alpha;
    let run_one = |cfg: &progset_core::sim::SyntheticConfig,
                   sel: &progset_core::selective::SelectiveConfig,
                   selective: bool|
     -> Result<TrialReport, CliError> {
        Ok(if selective {
            parallel::run_selective_trials(cfg, sel, &settings, n, jobs)?
        } else {
            parallel::run_trials(cfg, &settings, n, jobs)?
        })
    };

    let sim = &config.simulation;
    let report = match sweep {
        SweepKind::None => {
            let mut r = SweepReport::new(SweepParam::Alpha);
            let target = if selective { 1.0 - combined_limit(alpha, sel.epsilon) } else { 1.0 - alpha };
            r.push(alpha, target, &run_one(&synthetic, &sel, selective)?);
            r
        }
        SweepKind::Alpha => {
            let alphas = if sim.alphas.is_empty() { validation::ALPHAS.to_vec() } else { sim.alphas.clone() };
            let mut r = SweepReport::new(SweepParam::Alpha);
            if selective {
                for &a in &alphas {
                    let s = progset_core::sim::TrialSettings {
                        ltt: progset_core::LttConfig { alpha: a, ..settings.ltt.clone() },
                        ..settings.clone()
                    };
                    let rep = parallel::run_selective_trials(&synthetic, &sel, &s, n, jobs)?;
                    r.push(a, 1.0 - combined_limit(a, sel.epsilon), &rep);
                }
            } else {
                let reports = parallel::run_alpha_sweep(&synthetic, &settings, &alphas, n, jobs)?;
                for (&a, rep) in alphas.iter().zip(&reports) {
                    r.push(a, 1.0 - a, rep);
                }
            }
            r
        }
        SweepKind::M => {
            let ms = if sim.ms.is_empty() { validation::MS.to_vec() } else { sim.ms.clone() };
            let mut r = SweepReport::new(SweepParam::M);
            for &m in &ms {
                let cfg = progset_core::sim::SyntheticConfig { m, ..synthetic.clone() };
                let target = if selective { 1.0 - combined_limit(alpha, sel.epsilon) } else { 1.0 - alpha };
                r.push(m as f64, target, &run_one(&cfg, &sel, selective)?);
            }
            r
        }
        SweepKind::Epsilon => {
            let eps = if sim.epsilons.is_empty() { validation::EPSILONS.to_vec() } else { sim.epsilons.clone() };
            let mut r = SweepReport::new(SweepParam::Epsilon);
            for &e in &eps {
                let s = progset_core::selective::SelectiveConfig { epsilon: e, ..sel.clone() };
                r.push(e, 1.0 - combined_limit(alpha, e), &run_one(&synthetic, &s, true)?);
            }
            r
        }
    };
    for p in report.write_all(&cli.out, "simulation")? {
        info!("wrote {}", p.display());
    }
    print!("{}", report.to_csv()?);
    Ok(EXIT_OK)
}

/// Risk level guaranteed with approximate labels: `α + ε(1 − α)`.
pub fn combined_limit(alpha: f64, epsilon: f64) -> f64 {
    alpha + epsilon * (1.0 - alpha)
}

fn report(cli: &Cli, input: &Path, format: ReportFormat) -> Result<i32, CliError> {
    let text = String::from_utf8(read_file(input)?)
        .map_err(|_| CliError::input(format!("{}: not UTF-8", input.display())))?;
    let sweep = SweepReport::parse(&text)
        .map_err(|source| ReportError::Parse { path: input.display().to_string(), source })?;
    let (ext, body) = match format {
        ReportFormat::Json => ("json", sweep.to_json()?),
        ReportFormat::Csv => ("csv", sweep.to_csv()?),
        ReportFormat::Svg => ("svg", sweep.to_svg()?),
    };
    write_file(&cli.out.join(format!("report.{ext}")), &body)?;
    if format == ReportFormat::Csv {
        print!("{body}");
    }
    Ok(EXIT_OK)
}
