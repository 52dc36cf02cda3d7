//! Run configuration file.
//!
//! ```json
//! {
//!   "synthetic": {"n_tasks": 200, "m": 20, "weight_model": {"uniform": {"low": 0.0, "high": 0.3}}},
//!   "ltt": {"alpha": 0.1, "delta": 0.1, "t_max": 1, "grid_step": 0.02, "fwer": "fst"},
//!   "selective": {"h": 0.1, "epsilon": 0.1, "gamma": 0.01, "weights": 1.0, "bound": "hoeffding"},
//!   "simulation": {"n_trials": 100, "split": 0.5}
//! }
//! ```
//!
//! Every section and field is optional. Command-line flags are applied on
//! top of the file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use progset_core::fwer::FwerMethod;
use progset_core::ltt::{LambdaGrid, LttConfig, DEFAULT_FST_STARTS, DEFAULT_GRID_STEP};
use progset_core::risk::CalibrationRecord;
use progset_core::selective::{BoundKind, DrawCount, SamplingWeights, SelectiveConfig};
use progset_core::sim::{LabelModel, SyntheticConfig, TrialSettings, WeightModel};
use progset_core::{CalibrationError, Strategy};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FwerName {
    Bonferroni,
    Holm,
    #[default]
    #[serde(alias = "fixed_sequence")]
    #[value(alias = "fixed-sequence")]
    Fst,
}

impl From<FwerName> for FwerMethod {
    fn from(f: FwerName) -> Self {
        match f {
            FwerName::Bonferroni => FwerMethod::Bonferroni,
            FwerName::Holm => FwerMethod::Holm,
            FwerName::Fst => FwerMethod::FixedSequence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    #[default]
    Exact,
    Greedy,
}

impl From<StrategyName> for Strategy {
    fn from(s: StrategyName) -> Self {
        match s {
            StrategyName::Exact => Strategy::Exact,
            StrategyName::Greedy => Strategy::Greedy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BoundName {
    #[default]
    Hoeffding,
    Clt,
}

impl From<BoundName> for BoundKind {
    fn from(b: BoundName) -> Self {
        match b {
            BoundName::Hoeffding => BoundKind::Hoeffding,
            BoundName::Clt => BoundKind::Clt,
        }
    }
}

/// Draw count: an integer is absolute, a number below 1 is a fraction of
/// the pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DrawCountSpec {
    Absolute(usize),
    Fraction(f64),
}

impl DrawCountSpec {
    pub fn parse(text: &str) -> Result<Self, String> {
        if let Some(pct) = text.strip_suffix('%') {
            let p: f64 = pct.parse().map_err(|_| format!("invalid percentage {text:?}"))?;
            return Ok(Self::Fraction(p / 100.0));
        }
        if let Ok(n) = text.parse::<usize>() {
            return Ok(Self::Absolute(n));
        }
        text.parse::<f64>().map(Self::Fraction).map_err(|_| format!("invalid draw count {text:?}"))
    }

    pub fn resolve(self) -> Result<DrawCount, ConfigError> {
        match self {
            Self::Absolute(n) => Ok(DrawCount::Absolute(n)),
            Self::Fraction(f) if f > 0.0 && f <= 1.0 => Ok(DrawCount::FractionOfPool(f)),
            Self::Fraction(f) => Err(ConfigError::Invalid(format!(
                "h must be a positive integer or a fraction in (0, 1], got {f}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsSpec {
    Uniform(f64),
    PerProgram(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightModelSpec {
    Uniform { low: f64, high: f64 },
    HeavyTail { scale: f64 },
}

impl From<WeightModelSpec> for WeightModel {
    fn from(w: WeightModelSpec) -> Self {
        match w {
            WeightModelSpec::Uniform { low, high } => WeightModel::Uniform { low, high },
            WeightModelSpec::HeavyTail { scale } => WeightModel::HeavyTail { scale },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelModelSection {
    pub max_wrong: usize,
    pub wrong_prob: f64,
    pub wrong_shift: f64,
    pub fix_prob: f64,
    pub rewrite_prob: f64,
    pub include_reference: bool,
    pub adversarial_rate: f64,
}

impl Default for LabelModelSection {
    fn default() -> Self {
        let d = LabelModel::default();
        Self {
            max_wrong: d.max_wrong,
            wrong_prob: d.wrong_prob,
            wrong_shift: d.wrong_shift,
            fix_prob: d.fix_prob,
            rewrite_prob: d.rewrite_prob,
            include_reference: d.include_reference,
            adversarial_rate: d.adversarial_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub n_tasks: usize,
    pub tree_size_range: (usize, usize),
    pub weight_model: WeightModelSpec,
    pub label_model: LabelModelSection,
    pub miscalibration: f64,
    pub m: usize,
    pub seed: u64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let d = SyntheticConfig::default();
        Self {
            n_tasks: d.n_tasks,
            tree_size_range: d.tree_size_range,
            weight_model: match d.weight_model {
                WeightModel::Uniform { low, high } => WeightModelSpec::Uniform { low, high },
                WeightModel::HeavyTail { scale } => WeightModelSpec::HeavyTail { scale },
            },
            label_model: LabelModelSection::default(),
            miscalibration: d.miscalibration,
            m: d.m,
            seed: d.seed,
        }
    }
}

impl SyntheticSection {
    pub fn to_config(&self) -> SyntheticConfig {
        let l = &self.label_model;
        SyntheticConfig {
            n_tasks: self.n_tasks,
            tree_size_range: self.tree_size_range,
            weight_model: self.weight_model.into(),
            label_model: LabelModel {
                max_wrong: l.max_wrong,
                wrong_prob: l.wrong_prob,
                wrong_shift: l.wrong_shift,
                fix_prob: l.fix_prob,
                rewrite_prob: l.rewrite_prob,
                include_reference: l.include_reference,
                adversarial_rate: l.adversarial_rate,
            },
            miscalibration: self.miscalibration,
            m: self.m,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LttSection {
    pub alpha: f64,
    pub delta: f64,
    pub t_max: usize,
    pub grid_step: f64,
    /// Explicit grid; overrides `grid_step`.
    pub grid: Option<Vec<f64>>,
    pub fwer: FwerName,
    pub fst_starts: usize,
    pub strategy: StrategyName,
}

impl Default for LttSection {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            delta: 0.1,
            t_max: 1,
            grid_step: DEFAULT_GRID_STEP,
            grid: None,
            fwer: FwerName::Fst,
            fst_starts: DEFAULT_FST_STARTS,
            strategy: StrategyName::Exact,
        }
    }
}

impl LttSection {
    /// The explicit grid, or a uniform grid covering the heaviest tree.
    pub fn to_config(&self, records: &[CalibrationRecord]) -> Result<LttConfig, CalibrationError> {
        let grid = match &self.grid {
            Some(values) => LambdaGrid::new(values.clone())?,
            None => LambdaGrid::covering(records, self.grid_step)?,
        };
        Ok(self.with_grid(grid))
    }

    pub fn with_grid(&self, grid: LambdaGrid) -> LttConfig {
        LttConfig {
            t_max: self.t_max,
            fwer: self.fwer.into(),
            fst_starts: self.fst_starts,
            strategy: self.strategy.into(),
            ..LttConfig::new(grid, self.alpha, self.delta)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectiveSection {
    pub h: DrawCountSpec,
    pub epsilon: f64,
    pub gamma: f64,
    pub weights: WeightsSpec,
    pub bound: BoundName,
    pub seed: u64,
}

impl Default for SelectiveSection {
    fn default() -> Self {
        Self {
            h: DrawCountSpec::Fraction(0.1),
            epsilon: 0.1,
            gamma: 0.01,
            weights: WeightsSpec::Uniform(1.0),
            bound: BoundName::Hoeffding,
            seed: 0,
        }
    }
}

impl SelectiveSection {
    pub fn to_config(&self) -> Result<SelectiveConfig, ConfigError> {
        Ok(SelectiveConfig {
            h: self.h.resolve()?,
            epsilon: self.epsilon,
            gamma: self.gamma,
            weights: match &self.weights {
                WeightsSpec::Uniform(w) => SamplingWeights::Uniform(*w),
                WeightsSpec::PerProgram(ws) => SamplingWeights::PerProgram(ws.clone()),
            },
            bound: self.bound.into(),
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub n_trials: usize,
    pub split: f64,
    /// Sweep levels; a single run uses `ltt.alpha`, `synthetic.m` and
    /// `selective.epsilon` when these are empty.
    pub alphas: Vec<f64>,
    pub ms: Vec<usize>,
    pub epsilons: Vec<f64>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self { n_trials: 100, split: 0.5, alphas: Vec::new(), ms: Vec::new(), epsilons: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub synthetic: SyntheticSection,
    pub ltt: LttSection,
    pub selective: SelectiveSection,
    pub simulation: SimulationSection,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read(path).map_err(|source| ConfigError::Io { path: shown.clone(), source })?;
        serde_json::from_slice(&text).map_err(|source| ConfigError::Parse { path: shown, source })
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, ConfigError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn trial_settings(&self, grid_max: f64) -> Result<TrialSettings, CalibrationError> {
        let grid = match &self.ltt.grid {
            Some(values) => LambdaGrid::new(values.clone())?,
            None => LambdaGrid::uniform(self.ltt.grid_step, grid_max)?,
        };
        Ok(TrialSettings {
            ltt: self.ltt.with_grid(grid),
            split: self.simulation.split,
            grid_step: if self.ltt.grid.is_some() { None } else { Some(self.ltt.grid_step) },
        })
    }
}
