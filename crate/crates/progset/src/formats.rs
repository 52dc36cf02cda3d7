//! JSON and JSON-lines formats.
//!
//! Field names are fixed; unknown fields are rejected everywhere a schema is
//! defined. Floats round-trip bit-exactly.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use progset_core::ast::{AnnotatedAst, AstError, AstNode};
use progset_core::ltt::CalibrationResult;
use progset_core::prune::{PruneError, RemovalSet};
use progset_core::risk::{CalibrationRecord, RecordError};
use progset_core::selective::{SelectiveOutcome, Threshold};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{}: {source}", location(.line))]
    Json { line: Option<usize>, source: serde_json::Error },
    #[error("{}: invalid tree: {source} [{}]", location(.line), .source.rule())]
    Ast { line: Option<usize>, source: AstError },
    #[error("{}: {source}", location(.line))]
    Record { line: Option<usize>, source: RecordError },
    #[error("{}: {message}", location(.line))]
    Invalid { line: Option<usize>, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn location(line: &Option<usize>) -> String {
    match line {
        Some(l) => format!("line {l}"),
        None => "input".into(),
    }
}

impl FormatError {
    pub fn line(&self) -> Option<usize> {
        match self {
            FormatError::Json { line, .. }
            | FormatError::Ast { line, .. }
            | FormatError::Record { line, .. }
            | FormatError::Invalid { line, .. } => *line,
            FormatError::Io(_) => None,
        }
    }

    fn at(self, l: usize) -> Self {
        match self {
            FormatError::Json { source, .. } => FormatError::Json { line: Some(l), source },
            FormatError::Ast { source, .. } => FormatError::Ast { line: Some(l), source },
            FormatError::Record { source, .. } => FormatError::Record { line: Some(l), source },
            FormatError::Invalid { message, .. } => FormatError::Invalid { line: Some(l), message },
            other => other,
        }
    }
}

fn json_err(source: serde_json::Error) -> FormatError {
    FormatError::Json { line: None, source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeJson {
    pub id: usize,
    pub label: String,
    pub children: Vec<usize>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AstJson {
    pub task_id: String,
    pub root: usize,
    pub nodes: Vec<NodeJson>,
}

impl AstJson {
    pub fn from_ast(ast: &AnnotatedAst) -> Self {
        Self {
            task_id: ast.task_id().to_owned(),
            root: ast.root(),
            nodes: ast
                .nodes()
                .iter()
                .map(|n| NodeJson {
                    id: n.id,
                    label: n.label.clone(),
                    children: n.children.clone(),
                    weight: n.weight,
                })
                .collect(),
        }
    }

    pub fn into_ast(self) -> Result<AnnotatedAst, FormatError> {
        let nodes = self
            .nodes
            .into_iter()
            .map(|n| AstNode { id: n.id, label: n.label, children: n.children, weight: n.weight })
            .collect();
        AnnotatedAst::new(self.task_id, self.root, nodes)
            .map_err(|source| FormatError::Ast { line: None, source })
    }
}

pub fn parse_ast_json(bytes: &[u8]) -> Result<AnnotatedAst, FormatError> {
    serde_json::from_slice::<AstJson>(bytes).map_err(json_err)?.into_ast()
}

pub fn ast_to_json(ast: &AnnotatedAst) -> String {
    serde_json::to_string(&AstJson::from_ast(ast)).expect("tree serializes")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemovalJson {
    pub task_id: String,
    pub removed: Vec<usize>,
}

impl RemovalJson {
    pub fn from_removal(removal: &RemovalSet) -> Self {
        Self { task_id: removal.task_id().to_owned(), removed: removal.removed_ids() }
    }

    pub fn into_removal(self, ast: &AnnotatedAst) -> Result<RemovalSet, PruneError> {
        if self.task_id != ast.task_id() {
            return Err(PruneError::Mismatch { expected: ast.task_id().into(), found: self.task_id });
        }
        RemovalSet::from_removed(ast, &self.removed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordJson {
    pub task_id: String,
    pub generated: AstJson,
    pub labels: Vec<AstJson>,
    pub score: Option<f64>,
}

impl RecordJson {
    pub fn from_record(record: &CalibrationRecord) -> Self {
        Self {
            task_id: record.task_id.clone(),
            generated: AstJson::from_ast(&record.generated),
            labels: record.labels().iter().map(AstJson::from_ast).collect(),
            score: record.score,
        }
    }

    pub fn into_record(self) -> Result<CalibrationRecord, FormatError> {
        let generated = self.generated.into_ast()?;
        let labels = self.labels.into_iter().map(AstJson::into_ast).collect::<Result<Vec<_>, _>>()?;
        CalibrationRecord::new(self.task_id, generated, labels, self.score)
            .map_err(|source| FormatError::Record { line: None, source })
    }
}

fn nonblank_lines(reader: impl BufRead) -> impl Iterator<Item = Result<(usize, String), FormatError>> {
    reader.lines().enumerate().filter_map(|(i, line)| match line {
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(Ok((i + 1, l))),
        Err(e) => Some(Err(FormatError::Io(e))),
    })
}

/// Reads a JSON-lines calibration set. Errors carry 1-based line numbers;
/// blank lines are skipped.
pub fn read_records(reader: impl BufRead) -> Result<Vec<CalibrationRecord>, FormatError> {
    let mut out = Vec::new();
    for item in nonblank_lines(reader) {
        let (n, line) = item?;
        let rec: RecordJson = serde_json::from_str(&line).map_err(|e| json_err(e).at(n))?;
        out.push(rec.into_record().map_err(|e| e.at(n))?);
    }
    Ok(out)
}

pub fn write_records(records: &[CalibrationRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&RecordJson::from_record(r)).expect("record serializes"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationJson {
    pub grid: Vec<f64>,
    pub pvalues: Vec<f64>,
    pub valid: Vec<f64>,
    pub lambda_hat: Option<f64>,
    pub risk: Vec<f64>,
    pub removal: Vec<f64>,
}

impl CalibrationJson {
    pub fn from_result(result: &CalibrationResult) -> Self {
        Self {
            grid: result.grid.clone(),
            pvalues: result.pvalues.clone(),
            valid: result.valid_lambdas(),
            lambda_hat: result.lambda_hat,
            risk: result.risk.clone(),
            removal: result.removal.clone(),
        }
    }

    pub fn into_result(self) -> Result<CalibrationResult, FormatError> {
        let n = self.grid.len();
        let invalid = |message: &str| FormatError::Invalid { line: None, message: message.into() };
        if self.pvalues.len() != n || self.risk.len() != n || self.removal.len() != n {
            return Err(invalid("grid, pvalues, risk and removal must have equal lengths"));
        }
        let valid = self
            .valid
            .iter()
            .map(|v| self.grid.iter().position(|g| g == v))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| invalid("valid contains a value not on the grid"))?;
        if let Some(l) = self.lambda_hat {
            if !self.grid.contains(&l) {
                return Err(invalid("lambda_hat is not on the grid"));
            }
        }
        Ok(CalibrationResult {
            grid: self.grid,
            pvalues: self.pvalues,
            valid,
            lambda_hat: self.lambda_hat,
            risk: self.risk,
            removal: self.removal,
        })
    }
}

pub fn parse_calibration_json(bytes: &[u8]) -> Result<CalibrationResult, FormatError> {
    serde_json::from_slice::<CalibrationJson>(bytes).map_err(json_err)?.into_result()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UHatJson {
    Value(f64),
    Sentinel(ExecAll),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExecAll {
    #[serde(rename = "exec_all")]
    ExecAll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeJson {
    pub u_hat: UHatJson,
    pub labels: Vec<u8>,
    pub executed: Vec<usize>,
    pub fraction_saved: f64,
    pub bound: Vec<(f64, f64)>,
}

impl OutcomeJson {
    pub fn from_outcome(outcome: &SelectiveOutcome) -> Self {
        Self {
            u_hat: match outcome.u_hat {
                Threshold::ExecuteAll => UHatJson::Sentinel(ExecAll::ExecAll),
                Threshold::Value(u) => UHatJson::Value(u),
            },
            labels: outcome.labels.clone(),
            executed: outcome.executed.clone(),
            fraction_saved: outcome.fraction_saved,
            bound: outcome.bound_curve.clone(),
        }
    }
}

/// One line of a programs file for selective execution. `weight` is the
/// execution probability `ω` of the draw phase (default 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramJson {
    pub score: f64,
    pub payload: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

pub fn read_programs(reader: impl BufRead) -> Result<Vec<ProgramJson>, FormatError> {
    let mut out = Vec::new();
    for item in nonblank_lines(reader) {
        let (n, line) = item?;
        out.push(serde_json::from_str(&line).map_err(|e| json_err(e).at(n))?);
    }
    Ok(out)
}
