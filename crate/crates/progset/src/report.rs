//! Sweep reports as JSON, CSV and SVG.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use progset_core::sim::{Aggregates, TrialReport, TrialRow};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no data")]
    NoData,
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// The parameter varied across a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Alpha,
    M,
    Epsilon,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::M => "m",
            SweepParam::Epsilon => "epsilon",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowJson {
    pub trial: usize,
    pub seed: u64,
    pub lambda_hat: Option<f64>,
    pub test_risk: f64,
    pub removal_fraction: f64,
    pub covered: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction_saved: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregatesJson {
    pub trials: usize,
    pub alpha: f64,
    pub coverage_mean: f64,
    pub coverage_sd: f64,
    pub removal_mean: f64,
    pub removal_sd: f64,
    pub satisfied_rate: f64,
    pub abstain_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saved_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saved_sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_error_mean: Option<f64>,
}

/// One sweep level. `target` is the coverage the guarantee promises there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelJson {
    pub value: f64,
    pub target: f64,
    pub aggregates: AggregatesJson,
    pub rows: Vec<RowJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepReport {
    pub param: SweepParam,
    pub levels: Vec<LevelJson>,
}

impl From<&TrialRow> for RowJson {
    fn from(r: &TrialRow) -> Self {
        Self {
            trial: r.trial,
            seed: r.seed,
            lambda_hat: r.lambda_hat,
            test_risk: r.test_risk,
            removal_fraction: r.removal_fraction,
            covered: r.covered,
            fraction_saved: r.fraction_saved,
            label_error: r.label_error,
        }
    }
}

impl From<&Aggregates> for AggregatesJson {
    fn from(a: &Aggregates) -> Self {
        Self {
            trials: a.trials,
            alpha: a.alpha,
            coverage_mean: a.coverage_mean,
            coverage_sd: a.coverage_sd,
            removal_mean: a.removal_mean,
            removal_sd: a.removal_sd,
            satisfied_rate: a.satisfied_rate,
            abstain_rate: a.abstain_rate,
            saved_mean: a.saved_mean,
            saved_sd: a.saved_sd,
            label_error_mean: a.label_error_mean,
        }
    }
}

impl SweepReport {
    pub fn new(param: SweepParam) -> Self {
        Self { param, levels: Vec::new() }
    }

    pub fn push(&mut self, value: f64, target: f64, report: &TrialReport) {
        self.levels.push(LevelJson {
            value,
            target,
            aggregates: (&report.aggregates).into(),
            rows: report.rows.iter().map(RowJson::from).collect(),
        });
    }

    fn selective(&self) -> bool {
        self.levels.iter().all(|l| l.aggregates.saved_mean.is_some())
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        if self.levels.is_empty() {
            return Err(ReportError::NoData);
        }
        Ok(serde_json::to_string_pretty(self).expect("report serializes") + "\n")
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// One line per level. Selective sweeps add the fraction saved.
    pub fn to_csv(&self) -> Result<String, ReportError> {
        if self.levels.is_empty() {
            return Err(ReportError::NoData);
        }
        let selective = self.selective();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![self.param.name(), "coverage_mean", "coverage_sd", "removal_mean", "removal_sd"];
        if selective {
            header.extend(["saved_mean", "saved_sd"]);
        }
        w.write_record(&header)?;
        for l in &self.levels {
            let a = &l.aggregates;
            let mut rec = vec![
                l.value.to_string(),
                a.coverage_mean.to_string(),
                a.coverage_sd.to_string(),
                a.removal_mean.to_string(),
                a.removal_sd.to_string(),
            ];
            if selective {
                rec.push(a.saved_mean.unwrap_or(0.0).to_string());
                rec.push(a.saved_sd.unwrap_or(0.0).to_string());
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// Panels of mean ± SD against the sweep parameter. The coverage panel
    /// carries the promised coverage as a dashed line.
    pub fn to_svg(&self) -> Result<String, ReportError> {
        if self.levels.is_empty() {
            return Err(ReportError::NoData);
        }
        let xs: Vec<f64> = self.levels.iter().map(|l| l.value).collect();
        let mut panels: Vec<Panel> = vec![
            Panel {
                title: "coverage",
                mean: self.levels.iter().map(|l| l.aggregates.coverage_mean).collect(),
                sd: self.levels.iter().map(|l| l.aggregates.coverage_sd).collect(),
                target: Some(self.levels.iter().map(|l| l.target).collect()),
            },
            Panel {
                title: "node removal",
                mean: self.levels.iter().map(|l| l.aggregates.removal_mean).collect(),
                sd: self.levels.iter().map(|l| l.aggregates.removal_sd).collect(),
                target: None,
            },
        ];
        if self.selective() {
            panels.push(Panel {
                title: "fraction saved",
                mean: self.levels.iter().map(|l| l.aggregates.saved_mean.unwrap_or(0.0)).collect(),
                sd: self.levels.iter().map(|l| l.aggregates.saved_sd.unwrap_or(0.0)).collect(),
                target: None,
            });
        }
        Ok(render_svg(self.param.name(), &xs, &panels))
    }

    /// Writes `<stem>.json`, `<stem>.csv` and `<stem>.svg` under `dir`.
    pub fn write_all(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>, ReportError> {
        let outputs = [("json", self.to_json()?), ("csv", self.to_csv()?), ("svg", self.to_svg()?)];
        let mut paths = Vec::new();
        for (ext, text) in outputs {
            let path = dir.join(format!("{stem}.{ext}"));
            std::fs::write(&path, text)
                .map_err(|source| ReportError::Io { path: path.display().to_string(), source })?;
            paths.push(path);
        }
        Ok(paths)
    }
}

struct Panel {
    title: &'static str,
    mean: Vec<f64>,
    sd: Vec<f64>,
    target: Option<Vec<f64>>,
}

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 220.0;
const MARGIN: f64 = 45.0;

fn render_svg(x_label: &str, xs: &[f64], panels: &[Panel]) -> String {
    let width = panels.len() as f64 * (PANEL_W + MARGIN) + MARGIN;
    let height = PANEL_H + 2.0 * MARGIN;
    let (x_lo, x_hi) = span(xs.iter().copied());
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    for (k, p) in panels.iter().enumerate() {
        let left = MARGIN + k as f64 * (PANEL_W + MARGIN);
        let top = MARGIN;
        let lows = p.mean.iter().zip(&p.sd).map(|(m, s)| m - s);
        let highs = p.mean.iter().zip(&p.sd).map(|(m, s)| m + s);
        let targets = p.target.iter().flatten().copied();
        let (y_lo, y_hi) = span(lows.clone().chain(highs.clone()).chain(targets));
        let px = |x: f64| left + (x - x_lo) / (x_hi - x_lo) * PANEL_W;
        let py = |y: f64| top + PANEL_H - (y - y_lo) / (y_hi - y_lo) * PANEL_H;

        let _ = writeln!(
            s,
            r##"<rect x="{left}" y="{top}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#444"/>"##
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + PANEL_W / 2.0, top - 12.0, p.title);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
            left + PANEL_W / 2.0,
            top + PANEL_H + 30.0
        );
        for (v, anchor_y) in [(y_lo, top + PANEL_H), (y_hi, top + 10.0)] {
            let _ = writeln!(s, r#"<text x="{}" y="{anchor_y}" text-anchor="end">{v:.3}</text>"#, left - 4.0);
        }
        for &x in xs {
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x}</text>"#, px(x), top + PANEL_H + 14.0);
        }

        let band: Vec<String> = xs
            .iter()
            .zip(highs)
            .map(|(&x, y)| point(px(x), py(y)))
            .chain(xs.iter().zip(lows).rev().map(|(&x, y)| point(px(x), py(y))))
            .collect();
        let _ = writeln!(s, r##"<polygon points="{}" fill="#1f77b4" fill-opacity="0.2" stroke="none"/>"##, band.join(" "));
        let line: Vec<String> = xs.iter().zip(&p.mean).map(|(&x, &y)| point(px(x), py(y))).collect();
        let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##, line.join(" "));
        for (&x, &y) in xs.iter().zip(&p.mean) {
            let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f77b4"/>"##, px(x), py(y));
        }
        if let Some(target) = &p.target {
            let line: Vec<String> = xs.iter().zip(target).map(|(&x, &y)| point(px(x), py(y))).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1.5" stroke-dasharray="6 4"/>"#,
                line.join(" ")
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn point(x: f64, y: f64) -> String {
    format!("{x:.2},{y:.2}")
}

/// Range of the values, padded so flat data still gets a non-zero span.
fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use progset_core::sim::report;

    fn row(trial: usize, risk: f64, removal: f64, saved: Option<f64>) -> TrialRow {
        TrialRow {
            trial,
            seed: trial as u64,
            lambda_hat: Some(0.5),
            test_risk: risk,
            removal_fraction: removal,
            covered: risk <= 0.1,
            fraction_saved: saved,
            label_error: saved.map(|_| 0.0),
        }
    }

    fn alpha_sweep() -> SweepReport {
        let mut s = SweepReport::new(SweepParam::Alpha);
        for (k, alpha) in [0.05, 0.1, 0.2].into_iter().enumerate() {
            let rows = vec![row(0, 0.02 * k as f64, 0.6, None), row(1, 0.05, 0.5 - 0.1 * k as f64, None)];
            s.push(alpha, 1.0 - alpha, &report(rows, alpha));
        }
        s
    }

    #[test]
    fn empty_sweep_has_no_data() {
        let s = SweepReport::new(SweepParam::M);
        assert_eq!(s.to_csv().unwrap_err().to_string(), "no data");
        assert!(matches!(s.to_svg(), Err(ReportError::NoData)));
        assert!(matches!(s.to_json(), Err(ReportError::NoData)));
    }

    #[test]
    fn alpha_csv_has_fixed_header() {
        let csv = alpha_sweep().to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("alpha,coverage_mean,coverage_sd,removal_mean,removal_sd"));
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        // Coverages 1 and 0.95, removals 0.6 and 0.5; sample SD of two
        // points is |a - b| / sqrt(2).
        let expected = [0.05, 0.975, 0.05 / 2f64.sqrt(), 0.55, 0.1 / 2f64.sqrt()];
        for (got, want) in first.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{first:?}");
        }
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn selective_csv_adds_saved_columns() {
        let mut s = SweepReport::new(SweepParam::Epsilon);
        s.push(0.1, 0.81, &report(vec![row(0, 0.1, 0.5, Some(0.4))], 0.1));
        assert!(s.to_csv().unwrap().starts_with("epsilon,coverage_mean,coverage_sd,removal_mean,removal_sd,saved_mean,saved_sd\n"));
    }

    #[test]
    fn json_round_trips() {
        let s = alpha_sweep();
        assert_eq!(SweepReport::parse(&s.to_json().unwrap()).unwrap(), s);
    }

    #[test]
    fn svg_has_band_mean_and_dashed_target() {
        let svg = alpha_sweep().to_svg().unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polygon").count(), 2);
        assert_eq!(svg.matches("stroke-dasharray").count(), 1);
        assert!(svg.contains(">coverage<") && svg.contains(">node removal<"));
        assert_eq!(svg, alpha_sweep().to_svg().unwrap());
    }
}
