//! JSON run reports and their aggregation into a summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pscurv::scenarios::ScenarioKind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("MISSING_ARTIFACTS: no run reports under {0}")]
    MissingArtifacts(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Disabled checks are reported but never fail the run.
    pub enabled: bool,
    /// The measured quantity compared against `threshold`.
    pub measured: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub command: String,
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub checks: Vec<Check>,
    /// Scalar results; non-finite values are stored as `null`.
    pub values: BTreeMap<String, Option<f64>>,
    /// Plot-ready `(x, y)` series.
    pub series: BTreeMap<String, Vec<(f64, f64)>>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl Report {
    pub fn new(command: &str, scenario: ScenarioKind, seed: u64) -> Self {
        Self {
            command: command.into(),
            scenario,
            seed,
            checks: Vec::new(),
            values: BTreeMap::new(),
            series: BTreeMap::new(),
        }
    }

    pub fn value(&mut self, name: &str, x: f64) {
        self.values.insert(name.into(), finite(x));
    }

    /// `measured ≤ threshold`, failing on NaN.
    pub fn at_most(&mut self, name: &str, measured: f64, threshold: f64, detail: impl Into<String>) {
        self.push(name, measured <= threshold, Some(measured), Some(threshold), detail.into());
    }

    /// `measured ≥ threshold`, failing on NaN.
    pub fn at_least(&mut self, name: &str, measured: f64, threshold: f64, detail: impl Into<String>) {
        self.push(name, measured >= threshold, Some(measured), Some(threshold), detail.into());
    }

    /// `measured < threshold`, failing on NaN.
    pub fn below(&mut self, name: &str, measured: f64, threshold: f64, detail: impl Into<String>) {
        self.push(name, measured < threshold, Some(measured), Some(threshold), detail.into());
    }

    pub fn flag(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.push(name, passed, None, None, detail.into());
    }

    fn push(&mut self, name: &str, passed: bool, measured: Option<f64>, threshold: Option<f64>, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            enabled: true,
            measured: measured.and_then(finite),
            threshold,
            detail,
        });
    }

    pub fn series(&mut self, name: &str, points: impl IntoIterator<Item = (f64, f64)>) {
        let pts: Vec<(f64, f64)> = points
            .into_iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect();
        self.series.insert(name.into(), pts);
    }

    pub fn disable(&mut self, names: &[String]) {
        for c in &mut self.checks {
            if names.contains(&c.name) {
                c.enabled = false;
            }
        }
    }

    pub fn failed(&self) -> bool {
        self.checks.iter().any(|c| c.enabled && !c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Every `*.json` under `dir` that parses as a [`Report`], sorted by path.
pub fn collect_reports(dir: &Path) -> Result<Vec<(PathBuf, Report)>, ReportError> {
    let mut stack = vec![dir.to_path_buf()];
    let mut found = Vec::new();
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(io_err(&d))? {
            let path = entry.map_err(io_err(&d))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "json") {
                let text = fs::read_to_string(&path).map_err(io_err(&path))?;
                if let Ok(r) = serde_json::from_str::<Report>(&text) {
                    found.push((path, r));
                }
            }
        }
    }
    found.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(found)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.3e}"))
}

/// The summary table. Columns: run, check, measured, threshold, status.
pub fn summary_table(reports: &[(PathBuf, Report)]) -> String {
    let mut rows: Vec<[String; 5]> = Vec::new();
    for (_, r) in reports {
        let run = format!("{}/{}", serde_plain(&r.scenario), r.command);
        for c in &r.checks {
            let status = match (c.enabled, c.passed) {
                (true, true) => "PASS",
                (true, false) => "FAIL",
                (false, true) => "pass (disabled)",
                (false, false) => "fail (disabled)",
            };
            rows.push([
                run.clone(),
                c.name.clone(),
                fmt_opt(c.measured),
                fmt_opt(c.threshold),
                status.into(),
            ]);
        }
    }
    let header = ["run", "check", "measured", "threshold", "status"].map(String::from);
    let mut widths = header.clone().map(|h| h.len());
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[String; 5]| {
        let parts: Vec<String> = cells.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
        writeln!(out, "{}", parts.join("  ").trim_end()).unwrap();
    };
    line(&header);
    line(&widths.map(|w| "-".repeat(w)));
    for row in &rows {
        line(row);
    }
    writeln!(out, "\nvalues").unwrap();
    for (_, r) in reports {
        let run = format!("{}/{}", serde_plain(&r.scenario), r.command);
        for (name, v) in &r.values {
            let shown = v.map_or_else(|| "-".into(), |x| format!("{x:?}"));
            writeln!(out, "  {run}  {name} = {shown}").unwrap();
        }
    }
    let failed = reports.iter().flat_map(|(_, r)| &r.checks).filter(|c| c.enabled && !c.passed).count();
    let total = rows.len();
    writeln!(out, "\n{} runs, {total} checks, {failed} failed", reports.len()).unwrap();
    out
}

/// `TRIVIAL_ODE` rather than `"TRIVIAL_ODE"`.
fn serde_plain(kind: &ScenarioKind) -> String {
    serde_json::to_string(kind).expect("enum serializes").trim_matches('"').to_string()
}

/// Writes `summary.txt`, `summary.json` and `series/<scenario>_<command>_<name>.csv`
/// into `dir`, returning the summary text.
pub fn aggregate(dir: &Path) -> Result<String, ReportError> {
    if !dir.is_dir() {
        return Err(ReportError::MissingArtifacts(dir.to_path_buf()));
    }
    let reports = collect_reports(dir)?;
    if reports.is_empty() {
        return Err(ReportError::MissingArtifacts(dir.to_path_buf()));
    }
    let table = summary_table(&reports);
    fs::write(dir.join("summary.txt"), &table).map_err(io_err(dir))?;
    let rows: Vec<SummaryRow> = reports
        .iter()
        .flat_map(|(_, r)| {
            r.checks.iter().map(move |c| SummaryRow {
                scenario: r.scenario,
                command: r.command.clone(),
                check: c.name.clone(),
                measured: c.measured,
                threshold: c.threshold,
                passed: c.passed,
                enabled: c.enabled,
            })
        })
        .collect();
    let json = serde_json::to_string_pretty(&rows).expect("summary serializes") + "\n";
    fs::write(dir.join("summary.json"), json).map_err(io_err(dir))?;
    let series_dir = dir.join("series");
    fs::create_dir_all(&series_dir).map_err(io_err(&series_dir))?;
    for (_, r) in &reports {
        for (name, pts) in &r.series {
            let mut csv = String::from("x,y\n");
            for (x, y) in pts {
                writeln!(csv, "{x:?},{y:?}").unwrap();
            }
            let file = series_dir.join(format!("{}_{}_{name}.csv", serde_plain(&r.scenario), r.command));
            fs::write(&file, csv).map_err(io_err(&file))?;
        }
    }
    Ok(table)
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    scenario: ScenarioKind,
    command: String,
    check: String,
    measured: Option<f64>,
    threshold: Option<f64>,
    passed: bool,
    enabled: bool,
}
