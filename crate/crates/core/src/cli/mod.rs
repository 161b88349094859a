//! Scenario runner and verdict reporting behind the `hodge-scatter` binary.

mod config;
mod tasks;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::metric::MetricSpec;

pub use config::{
    CheckMetricParams, DosParams, FormsParams, RunConfig, ScatterParams, SpectrumParams, Task, TracecheckParams,
};

pub const SCHEMA: &str = "hodge-scatter/verdict-bundle";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    /// Numbers produced but outside the regime the check can vouch for.
    Flagged,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Flagged => "FLAGGED",
        }
    }

    pub fn from_bool(ok: bool) -> Status {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

/// One audited condition. Non-finite numbers serialize as `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub task: Task,
    pub check: String,
    pub condition: String,
    pub status: Status,
    pub measured: Option<f64>,
    pub comparison: String,
    pub threshold: Option<f64>,
    pub numbers: BTreeMap<String, Option<f64>>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

pub(crate) fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl Verdict {
    pub(crate) fn new(task: Task, check: &str, condition: &str, status: Status) -> Self {
        Verdict {
            task,
            check: check.into(),
            condition: condition.into(),
            status,
            measured: None,
            comparison: String::new(),
            threshold: None,
            numbers: BTreeMap::new(),
            note: String::new(),
        }
    }

    pub(crate) fn compare(mut self, measured: f64, comparison: &str, threshold: f64) -> Self {
        self.measured = finite(measured);
        self.comparison = comparison.into();
        self.threshold = finite(threshold);
        self
    }

    pub(crate) fn number(mut self, key: &str, v: f64) -> Self {
        self.numbers.insert(key.into(), finite(v));
        self
    }

    pub(crate) fn note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleProvenance {
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub toolkit_version: String,
    pub metric: MetricSpec,
    pub grid: GridSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictBundle {
    pub schema: String,
    pub schema_version: u32,
    pub provenance: BundleProvenance,
    pub tasks: Vec<Task>,
    pub verdicts: Vec<Verdict>,
}

impl VerdictBundle {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<VerdictBundle> {
        let b: VerdictBundle = serde_json::from_str(text)?;
        if b.schema != SCHEMA || b.schema_version != SCHEMA_VERSION {
            return Err(Error::Input(format!(
                "unsupported bundle schema {} v{} (expected {SCHEMA} v{SCHEMA_VERSION})",
                b.schema, b.schema_version
            )));
        }
        Ok(b)
    }

    pub fn count(&self, status: Status) -> usize {
        self.verdicts.iter().filter(|v| v.status == status).count()
    }

    pub fn has_failure(&self) -> bool {
        self.count(Status::Fail) > 0
    }

    /// Human-readable summary, one line per verdict.
    pub fn summary(&self) -> String {
        let p = &self.provenance;
        let mut s = String::new();
        let _ = writeln!(s, "hodge-scatter {} ({SCHEMA} v{SCHEMA_VERSION})", p.toolkit_version);
        let _ = writeln!(s, "config sha256 {}", p.config_sha256);
        let _ = writeln!(
            s,
            "seed {}",
            p.seed.map_or_else(|| "none".to_string(), |v| v.to_string())
        );
        let _ = writeln!(
            s,
            "metric {} amplitude {} decay {} on R^{}",
            p.metric.family.name(),
            p.metric.amplitude,
            p.metric.decay,
            p.metric.dimension
        );
        let _ = writeln!(
            s,
            "grid half-width {} with {} points per axis",
            p.grid.half_width, p.grid.points_per_axis
        );
        let tasks: Vec<&str> = self.tasks.iter().map(|t| t.name()).collect();
        let _ = writeln!(s, "tasks {}", if tasks.is_empty() { "none".into() } else { tasks.join(", ") });
        let _ = writeln!(s);
        for v in &self.verdicts {
            let _ = write!(
                s,
                "[{}] {} / {} / {}",
                v.status.label(),
                v.task.name(),
                v.condition,
                v.check
            );
            if !v.comparison.is_empty() {
                let _ = write!(s, ": {} {} {}", fmt_num(v.measured), v.comparison, fmt_num(v.threshold));
            }
            let _ = writeln!(s);
            for (k, x) in &v.numbers {
                let _ = writeln!(s, "    {k} = {}", fmt_num(*x));
            }
            if !v.note.is_empty() {
                let _ = writeln!(s, "    note: {}", v.note);
            }
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{} PASS, {} FAIL, {} FLAGGED",
            self.count(Status::Pass),
            self.count(Status::Fail),
            self.count(Status::Flagged)
        );
        s
    }
}

fn fmt_num(v: Option<f64>) -> String {
    match v {
        Some(x) if x.fract() == 0.0 && x.abs() < 1e9 => format!("{x:.0}"),
        Some(x) => format!("{x:.6e}"),
        None => "n/a".into(),
    }
}

/// A plot-ready CSV table; `path` is relative to the output directory.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub path: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub(crate) fn new(path: &str, header: &[&str]) -> Self {
        Table {
            path: path.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Shortest round-trip representation, used for every CSV cell.
pub(crate) fn cell(v: f64) -> String {
    format!("{v:e}")
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub bundle: VerdictBundle,
    pub tables: Vec<Table>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
    CsvDir,
}

/// Runs every requested task. Independent tasks run on separate threads;
/// results are gathered in dependency order, so the bundle does not depend
/// on scheduling. When the config names an output directory, the bundle,
/// summary and tables are written there.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let dump_root = if config.dump_operators {
        config.output_dir.as_ref().map(|d| d.join("operators"))
    } else {
        None
    };
    let results: Vec<tasks::TaskOutput> = std::thread::scope(|s| {
        let handles: Vec<_> = config
            .tasks
            .iter()
            .map(|&t| {
                let dump = dump_root.as_ref().map(|d| d.join(t.name()));
                s.spawn(move || tasks::run_task(config, t, dump.as_deref()))
            })
            .collect();
        handles
            .into_iter()
            .zip(&config.tasks)
            .map(|(h, &t)| h.join().unwrap_or_else(|_| tasks::TaskOutput::failed(t, "task panicked")))
            .collect()
    });
    let mut verdicts = Vec::new();
    let mut tables = Vec::new();
    for r in results {
        verdicts.extend(r.verdicts);
        tables.extend(r.tables);
    }
    let bundle = VerdictBundle {
        schema: SCHEMA.into(),
        schema_version: SCHEMA_VERSION,
        provenance: BundleProvenance {
            config_sha256: config.hash(),
            seed: config.seed,
            toolkit_version: env!("CARGO_PKG_VERSION").into(),
            metric: config.metric.clone(),
            grid: config.grid,
        },
        tasks: config.tasks.clone(),
        verdicts,
    };
    let out = RunOutput { bundle, tables };
    if let Some(dir) = &config.output_dir {
        for f in [ReportFormat::Json, ReportFormat::Text, ReportFormat::CsvDir] {
            emit_report(&out, f, Some(dir))?;
        }
    }
    Ok(out)
}

/// Renders the report. With a directory, `verdicts.json`, `summary.txt`
/// or the CSV tables are written there; the rendered text (the list of
/// written tables for `CsvDir`) is returned either way.
pub fn emit_report(out: &RunOutput, format: ReportFormat, dir: Option<&Path>) -> Result<String> {
    let write = |name: &str, body: &str| -> Result<()> {
        if let Some(d) = dir {
            let path = d.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    };
    match format {
        ReportFormat::Json => {
            let s = out.bundle.to_json()?;
            write("verdicts.json", &s)?;
            Ok(s)
        }
        ReportFormat::Text => {
            let s = out.bundle.summary();
            write("summary.txt", &s)?;
            Ok(s)
        }
        ReportFormat::CsvDir => {
            let mut listing = String::new();
            for t in &out.tables {
                write(&t.path, &t.to_csv()?)?;
                let _ = writeln!(listing, "{} ({} rows)", t.path, t.rows.len());
            }
            Ok(listing)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_config(tasks: &str) -> RunConfig {
        RunConfig::parse(&format!(
            "metric.family = flat\ngrid.dimension = 1\ngrid.half_width = 8\ngrid.points = 65\nseed = 3\ntasks = {tasks}\n"
        ))
        .unwrap()
    }

    #[test]
    fn empty_task_list_gives_valid_bundle() {
        let out = run(&flat_config("")).unwrap();
        assert!(out.bundle.verdicts.is_empty());
        assert!(out.tables.is_empty());
        let back = VerdictBundle::from_json(&out.bundle.to_json().unwrap()).unwrap();
        assert_eq!(back, out.bundle);
        assert!(out.bundle.summary().contains("0 PASS, 0 FAIL, 0 FLAGGED"));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let out = run(&flat_config("check-metric, forms")).unwrap();
        let json = out.bundle.to_json().unwrap();
        let back = VerdictBundle::from_json(&json).unwrap();
        assert_eq!(back, out.bundle);
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn rejects_foreign_schema() {
        let out = run(&flat_config("")).unwrap();
        let json = out.bundle.to_json().unwrap().replace(SCHEMA, "other");
        assert!(VerdictBundle::from_json(&json).is_err());
    }

    #[test]
    fn csv_quotes_fields_with_commas() {
        let mut t = Table::new("x.csv", &["a", "b"]);
        t.push(vec!["p, q".into(), cell(0.5)]);
        assert_eq!(t.to_csv().unwrap(), "a,b\n\"p, q\",5e-1\n");
    }

    #[test]
    fn writes_into_output_directory() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = flat_config("check-metric");
        cfg.output_dir = Some(dir.path().to_path_buf());
        run(&cfg).unwrap();
        for f in ["verdicts.json", "summary.txt", "check-metric/decay_profiles.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }
}
