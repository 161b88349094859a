//! Flat `key = value` scenario files with dotted section names.
//!
//! ```text
//! # comment
//! metric.family = conformal-gaussian
//! metric.amplitude = 0.1
//! grid.dimension = 1
//! grid.half_width = 200
//! grid.points = 4096
//! tasks = check-metric, scatter
//! seed = 7
//! scatter.times = 10, 20, 30, 40, 50, 60
//! ```
//!
//! Every key is checked before any work starts; all violations are
//! collected into a single [`Error::Config`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{build_grid, GridSpec};
use crate::metric::{validate_decay_inputs, MetricFamily, MetricSpec};
use crate::scattering::{make_wave_packet, WavePacketSpec, DEFAULT_PROPAGATION_TOL};
use crate::spectral::{DEFAULT_EIG_TOL, DEFAULT_MOMENTS, DEFAULT_PROBES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    CheckMetric,
    Spectrum,
    Dos,
    Scatter,
    Forms,
    Tracecheck,
    Report,
}

impl Task {
    /// Dependency order: metric checks, then everything that assembles.
    pub const ALL: [Task; 7] = [
        Task::CheckMetric,
        Task::Spectrum,
        Task::Dos,
        Task::Scatter,
        Task::Forms,
        Task::Tracecheck,
        Task::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::CheckMetric => "check-metric",
            Task::Spectrum => "spectrum",
            Task::Dos => "dos",
            Task::Scatter => "scatter",
            Task::Forms => "forms",
            Task::Tracecheck => "tracecheck",
            Task::Report => "report",
        }
    }

    pub fn from_name(s: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckMetricParams {
    pub k_decay: f64,
    pub radii: Vec<f64>,
    pub band_samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumParams {
    pub grid: GridSpec,
    pub count: usize,
    pub tol: f64,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DosParams {
    pub grid: GridSpec,
    pub interval: (f64, f64),
    pub bins: usize,
    pub probes: usize,
    pub moments: usize,
    pub tolerance: f64,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScatterParams {
    pub grid: GridSpec,
    pub packet: WavePacketSpec,
    pub times: Vec<f64>,
    pub tol: f64,
    /// Also run the incoming direction on the mirrored packet.
    pub incoming: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FormsParams {
    pub grid: GridSpec,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TracecheckParams {
    pub grid: GridSpec,
    pub fine_points: usize,
    pub interval: (f64, f64),
    pub rank: usize,
    pub filter_tol: f64,
}

/// A validated scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub metric: MetricSpec,
    pub grid: GridSpec,
    /// Requested tasks, sorted into dependency order.
    pub tasks: Vec<Task>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub dump_operators: bool,
    pub check_metric: CheckMetricParams,
    pub spectrum: SpectrumParams,
    pub dos: DosParams,
    pub scatter: ScatterParams,
    pub forms: FormsParams,
    pub tracecheck: TracecheckParams,
    /// Normalized key/value pairs the scenario was built from.
    pub entries: BTreeMap<String, String>,
}

/// Parses lines into a key map. Duplicate keys and malformed lines are errors.
fn parse_entries(text: &str, errors: &mut Vec<String>) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            errors.push(format!("line {}: expected `key = value`, got `{line}`", no + 1));
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k.contains(char::is_whitespace) {
            errors.push(format!("line {}: invalid key `{k}`", no + 1));
            continue;
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            errors.push(format!("line {}: duplicate key `{k}`", no + 1));
        }
    }
    map
}

struct Reader<'a> {
    map: &'a BTreeMap<String, String>,
    used: BTreeSet<&'a str>,
    errors: Vec<String>,
}

impl<'a> Reader<'a> {
    fn raw(&mut self, key: &str) -> Option<&'a str> {
        let (k, v) = self.map.get_key_value(key)?;
        self.used.insert(k.as_str());
        Some(v.as_str())
    }

    fn parse<T: FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let v = self.raw(key)?;
        match v.parse() {
            Ok(x) => Some(x),
            Err(_) => {
                self.errors.push(format!("{key}: expected {what}, got `{v}`"));
                None
            }
        }
    }

    fn f64(&mut self, key: &str) -> Option<f64> {
        let v: f64 = self.parse(key, "a number")?;
        if v.is_finite() {
            Some(v)
        } else {
            self.errors.push(format!("{key}: must be finite"));
            None
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> f64 {
        self.f64(key).unwrap_or(default)
    }

    fn usize_or(&mut self, key: &str, default: usize) -> usize {
        self.parse(key, "a non-negative integer").unwrap_or(default)
    }

    fn bool_or(&mut self, key: &str, default: bool) -> bool {
        self.parse(key, "true or false").unwrap_or(default)
    }

    fn list(&mut self, key: &str) -> Option<Vec<f64>> {
        let v = self.raw(key)?;
        let items: std::result::Result<Vec<f64>, _> = v.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match items {
            Ok(x) if x.iter().all(|v| v.is_finite()) => Some(x),
            _ => {
                self.errors.push(format!("{key}: expected a comma-separated list of numbers, got `{v}`"));
                None
            }
        }
    }

    fn interval_or(&mut self, key: &str, default: (f64, f64)) -> (f64, f64) {
        match self.list(key) {
            None => default,
            Some(v) if v.len() == 2 && v[0] < v[1] => (v[0], v[1]),
            Some(_) => {
                self.errors.push(format!("{key}: expected `lo, hi` with lo < hi"));
                default
            }
        }
    }

    fn positive(&mut self, key: &str, v: f64) -> f64 {
        if !(v > 0.0) {
            self.errors.push(format!("{key}: must be positive, got {v}"));
        }
        v
    }

    /// `<section>.grid.half_width` / `.points` override the main grid.
    fn task_grid(&mut self, section: &str, main: GridSpec) -> GridSpec {
        let half_width = self.f64_or(&format!("{section}.grid.half_width"), main.half_width);
        let points = self.usize_or(&format!("{section}.grid.points"), main.points_per_axis);
        let g = GridSpec::new(main.dimension, half_width, points);
        if let Err(e) = g.validate() {
            self.errors.push(format!("{section}.grid: {e}"));
        }
        g
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse_with_overrides(text, None, None)
    }

    /// Parses `text`, then applies command-line overrides for the global
    /// seed and the output directory.
    pub fn parse_with_overrides(text: &str, seed: Option<u64>, out: Option<PathBuf>) -> Result<RunConfig> {
        let mut errors = Vec::new();
        let mut map = parse_entries(text, &mut errors);
        if let Some(s) = seed {
            map.insert("seed".into(), s.to_string());
        }
        if let Some(o) = &out {
            map.insert("output.dir".into(), o.display().to_string());
        }
        let mut r = Reader {
            map: &map,
            used: BTreeSet::new(),
            errors,
        };

        // tasks
        let mut tasks = Vec::new();
        match r.raw("tasks") {
            None => r.errors.push("tasks: missing (use `tasks =` for an empty run)".into()),
            Some(v) => {
                for name in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    match Task::from_name(name) {
                        Some(t) if tasks.contains(&t) => r.errors.push(format!("tasks: `{name}` listed twice")),
                        Some(t) => tasks.push(t),
                        None => r.errors.push(format!("tasks: unknown task `{name}`")),
                    }
                }
            }
        }
        tasks.sort();
        let seed = r.parse::<u64>("seed", "an unsigned integer");

        // metric and grid
        let dimension = r.usize_or("grid.dimension", 0);
        let family = match r.raw("metric.family") {
            None => {
                r.errors.push("metric.family: missing".into());
                MetricFamily::Flat
            }
            Some(v) => MetricFamily::from_name(v).unwrap_or_else(|| {
                r.errors.push(format!(
                    "metric.family: unknown family `{v}` (flat, conformal-gaussian, conformal-rational, diagonal-rational)"
                ));
                MetricFamily::Flat
            }),
        };
        let needs_amplitude = family != MetricFamily::Flat;
        let rational = matches!(family, MetricFamily::ConformalRational | MetricFamily::DiagonalRational);
        let amplitude = match r.f64("metric.amplitude") {
            Some(a) => a,
            None if needs_amplitude && !r.map.contains_key("metric.amplitude") => {
                r.errors.push(format!("metric.amplitude: required for {}", family.name()));
                0.0
            }
            None => 0.0,
        };
        let decay = match r.f64("metric.decay") {
            Some(p) => p,
            None if rational && !r.map.contains_key("metric.decay") => {
                r.errors.push(format!("metric.decay: required for {}", family.name()));
                1.0
            }
            None => 0.0,
        };
        let axis_amplitudes = r.list("metric.axis_amplitudes");
        if axis_amplitudes.is_some() && family != MetricFamily::DiagonalRational {
            r.errors.push("metric.axis_amplitudes: only valid for diagonal-rational".into());
        }
        let metric = MetricSpec {
            family,
            amplitude,
            decay,
            dimension,
            axis_amplitudes,
        };
        if dimension == 0 {
            r.errors.push("grid.dimension: missing or zero".into());
        } else if let Err(e) = metric.validate() {
            r.errors.push(format!("metric: {e}"));
        }
        let grid = GridSpec::new(
            dimension,
            r.f64_or("grid.half_width", 0.0),
            r.usize_or("grid.points", 0),
        );
        if let Err(e) = grid.validate() {
            r.errors.push(format!("grid: {e}"));
        }
        let n = dimension.max(1);
        let lw = if grid.half_width > 0.0 { grid.half_width } else { 1.0 };

        let output_dir = r.raw("output.dir").map(PathBuf::from);
        let dump_operators = r.bool_or("output.dump_operators", false);

        // check-metric
        let k_decay = r.f64_or("check-metric.k_decay", n as f64 + 1.0);
        let radii = r.list("check-metric.radii").unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0]);
        let band_samples = r.usize_or("check-metric.band_samples", 2000);
        if dimension > 0 {
            match validate_decay_inputs(dimension, k_decay, &radii) {
                Err(Error::Hypothesis { condition, detail }) => {
                    r.errors.push(format!("check-metric.k_decay: hypothesis violated ({condition}): {detail}"))
                }
                Err(e) => r.errors.push(format!("check-metric: {e}")),
                Ok(()) => {}
            }
        }
        if band_samples == 0 {
            r.errors.push("check-metric.band_samples: must be positive".into());
        }
        let check_metric = CheckMetricParams {
            k_decay,
            radii,
            band_samples,
        };

        // spectrum
        let spectrum = SpectrumParams {
            grid: r.task_grid("spectrum", grid),
            count: r.usize_or("spectrum.count", 4),
            tol: r.f64_or("spectrum.tol", DEFAULT_EIG_TOL),
            seed: r.parse("spectrum.seed", "an unsigned integer").or(seed),
        };
        if spectrum.count == 0 {
            r.errors.push("spectrum.count: must be at least 1".into());
        }
        r.positive("spectrum.tol", spectrum.tol);

        // dos
        let dos = DosParams {
            grid: r.task_grid("dos", grid),
            interval: r.interval_or("dos.interval", (0.0, 4.0)),
            bins: r.usize_or("dos.bins", 40),
            probes: r.usize_or("dos.probes", DEFAULT_PROBES),
            moments: r.usize_or("dos.moments", DEFAULT_MOMENTS),
            tolerance: r.f64_or("dos.tolerance", 0.05),
            seed: r.parse("dos.seed", "an unsigned integer").or(seed),
        };
        if dos.interval.0 < 0.0 {
            r.errors.push("dos.interval: must lie in [0, inf)".into());
        }
        if dos.bins == 0 {
            r.errors.push("dos.bins: must be at least 1".into());
        }
        if dos.probes < 8 {
            r.errors.push(format!("dos.probes: need at least 8, got {}", dos.probes));
        }
        if dos.moments < 2 {
            r.errors.push(format!("dos.moments: need at least 2, got {}", dos.moments));
        }
        r.positive("dos.tolerance", dos.tolerance);

        // scatter
        let sgrid = r.task_grid("scatter", grid);
        let axis = |v: f64| {
            let mut x = vec![0.0; n];
            x[0] = v;
            x
        };
        let packet = WavePacketSpec {
            center: r.list("scatter.center").unwrap_or_else(|| axis(-0.25 * lw)),
            momentum: r.list("scatter.momentum").unwrap_or_else(|| axis(1.5)),
            width: r.f64_or("scatter.width", lw / 20.0),
            polarization: r.list("scatter.polarization").unwrap_or_else(|| axis(1.0)),
        };
        let times = r
            .list("scatter.times")
            .unwrap_or_else(|| (1..=6).map(|k| 10.0 * k as f64).collect());
        if times.len() < 3 || times[0] < 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            r.errors.push("scatter.times: need at least three non-negative, strictly increasing times".into());
        }
        let scatter = ScatterParams {
            grid: sgrid,
            packet,
            times,
            tol: r.f64_or("scatter.tol", DEFAULT_PROPAGATION_TOL),
            incoming: r.bool_or("scatter.incoming", true),
        };
        r.positive("scatter.tol", scatter.tol);
        if tasks.contains(&Task::Scatter) && sgrid.validate().is_ok() {
            // support margin and vector lengths, checked on the actual grid
            if let Ok(g) = build_grid(sgrid) {
                if let Err(e) = make_wave_packet(&scatter.packet, &g) {
                    r.errors.push(format!("scatter: {e}"));
                }
            }
        }

        // forms
        let forms = FormsParams {
            grid: r.task_grid("forms", grid),
            seed: r.parse("forms.seed", "an unsigned integer").or(seed),
        };

        // tracecheck
        let tgrid = r.task_grid("tracecheck", grid);
        let tracecheck = TracecheckParams {
            grid: tgrid,
            fine_points: r.usize_or("tracecheck.fine_points", tgrid.points_per_axis.saturating_sub(1) * 3 / 2 + 1),
            interval: r.interval_or("tracecheck.interval", (0.2, 1.0)),
            rank: r.usize_or("tracecheck.rank", 20),
            filter_tol: r.f64_or("tracecheck.filter_tol", 1e-4),
        };
        if tracecheck.fine_points <= tgrid.points_per_axis {
            r.errors.push("tracecheck.fine_points: must exceed the coarse point count".into());
        }
        if tracecheck.rank == 0 || tracecheck.rank > crate::analysis::MAX_COMMUTATOR_RANK {
            r.errors.push(format!(
                "tracecheck.rank: must be in 1..={}",
                crate::analysis::MAX_COMMUTATOR_RANK
            ));
        }
        r.positive("tracecheck.filter_tol", tracecheck.filter_tol);

        // seeds are mandatory for the stochastic tasks
        for (task, s) in [
            (Task::Spectrum, spectrum.seed),
            (Task::Dos, dos.seed),
            (Task::Forms, forms.seed),
        ] {
            if tasks.contains(&task) && s.is_none() {
                r.errors.push(format!("{}: stochastic task needs `seed` or `{}.seed`", task.name(), task.name()));
            }
        }

        let unknown: Vec<String> = map
            .keys()
            .filter(|k| !r.used.contains(k.as_str()))
            .map(|k| format!("{k}: unknown key"))
            .collect();
        let mut errors = r.errors;
        errors.extend(unknown);
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        Ok(RunConfig {
            metric,
            grid,
            tasks,
            seed,
            output_dir,
            dump_operators,
            check_metric,
            spectrum,
            dos,
            scatter,
            forms,
            tracecheck,
            entries: map,
        })
    }

    /// The same scenario with only `task` enabled; the hash follows.
    pub fn restricted_to(&self, task: Task) -> RunConfig {
        let mut c = self.clone();
        c.tasks = vec![task];
        c.entries.insert("tasks".into(), task.name().into());
        c
    }

    /// SHA-256 of the normalized entries, excluding the output location.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.entries {
            if k == "output.dir" {
                continue;
            }
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "metric.family = flat\ngrid.dimension = 1\ngrid.half_width = 10\ngrid.points = 65\ntasks =\n";

    #[test]
    fn minimal_config_parses() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert!(c.tasks.is_empty());
        assert_eq!(c.grid, GridSpec::new(1, 10.0, 65));
        assert_eq!(c.check_metric.k_decay, 2.0);
    }

    #[test]
    fn every_violation_is_listed() {
        let text = "metric.family = wobbly\ngrid.points = x\ntasks = dos, spectrum, bogus\nfoo.bar = 1\n";
        let Err(Error::Config(errs)) = RunConfig::parse(text) else {
            panic!("expected config error")
        };
        let joined = errs.join("\n");
        for needle in ["wobbly", "grid.points", "bogus", "foo.bar: unknown key", "dos: stochastic task needs"] {
            assert!(joined.contains(needle), "missing `{needle}` in:\n{joined}");
        }
    }

    #[test]
    fn k_decay_at_dimension_is_rejected_naming_hypothesis() {
        let text = format!("{MINIMAL}check-metric.k_decay = 1\n");
        let Err(Error::Config(errs)) = RunConfig::parse(&text) else {
            panic!("expected config error")
        };
        assert!(errs.iter().any(|e| e.contains("k > n")), "{errs:?}");
    }

    #[test]
    fn tasks_sorted_into_dependency_order() {
        let text = MINIMAL.replace("tasks =", "tasks = tracecheck, check-metric, report");
        let c = RunConfig::parse(&text).unwrap();
        assert_eq!(c.tasks, vec![Task::CheckMetric, Task::Tracecheck, Task::Report]);
    }

    #[test]
    fn seed_override_changes_hash_but_output_dir_does_not() {
        let a = RunConfig::parse_with_overrides(MINIMAL, Some(1), None).unwrap();
        let b = RunConfig::parse_with_overrides(MINIMAL, Some(2), None).unwrap();
        let c = RunConfig::parse_with_overrides(MINIMAL, Some(1), Some("/tmp/x".into())).unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn comments_and_whitespace_do_not_change_hash() {
        let a = RunConfig::parse(MINIMAL).unwrap();
        let b = RunConfig::parse(&format!("# header\n\n{}", MINIMAL.replace(" = ", "="))).unwrap();
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn packet_margin_checked_up_front() {
        let text = MINIMAL.replace("tasks =", "tasks = scatter") + "scatter.center = -9\nscatter.width = 2\n";
        let Err(Error::Config(errs)) = RunConfig::parse(&text) else {
            panic!("expected config error")
        };
        assert!(errs.iter().any(|e| e.contains("six-width")), "{errs:?}");
    }
}
