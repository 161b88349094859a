use std::path::Path;

use super::{cell, RunConfig, Status, Table, Task, Verdict};
use crate::analysis::{
    coefficient_decay_audit, commutator_stability, form_domain_equivalence, standard_test_family,
    COMMUTATOR_STABILITY_CAP, FORM_CONSTANT_CAP, L2_CONVERGENCE_FRACTION,
};
use crate::assembly::{AssembledOperators, WEITZENBOCK_IDENTITY_TOL};
use crate::error::Result;
use crate::grid::{build_grid, GridSpec};
use crate::metric::{check_decay_conditions, scan_bands, MetricSpec, SLOPE_FIT_TOLERANCE};
use crate::scattering::{
    make_wave_packet, scattering_diagnostics, ScatteringDiagnostics, ScatteringVerdict, WavePacketSpec,
    BOUNDARY_MASS_CAP, CAUCHY_DECAY_RATIO, ISOMETRY_DEFECT_CAP,
};
use crate::spectral::{
    density_of_states_with_moments, discrete_spectrum_verdict, extremal_eigs, flat_reference_gap, Which,
    GAP_TOLERANCE,
};

const BAND_SEED: u64 = 0xba4d;
/// Required decay of the top singular values, `s_r <= ratio * s_1`.
const SINGULAR_DECAY_RATIO: f64 = 0.1;

pub(super) struct TaskOutput {
    pub verdicts: Vec<Verdict>,
    pub tables: Vec<Table>,
}

impl TaskOutput {
    pub fn failed(task: Task, msg: &str) -> Self {
        TaskOutput {
            verdicts: vec![Verdict::new(task, "task execution", main_condition(task), Status::Fail).note(msg)],
            tables: Vec::new(),
        }
    }
}

fn main_condition(task: Task) -> &'static str {
    match task {
        Task::CheckMetric => "condition-1",
        Task::Spectrum => "no-discrete-spectrum",
        Task::Dos => "ac-spectrum",
        Task::Scatter => "wave-operators",
        Task::Forms => "condition-4",
        Task::Tracecheck => "condition-2",
        Task::Report => "report",
    }
}

pub(super) fn run_task(cfg: &RunConfig, task: Task, dump: Option<&Path>) -> TaskOutput {
    let r = match task {
        Task::CheckMetric => check_metric(cfg),
        Task::Spectrum => spectrum(cfg, dump),
        Task::Dos => dos(cfg),
        Task::Scatter => scatter(cfg, dump),
        Task::Forms => forms(cfg),
        Task::Tracecheck => tracecheck(cfg),
        Task::Report => Ok(TaskOutput {
            verdicts: Vec::new(),
            tables: Vec::new(),
        }),
    };
    r.unwrap_or_else(|e| TaskOutput::failed(task, &e.to_string()))
}

fn assemble(metric: &MetricSpec, grid: GridSpec, dump: Option<&Path>) -> Result<AssembledOperators> {
    let ops = AssembledOperators::assemble(metric, grid)?;
    if let Some(d) = dump {
        ops.dump_triplets(d)?;
    }
    Ok(ops)
}

fn check_metric(cfg: &RunConfig) -> Result<TaskOutput> {
    let t = Task::CheckMetric;
    let p = &cfg.check_metric;
    let mut verdicts = Vec::new();
    let mut profiles = Table::new("check-metric/decay_profiles.csv", &["quantity", "radius", "max_value"]);

    let reports = check_decay_conditions(&cfg.metric, p.k_decay, &p.radii)?;
    for r in &reports {
        let label = r.quantity.split_whitespace().next().unwrap_or("");
        let v = if label.starts_with("decay-") {
            let slope = r.fitted_slope.unwrap_or(f64::NEG_INFINITY);
            Verdict::new(t, &r.quantity, label, Status::from_bool(r.pass))
                .compare(slope, "<=", -p.k_decay + SLOPE_FIT_TOLERANCE)
                .number("k_decay", p.k_decay)
                .note(if r.fitted_slope.is_none() { "profile vanishes at the outer radius" } else { "" })
        } else {
            let peak = r.max_values.iter().copied().fold(0.0, f64::max);
            Verdict::new(t, &r.quantity, "decay-bounded", Status::from_bool(r.pass))
                .number("max_over_radii", peak)
                .note("boundedness only, no rate claimed")
        };
        verdicts.push(v);
        for (rad, m) in r.radii.iter().zip(&r.max_values) {
            profiles.push(vec![r.quantity.clone(), cell(*rad), cell(*m)]);
        }
    }

    let bands = scan_bands(&cfg.metric, cfg.grid.half_width, p.band_samples, BAND_SEED)?;
    let ok = bands.mass_block.0 > 0.0 && bands.mass_block.1.is_finite() && bands.upper_eig.0 > 0.0;
    verdicts.push(
        Verdict::new(t, "J bounded with bounded inverse", "condition-1", Status::from_bool(ok))
            .compare(bands.mass_block.0, ">", 0.0)
            .number("upper_eig_min", bands.upper_eig.0)
            .number("upper_eig_max", bands.upper_eig.1)
            .number("sqrt_det_min", bands.sqrt_det.0)
            .number("sqrt_det_max", bands.sqrt_det.1)
            .number("mass_block_min", bands.mass_block.0)
            .number("mass_block_max", bands.mass_block.1)
            .number("samples", bands.samples as f64),
    );

    let audit = coefficient_decay_audit(&cfg.metric, p.k_decay, &p.radii)?;
    let mut l2 = Table::new("check-metric/l2_delta.csv", &["quantity", "radius", "partial_integral"]);
    let worst = audit.l2.iter().map(|r| r.last_increment_fraction).fold(0.0, f64::max);
    let failing = audit.reports.iter().filter(|r| !r.pass).count();
    for (r, n) in audit.reports.iter().zip(&audit.l2) {
        for (rad, m) in r.radii.iter().zip(&r.max_values) {
            profiles.push(vec![r.quantity.clone(), cell(*rad), cell(*m)]);
        }
        for (rad, s) in n.radii.iter().zip(&n.partial) {
            l2.push(vec![r.quantity.clone(), cell(*rad), cell(*s)]);
        }
    }
    verdicts.push(
        Verdict::new(t, "perturbation coefficients in L^2_delta", "lemma-f", Status::from_bool(audit.pass()))
            .compare(worst, "<", L2_CONVERGENCE_FRACTION)
            .number("delta", audit.delta)
            .number("failing_decay_profiles", failing as f64),
    );
    Ok(TaskOutput {
        verdicts,
        tables: vec![profiles, l2],
    })
}

fn spectrum(cfg: &RunConfig, dump: Option<&Path>) -> Result<TaskOutput> {
    let t = Task::Spectrum;
    let p = &cfg.spectrum;
    let seed = p.seed.unwrap_or_default();
    let ops = assemble(&cfg.metric, p.grid, dump)?;
    let report = extremal_eigs(&ops, Which::Smallest, p.count, p.tol, seed)?;
    let gap = flat_reference_gap(p.grid, p.tol)?;
    let d = discrete_spectrum_verdict(&report, gap)?;
    let mut table = Table::new("spectrum/eigenvalues.csv", &["index", "value", "residual"]);
    for (i, (v, r)) in report.values.iter().zip(&report.residuals).enumerate() {
        table.push(vec![i.to_string(), cell(*v), cell(*r)]);
    }
    let verdicts = vec![
        Verdict::new(t, "lowest Ritz value against the flat Dirichlet gap", "no-discrete-spectrum", Status::from_bool(d.pass))
            .compare(d.relative_deviation, "<=", GAP_TOLERANCE)
            .number("lowest", d.lowest)
            .number("flat_reference_gap", d.flat_reference_gap)
            .number("values_below_minus_tol", d.negative_values.len() as f64)
            .number("tolerance", d.tolerance)
            .number("restarts", report.restarts as f64)
            .note(if d.converged { String::new() } else { "eigensolver did not converge".into() }),
        Verdict::new(
            t,
            "W = H0 + V on the assembled stencils",
            "weitzenbock",
            Status::from_bool(ops.weitzenbock_defect <= WEITZENBOCK_IDENTITY_TOL),
        )
        .compare(ops.weitzenbock_defect, "<=", WEITZENBOCK_IDENTITY_TOL)
        .number("perturbation_max_abs", ops.perturbation.max_abs()),
    ];
    Ok(TaskOutput {
        verdicts,
        tables: vec![table],
    })
}

fn dos(cfg: &RunConfig) -> Result<TaskOutput> {
    let p = &cfg.dos;
    let seed = p.seed.unwrap_or_default();
    let ops = AssembledOperators::assemble(&cfg.metric, p.grid)?;
    let flat = AssembledOperators::assemble(&MetricSpec::flat(p.grid.dimension), p.grid)?;
    let h = density_of_states_with_moments(&ops, p.interval, p.bins, p.probes, p.moments, seed)?;
    let f = density_of_states_with_moments(&flat, p.interval, p.bins, p.probes, p.moments, seed)?;
    let l1 = h.cumulative_l1(&f)?;
    let mut table = Table::new(
        "dos/dos_bins.csv",
        &["bin_lo", "bin_hi", "integrated_dos", "flat_integrated_dos", "cumulative_hi", "flat_cumulative_hi"],
    );
    for k in 0..h.bins.len() {
        table.push(vec![
            cell(h.edges[k]),
            cell(h.edges[k + 1]),
            cell(h.bins[k]),
            cell(f.bins[k]),
            cell(h.cumulative[k + 1]),
            cell(f.cumulative[k + 1]),
        ]);
    }
    let v = Verdict::new(Task::Dos, "integrated DOS against the flat pipeline", "ac-spectrum", Status::from_bool(l1 < p.tolerance))
        .compare(l1, "<", p.tolerance)
        .number("total", h.total())
        .number("flat_total", f.total())
        .number("probes", p.probes as f64)
        .number("moments", p.moments as f64);
    Ok(TaskOutput {
        verdicts: vec![v],
        tables: vec![table],
    })
}

fn scatter_verdict(check: &str, d: &ScatteringDiagnostics, hypotheses_hold: bool) -> Verdict {
    let status = match d.verdict {
        ScatteringVerdict::Pass if hypotheses_hold => Status::Pass,
        ScatteringVerdict::Fail => Status::Fail,
        _ => Status::Flagged,
    };
    let first = d.cauchy_norms[0];
    let last = *d.cauchy_norms.last().unwrap_or(&first);
    let ratio = if first > 0.0 { last / first } else { 0.0 };
    let defect = *d.isometry_defects.last().unwrap_or(&0.0);
    let max_boundary = d.boundary_mass.iter().copied().fold(0.0, f64::max);
    let max_cauchy = d.cauchy_norms.iter().copied().fold(0.0, f64::max);
    // report the clause that decided the verdict
    let (measured, threshold, clause) = if d.verdict == ScatteringVerdict::BoxLimited {
        (max_boundary, BOUNDARY_MASS_CAP, "boundary mass above the cap; enlarge the box")
    } else if max_cauchy <= d.tolerance {
        (max_cauchy, d.tolerance, "Cauchy norms at the propagation tolerance")
    } else if ratio <= CAUCHY_DECAY_RATIO && defect > ISOMETRY_DEFECT_CAP {
        (defect, ISOMETRY_DEFECT_CAP, "final isometry defect above the cap")
    } else {
        (ratio, CAUCHY_DECAY_RATIO, "")
    };
    let note = if hypotheses_hold || d.verdict == ScatteringVerdict::BoxLimited {
        clause
    } else {
        "metric fails the decay checker; diagnostics carry no guarantee"
    };
    Verdict::new(Task::Scatter, check, "wave-operators", status)
        .compare(measured, "<=", threshold)
        .number("first_cauchy", first)
        .number("last_cauchy", last)
        .number("final_isometry_defect", defect)
        .number("isometry_defect_cap", ISOMETRY_DEFECT_CAP)
        .number("max_boundary_mass", max_boundary)
        .number("boundary_mass_cap", BOUNDARY_MASS_CAP)
        .number("norm_band_lo", d.norm_band.0)
        .number("norm_band_hi", d.norm_band.1)
        .number("matvecs", d.matvecs as f64)
        .note(note)
}

fn scatter(cfg: &RunConfig, dump: Option<&Path>) -> Result<TaskOutput> {
    let p = &cfg.scatter;
    let hypotheses_hold = check_decay_conditions(&cfg.metric, cfg.check_metric.k_decay, &cfg.check_metric.radii)?
        .iter()
        .all(|r| r.pass);
    let ops = assemble(&cfg.metric, p.grid, dump)?;
    let mut runs: Vec<(&str, &str, WavePacketSpec)> = vec![("outgoing", "W+ Cauchy trend", p.packet.clone())];
    if p.incoming {
        // W-(T) psi = conj(W+(T) conj psi): flip both x0 and xi
        runs.push(("incoming", "W- Cauchy trend (mirrored packet)", p.packet.mirrored()));
    }
    let mut table = Table::new(
        "scatter/diagnostics.csv",
        &["direction", "time", "cauchy_norm", "isometry_defect", "boundary_mass"],
    );
    let mut verdicts = Vec::new();
    for (dir, check, wp) in runs {
        let psi = make_wave_packet(&wp, &ops.grid)?;
        let d = scattering_diagnostics(&ops, &psi, &p.times, p.tol)?;
        for (j, t) in d.times.iter().enumerate() {
            let c = if j == 0 { String::new() } else { cell(d.cauchy_norms[j - 1]) };
            table.push(vec![dir.into(), cell(*t), c, cell(d.isometry_defects[j]), cell(d.boundary_mass[j])]);
        }
        verdicts.push(scatter_verdict(check, &d, hypotheses_hold));
    }
    Ok(TaskOutput {
        verdicts,
        tables: vec![table],
    })
}

fn forms(cfg: &RunConfig) -> Result<TaskOutput> {
    let t = Task::Forms;
    let p = &cfg.forms;
    let grid = build_grid(p.grid)?;
    let family = standard_test_family(&grid, p.seed.unwrap_or_default())?;
    let eq = form_domain_equivalence(&cfg.metric, &grid, &family)?;
    let mut table = Table::new(
        "forms/forms.csv",
        &["form_id", "h0", "h1", "h1_gradient", "h1_curvature", "norm_sq"],
    );
    let mut worst_curv = 0.0f64;
    for f in &eq.forms {
        table.push(vec![
            f.form_id.clone(),
            cell(f.h0),
            cell(f.h1),
            cell(f.h1_gradient),
            cell(f.h1_curvature),
            cell(f.norm_sq),
        ]);
        if f.norm_sq > 0.0 {
            worst_curv = worst_curv.max(f.h1_curvature.abs() / f.norm_sq);
        }
    }
    let cr = eq.curvature_bound;
    let a = eq.forward.a.max(eq.reverse.a);
    let verdicts = vec![
        Verdict::new(t, "two-sided form bounds on the test family", "condition-4", Status::from_bool(eq.pass))
            .compare(a, "<=", FORM_CONSTANT_CAP)
            .number("forward_a", eq.forward.a)
            .number("reverse_a", eq.reverse.a)
            .number("b", cr)
            .number("forms", eq.forms.len() as f64),
        Verdict::new(
            t,
            "|curvature part| / ||w||^2 against C_R",
            "eq-curvature",
            Status::from_bool(worst_curv <= cr * (1.0 + 1e-12)),
        )
        .compare(worst_curv, "<=", cr),
    ];
    Ok(TaskOutput {
        verdicts,
        tables: vec![table],
    })
}

fn tracecheck(cfg: &RunConfig) -> Result<TaskOutput> {
    let t = Task::Tracecheck;
    let p = &cfg.tracecheck;
    let fine = GridSpec::new(p.grid.dimension, p.grid.half_width, p.fine_points);
    let (a, b) = commutator_stability(&cfg.metric, p.grid, fine, p.interval, p.rank, p.filter_tol)?;
    let mut table = Table::new(
        "tracecheck/singular_values.csv",
        &["points", "index", "commutator_sv", "partial_sum", "identification_defect_sv"],
    );
    for r in [&a, &b] {
        let pts = r.grid_points.last().copied().unwrap_or(0);
        for i in 0..r.singular_values.len().max(r.identification_defect_values.len()) {
            let get = |v: &[f64]| v.get(i).map_or_else(String::new, |x| cell(*x));
            table.push(vec![
                pts.to_string(),
                i.to_string(),
                get(&r.singular_values),
                get(&r.partial_sums),
                get(&r.identification_defect_values),
            ]);
        }
    }
    let negligible = a.partial_sum() <= p.filter_tol && b.partial_sum() <= p.filter_tol;
    let ratio = b.stability_ratio.unwrap_or(f64::INFINITY);
    let converged = a.converged && b.converged;
    let stable = if negligible {
        Status::Pass
    } else if ratio > COMMUTATOR_STABILITY_CAP {
        Status::Fail
    } else if converged {
        Status::Pass
    } else {
        Status::Flagged
    };
    let decay = |s: &[f64]| -> f64 {
        match (s.first(), s.last()) {
            (Some(&s1), Some(&sr)) if s1 > p.filter_tol => sr / s1,
            _ => 0.0,
        }
    };
    let sv_decay = decay(&b.singular_values);
    let id_decay = decay(&b.identification_defect_values);
    let verdicts = vec![
        Verdict::new(t, "filtered commutator partial-sum stability under refinement", "condition-2", stable)
            .compare(if negligible { 0.0 } else { ratio }, "<=", COMMUTATOR_STABILITY_CAP)
            .number("coarse_partial_sum", a.partial_sum())
            .number("fine_partial_sum", b.partial_sum())
            .number("coarse_points", p.grid.points_per_axis as f64)
            .number("fine_points", p.fine_points as f64)
            .number("filter_degree_h0", b.filter_degrees.0 as f64)
            .number("filter_degree_h1", b.filter_degrees.1 as f64)
            .note(if negligible {
                "commutator below the filter tolerance"
            } else if !converged {
                "singular value iteration did not converge"
            } else {
                ""
            }),
        Verdict::new(
            t,
            "filtered commutator singular values decay",
            "condition-2",
            Status::from_bool(sv_decay <= SINGULAR_DECAY_RATIO),
        )
        .compare(sv_decay, "<=", SINGULAR_DECAY_RATIO)
        .number("s_1", b.singular_values.first().copied().unwrap_or(0.0))
        .number("s_rank", b.singular_values.last().copied().unwrap_or(0.0))
        .number("rank", p.rank as f64),
        Verdict::new(
            t,
            "(J*J - I) E_I(H0) singular values decay",
            "condition-3",
            Status::from_bool(id_decay <= SINGULAR_DECAY_RATIO),
        )
        .compare(id_decay, "<=", SINGULAR_DECAY_RATIO)
        .number("s_1", b.identification_defect_values.first().copied().unwrap_or(0.0))
        .number("s_rank", b.identification_defect_values.last().copied().unwrap_or(0.0)),
    ];
    Ok(TaskOutput {
        verdicts,
        tables: vec![table],
    })
}
