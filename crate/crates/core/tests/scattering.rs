//! Wave packets and propagators against free-particle kinematics.

use hodge_scatter::assembly::AssembledOperators;
use hodge_scatter::grid::GridSpec;
use hodge_scatter::metric::MetricSpec;
use hodge_scatter::scattering::{
    euclidean_norm, g_norm, make_wave_packet, propagate, scattering_diagnostics, Evolution, ScatteringVerdict,
    WavePacketSpec,
};
use num_complex::Complex64;

fn packet(center: f64, momentum: f64, width: f64) -> WavePacketSpec {
    WavePacketSpec {
        center: vec![center],
        momentum: vec![momentum],
        width,
        polarization: vec![1.0],
    }
}

fn centroid(ops: &AssembledOperators, psi: &[Complex64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (q, p) in ops.grid.interior_points().enumerate() {
        let w = psi[q].norm_sqr();
        num += ops.grid.coords(p)[0] * w;
        den += w;
    }
    num / den
}

#[test]
fn free_packet_moves_at_group_velocity() {
    let ops = AssembledOperators::assemble(&MetricSpec::flat(1), GridSpec::new(1, 100.0, 2001)).unwrap();
    let xi = 1.0;
    let psi = make_wave_packet(&packet(-40.0, xi, 5.0), &ops.grid).unwrap();
    let x0 = centroid(&ops, &psi);
    let t = 10.0;
    let out = propagate(&ops, Evolution::H0, &psi, t, 1e-10).unwrap();
    let moved = centroid(&ops, &out.state) - x0;
    let expected = 2.0 * xi * t;
    assert!((moved - expected).abs() < 0.02 * expected, "moved {moved}");
}

#[test]
fn propagation_preserves_the_right_norm() {
    let spec = MetricSpec::conformal_gaussian(1, 0.2);
    let ops = AssembledOperators::assemble(&spec, GridSpec::new(1, 60.0, 1025)).unwrap();
    let psi = make_wave_packet(&packet(-20.0, 1.0, 3.0), &ops.grid).unwrap();
    let free = propagate(&ops, Evolution::H0, &psi, 7.5, 1e-10).unwrap();
    assert!((euclidean_norm(&ops.grid, &free.state) - 1.0).abs() <= 1e-7);
    let n0 = g_norm(&ops, &psi);
    let curved = propagate(&ops, Evolution::H1, &psi, 7.5, 1e-10).unwrap();
    assert!((g_norm(&ops, &curved.state) - n0).abs() <= 1e-7 * n0);
}

#[test]
fn zero_time_is_the_identity() {
    let ops = AssembledOperators::assemble(&MetricSpec::flat(1), GridSpec::new(1, 30.0, 257)).unwrap();
    let psi = make_wave_packet(&packet(0.0, 0.5, 2.0), &ops.grid).unwrap();
    let out = propagate(&ops, Evolution::H1, &psi, 0.0, 1e-10).unwrap();
    assert_eq!(out.state, psi);
}

#[test]
fn zero_momentum_packet_is_real_gaussian() {
    let ops = AssembledOperators::assemble(&MetricSpec::flat(1), GridSpec::new(1, 30.0, 257)).unwrap();
    let psi = make_wave_packet(&packet(1.0, 0.0, 2.0), &ops.grid).unwrap();
    assert!(psi.iter().all(|v| v.im == 0.0 && v.re >= 0.0));
    assert!((euclidean_norm(&ops.grid, &psi) - 1.0).abs() < 1e-14);
}

#[test]
fn flat_evolution_commutes_with_grid_translation() {
    let ops = AssembledOperators::assemble(&MetricSpec::flat(1), GridSpec::new(1, 40.0, 801)).unwrap();
    let h = ops.grid.spacing();
    let shift = 20;
    let a = make_wave_packet(&packet(-5.0, 1.2, 2.0), &ops.grid).unwrap();
    let b = make_wave_packet(&packet(-5.0 + shift as f64 * h, 1.2, 2.0), &ops.grid).unwrap();
    let ea = propagate(&ops, Evolution::H0, &a, 3.0, 1e-12).unwrap().state;
    let eb = propagate(&ops, Evolution::H0, &b, 3.0, 1e-12).unwrap().state;
    // the shifted packet differs by the phase exp(i xi shift h), so moduli are compared
    let mut worst = 0.0f64;
    for q in 200..ea.len() - 200 {
        worst = worst.max((ea[q].norm() - eb[q + shift].norm()).abs());
    }
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn packet_rejects_support_too_close_to_the_boundary() {
    let ops = AssembledOperators::assemble(&MetricSpec::flat(1), GridSpec::new(1, 10.0, 101)).unwrap();
    assert!(make_wave_packet(&packet(-6.0, 1.0, 1.0), &ops.grid).is_err());
    assert!(make_wave_packet(&packet(0.0, 1.0, 0.0), &ops.grid).is_err());
}

#[test]
fn rational_metric_cauchy_norms_decrease() {
    let spec = MetricSpec::conformal_rational(1, 0.5, 2.0);
    let ops = AssembledOperators::assemble(&spec, GridSpec::new(1, 200.0, 4096)).unwrap();
    let psi = make_wave_packet(&packet(-50.0, 1.5, 10.0), &ops.grid).unwrap();
    let d = scattering_diagnostics(&ops, &psi, &[0.0, 10.0, 30.0, 40.0], 1e-3).unwrap();
    let c = &d.cauchy_norms;
    assert!(c.last().unwrap() < c.first().unwrap(), "{c:?}");
}

#[test]
fn wave_operator_norm_stays_in_metric_band() {
    let spec = MetricSpec::conformal_gaussian(1, 0.1);
    let ops = AssembledOperators::assemble(&spec, GridSpec::new(1, 100.0, 2048)).unwrap();
    let psi = make_wave_packet(&packet(-30.0, 1.5, 5.0), &ops.grid).unwrap();
    let d = scattering_diagnostics(&ops, &psi, &[5.0, 10.0, 15.0, 20.0], 1e-3).unwrap();
    let (lo, hi) = d.norm_band;
    for defect in &d.isometry_defects {
        // ||W psi||_g = ||J phi||_g with ||phi|| = 1
        assert!(*defect <= (hi - 1.0).max(1.0 - lo) + 1e-9);
    }
    assert_eq!(d.verdict, ScatteringVerdict::Pass);
}
