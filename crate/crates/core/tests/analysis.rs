//! Weighted norms, coefficient audits, form bounds and commutator checks.

use hodge_scatter::analysis::{
    coefficient_decay_audit, commutator_singular_values, curvature_constant, evaluate_quadratic_forms,
    form_domain_equivalence, l2_delta_norm, standard_test_family,
};
use hodge_scatter::assembly::AssembledOperators;
use hodge_scatter::grid::{build_grid, GridSpec, OneFormGrid};
use hodge_scatter::metric::{dyadic_radii, MetricSpec};
use hodge_scatter::Error;
use statrs::function::gamma::gamma;

#[test]
fn l2_delta_matches_beta_integral() {
    // int_R (1+r^2)^(-2+3/4) dr = sqrt(pi) Gamma(3/4) / Gamma(5/4)
    let exact = std::f64::consts::PI.sqrt() * gamma(0.75) / gamma(1.25);
    assert!((exact - 2.3963).abs() < 1e-4);
    let radii = dyadic_radii(1.0, 11);
    let r = l2_delta_norm(|r| 1.0 / (1.0 + r * r), 0.75, 1, &radii).unwrap();
    assert!(r.converged);
    assert!((r.value - exact).abs() < 1e-4 * exact, "{} vs {exact}", r.value);
    assert!(r.partial.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn l2_delta_reports_divergence() {
    let radii = dyadic_radii(1.0, 11);
    let r = l2_delta_norm(|r| (1.0 + r * r).powf(-0.5), 0.75, 1, &radii).unwrap();
    assert!(!r.converged);
    assert!(r.last_increment_fraction > 0.05);
}

#[test]
fn l2_delta_requires_delta_above_half_dimension() {
    let e = l2_delta_norm(|_| 1.0, 1.0, 2, &[1.0, 2.0]).unwrap_err();
    assert!(matches!(e, Error::Hypothesis { .. }));
}

#[test]
fn decay_audit_separates_slow_and_fast_metrics() {
    let radii = dyadic_radii(2.0, 6);
    assert!(coefficient_decay_audit(&MetricSpec::flat(2), 3.0, &radii).unwrap().pass());
    assert!(coefficient_decay_audit(&MetricSpec::conformal_gaussian(2, 0.1), 3.0, &radii).unwrap().pass());
    let slow = coefficient_decay_audit(&MetricSpec::conformal_rational(2, 0.5, 2.0), 3.0, &radii).unwrap();
    assert!(!slow.pass());
    assert!(slow.reports.iter().any(|r| !r.pass));
    assert_eq!(slow.reports.len(), 9);
}

#[test]
fn decay_audit_rejects_k_not_above_n() {
    assert!(coefficient_decay_audit(&MetricSpec::flat(2), 2.0, &dyadic_radii(2.0, 6)).is_err());
}

#[test]
fn flat_forms_coincide_and_curvature_vanishes() {
    let spec = MetricSpec::flat(2);
    let grid = build_grid(GridSpec::new(2, 6.0, 33)).unwrap();
    assert_eq!(curvature_constant(&spec, &grid).unwrap(), 0.0);
    for t in standard_test_family(&grid, 3).unwrap() {
        let f = evaluate_quadratic_forms(&spec, &grid, &t.form, &t.id).unwrap();
        assert!((f.h1 - f.h0).abs() <= 1e-12 * f.h0.max(1.0), "{}", t.id);
        assert_eq!(f.h1_curvature, 0.0);
    }
}

#[test]
fn gaussian_forms_respect_curvature_bound() {
    let spec = MetricSpec::conformal_gaussian(2, 0.2);
    let grid = build_grid(GridSpec::new(2, 6.0, 33)).unwrap();
    let family = standard_test_family(&grid, 3).unwrap();
    let eq = form_domain_equivalence(&spec, &grid, &family).unwrap();
    assert!(eq.pass);
    assert_eq!(eq.forward.b, eq.curvature_bound);
    assert!(eq.forward.a.is_finite() && eq.reverse.a.is_finite());
    for f in &eq.forms {
        assert!(f.h1 >= -eq.curvature_bound * f.norm_sq);
        assert!(f.h1 <= eq.forward.a * f.h0 + eq.forward.b * f.norm_sq + 1e-12);
        assert!(f.h0 <= eq.reverse.a * f.h1 + eq.reverse.b * f.norm_sq + 1e-12);
    }
}

#[test]
fn forms_reject_boundary_supported_fields() {
    let spec = MetricSpec::flat(1);
    let grid = build_grid(GridSpec::new(1, 5.0, 41)).unwrap();
    let w = OneFormGrid::from_fn(&grid, |_| vec![1.0]).unwrap();
    assert!(evaluate_quadratic_forms(&spec, &grid, &w, "constant").is_err());
}

#[test]
fn flat_commutator_vanishes() {
    let ops = AssembledOperators::assemble(&MetricSpec::flat(1), GridSpec::new(1, 30.0, 256)).unwrap();
    let r = commutator_singular_values(&ops, (0.2, 1.0), 8, 1e-4).unwrap();
    assert!(r.singular_values[0] <= 1e-4, "{:?}", r.singular_values);
    assert!(r.identification_defect_values[0] <= 1e-12);
}

#[test]
fn gaussian_commutator_singular_values_decay() {
    let spec = MetricSpec::conformal_gaussian(1, 0.1);
    let ops = AssembledOperators::assemble(&spec, GridSpec::new(1, 60.0, 512)).unwrap();
    let r = commutator_singular_values(&ops, (0.2, 1.0), 20, 1e-4).unwrap();
    let s = &r.singular_values;
    assert_eq!(s.len(), 20);
    assert!(s.windows(2).all(|w| w[1] <= w[0]));
    assert!(s[19] <= 0.1 * s[0], "s_20 / s_1 = {}", s[19] / s[0]);
    assert!((r.partial_sum() - s.iter().sum::<f64>()).abs() < 1e-12 * r.partial_sum());
}

#[test]
fn commutator_rejects_bad_rank() {
    let ops = AssembledOperators::assemble(&MetricSpec::flat(1), GridSpec::new(1, 10.0, 64)).unwrap();
    assert!(commutator_singular_values(&ops, (0.2, 1.0), 0, 1e-4).is_err());
}
