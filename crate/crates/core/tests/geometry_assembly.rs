//! Metric, geometry and assembly examples checked against finite-difference
//! and closed-form oracles.

use hodge_scatter::assembly::{apply_j_and_adjoint, jstar_j_minus_identity, AssembledOperators, JDirection};
use hodge_scatter::analysis::curvature_constant;
use hodge_scatter::geometry::{christoffel, covariant_derivative, curvature, perturbation_coefficients};
use hodge_scatter::grid::{build_grid, GridSpec, OneFormGrid};
use hodge_scatter::metric::{
    check_decay_conditions, dyadic_radii, eval_metric, log_log_slope, metric_derivatives, sample_directions,
    scan_bands, MetricSpec,
};
use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fd_first(spec: &MetricSpec, x: &[f64], i: usize, l: usize, j: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[j] += h;
    xm[j] -= h;
    (eval_metric(spec, &xp).unwrap().g_lower[(i, l)] - eval_metric(spec, &xm).unwrap().g_lower[(i, l)]) / (2.0 * h)
}

#[test]
fn first_derivatives_match_central_differences() {
    let spec = MetricSpec::conformal_gaussian(2, 0.1);
    let x = [1.0, 0.0];
    let d = metric_derivatives(&spec, &x, 1).unwrap();
    for i in 0..2 {
        for l in 0..2 {
            for j in 0..2 {
                let fd = fd_first(&spec, &x, i, l, j, 1e-5);
                assert!((d.first[(i, l, j)] - fd).abs() < 1e-6, "({i},{l},{j})");
            }
        }
    }
}

#[test]
fn second_derivatives_match_second_differences() {
    for spec in [MetricSpec::conformal_rational(2, 0.5, 2.0), MetricSpec::diagonal_rational(2, 0.8, 3.0)] {
        let x = [0.7, -0.4];
        let d = metric_derivatives(&spec, &x, 2).unwrap();
        let second = d.second.unwrap();
        let h = 1e-3;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let mut xp = x.to_vec();
                    let mut xm = x.to_vec();
                    xp[k] += h;
                    xm[k] -= h;
                    let fd = (fd_first(&spec, &xp, i, i, j, h) - fd_first(&spec, &xm, i, i, j, h)) / (2.0 * h);
                    assert!((second[(i, i, j, k)] - fd).abs() < 1e-4, "{:?} ({i},{j},{k})", spec.family);
                }
            }
        }
    }
}

#[test]
fn gaussian_ricci_negligible_in_far_field() {
    let spec = MetricSpec::conformal_gaussian(2, 0.1);
    for d in sample_directions(2) {
        let x: Vec<f64> = d.iter().map(|v| v * 8.0).collect();
        let r = curvature(&spec, &x).unwrap();
        assert!(r.ricci_mixed.amax() < 1e-10);
    }
}

#[test]
fn decay_checker_examples() {
    let radii = dyadic_radii(2.0, 6);
    let all_pass = |spec: &MetricSpec, k: f64| check_decay_conditions(spec, k, &radii).unwrap().iter().all(|r| r.pass);
    assert!(all_pass(&MetricSpec::flat(2), 3.0));
    assert!(all_pass(&MetricSpec::conformal_gaussian(2, 0.1), 3.0));
    assert!(all_pass(&MetricSpec::conformal_rational(2, 0.5, 4.0), 3.0));
    let rep = check_decay_conditions(&MetricSpec::conformal_rational(2, 0.5, 2.0), 3.0, &radii).unwrap();
    assert!(!rep[0].pass);
    let slope = rep[0].fitted_slope.unwrap();
    assert!((slope + 2.0).abs() < 0.1, "slope {slope}");
}

#[test]
fn rational_p4_groups_decay_at_least_cubically() {
    let spec = MetricSpec::conformal_rational(2, 0.5, 4.0);
    let radii = dyadic_radii(4.0, 5);
    let mut profiles = vec![Vec::new(); 8];
    for &r in &radii {
        let mut m = [0.0f64; 8];
        for d in sample_directions(2) {
            let x: Vec<f64> = d.iter().map(|v| v * r).collect();
            for (a, b) in m.iter_mut().zip(perturbation_coefficients(&spec, &x).unwrap().group_maxima()) {
                *a = a.max(b);
            }
        }
        for (p, v) in profiles.iter_mut().zip(m) {
            p.push(v);
        }
    }
    for (g, p) in profiles.iter().enumerate() {
        if p.iter().all(|&v| v == 0.0) {
            continue;
        }
        // non-increasing over dyadic radii
        assert!(p.windows(2).all(|w| w[1] <= w[0]), "group {g} not monotone: {p:?}");
        let s = log_log_slope(&radii, p).unwrap();
        assert!(s <= -3.0, "group {g} slope {s}");
    }
}

#[test]
fn covariant_derivative_of_linear_field_is_exact() {
    let spec = MetricSpec::flat(2);
    let grid = build_grid(GridSpec::new(2, 2.0, 9)).unwrap();
    let w = OneFormGrid::from_fn(&grid, |x| vec![x[0], x[0]]).unwrap();
    let d = covariant_derivative(&spec, &grid, &w).unwrap();
    // samples are Dirichlet-truncated, so skip the layer next to the boundary
    for p in grid.interior_points().filter(|&p| grid.coords(p).iter().all(|v| v.abs() < 1.25)) {
        for i in 0..2 {
            for k in 0..2 {
                let expected = if i == 0 { 1.0 } else { 0.0 };
                assert!((d.get(p, i, k) - expected).abs() < 1e-14, "p {p} i {i} k {k} got {}", d.get(p, i, k));
            }
        }
    }
    let zero = covariant_derivative(&MetricSpec::conformal_gaussian(2, 0.1), &grid, &OneFormGrid::zeros(&grid)).unwrap();
    for p in grid.interior_points() {
        assert_eq!(zero.get(p, 1, 0), 0.0);
    }
}

#[test]
fn covariant_derivative_converges_at_second_order() {
    let spec = MetricSpec::conformal_gaussian(2, 0.1);
    let bump = |x: &[f64]| (-(x[0] * x[0] + x[1] * x[1])).exp();
    let form = |x: &[f64]| vec![bump(x), 0.5 * x[0] * bump(x)];
    let partial = |x: &[f64], i: usize, k: usize| -> f64 {
        let b = bump(x);
        let db = -2.0 * x[i] * b;
        match k {
            0 => db,
            _ => 0.5 * (if i == 0 { b } else { 0.0 } + x[0] * db),
        }
    };
    let error = |points: usize| -> f64 {
        let grid = build_grid(GridSpec::new(2, 4.0, points)).unwrap();
        let w = OneFormGrid::from_fn(&grid, form).unwrap();
        let d = covariant_derivative(&spec, &grid, &w).unwrap();
        let mut err = 0.0f64;
        for p in grid.interior_points() {
            let x = grid.coords(p);
            if x.iter().any(|v| v.abs() > 2.0) {
                continue;
            }
            let g = christoffel(&spec, &x).unwrap();
            let wx = form(&x);
            for i in 0..2 {
                for k in 0..2 {
                    let exact = partial(&x, i, k) - (0..2).map(|a| g[(a, i, k)] * wx[a]).sum::<f64>();
                    err = err.max((d.get(p, i, k) - exact).abs());
                }
            }
        }
        err
    };
    let ratio = error(33) / error(65);
    assert!(ratio > 3.5, "refinement ratio {ratio}");
}

#[test]
fn jstar_j_minus_identity_at_origin() {
    let n = 2;
    let spec = MetricSpec::conformal_gaussian(n, 0.1);
    let grid = build_grid(GridSpec::new(n, 2.0, 9)).unwrap();
    let blocks = jstar_j_minus_identity(&spec, &grid).unwrap();
    let centre = grid.linear_index(&[4, 4]);
    let q = grid.interior_rank(centre).unwrap();
    // g = e^{0.2} I at the origin: sqrt(g) = e^{0.2 n/2}, g^-1 = e^{-0.2}
    let expected = (0.2 * n as f64 / 2.0).exp() * (-0.2f64).exp() - 1.0;
    let b = blocks.block(q);
    assert!((b[(0, 0)] - expected).abs() < 1e-14);
    assert!((b[(1, 1)] - expected).abs() < 1e-14);
    assert_eq!(b[(0, 1)], 0.0);
}

#[test]
fn adjoint_identity_holds() {
    let spec = MetricSpec::diagonal_rational(2, 0.6, 2.0);
    let gs = GridSpec::new(2, 3.0, 13);
    let ops = AssembledOperators::assemble(&spec, gs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let hn = ops.grid.cell_volume();
    for _ in 0..5 {
        let w: Vec<f64> = (0..ops.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let phi: Vec<f64> = (0..ops.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let jw = apply_j_and_adjoint(&spec, &ops.grid, JDirection::Forward, &w).unwrap();
        let lhs: f64 = jw.iter().zip(ops.mass.apply(&phi)).map(|(a, b)| a * b).sum();
        let js = apply_j_and_adjoint(&spec, &ops.grid, JDirection::Adjoint, &phi).unwrap();
        let rhs: f64 = w.iter().zip(&js).map(|(a, b)| a * b * hn).sum();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()));
    }
}

#[test]
fn stiffness_bounded_below_by_curvature_constant() {
    let spec = MetricSpec::conformal_gaussian(2, 0.1);
    let ops = AssembledOperators::assemble(&spec, GridSpec::new(2, 4.0, 17)).unwrap();
    let cr = curvature_constant(&spec, &ops.grid).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let w: Vec<f64> = (0..ops.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s: f64 = w.iter().zip(ops.stiffness.mul_vec(&w)).map(|(a, b)| a * b).sum();
        let m: f64 = w.iter().zip(ops.mass.apply(&w)).map(|(a, b)| a * b).sum();
        assert!(s >= -cr * m);
    }
}

#[test]
fn mass_blocks_inside_scanned_band() {
    let spec = MetricSpec::conformal_gaussian(2, 0.1);
    let ops = AssembledOperators::assemble(&spec, GridSpec::new(2, 3.0, 13)).unwrap();
    let bands = scan_bands(&spec, 3.0 * 2f64.sqrt(), 4000, 9).unwrap();
    let (lo, hi) = bands.product_band();
    let hn = ops.grid.cell_volume();
    for b in ops.mass.blocks() {
        let e = SymmetricEigen::new(b / hn).eigenvalues;
        assert!(e.min() >= lo * (1.0 - 1e-12) && e.max() <= hi * (1.0 + 1e-12));
    }
}
