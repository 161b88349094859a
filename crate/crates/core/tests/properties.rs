use std::collections::BTreeMap;

use hodge_scatter::cli::{BundleProvenance, Status, Task, Verdict, VerdictBundle, SCHEMA, SCHEMA_VERSION};
use hodge_scatter::geometry::christoffel;
use hodge_scatter::grid::{build_grid, GridSpec};
use hodge_scatter::metric::{eval_metric, log_log_slope, scan_bands, MetricSpec};
use hodge_scatter::analysis::l2_delta_norm;
use hodge_scatter::scattering::{euclidean_norm, make_wave_packet, WavePacketSpec};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn metric_strategy() -> impl Strategy<Value = MetricSpec> {
    (1usize..=3, 0.0f64..0.5, 2.0f64..5.0, 0usize..4).prop_map(|(n, a, p, fam)| match fam {
        0 => MetricSpec::flat(n),
        1 => MetricSpec::conformal_gaussian(n, a),
        2 => MetricSpec::conformal_rational(n, a, p),
        _ => MetricSpec::diagonal_rational(n, a, p),
    })
}

fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-6.0f64..6.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn christoffel_symmetric_in_lower_indices((spec, x) in metric_strategy().prop_flat_map(|s| { let n = s.dimension; (Just(s), point(n)) })) {
        let g = christoffel(&spec, &x).unwrap();
        let n = spec.dimension;
        for a in 0..n {
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(g[(a, i, j)], g[(a, j, i)]);
                }
            }
        }
    }

    #[test]
    fn inverse_metric_is_an_inverse((spec, x) in metric_strategy().prop_flat_map(|s| { let n = s.dimension; (Just(s), point(n)) })) {
        let m = eval_metric(&spec, &x).unwrap();
        let n = spec.dimension;
        let prod = &m.g_lower * &m.g_upper;
        prop_assert!((prod - DMatrix::<f64>::identity(n, n)).amax() < 1e-12);
        prop_assert!((m.sqrt_det - m.g_lower.determinant().sqrt()).abs() < 1e-12 * m.sqrt_det);
    }

    #[test]
    fn conformal_metric_stays_inside_scanned_band(
        n in 1usize..=3,
        a in 0.0f64..0.5,
        gaussian in any::<bool>(),
        x in point(3),
    ) {
        let spec = if gaussian { MetricSpec::conformal_gaussian(n, a) } else { MetricSpec::conformal_rational(n, a, 3.0) };
        // conformal factors are radial and extremal at the origin, which the scan includes
        let bands = scan_bands(&spec, 12.0, 200, 1).unwrap();
        let m = eval_metric(&spec, &x[..n]).unwrap();
        let e = SymmetricEigen::new(m.g_upper.clone()).eigenvalues;
        prop_assert!(e.min() >= bands.upper_eig.0 * (1.0 - 1e-12));
        prop_assert!(e.max() <= bands.upper_eig.1 * (1.0 + 1e-12));
        prop_assert!(m.sqrt_det >= bands.sqrt_det.0 * (1.0 - 1e-12));
        prop_assert!(m.sqrt_det <= bands.sqrt_det.1 * (1.0 + 1e-12));
    }

    #[test]
    fn wave_packet_has_unit_norm(
        c in -5.0f64..5.0,
        xi in -2.0f64..2.0,
        width in 0.5f64..2.0,
        pol in proptest::collection::vec(-1.0f64..1.0, 2),
    ) {
        prop_assume!(pol.iter().any(|v| v.abs() > 1e-3));
        let grid = build_grid(GridSpec::new(2, 20.0, 81)).unwrap();
        let wp = WavePacketSpec { center: vec![c, -c], momentum: vec![xi, 0.5 * xi], width, polarization: pol };
        let psi = make_wave_packet(&wp, &grid).unwrap();
        prop_assert!((euclidean_norm(&grid, &psi) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn l2_partials_increase_with_radius(s in 0.6f64..3.0, delta in 0.55f64..1.5) {
        let radii: Vec<f64> = (0..8).map(|k| 2f64.powi(k)).collect();
        let r = l2_delta_norm(|r| (1.0 + r * r).powf(-s), delta, 1, &radii).unwrap();
        prop_assert!(r.partial.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(r.value > 0.0);
    }

    #[test]
    fn slope_fit_recovers_power_law(c in 0.01f64..100.0, s in -6.0f64..-0.5) {
        let radii: Vec<f64> = (0..6).map(|k| 2f64.powi(k)).collect();
        let values: Vec<f64> = radii.iter().map(|r| c * r.powf(s)).collect();
        prop_assert!((log_log_slope(&radii, &values).unwrap() - s).abs() < 1e-10);
    }

    #[test]
    fn verdict_bundle_round_trips(
        measured in proptest::option::of(-1e6f64..1e6),
        threshold in proptest::option::of(0.0f64..1.0),
        status in 0usize..3,
        note in "[a-z ]{0,20}",
        seed in proptest::option::of(any::<u64>()),
    ) {
        let mut numbers = BTreeMap::new();
        numbers.insert("x".to_string(), measured);
        let verdict = Verdict {
            task: Task::Scatter,
            check: "c".into(),
            condition: "wave-operators".into(),
            status: [Status::Pass, Status::Fail, Status::Flagged][status],
            measured,
            comparison: "<=".into(),
            threshold,
            numbers,
            note,
        };
        let bundle = VerdictBundle {
            schema: SCHEMA.into(),
            schema_version: SCHEMA_VERSION,
            provenance: BundleProvenance {
                config_sha256: "00".into(),
                seed,
                toolkit_version: "0".into(),
                metric: MetricSpec::conformal_gaussian(1, 0.1),
                grid: GridSpec::new(1, 10.0, 33),
            },
            tasks: vec![Task::Scatter],
            verdicts: vec![verdict],
        };
        let back = VerdictBundle::from_json(&bundle.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, bundle);
    }
}
