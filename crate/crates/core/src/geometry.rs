//! Levi-Civita connection, curvature, and the pointwise coefficients of the
//! difference between the curved and flat 1-form Laplacians.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{input, Result};
use crate::grid::{Grid, OneFormGrid, RankTwoField};
use crate::metric::{eval_metric, metric_derivatives, scan_points, MetricDerivatives, MetricPointData, MetricSpec};
use crate::tensor::{Tensor3, Tensor4};

/// Connection and curvature at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometryPointData {
    /// `christoffel[(a, i, j)] = Gamma^a_ij`
    pub christoffel: Tensor3,
    /// `riemann[(r, s, m, v)] = R^r_smv`
    pub riemann: Tensor4,
    /// `ricci_mixed[(i, k)] = R^i_k`
    pub ricci_mixed: DMatrix<f64>,
    /// `ricci_upper[(i, b)] = R^ib = g^ab R^i_a`
    pub ricci_upper: DMatrix<f64>,
}

/// `Gamma^a_ij = 1/2 g^ab (d_i g_bj + d_j g_bi - d_b g_ij)`.
pub fn christoffel_from(point: &MetricPointData, derivs: &MetricDerivatives) -> Tensor3 {
    let n = point.g_upper.nrows();
    let dg = &derivs.first;
    let mut gamma = Tensor3::zeros(n);
    for a in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for b in 0..n {
                    let gab = point.g_upper[(a, b)];
                    if gab != 0.0 {
                        s += gab * (dg[(b, j, i)] + dg[(b, i, j)] - dg[(i, j, b)]);
                    }
                }
                gamma[(a, i, j)] = 0.5 * s;
                gamma[(a, j, i)] = 0.5 * s;
            }
        }
    }
    gamma
}

/// `d_k Gamma^a_ij` stored as `[(k, a, i, j)]`, from analytic second
/// derivatives of the metric.
pub fn christoffel_derivatives_from(point: &MetricPointData, derivs: &MetricDerivatives) -> Tensor4 {
    let n = point.g_upper.nrows();
    let dg = &derivs.first;
    let ddg = derivs
        .second
        .as_ref()
        .expect("christoffel derivatives need order-2 metric derivatives");
    let dginv = crate::metric::inverse_metric_derivatives(point, derivs);
    let mut out = Tensor4::zeros(n);
    for k in 0..n {
        for a in 0..n {
            for i in 0..n {
                for j in i..n {
                    let mut s = 0.0;
                    for b in 0..n {
                        let lower = dg[(b, j, i)] + dg[(b, i, j)] - dg[(i, j, b)];
                        let dlower = ddg[(b, j, i, k)] + ddg[(b, i, j, k)] - ddg[(i, j, b, k)];
                        s += dginv[(a, b, k)] * lower + point.g_upper[(a, b)] * dlower;
                    }
                    out[(k, a, i, j)] = 0.5 * s;
                    out[(k, a, j, i)] = 0.5 * s;
                }
            }
        }
    }
    out
}

pub fn christoffel(spec: &MetricSpec, x: &[f64]) -> Result<Tensor3> {
    let pt = eval_metric(spec, x)?;
    let d = metric_derivatives(spec, x, 1)?;
    Ok(christoffel_from(&pt, &d))
}

/// Riemann tensor `R^r_smv = d_m Gamma^r_vs - d_v Gamma^r_ms
/// + Gamma^r_ml Gamma^l_vs - Gamma^r_vl Gamma^l_ms`.
fn riemann_from(gamma: &Tensor3, dgamma: &Tensor4) -> Tensor4 {
    let n = gamma.dim();
    let mut r = Tensor4::zeros(n);
    for rho in 0..n {
        for s in 0..n {
            for m in 0..n {
                for v in 0..n {
                    let mut val = dgamma[(m, rho, v, s)] - dgamma[(v, rho, m, s)];
                    for l in 0..n {
                        val += gamma[(rho, m, l)] * gamma[(l, v, s)] - gamma[(rho, v, l)] * gamma[(l, m, s)];
                    }
                    r[(rho, s, m, v)] = val;
                }
            }
        }
    }
    r
}

fn geometry_from(point: &MetricPointData, derivs: &MetricDerivatives) -> (GeometryPointData, Tensor4) {
    let n = point.g_upper.nrows();
    let gamma = christoffel_from(point, derivs);
    let dgamma = christoffel_derivatives_from(point, derivs);
    let riemann = riemann_from(&gamma, &dgamma);
    // R_sv = R^r_srv
    let mut ricci = DMatrix::zeros(n, n);
    for s in 0..n {
        for v in 0..n {
            ricci[(s, v)] = (0..n).map(|r| riemann[(r, s, r, v)]).sum::<f64>();
        }
    }
    let ricci_mixed = &point.g_upper * &ricci;
    // R^ib = g^ab R^i_a
    let ricci_upper = &ricci_mixed * &point.g_upper;
    (
        GeometryPointData {
            christoffel: gamma,
            riemann,
            ricci_mixed,
            ricci_upper,
        },
        dgamma,
    )
}

/// Christoffel symbols, Riemann and Ricci tensors at `x`.
pub fn curvature(spec: &MetricSpec, x: &[f64]) -> Result<GeometryPointData> {
    let pt = eval_metric(spec, x)?;
    let d = metric_derivatives(spec, x, 2)?;
    Ok(geometry_from(&pt, &d).0)
}

/// Every coefficient of the expansion of `(H1 - H0) omega` at one point:
///
/// `((H1-H0) w)_k = (delta^ij - g^ij) d_i d_j w_k + g^ij G^a_jk d_i w_a + g^ij G^a_ij d_a w_k
///   + g^ij G^a_ik d_j w_a + g^ij d_i G^a_jk w_a - g^ij G^a_ij G^b_ak w_b
///   - g^ij G^a_ik G^b_ja w_b + R^i_k w_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationCoefficients {
    /// `delta^ij - g^ij`
    pub second_order: DMatrix<f64>,
    /// `[(k, a, i)] = g^ij Gamma^a_jk`, multiplies `d_i w_a`.
    pub first_contracted_jk: Tensor3,
    /// `[a] = g^ij Gamma^a_ij`, multiplies `d_a w_k`.
    pub first_trace: DVector<f64>,
    /// `[(k, a, j)] = g^ij Gamma^a_ik`, multiplies `d_j w_a`.
    pub first_contracted_ik: Tensor3,
    /// `[(k, a)] = g^ij d_i Gamma^a_jk`
    pub zeroth_dgamma: DMatrix<f64>,
    /// `[(k, b)] = g^ij Gamma^a_ij Gamma^b_ak`
    pub zeroth_trace_gamma: DMatrix<f64>,
    /// `[(k, b)] = g^ij Gamma^a_ik Gamma^b_ja`
    pub zeroth_gamma_gamma: DMatrix<f64>,
    /// `[(k, i)] = R^i_k`
    pub ricci: DMatrix<f64>,
}

impl PerturbationCoefficients {
    /// Names of the eight coefficient groups, in expansion order.
    pub const GROUP_NAMES: [&'static str; 8] = [
        "second-order (delta^ij - g^ij)",
        "g^ij Gamma^a_jk",
        "g^ij Gamma^a_ij",
        "g^ij Gamma^a_ik",
        "g^ij dGamma^a_jk/dx_i",
        "g^ij Gamma^a_ij Gamma^b_ak",
        "g^ij Gamma^a_ik Gamma^b_ja",
        "R^i_k",
    ];

    /// Pointwise max-abs of each group, ordered as `GROUP_NAMES`.
    pub fn group_maxima(&self) -> [f64; 8] {
        [
            self.second_order.amax(),
            self.first_contracted_jk.max_abs(),
            self.first_trace.amax(),
            self.first_contracted_ik.max_abs(),
            self.zeroth_dgamma.amax(),
            self.zeroth_trace_gamma.amax(),
            self.zeroth_gamma_gamma.amax(),
            self.ricci.amax(),
        ]
    }

    /// Total coefficient of `w_b` in output `k` (the three zeroth-order
    /// groups with their signs, plus Ricci).
    pub fn zeroth_total(&self, k: usize, b: usize) -> f64 {
        self.zeroth_dgamma[(k, b)] - self.zeroth_trace_gamma[(k, b)] - self.zeroth_gamma_gamma[(k, b)]
            + self.ricci[(k, b)]
    }
}

/// All pointwise data needed by the assemblies at one point.
#[derive(Clone, Debug)]
pub struct PointGeometry {
    pub metric: MetricPointData,
    pub geometry: GeometryPointData,
    /// `[(k, a, i, j)] = d_k Gamma^a_ij`
    pub dgamma: Tensor4,
}

pub fn point_geometry(spec: &MetricSpec, x: &[f64]) -> Result<PointGeometry> {
    let metric = eval_metric(spec, x)?;
    let d = metric_derivatives(spec, x, 2)?;
    let (geometry, dgamma) = geometry_from(&metric, &d);
    Ok(PointGeometry {
        metric,
        geometry,
        dgamma,
    })
}

pub fn perturbation_coefficients_from(pg: &PointGeometry) -> PerturbationCoefficients {
    let gu = &pg.metric.g_upper;
    let n = gu.nrows();
    let gam = &pg.geometry.christoffel;
    let dgam = &pg.dgamma;

    let second_order = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - gu[(i, j)]);

    let mut first_jk = Tensor3::zeros(n);
    let mut first_ik = Tensor3::zeros(n);
    for k in 0..n {
        for a in 0..n {
            for d in 0..n {
                // g^dj Gamma^a_jk, derivative index d
                first_jk[(k, a, d)] = (0..n).map(|j| gu[(d, j)] * gam[(a, j, k)]).sum();
                // g^id Gamma^a_ik, derivative index d
                first_ik[(k, a, d)] = (0..n).map(|i| gu[(i, d)] * gam[(a, i, k)]).sum();
            }
        }
    }
    let trace_gamma: DVector<f64> = DVector::from_fn(n, |a, _| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += gu[(i, j)] * gam[(a, i, j)];
            }
        }
        s
    });

    let mut z_dgamma = DMatrix::zeros(n, n);
    let mut z_trace = DMatrix::zeros(n, n);
    let mut z_gg = DMatrix::zeros(n, n);
    for k in 0..n {
        for b in 0..n {
            let mut s1 = 0.0;
            let mut s3 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let g = gu[(i, j)];
                    if g == 0.0 {
                        continue;
                    }
                    s1 += g * dgam[(i, b, j, k)];
                    for a in 0..n {
                        s3 += g * gam[(a, i, k)] * gam[(b, j, a)];
                    }
                }
            }
            z_dgamma[(k, b)] = s1;
            z_gg[(k, b)] = s3;
            z_trace[(k, b)] = (0..n).map(|a| trace_gamma[a] * gam[(b, a, k)]).sum();
        }
    }
    let ricci = pg.geometry.ricci_mixed.transpose();

    PerturbationCoefficients {
        second_order,
        first_contracted_jk: first_jk,
        first_trace: trace_gamma,
        first_contracted_ik: first_ik,
        zeroth_dgamma: z_dgamma,
        zeroth_trace_gamma: z_trace,
        zeroth_gamma_gamma: z_gg,
        ricci,
    }
}

pub fn perturbation_coefficients(spec: &MetricSpec, x: &[f64]) -> Result<PerturbationCoefficients> {
    Ok(perturbation_coefficients_from(&point_geometry(spec, x)?))
}

/// Coefficients of the strong-form operator `(Delta_g w)_k` on the 2-jet
/// of `w`, obtained by evaluating the nested covariant-derivative form
/// `-g^ij (nabla_i nabla_j w)_k + R^i_k w_i` on unit jets.
#[derive(Clone, Debug)]
pub struct WeitzenbockJet {
    /// `[(k, a, i, j)]`, `i <= j`: coefficient of `d_i d_j w_a` (mixed
    /// derivatives counted once).
    pub second: Tensor4,
    /// `[(k, a, m)]`: coefficient of `d_m w_a`.
    pub first: Tensor3,
    /// `[(k, a)]`: coefficient of `w_a`.
    pub zeroth: DMatrix<f64>,
}

struct Jet {
    w: Vec<f64>,
    /// `dw[a*n + m] = d_m w_a`
    dw: Vec<f64>,
    /// `ddw[(a*n + i)*n + j] = d_i d_j w_a`
    ddw: Vec<f64>,
}

fn weitzenbock_on_jet(pg: &PointGeometry, jet: &Jet) -> Vec<f64> {
    let n = pg.metric.g_upper.nrows();
    let gam = &pg.geometry.christoffel;
    let dgam = &pg.dgamma;
    let gu = &pg.metric.g_upper;
    // nab[j*n + k] = nabla_j w_k
    let mut nab = vec![0.0; n * n];
    for j in 0..n {
        for k in 0..n {
            let mut v = jet.dw[k * n + j];
            for a in 0..n {
                v -= gam[(a, j, k)] * jet.w[a];
            }
            nab[j * n + k] = v;
        }
    }
    let mut out = vec![0.0; n];
    for k in 0..n {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let g = gu[(i, j)];
                if g == 0.0 {
                    continue;
                }
                // d_i (nabla_j w_k)
                let mut d_nab = jet.ddw[(k * n + i) * n + j];
                for a in 0..n {
                    d_nab -= dgam[(i, a, j, k)] * jet.w[a] + gam[(a, j, k)] * jet.dw[a * n + i];
                }
                // (nabla_i nabla_j w)_k
                let mut nn = d_nab;
                for m in 0..n {
                    nn -= gam[(m, i, j)] * nab[m * n + k] + gam[(m, i, k)] * nab[j * n + m];
                }
                acc -= g * nn;
            }
        }
        for i in 0..n {
            acc += pg.geometry.ricci_mixed[(i, k)] * jet.w[i];
        }
        out[k] = acc;
    }
    out
}

pub fn weitzenbock_jet_from(pg: &PointGeometry) -> WeitzenbockJet {
    let n = pg.metric.g_upper.nrows();
    let blank = || Jet {
        w: vec![0.0; n],
        dw: vec![0.0; n * n],
        ddw: vec![0.0; n * n * n],
    };
    let mut second = Tensor4::zeros(n);
    let mut first = Tensor3::zeros(n);
    let mut zeroth = DMatrix::zeros(n, n);
    for a in 0..n {
        let mut jet = blank();
        jet.w[a] = 1.0;
        let out = weitzenbock_on_jet(pg, &jet);
        for k in 0..n {
            zeroth[(k, a)] = out[k];
        }
        for m in 0..n {
            let mut jet = blank();
            jet.dw[a * n + m] = 1.0;
            let out = weitzenbock_on_jet(pg, &jet);
            for k in 0..n {
                first[(k, a, m)] = out[k];
            }
        }
        for i in 0..n {
            for j in i..n {
                let mut jet = blank();
                jet.ddw[(a * n + i) * n + j] = 1.0;
                jet.ddw[(a * n + j) * n + i] = 1.0;
                let out = weitzenbock_on_jet(pg, &jet);
                for k in 0..n {
                    second[(k, a, i, j)] = out[k];
                }
            }
        }
    }
    WeitzenbockJet { second, first, zeroth }
}

/// Covariant derivative `nabla_i w_k = d_i w_k - Gamma^a_ik w_a` on the
/// interior points of the grid (central differences).
pub fn covariant_derivative(spec: &MetricSpec, grid: &Grid, w: &OneFormGrid) -> Result<RankTwoField> {
    let n = grid.dim();
    if spec.dimension != n {
        return input(format!("metric dimension {} vs grid dimension {n}", spec.dimension));
    }
    if w.components() != n {
        return input("form has the wrong number of components");
    }
    if grid.points_per_axis() < 3 {
        return input("grid too small for a central-difference stencil");
    }
    let h = grid.spacing();
    let mut out = RankTwoField::zeros(grid);
    for p in grid.interior_points() {
        let x = grid.coords(p);
        let gamma = christoffel(spec, &x)?;
        for i in 0..n {
            let fwd = grid.neighbor(p, i, 1).expect("interior");
            let bwd = grid.neighbor(p, i, -1).expect("interior");
            for k in 0..n {
                let mut v = (w.get(k, fwd) - w.get(k, bwd)) / (2.0 * h);
                for a in 0..n {
                    v -= gamma[(a, i, k)] * w.get(a, p);
                }
                out.set(p, i, k, v);
            }
        }
    }
    Ok(out)
}

/// Largest spectral radius of `sqrt(g) R^ib` over the scan points: the
/// constant `C_R` of the bound `|int <R w, w>_g sqrt(g) dx| <= C_R ||w||_e^2`.
pub fn scan_curvature_bound(spec: &MetricSpec, radius: f64, count: usize, seed: u64) -> Result<f64> {
    let n = spec.dimension;
    let mut best = 0.0f64;
    for x in scan_points(n, radius, count, seed) {
        let pg = point_geometry(spec, &x)?;
        best = best.max(curvature_weight_radius(&pg));
    }
    Ok(best)
}

/// Symmetrized `sqrt(g) R^ib`.
pub fn curvature_weight(pg: &PointGeometry) -> DMatrix<f64> {
    let r = &pg.geometry.ricci_upper;
    (r + r.transpose()) * (0.5 * pg.metric.sqrt_det)
}

pub(crate) fn curvature_weight_radius(pg: &PointGeometry) -> f64 {
    let w = curvature_weight(pg);
    if w.amax() == 0.0 {
        return 0.0;
    }
    SymmetricEigen::new(w).eigenvalues.amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::MetricSpec;

    #[test]
    fn flat_geometry_vanishes() {
        let spec = MetricSpec::flat(3);
        let x = [0.3, -1.0, 2.0];
        let g = curvature(&spec, &x).unwrap();
        assert_eq!(g.christoffel.max_abs(), 0.0);
        assert_eq!(g.riemann.max_abs(), 0.0);
        assert_eq!(g.ricci_mixed.amax(), 0.0);
        let pc = perturbation_coefficients(&spec, &x).unwrap();
        assert!(pc.group_maxima().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn christoffel_symmetric_in_lower_indices() {
        let spec = MetricSpec::diagonal_rational(3, 0.8, 2.0);
        for x in scan_points(3, 3.0, 300, 11) {
            let g = christoffel(&spec, &x).unwrap();
            for a in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        assert_eq!(g[(a, i, j)], g[(a, j, i)]);
                    }
                }
            }
        }
    }

    #[test]
    fn ricci_upper_symmetric() {
        for spec in [
            MetricSpec::conformal_gaussian(3, 0.4),
            MetricSpec::diagonal_rational(3, 0.8, 2.0),
        ] {
            for x in scan_points(3, 3.0, 300, 12) {
                let g = curvature(&spec, &x).unwrap();
                let d = (&g.ricci_upper - g.ricci_upper.transpose()).amax();
                assert!(d <= 1e-10, "{d}");
            }
        }
    }

    #[test]
    fn one_dimensional_metrics_are_flat_intrinsically() {
        let spec = MetricSpec::conformal_gaussian(1, 0.5);
        let g = curvature(&spec, &[0.7]).unwrap();
        assert_eq!(g.riemann.max_abs(), 0.0);
        assert!(g.christoffel.max_abs() > 0.0);
    }

    #[test]
    fn second_order_group_is_delta_minus_upper() {
        let spec = MetricSpec::conformal_rational(2, 0.5, 3.0);
        let x = [1.0, -0.5];
        let pc = perturbation_coefficients(&spec, &x).unwrap();
        let pt = eval_metric(&spec, &x).unwrap();
        assert_eq!(pc.second_order, DMatrix::identity(2, 2) - pt.g_upper);
    }

    #[test]
    fn jet_expansion_matches_expanded_groups() {
        // The nested covariant form and the expanded eight-group form are
        // the same operator.
        let spec = MetricSpec::diagonal_rational(2, 0.6, 2.0);
        for x in scan_points(2, 2.0, 50, 5) {
            let pg = point_geometry(&spec, &x).unwrap();
            let jet = weitzenbock_jet_from(&pg);
            let pc = perturbation_coefficients_from(&pg);
            for k in 0..2 {
                for a in 0..2 {
                    let z = pc.zeroth_total(k, a);
                    assert!((jet.zeroth[(k, a)] - z).abs() < 1e-12);
                    for m in 0..2 {
                        let mut f = pc.first_contracted_jk[(k, a, m)] + pc.first_contracted_ik[(k, a, m)];
                        if a == k {
                            f += pc.first_trace[m];
                        }
                        assert!((jet.first[(k, a, m)] - f).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
