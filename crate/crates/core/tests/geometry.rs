use proptest::prelude::*;
use rflow_core::catalog::{CubicSpline, IntervalFlow, RicciFlowCap, ScaledDisk};
use rflow_core::geometry::*;
use rflow_core::{Error, Matrix, Vector};
use std::f64::consts::PI;

fn v2(a: f64, b: f64) -> Vector<2> {
    Vector::<2>::new(a, b)
}

// the cap instance at t = 0 is the unit round sphere in the polar chart
fn sphere() -> RicciFlowCap {
    RicciFlowCap::new(1.2).unwrap()
}

#[test]
fn christoffel_of_constant_metrics_vanish() {
    let flat = FlatFlow::<2>::new();
    let g = christoffel(&flat, 0.3, &v2(0.2, -0.7)).unwrap();
    assert!(g.0.iter().all(|m| m.amax() == 0.0));
    let disk = ScaledDisk::new(1.0, CubicSpline::new(&[(0.0, 1.0), (1.0, 2.0)]).unwrap());
    let g = christoffel(&disk, 0.6, &v2(0.1, 0.4)).unwrap();
    assert!(g.0.iter().all(|m| m.amax() == 0.0));
}

#[test]
fn sphere_christoffel_symbols() {
    let th = 1.1;
    let g = christoffel(&sphere(), 0.0, &v2(th, 0.3)).unwrap();
    assert!((g.0[0][(1, 1)] + th.sin() * th.cos()).abs() < 1e-12);
    assert!((g.0[1][(0, 1)] - 1.0 / th.tan()).abs() < 1e-12);
    assert!((g.0[1][(1, 0)] - 1.0 / th.tan()).abs() < 1e-12);
    assert!(g.0[0][(0, 0)].abs() < 1e-15 && g.0[1][(0, 0)].abs() < 1e-15);
}

#[test]
fn singular_metric_is_reported() {
    struct Degenerate;
    impl MetricFlow<2> for Degenerate {
        fn metric(&self, _t: f64, _x: &Vector<2>) -> Matrix<2> {
            Matrix::<2>::new(1.0, 0.0, 0.0, 0.0)
        }
    }
    assert!(matches!(christoffel(&Degenerate, 0.0, &v2(0.0, 0.0)), Err(Error::SingularMetric { .. })));
}

#[test]
fn ricci_of_flat_and_round_metrics() {
    let flat = FlatFlow::<2>::new();
    assert!(ricci_generic(&flat, 0.0, &v2(0.3, 0.1)).unwrap().amax() < 1e-12);
    let x = v2(1.0, 0.2);
    let s2 = x[0].sin().powi(2);
    for t in [0.0, 0.2] {
        // constant multiples of the round metric share its Ricci tensor
        let ric = ricci_generic(&sphere(), t, &x).unwrap();
        assert!((ric - Matrix::<2>::new(1.0, 0.0, 0.0, s2)).amax() < 1e-5, "t = {t}: {ric}");
    }
}

#[test]
fn r_z_reference_values() {
    let flat = FlatFlow::<2>::new();
    assert_eq!(r_z(&flat, 0.0, &v2(0.1, 0.1), &v2(1.0, 0.0)).unwrap(), 0.0);
    for a in [-0.7, 0.5] {
        let f = IntervalFlow::unit(a);
        let t = 0.4;
        let unit = Vector::<1>::new(1.0 / f.scale(t));
        assert!((r_z(&f, t, &Vector::<1>::new(0.5), &unit).unwrap() + a).abs() < 1e-12);
    }
    // Ricci flow: R^Z = 2 Ric
    let x = v2(1.3, -0.4);
    let unit = v2(0.0, 1.0 / x[0].sin());
    assert!((r_z(&sphere(), 0.0, &x, &unit).unwrap() - 2.0).abs() < 1e-6);
}

#[test]
fn second_fundamental_form_of_model_boundaries() {
    let half = FlatFlow::<2>::with_boundary(HalfPlaneBoundary { axis: 1 });
    assert!(second_fundamental_form(&half, 0.0, &v2(0.4, 0.0), &v2(1.0, 0.0), &v2(1.0, 0.0)).unwrap().abs() < 1e-8);
    let disk = FlatFlow::<2>::with_boundary(DiskBoundary { radius: 1.0 });
    let ext = FlatFlow::<2>::with_boundary(ExteriorDiskBoundary { radius: 1.0 });
    let x = v2(0.6, 0.8);
    let tan = v2(-0.8, 0.6);
    assert!((second_fundamental_form(&disk, 0.0, &x, &tan, &tan).unwrap() - 1.0).abs() < 1e-6);
    assert!((second_fundamental_form(&ext, 0.0, &x, &tan, &tan).unwrap() + 1.0).abs() < 1e-6);
    assert!(matches!(
        second_fundamental_form(&disk, 0.0, &v2(0.5, 0.0), &tan, &tan),
        Err(Error::NotOnBoundary { .. })
    ));
    assert!(matches!(second_fundamental_form(&disk, 0.0, &x, &x, &tan), Err(Error::NotTangential { .. })));
}

#[test]
fn boundary_frame_is_unit_inward_and_projects() {
    let cap = sphere();
    let x = RicciFlowCap::from_embedding(&nalgebra::Vector3::new(cap.r_cap.cos(), cap.r_cap.sin(), 0.0));
    let f = BoundaryFrame::at(&cap, 0.1, &x).unwrap();
    let g = cap.metric(0.1, &x);
    assert!(((f.normal.transpose() * g * f.normal)[(0, 0)] - 1.0).abs() < 1e-12);
    assert!(cap.boundary().unwrap().gradient(&x).dot(&f.normal) > 0.0);
    assert!((f.projector * f.projector - f.projector).amax() < 1e-10);
    assert!((f.projector * f.normal).amax() < 1e-12);
}

#[test]
fn distances_on_model_flows() {
    let x = v2(0.2, -0.3);
    let (rho, pts) = geodesic_distance(&sphere(), 0.0, &x, &x).unwrap();
    assert_eq!(rho, 0.0);
    assert!(pts.iter().all(|p| *p == x));
    let disk = ScaledDisk::new(1.0, CubicSpline::new(&[(0.0, 1.0), (1.0, 1.5)]).unwrap());
    let (a, b) = (v2(-0.4, 0.1), v2(0.5, 0.3));
    let (rho, _) = geodesic_distance(&disk, 0.5, &a, &b).unwrap();
    assert!((rho - disk.scale(0.5) * (b - a).norm()).abs() < 1e-8);
    // a quarter of a great circle, equivalent to pole-to-equator
    let (rho, pts) = geodesic_distance(&sphere(), 0.0, &v2(0.5 * PI, -0.25 * PI), &v2(0.5 * PI, 0.25 * PI)).unwrap();
    assert!((rho - 0.5 * PI).abs() < 1e-7, "{rho}");
    assert!((polyline_length(&sphere(), 0.0, &pts) - rho).abs() < 1e-3);
}

#[test]
fn holonomy_around_a_latitude() {
    let th0 = PI / 3.0;
    let n = 4000;
    let curve: Vec<Vector<2>> = (0..=n).map(|k| v2(th0, -PI + 2.0 * PI * k as f64 / n as f64)).collect();
    // angle 2π(1 − cos θ₀) = π reverses every tangent vector
    let v = v2(1.0, 0.5);
    let w = parallel_transport(&sphere(), 0.0, &curve, &v).unwrap();
    assert!((w + v).amax() < 1e-6, "{w}");
    assert_eq!(parallel_transport(&sphere(), 0.0, &curve, &Vector::<2>::zeros()).unwrap(), Vector::<2>::zeros());
    let flat = FlatFlow::<2>::new();
    assert_eq!(parallel_transport(&flat, 0.0, &curve, &v).unwrap(), v);
}

#[test]
fn mirror_map_reference_cases() {
    let flat = FlatFlow::<2>::new();
    let (x, y) = (v2(0.0, 0.0), v2(0.3, 0.4));
    let dir = v2(0.6, 0.8);
    assert!((mirror_map(&flat, 0.0, &x, &y, &dir).unwrap() + dir).amax() < 1e-14);
    let perp = v2(-0.8, 0.6);
    assert!((mirror_map(&flat, 0.0, &x, &y, &perp).unwrap() - perp).amax() < 1e-14);
    assert_eq!(mirror_map(&sphere(), 0.0, &x, &x, &perp).unwrap(), perp);
}

#[test]
fn index_form_reference_cases() {
    let flat = FlatFlow::<2>::new();
    assert!(index_z(&flat, 0.0, &v2(0.0, 0.0), &v2(0.5, 0.2)).unwrap().abs() < 1e-10);
    let line = FlatFlow::<1>::new();
    assert_eq!(index_z(&line, 0.0, &Vector::<1>::new(0.0), &Vector::<1>::new(0.7)).unwrap(), 0.0);
    // independent oracle: J(s) = cos s + tan(ρ/2) sin s, I = ∫ J'² − J² ds
    let rho = 0.5 * PI;
    let k = (0.5 * rho).tan();
    let n = 20_000;
    let h = rho / n as f64;
    let quad: f64 = (0..n)
        .map(|i| {
            let s = (i as f64 + 0.5) * h;
            let j = s.cos() + k * s.sin();
            let dj = -s.sin() + k * s.cos();
            (dj * dj - j * j) * h
        })
        .sum();
    let value = index_z(&sphere(), 0.0, &v2(0.5 * PI, -0.25 * PI), &v2(0.5 * PI, 0.25 * PI)).unwrap();
    assert!((value - quad).abs() < 1e-5, "{value} vs {quad}");
    assert!((quad + 2.0).abs() < 1e-8);
}

#[test]
fn conformal_change_reference_cases() {
    let flat = FlatFlow::<2>::with_boundary(HalfPlaneBoundary { axis: 1 });
    let x = v2(0.3, 0.7);
    let same = conformal_flow(FlatFlow::<2>::new(), ConstantField(1.0), &[(0.0, x)]).unwrap();
    assert_eq!(same.metric(0.0, &x), Matrix::<2>::identity());
    let phi = |_t: f64, x: &Vector<2>| 1.0 + x[1] * x[1];
    let conf = conformal_flow(flat, phi, &[(0.0, x)]).unwrap();
    let p = phi(0.0, &x);
    assert!((conf.metric(0.0, &x) - Matrix::<2>::identity() / (p * p)).amax() < 1e-15);
    assert!(conf.drift(0.0, &x).amax() < 1e-15);
    let f = |y: &Vector<2>| y[0] * y[0];
    let lhs = apply_generator(&conf, 0.0, &x, &f).unwrap();
    let base = apply_generator(&FlatFlow::<2>::new(), 0.0, &x, &f).unwrap();
    assert!((lhs - p * p * base).abs() < 1e-5, "{lhs} vs {}", p * p * base);
    let low = |_t: f64, _x: &Vector<2>| 0.9;
    assert!(matches!(conformal_flow(FlatFlow::<2>::new(), low, &[(0.0, x)]), Err(Error::PhiBelowOne { .. })));
}

#[test]
fn conformal_drift_in_one_dimension() {
    // d = 1: Z̃ = φ²Z − ½∇φ²
    let base = IntervalFlow::new(0.4, 0.3, 1.0);
    let phi = |_t: f64, x: &Vector<1>| 1.0 + x[0] * x[0];
    let x = Vector::<1>::new(0.6);
    let t = 0.2;
    let conf = conformal_flow(base.clone(), phi, &[(t, x)]).unwrap();
    let p = phi(t, &x);
    let grad_sq = 2.0 * p * 2.0 * x[0] / (2.0 * 0.4 * t).exp();
    let want = p * p * 0.3 - 0.5 * grad_sq;
    assert!((conf.drift(t, &x)[0] - want).abs() < 1e-8);
    // generator identity with nonzero drift
    let f = |y: &Vector<1>| (2.0 * y[0]).sin();
    let lhs = apply_generator(&conf, t, &x, &f).unwrap();
    let rhs = p * p * apply_generator(&base, t, &x, &f).unwrap();
    assert!((lhs - rhs).abs() < 1e-5, "{lhs} vs {rhs}");
}

fn cap_point() -> impl Strategy<Value = Vector<2>> {
    // inside the radius-1.2 cap about (π/2, 0)
    (0.0..1.1f64, 0.0..2.0 * PI).prop_map(|(r, ang)| {
        let c = nalgebra::Vector3::new(1.0, 0.0, 0.0);
        let e1 = nalgebra::Vector3::new(0.0, 1.0, 0.0);
        let e2 = nalgebra::Vector3::new(0.0, 0.0, 1.0);
        let p = c * r.cos() + (e1 * ang.cos() + e2 * ang.sin()) * r.sin();
        RicciFlowCap::from_embedding(&p)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cap_metric_is_positive_definite_and_christoffel_symmetric(x in cap_point(), t in 0.0..0.45f64) {
        let cap = sphere();
        let g = cap.metric(t, &x);
        prop_assert!(g.cholesky().is_some());
        let gm = christoffel(&cap, t, &x).unwrap();
        for k in 0..2 {
            prop_assert!((gm.0[k] - gm.0[k].transpose()).amax() < 1e-14);
        }
        let h = 1e-5;
        let fd = (cap.metric(t + h, &x) - cap.metric(t - h, &x)) / (2.0 * h);
        prop_assert!((fd - cap.metric_dt(t, &x)).amax() < 1e-8);
    }

    #[test]
    fn r_z_is_homogeneous_on_the_ricci_flow(x in cap_point(), t in 0.0..0.45f64, v0 in -1.0..1.0f64, v1 in -1.0..1.0f64) {
        let cap = sphere();
        let v = v2(v0, v1);
        prop_assume!(v.norm() > 1e-3);
        let n2 = (v.transpose() * cap.metric(t, &x) * v)[(0, 0)];
        let ratio = r_z(&cap, t, &x, &v).unwrap() / n2;
        prop_assert!((ratio - 2.0 / (1.0 - 2.0 * t)).abs() < 1e-6);
    }

    #[test]
    fn triangle_inequality(x in cap_point(), y in cap_point(), z in cap_point()) {
        let cap = sphere();
        let d = |a: &Vector<2>, b: &Vector<2>| geodesic_distance(&cap, 0.0, a, b).unwrap().0;
        let (xy, yz, xz) = (d(&x, &y), d(&y, &z), d(&x, &z));
        prop_assert!(xz <= xy + yz + 1e-6);
        prop_assert!((xy - d(&y, &x)).abs() <= 1e-8);
        let closed = cap.link_closed_form(0.0, &x, &y).unwrap().rho;
        prop_assert!((xy - closed).abs() < 1e-6);
    }

    #[test]
    fn transport_preserves_norm(pts in prop::collection::vec(cap_point(), 2..5), v0 in -1.0..1.0f64, v1 in -1.0..1.0f64) {
        let cap = sphere();
        // refine the chart polyline so each segment is short
        let mut curve = Vec::new();
        for w in pts.windows(2) {
            for k in 0..200 {
                curve.push(w[0] + (w[1] - w[0]) * (k as f64 / 200.0));
            }
        }
        curve.push(*pts.last().unwrap());
        let v = v2(v0, v1);
        let out = parallel_transport(&cap, 0.0, &curve, &v).unwrap();
        let nin = (v.transpose() * cap.metric(0.0, &curve[0]) * v)[(0, 0)].sqrt();
        let nout = (out.transpose() * cap.metric(0.0, curve.last().unwrap()) * out)[(0, 0)].sqrt();
        prop_assert!((nin - nout).abs() <= 1e-6 * nin.max(1e-12));
    }

    #[test]
    fn mirror_is_an_isometric_involution(x in cap_point(), y in cap_point(), v0 in -1.0..1.0f64, v1 in -1.0..1.0f64) {
        let cap = sphere();
        prop_assume!(cap.link_closed_form(0.0, &x, &y).unwrap().rho > 1e-6);
        let v = v2(v0, v1);
        let w = mirror_map(&cap, 0.0, &x, &y, &v).unwrap();
        let back = mirror_map(&cap, 0.0, &y, &x, &w).unwrap();
        let nv = (v.transpose() * cap.metric(0.0, &x) * v)[(0, 0)].sqrt();
        let nw = (w.transpose() * cap.metric(0.0, &y) * w)[(0, 0)].sqrt();
        prop_assert!((nv - nw).abs() < 1e-6);
        prop_assert!((back - v).amax() < 1e-6);
    }
}
