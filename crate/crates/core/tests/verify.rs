use proptest::prelude::*;
use rflow_core::catalog::{CubicSpline, IntervalFlow, RicciFlowCap, ScaledDisk};
use rflow_core::derivative::{Observable, Smooth};
use rflow_core::diffusion::{terminal_states, Stepper};
use rflow_core::geometry::{r_z, FlatFlow, HalfPlaneBoundary};
use rflow_core::oracle::Grid1D;
use rflow_core::stats::Estimate;
use rflow_core::verify::*;
use rflow_core::Vector;
use std::f64::consts::PI;

const RZ_LADDER: [f64; 3] = [0.002, 0.001, 0.0005];
const II_LADDER: [f64; 4] = [0.01, 0.0025, 0.000625, 0.000_156_25];

fn v1(x: f64) -> Vector<1> {
    Vector::<1>::new(x)
}

#[test]
fn kolmogorov_reference_cases() {
    let f = IntervalFlow::new(0.4, 0.3, 1.0);
    let grid = Grid1D::for_flow(&f);
    let (b, n) = kolmogorov_check(&f, &|_| 1.0, 0.0, 0.2, &grid).unwrap();
    assert!(b.lhs.abs() < 1e-8 && n.lhs.abs() < 1e-10, "{b:?} {n:?}");
    let flat = IntervalFlow::unit(0.0);
    let (b, n) = kolmogorov_check(&flat, &|x| (PI * x).cos(), 0.0, 0.2, &Grid1D::for_flow(&flat)).unwrap();
    assert!(b.pass && n.pass);
    let quartic = |x: f64| x * x * (1.0 - x) * (1.0 - x);
    let (b, n) = kolmogorov_check(&f, &quartic, 0.0, 0.1, &grid).unwrap();
    assert!(b.pass && b.lhs < 1e-4, "{b:?}");
    assert!(n.pass, "{n:?}");
    assert!(kolmogorov_check(&f, &quartic, 0.0, grid.dt, &grid).is_err());
}

#[test]
fn interval_rz_recovers_minus_a() {
    for a in [-0.5, 0.5] {
        let f = IntervalFlow::unit(a);
        for p in [1.0, 2.0] {
            let e = rz_smalltime_interval(&f, 0.5, p, 0.0, &RZ_LADDER).unwrap();
            assert!((e.value.mean + a).abs() <= 0.1 * a.abs(), "a = {a}, p = {p}: {:?}", e.value);
        }
        let var = rz_variance_interval(&f, 0.5, 0.0, &RZ_LADDER).unwrap();
        assert!((var.value.mean + a).abs() <= 0.1 * a.abs(), "{:?}", var.value);
        let ent = rz_entropy_interval(&f, 0.5, 0.0, &RZ_LADDER, 100.0).unwrap();
        assert!((ent.value.mean + a).abs() <= 0.1 * a.abs(), "{:?}", ent.value);
    }
    let flat = IntervalFlow::unit(0.0);
    let e = rz_smalltime_interval(&flat, 0.5, 2.0, 0.0, &RZ_LADDER).unwrap();
    assert!(e.value.mean.abs() < 1e-3, "{:?}", e.value);
    assert!(rz_smalltime_interval(&flat, 0.0, 2.0, 0.0, &RZ_LADDER).is_err());
}

#[test]
fn cap_rz_recovers_sphere_curvature() {
    let cap = RicciFlowCap::new(1.0).unwrap();
    let x = RicciFlowCap::centre();
    let f = CapLinear { inner: 0.6, outer: 0.95 };
    let v = f.grad(&x);
    let g = rflow_core::geometry::MetricFlow::metric(&cap, 0.0, &x);
    let v = rflow_core::linalg::spd_inverse(&g, 0.0, &x).unwrap() * v;
    let target = r_z(&cap, 0.0, &x, &v).unwrap();
    assert!((target - 2.0).abs() < 1e-6);
    let e = rz_smalltime_mc(&cap, &cap, &f, &x, 2.0, 0.0, &[0.004, 0.002, 0.001], 4_000, 20, 9).unwrap();
    assert!((e.value.mean - 2.0).abs() <= 0.2, "{:?}", e);
}

#[test]
fn second_fundamental_form_from_small_times() {
    let hp = FlatFlow::<2>::with_boundary(HalfPlaneBoundary { axis: 1 });
    let lin = Smooth(|z: &Vector<2>| z[0], |_: &Vector<2>| Vector::<2>::new(1.0, 0.0));
    let e = ii_smalltime(&hp, &lin, &Vector::<2>::zeros(), 2.0, 0.0, &II_LADDER, 4_000, 40, 3).unwrap();
    assert!(e.value.mean.abs() <= 0.05, "{:?}", e.value);
    let disk = ScaledDisk::new(1.0, CubicSpline::constant(1.0));
    let angle = Smooth(|z: &Vector<2>| z[1].atan2(z[0]), |z: &Vector<2>| Vector::<2>::new(-z[1], z[0]) / z.norm_squared());
    let e = ii_smalltime(&disk, &angle, &Vector::<2>::new(1.0, 0.0), 2.0, 0.0, &II_LADDER, 4_000, 40, 4).unwrap();
    assert!((e.value.mean - 1.0).abs() <= 0.15, "{:?}", e);
}

#[test]
fn local_time_constant_on_the_half_line() {
    let hl = FlatFlow::<1>::with_boundary(HalfPlaneBoundary { axis: 0 });
    let (r, rungs) = local_time_asymptotic_check(&hl, &v1(0.0), &[1e-3, 4e-3, 1.6e-2], 8_000, 32, 5).unwrap();
    assert!((r.rhs - 2.0 / PI.sqrt()).abs() < 1e-15);
    assert!(r.pass, "{r:?}");
    assert!(rungs.windows(2).all(|w| w[1].1.mean > w[0].1.mean));
    let iv = IntervalFlow::unit(0.3);
    let ends = terminal_states(&Stepper::new(&iv), 0.0, 1e-3, &v1(0.5), 2_000, 32, 6).unwrap();
    assert!(ends.iter().all(|e| e.l == 0.0));
}

#[test]
fn constant_functions_saturate_the_inequalities() {
    let f = IntervalFlow::new(0.5, 0.2, 1.0);
    let c = |_: f64| 2.5;
    let zero = |_: f64| 0.0;
    for r in gradient_entropy_suite(&f, &c, &zero, 0.0, 0.3, 0.4).unwrap() {
        assert!(r.lhs.abs() < 1e-9, "{r:?}");
        assert!(r.pass, "{r:?}");
    }
    for r in semigroup_inequality_suite(&f, &c, &zero, 0.0, 0.3, 0.4, 0.6).unwrap() {
        assert!(r.pass, "{r:?}");
    }
    for r in hypercontractivity_suite(&f, &c, 0.0, 0.1, 0.3).unwrap() {
        // equality up to the oracle's rounding
        assert!(r.lhs.abs() < 1e-9 && r.pass, "{r:?}");
    }
}

#[test]
fn smooth_functions_satisfy_the_inequalities() {
    let f = IntervalFlow::new(-0.4, 0.3, 1.0);
    let g = |x: f64| 1.5 + (PI * x).cos();
    let dg = |x: f64| -PI * (PI * x).sin();
    let reports = gradient_entropy_suite(&f, &g, &dg, 0.0, 0.2, 0.3)
        .unwrap()
        .into_iter()
        .chain(semigroup_inequality_suite(&f, &g, &dg, 0.0, 0.2, 0.3, 0.7).unwrap())
        .chain(hypercontractivity_suite(&f, &g, 0.0, 0.1, 0.2).unwrap());
    for r in reports {
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn hypercontractive_exponents() {
    let flat = IntervalFlow::unit(0.0);
    assert!((q2_from(&flat, 0.0, 0.5, 1.0, 2.0) - 3.0).abs() < 1e-12);
    let f = IntervalFlow::unit(0.7);
    for q1 in [2.0, 0.5, -1.0] {
        assert!((q2_from(&f, 0.1, 0.4, 0.4, q1) - q1).abs() < 1e-12);
    }
    let r = hypercontractivity_check(&f, &|x| 1.0 + x * x, 0.0, 0.2, 0.2, 2.0).unwrap();
    assert!(r.pass && r.lhs.abs() < 1e-6, "{r:?}");
    // flat, q₁ = ½ at the midpoint gives q₂ = 0: the geometric-mean limit
    assert!(q2_from(&flat, 0.0, 0.15, 0.3, 0.5).abs() < 1e-12);
    let r = hypercontractivity_check(&flat, &|x| 1.5 + (PI * x).cos(), 0.0, 0.15, 0.3, 0.5).unwrap();
    assert!(r.pass && r.lhs.is_finite(), "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn report_pass_rule(lhs in -2.0..2.0f64, rhs in -2.0..2.0f64, se in 0.0..0.1f64, allow in 0.0..0.1f64) {
        let l = Estimate { mean: lhs, stderr: se, n: 10 };
        let r = Estimate::exact(rhs);
        let ineq = CheckReport::inequality("c", "i", String::new(), l, r, allow);
        prop_assert!((ineq.tolerance - (3.0 * se + allow)).abs() < 1e-12);
        prop_assert_eq!(ineq.pass, lhs <= rhs + ineq.tolerance);
        let id = CheckReport::identity("c", "i", String::new(), l, r, allow);
        prop_assert_eq!(id.pass, (lhs - rhs).abs() <= id.tolerance);
        prop_assert_eq!(ineq.kind, CheckKind::Inequality);
        let nan = CheckReport::inequality("c", "i", String::new(), Estimate::exact(f64::NAN), r, allow);
        prop_assert!(!nan.pass);
    }

    #[test]
    fn checks_are_seed_stable(seed in 0u64..1_000_000) {
        let hl = FlatFlow::<1>::with_boundary(HalfPlaneBoundary { axis: 0 });
        let run = || local_time_asymptotic_check(&hl, &v1(0.0), &[1e-3, 4e-3], 200, 8, seed).unwrap();
        let (a, ra) = run();
        let (b, rb) = run();
        prop_assert_eq!(a.lhs, b.lhs);
        prop_assert_eq!(a.pass, b.pass);
        prop_assert_eq!(ra.iter().map(|r| r.1.mean).collect::<Vec<_>>(), rb.iter().map(|r| r.1.mean).collect::<Vec<_>>());
    }
}
