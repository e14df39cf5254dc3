use proptest::prelude::*;
use rflow_core::catalog::{CubicSpline, IntervalFlow, RicciFlowCap, ScaledDisk};
use rflow_core::derivative::*;
use rflow_core::diffusion::{DiffusionState, Stepper};
use rflow_core::geometry::{FlatFlow, HalfPlaneBoundary};
use rflow_core::oracle::{neumann_heat_march, neumann_heat_solve, oracle_gradient, Grid1D, OracleSolution};
use rflow_core::stats::combined_stderr;
use rflow_core::{Error, Matrix, Vector};
use std::f64::consts::PI;

fn v1(x: f64) -> Vector<1> {
    Vector::<1>::new(x)
}

fn cosine() -> Smooth<impl Fn(&Vector<1>) -> f64 + Sync, impl Fn(&Vector<1>) -> Vector<1> + Sync> {
    Smooth(|x: &Vector<1>| (PI * x[0]).cos(), |x: &Vector<1>| v1(-PI * (PI * x[0]).sin()))
}

fn constant<const D: usize>() -> Smooth<impl Fn(&Vector<D>) -> f64 + Sync, impl Fn(&Vector<D>) -> Vector<D> + Sync> {
    Smooth(|_: &Vector<D>| 2.5, |_: &Vector<D>| Vector::<D>::zeros())
}

fn unit_disk() -> ScaledDisk {
    ScaledDisk::new(1.0, CubicSpline::constant(1.0))
}

// frame derivative of P_{0,t}cos(πx) at x on the interval flow, from the oracle
fn oracle_frame_derivative(f: &IntervalFlow, t: f64, x: f64) -> f64 {
    let grid = Grid1D::for_flow(f);
    let v = neumann_heat_solve(f, &|y| (PI * y).cos(), 0.0, t, &grid).unwrap();
    let g = oracle_gradient(&v, &grid, f.a, 0.0).unwrap();
    OracleSolution::interp(&g, &grid, x)
}

#[test]
fn q_is_untouched_on_flat_interiors() {
    let flat = FlatFlow::<2>::new();
    let st = DiffusionState::new(&flat, 0.0, Vector::<2>::new(0.1, 0.2)).unwrap();
    let q = q_step(&flat, &flat, &QMatrix::default(), &st, 1e-3, None).unwrap();
    assert_eq!(q.q, Matrix::<2>::identity());
    assert_eq!(q.certificate, 1.0);
}

#[test]
fn interval_q_grows_like_exp_at() {
    let a = 0.7;
    let f = IntervalFlow::unit(a);
    let (n, dt) = (2000, 1e-4);
    let mut q = QMatrix::<1>::default();
    for k in 0..n {
        let st = DiffusionState::new(&f, k as f64 * dt, v1(0.5)).unwrap();
        q = q_step(&f, &f, &q, &st, dt, None).unwrap();
    }
    let t = n as f64 * dt;
    assert!((q.q[(0, 0)] - (1.0 + a * dt).powi(n)).abs() < 1e-10);
    assert!((q.q[(0, 0)] - (a * t).exp()).abs() < 1e-4);
    assert!((q.certificate - (a * t).exp()).abs() < 1e-12);
}

#[test]
fn a_wall_hit_in_one_dimension_annihilates_q() {
    let hl = FlatFlow::<1>::with_boundary(HalfPlaneBoundary { axis: 0 });
    let st = DiffusionState::new(&hl, 0.0, v1(0.01)).unwrap();
    let wall = v1(0.0);
    let q = q_step(&hl, &hl, &QMatrix::default(), &st, 1e-3, Some((&wall, 0.02, &st.u))).unwrap();
    assert_eq!(q.q[(0, 0)], 0.0);
}

#[test]
fn constant_functions_have_zero_gradient() {
    let f = IntervalFlow::unit(0.5);
    let b = bismut_gradient(&f, &f, &constant::<1>(), 0.0, 0.1, &v1(0.4), 4_000, 50, Ramp::Linear, 1).unwrap();
    assert!(b.value[0].abs() < 3.0 * b.stderr[0], "{b:?}");
    let c = covariant_gradient(&f, &f, &constant::<1>(), 0.0, 0.1, &v1(0.4), 200, 50, 1).unwrap();
    assert_eq!(c.value[0], 0.0);
}

#[test]
fn interval_gradients_match_the_oracle() {
    let f = IntervalFlow::unit(0.5);
    let (t, x) = (0.1, 0.5);
    let dt = 5e-4;
    let batch = gradient_batch(&Stepper::new(&f), &f, &cosine(), 0.0, t, &v1(x), 20_000, (t / dt) as usize, Ramp::Linear, 2).unwrap();
    let want = oracle_frame_derivative(&f, t, x);
    // closed form −π exp(−π²∫₀ᵗe^{−2ar}dr) sin(πx)
    let integral = (1.0 - (-2.0 * f.a * t).exp()) / (2.0 * f.a);
    assert!((want + PI * (-PI * PI * integral).exp()).abs() < 1e-5);
    let b = batch.bismut();
    let c = batch.covariant();
    assert!((b.value[0] - want).abs() < 3.0 * b.stderr[0] + 2.0 * dt * want.abs(), "bismut {b:?} vs {want}");
    assert!((c.value[0] - want).abs() < 3.0 * c.stderr[0] + 2.0 * dt * want.abs(), "covariant {c:?} vs {want}");
    assert_eq!(b.certificate_violations, 0);
}

#[test]
fn disk_gradient_of_a_coordinate_at_the_centre() {
    let disk = unit_disk();
    let x1 = Smooth(|x: &Vector<2>| x[0], |_: &Vector<2>| Vector::<2>::new(1.0, 0.0));
    let b = bismut_gradient(&disk, &disk, &x1, 0.0, 0.02, &Vector::<2>::zeros(), 20_000, 20, Ramp::Linear, 3).unwrap();
    assert!((b.value[0] - 1.0).abs() < 3.0 * b.stderr[0], "{b:?}");
    assert!(b.value[1].abs() < 3.0 * b.stderr[1], "{b:?}");
}

#[test]
fn representations_agree_on_the_disk() {
    let disk = ScaledDisk::new(1.0, CubicSpline::new(&[(0.0, 1.0), (1.0, 1.3)]).unwrap());
    let f = Smooth(
        |x: &Vector<2>| x[0] * x[0] + 0.5 * x[1],
        |x: &Vector<2>| Vector::<2>::new(2.0 * x[0], 0.5),
    );
    let batch = gradient_batch(&Stepper::new(&disk), &disk, &f, 0.0, 0.1, &Vector::<2>::new(0.5, 0.3), 8_000, 100, Ramp::Linear, 4).unwrap();
    let d = batch.difference();
    for i in 0..2 {
        assert!(d.value[i].abs() < 3.0 * d.stderr[i], "component {i}: {d:?}");
    }
}

#[test]
fn ramp_choice_does_not_change_the_gradient() {
    let f = IntervalFlow::unit(-0.3);
    let run = |ramp, seed| bismut_gradient(&f, &f, &cosine(), 0.0, 0.1, &v1(0.3), 10_000, 100, ramp, seed).unwrap();
    let (lin, cub) = (run(Ramp::Linear, 5), run(Ramp::Cubic, 6));
    let tol = 3.0 * combined_stderr(&[lin.stderr[0], cub.stderr[0]]);
    assert!((lin.value[0] - cub.value[0]).abs() < tol, "{lin:?} vs {cub:?}");
    assert_eq!(Ramp::Cubic.value(0.0, 2.0, 1.0), 0.5);
    assert_eq!(Ramp::Linear.value(0.0, 2.0, 2.0), 1.0);
}

#[test]
fn localized_formula_matches_the_oracle() {
    let f = IntervalFlow::unit(0.5);
    let (t, x) = (0.1, 0.5);
    let grid = Grid1D::for_flow(&f);
    let sol = neumann_heat_march(&f, &|y| (PI * y).cos(), 0.0, t, &grid, None, true).unwrap();
    let table = |r: f64, y: &Vector<1>| sol.value(r, y[0]);
    let domain = SpaceBox { lo: v1(0.25), hi: v1(0.75) };
    let est = local_bismut_gradient(&f, &f, &cosine(), 0.0, t, &v1(x), &domain, 20_000, 200, LocalRamp::default(), &InnerSemigroup::Table(&table), 7).unwrap();
    let want = oracle_frame_derivative(&f, t, x);
    assert!((est.value[0] - want).abs() < 3.0 * est.stderr[0] + 0.01 * want.abs(), "{est:?} vs {want}");
}

#[test]
fn localized_formula_reduces_to_the_global_one() {
    let f = IntervalFlow::unit(0.5);
    let (t, x) = (0.05, 0.5);
    let huge = SpaceBox { lo: v1(-100.0), hi: v1(100.0) };
    let ramp = LocalRamp { plateau: 1.0, kappa: 0.0 };
    let nested = InnerSemigroup::Nested { paths: 1, cost_cap: u64::MAX };
    let local = local_bismut_gradient(&f, &f, &cosine(), 0.0, t, &v1(x), &huge, 10_000, 100, ramp, &nested, 8).unwrap();
    let global = bismut_gradient(&f, &f, &cosine(), 0.0, t, &v1(x), 10_000, 100, Ramp::Linear, 9).unwrap();
    let tol = 3.0 * combined_stderr(&[local.stderr[0], global.stderr[0]]);
    assert!((local.value[0] - global.value[0]).abs() < tol, "{local:?} vs {global:?}");
}

#[test]
fn localized_formula_rejects_bad_domains_and_budgets() {
    let f = IntervalFlow::unit(0.5);
    let domain = SpaceBox { lo: v1(0.25), hi: v1(0.75) };
    let table = |_r: f64, _y: &Vector<1>| 0.0;
    let on_edge = local_bismut_gradient(&f, &f, &cosine(), 0.0, 0.1, &v1(0.25), &domain, 10, 10, LocalRamp::default(), &InnerSemigroup::Table(&table), 1);
    assert!(matches!(on_edge, Err(Error::InvalidArgument(_))));
    let nested = InnerSemigroup::Nested { paths: 100, cost_cap: 1_000 };
    let over = local_bismut_gradient(&f, &f, &cosine(), 0.0, 0.1, &v1(0.5), &domain, 10, 10, LocalRamp::default(), &nested, 1);
    assert!(matches!(over, Err(Error::NestedBudgetExceeded { requested: 10_000, cap: 1_000 })));
}

#[test]
fn gradient_estimate_holds_on_the_cap() {
    let cap = RicciFlowCap::new(1.0).unwrap();
    let x = RicciFlowCap::centre() + Vector::<2>::new(0.3, 0.2);
    let f = Smooth(|y: &Vector<2>| y[0].cos() * y[1].sin(), |y: &Vector<2>| Vector::<2>::new(-y[0].sin() * y[1].sin(), y[0].cos() * y[1].cos()));
    let (s, t) = (0.0, 0.1);
    let batch = gradient_batch(&Stepper::new(&cap), &cap, &f, s, t, &x, 4_000, 100, Ramp::Linear, 10).unwrap();
    let cov = batch.covariant();
    let norm = cov.value.norm();
    let norm_se = cov.stderr.norm();
    let rhs = batch.map(|smp| smp.grad_norm_end);
    use rflow_core::catalog::CurvatureBounds;
    let factor = (-cap.rz_integral(s, t)).exp();
    assert!(norm <= factor * rhs.mean + 3.0 * combined_stderr(&[norm_se, factor * rhs.stderr]), "{norm} vs {}", factor * rhs.mean);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn q_never_exceeds_its_certificate(seed in 0u64..10_000, r in 0.0..0.95f64, ang in 0.0..2.0 * PI) {
        let cap = RicciFlowCap::new(1.0).unwrap();
        let p = nalgebra::Vector3::new(r.cos(), r.sin() * ang.cos(), r.sin() * ang.sin());
        let x = RicciFlowCap::from_embedding(&p);
        let f = constant::<2>();
        let batch = gradient_batch(&Stepper::new(&cap), &cap, &f, 0.0, 0.1, &x, 40, 50, Ramp::Linear, seed).unwrap();
        prop_assert_eq!(batch.bismut().certificate_violations, 0);
        let disk = unit_disk();
        let y = Vector::<2>::new(r * ang.cos(), r * ang.sin());
        let batch = gradient_batch(&Stepper::new(&disk), &disk, &f, 0.0, 0.1, &y, 40, 50, Ramp::Linear, seed).unwrap();
        prop_assert_eq!(batch.bismut().certificate_violations, 0);
        prop_assert!(batch.bismut().max_norm_ratio <= 1.0 + 1e-8);
    }
}
