use proptest::prelude::*;
use rflow_core::catalog::{CubicSpline, CurvatureBounds, IntervalFlow, RicciFlowCap, ScaledDisk};
use rflow_core::coupling::*;
use rflow_core::geometry::{FlatFlow, HalfPlaneBoundary};
use rflow_core::rng::RngStream;
use rflow_core::stats::combined_stderr;
use rflow_core::Vector;

fn v1(x: f64) -> Vector<1> {
    Vector::<1>::new(x)
}

// P(|N(0,1)| ≥ z) by Simpson quadrature of the density
fn two_sided_tail(z: f64) -> f64 {
    let n = 20_000;
    let h = z / n as f64;
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let inner: f64 = (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            w * phi(i as f64 * h)
        })
        .sum::<f64>()
        * h
        / 3.0;
    1.0 - 2.0 * inner
}

#[test]
fn glued_states_stay_put() {
    let disk = ScaledDisk::new(1.0, CubicSpline::constant(1.0));
    let x = Vector::<2>::new(0.2, 0.1);
    for mode in [CouplingMode::Parallel, CouplingMode::Mirror] {
        let cs = CoupledState::new(&disk, 0.0, x, x).unwrap();
        assert!(cs.coalesced);
        let next = Coupler::new(&disk, mode).step(&cs, 1e-3, &Vector::<2>::new(0.4, -0.9), None).unwrap().state;
        assert_eq!(next.first.x, next.second.x);
        assert_eq!(next.rho, 0.0);
    }
}

#[test]
fn mirror_pairs_coalesce_like_a_scaled_brownian_motion() {
    // far from the wall the difference is a BM of variance 8t started at 0.2
    let hl = FlatFlow::<1>::with_boundary(HalfPlaneBoundary { axis: 0 });
    let coupler = Coupler::new(&hl, CouplingMode::Mirror);
    let t = 1.0;
    let est = coalescence_rate(&coupler, &v1(5.0), &v1(5.2), 0.0, t, 4_000, 1_000, 11).unwrap();
    let want = two_sided_tail(0.2 / (8.0 * t).sqrt());
    assert!((want - 0.94363).abs() < 1e-4);
    assert!((est.mean - want).abs() < 3.0 * est.stderr + 0.005, "{est:?} vs {want}");
}

#[test]
fn flat_parallel_monitor_has_no_violations() {
    let flat = FlatFlow::<2>::new();
    let coupler = Coupler::new(&flat, CouplingMode::Parallel);
    let path = coupled_path(&coupler, Vector::<2>::new(0.0, 0.0), Vector::<2>::new(0.5, 0.1), 0.0, 0.2, 200, &mut RngStream::new(3, 0), None, true).unwrap();
    let rep = distance_bound_monitor(&flat, &flat, &path).unwrap();
    assert_eq!(rep.violations, 0);
    assert_eq!(rep.steps, 200);
    assert!(rep.max_excess.abs() < 1e-12);
}

#[test]
fn interval_monitor_excess_vanishes_with_dt() {
    let f = IntervalFlow::unit(0.5);
    let coupler = Coupler::new(&f, CouplingMode::Parallel);
    let excess = |n: usize| {
        let mut rep = None::<MonitorReport>;
        for i in 0..10 {
            let path = coupled_path(&coupler, v1(0.3), v1(0.6), 0.0, 0.2, n, &mut RngStream::new(5, i), None, true).unwrap();
            let r = distance_bound_monitor(&f, &f, &path).unwrap();
            rep = Some(rep.map_or(r, |a| a.merge(&r)));
        }
        rep.unwrap()
    };
    let (coarse, fine) = (excess(100), excess(1_000));
    assert!(fine.frequency() <= coarse.frequency());
    assert!(fine.max_excess <= coarse.max_excess.max(1e-12));
}

#[test]
fn interval_wasserstein_is_bounded_by_exp_at() {
    let a = 0.5;
    let f = IntervalFlow::unit(a);
    let t = 0.2;
    for p in [1.0, 2.0] {
        let w = wasserstein_contraction_estimate(&f, &f, &v1(0.3), &v1(0.5), 0.0, t, p, 2_000, 200, 6).unwrap();
        assert!((w.rhs - 0.2 * (a * t).exp()).abs() < 1e-12);
        assert!(w.pass && w.lhs <= w.rhs + 3.0 * w.stderr, "{w:?}");
    }
}

#[test]
fn wasserstein_distance_shrinks_on_the_cap() {
    let cap = RicciFlowCap::new(1.0).unwrap();
    assert!(cap.rz_lower(0.0) > 0.0);
    let x = RicciFlowCap::centre();
    let y = x + Vector::<2>::new(0.2, 0.2);
    let lhs: Vec<_> = [0.02, 0.05, 0.1]
        .iter()
        .map(|&t| wasserstein_contraction_estimate(&cap, &cap, &x, &y, 0.0, t, 1.0, 1_000, (t / 1e-3) as usize, 7).unwrap())
        .collect();
    for w in lhs.windows(2) {
        assert!(w[1].lhs <= w[0].lhs + 3.0 * combined_stderr(&[w[0].stderr, w[1].stderr]), "{:?}", w);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn coalesced_paths_move_together(seed in 0u64..10_000, dx in 0.01..0.2f64) {
        let disk = ScaledDisk::new(1.0, CubicSpline::constant(1.0));
        let coupler = Coupler::new(&disk, CouplingMode::Mirror);
        let mut glue = RngStream::new(seed ^ 0xabc, 0);
        let path = coupled_path(&coupler, Vector::<2>::new(0.0, 0.0), Vector::<2>::new(dx, 0.0), 0.0, 0.2, 200, &mut RngStream::new(seed, 0), Some(&mut glue), true).unwrap();
        let mut glued = false;
        for st in &path.states {
            if glued {
                prop_assert!(st.coalesced);
            }
            if st.coalesced {
                glued = true;
                prop_assert_eq!(st.first.x, st.second.x);
                prop_assert_eq!(st.first.l - st.second.l, path.states.iter().find(|s| s.coalesced).map(|s| s.first.l - s.second.l).unwrap());
            }
        }
    }

    #[test]
    fn flat_parallel_distance_is_rigid(seed in 0u64..10_000, ax in -0.3..0.3f64, ay in -0.3..0.3f64) {
        let flat = FlatFlow::<2>::new();
        let coupler = Coupler::new(&flat, CouplingMode::Parallel);
        let (x, y) = (Vector::<2>::new(0.0, 0.0), Vector::<2>::new(ax, ay));
        let rho0 = (y - x).norm();
        let path = coupled_path(&coupler, x, y, 0.0, 0.1, 50, &mut RngStream::new(seed, 1), None, true).unwrap();
        for st in &path.states {
            prop_assert!((st.rho - rho0).abs() < 1e-12);
        }
    }
}
