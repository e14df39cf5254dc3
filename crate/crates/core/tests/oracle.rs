use proptest::prelude::*;
use rflow_core::catalog::IntervalFlow;
use rflow_core::oracle::*;
use rflow_core::Error;
use std::f64::consts::PI;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn constants_are_conserved() {
    let f = IntervalFlow::new(0.7, 0.4, 1.0);
    let v = neumann_heat_solve(&f, &|_| 1.0, 0.0, 0.5, &Grid1D::for_flow(&f)).unwrap();
    assert!(v.iter().all(|x| (x - 1.0).abs() <= 1e-10));
}

#[test]
fn cosine_decays_at_rate_pi_squared() {
    let flat = IntervalFlow::unit(0.0);
    let grid = Grid1D::default();
    let t = 0.2;
    let v = neumann_heat_solve(&flat, &|x| (PI * x).cos(), 0.0, t, &grid).unwrap();
    let want: Vec<f64> = grid.nodes().iter().map(|x| (-PI * PI * t).exp() * (PI * x).cos()).collect();
    assert!(max_abs_diff(&v, &want) < 2e-5);
}

#[test]
fn cosine_decay_follows_the_time_change() {
    for a in [-0.6, 0.5] {
        let f = IntervalFlow::unit(a);
        let grid = Grid1D::default();
        let t = 0.3;
        // ∫₀ᵗ e^{−2ar} dr by hand
        let integral = (1.0 - (-2.0 * a * t).exp()) / (2.0 * a);
        let v = neumann_heat_solve(&f, &|x| (PI * x).cos(), 0.0, t, &grid).unwrap();
        let want: Vec<f64> = grid.nodes().iter().map(|x| (-PI * PI * integral).exp() * (PI * x).cos()).collect();
        assert!(max_abs_diff(&v, &want) < 2e-5, "a = {a}");
        assert!((eigen_decay(a, 1.0, 0.0, t) - (-PI * PI * integral).exp()).abs() < 1e-14);
    }
}

#[test]
fn gradient_reference_cases() {
    let grid = Grid1D::default();
    let nodes = grid.nodes();
    let g = oracle_gradient(&vec![3.0; grid.n], &grid, 0.5, 0.2).unwrap();
    assert!(g.iter().all(|v| v.abs() < 1e-10));
    let g = oracle_gradient(&nodes, &grid, 0.0, 0.0).unwrap();
    assert!(g.iter().all(|v| (v - 1.0).abs() < 1e-9));
    let flat = IntervalFlow::unit(0.0);
    let v = neumann_heat_solve(&flat, &|x| (PI * x).cos(), 0.0, 0.1, &grid).unwrap();
    let g = oracle_gradient(&v, &grid, 0.0, 0.0).unwrap();
    // π e^{−0.1π²}
    assert!((g[grid.n / 2].abs() - 1.170896208477289).abs() < 1e-5, "{}", g[grid.n / 2]);
}

#[test]
fn malformed_inputs_are_rejected() {
    assert!(matches!(Grid1D::new(16, 1.0, 1e-4), Err(Error::OracleFailure(_))));
    let grid = Grid1D::default();
    assert!(matches!(oracle_gradient(&[0.0; 10], &grid, 0.0, 0.0), Err(Error::OracleFailure(_))));
    let f = IntervalFlow::new(0.0, 0.0, 2.0);
    assert!(neumann_heat_solve(&f, &|_| 1.0, 0.0, 0.1, &grid).is_err());
}

#[test]
fn slices_export_as_csv() {
    let f = IntervalFlow::unit(0.2);
    let grid = Grid1D::new(33, 1.0, 1e-3).unwrap();
    let sol = neumann_heat_march(&f, &|x| x, 0.0, 0.1, &grid, None, true).unwrap();
    let mut buf = Vec::new();
    sol.write_csv(sol.initial(), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("x,value"));
    assert_eq!(text.lines().count(), 34);
    assert_eq!(sol.times.len(), sol.values.len());
    assert_eq!(sol.times[0], 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conservation_and_maximum_principle(a in -1.0..1.0f64, z in -1.0..1.0f64, s in 0.0..0.2f64, span in 0.01..0.3f64, k in 1.0..4.0f64) {
        let f = IntervalFlow::new(a, z, 1.0);
        let grid = Grid1D::new(101, 1.0, 1e-3).unwrap();
        let one = neumann_heat_solve(&f, &|_| 1.0, s, s + span, &grid).unwrap();
        prop_assert!(one.iter().all(|v| (v - 1.0).abs() <= 1e-10));
        let g = |x: f64| (k * PI * x).sin() + 0.3 * x;
        let max_f = grid.nodes().iter().map(|&x| g(x)).fold(f64::MIN, f64::max);
        let v = neumann_heat_solve(&f, &g, s, s + span, &grid).unwrap();
        prop_assert!(v.iter().all(|&x| x <= max_f + 1e-10));
    }

    #[test]
    fn semigroup_property(a in -1.0..1.0f64, i in 0u32..100, j in 1u32..100, k in 1u32..100) {
        // times on the step lattice, so both routes take the same Crank–Nicolson steps
        let dt = 1e-3;
        let (s, u, t) = (i as f64 * dt, (i + j) as f64 * dt, (i + j + k) as f64 * dt);
        let f = IntervalFlow::unit(a);
        let grid = Grid1D::new(101, 1.0, dt).unwrap();
        let g = |x: f64| (PI * x).cos() + x * x;
        let direct = neumann_heat_solve(&f, &g, s, t, &grid).unwrap();
        let inner = neumann_heat_solve(&f, &g, u, t, &grid).unwrap();
        let h = grid.spacing();
        let lookup = |x: f64| inner[(x / h).round() as usize];
        let composed = neumann_heat_solve(&f, &lookup, s, u, &grid).unwrap();
        prop_assert!(max_abs_diff(&direct, &composed) <= 1e-8);
    }
}
