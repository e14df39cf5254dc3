//! Parallel and mirror couplings of two reflecting diffusions, distance monitoring and
//! Wasserstein contraction.

use crate::catalog::CurvatureBounds;
use crate::diffusion::{run_paths, validate_window, DiffusionState, Stepper};
use crate::geometry::{index_z, link, Link};
use crate::geometry::MetricFlow;
use crate::linalg;
use crate::rng::{derive_seed, NoiseSource, RngStream};
use crate::stats::{compensated_sum, Estimate};
use crate::{Error, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingMode {
    Parallel,
    Mirror,
}

impl CouplingMode {
    pub fn key(self) -> &'static str {
        match self {
            CouplingMode::Parallel => "parallel",
            CouplingMode::Mirror => "mirror",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CoupledState<const D: usize> {
    pub first: DiffusionState<D>,
    pub second: DiffusionState<D>,
    pub rho: f64,
    /// Distance at the start of the run; the glue threshold is relative to it.
    pub rho0: f64,
    pub coalesced: bool,
    pub coalescence_time: Option<f64>,
    /// Geodesic data at the current time and points.
    pub link: Link<D>,
    guess: Option<Vector<D>>,
}

impl<const D: usize> CoupledState<D> {
    pub fn new<F: MetricFlow<D> + ?Sized>(flow: &F, t: f64, x: Vector<D>, y: Vector<D>) -> Result<Self> {
        let first = DiffusionState::new(flow, t, x)?;
        let second = DiffusionState::new(flow, t, y)?;
        let (l, guess) = link(flow, t, &x, &y, None)?;
        let coalesced = l.rho == 0.0;
        Ok(CoupledState {
            first,
            second,
            rho: l.rho,
            rho0: l.rho,
            coalesced,
            coalescence_time: coalesced.then_some(t),
            link: l,
            guess,
        })
    }

    pub fn t(&self) -> f64 {
        self.first.t
    }

    fn glue(&mut self, t: f64) {
        self.second.x = self.first.x;
        self.second.u = self.first.u;
        self.rho = 0.0;
        self.link = Link::degenerate();
        self.guess = None;
        if !self.coalesced {
            self.coalesced = true;
            self.coalescence_time = Some(t);
        }
    }
}

/// Extra drift U(t, x, y) added to the second path.
pub type ExtraDrift<'a, const D: usize> = &'a (dyn Fn(f64, &Vector<D>, &Vector<D>) -> Vector<D> + Sync);

/// What the second path's noise is slaved to, plus the glue rule.
pub struct Coupler<'a, const D: usize, F: ?Sized> {
    pub stepper: Stepper<'a, D, F>,
    pub mode: CouplingMode,
    pub extra_drift: Option<ExtraDrift<'a, D>>,
    /// Paths are glued once ρ < glue_eps·ρ₀.
    pub glue_eps: f64,
}

/// One coupled step: the new state and the noise projected on the geodesic direction,
/// ⟨u ξ, γ̇(0)⟩√Δt (the increment of the one-dimensional Brownian part).
#[derive(Debug, Clone, Copy)]
pub struct CoupledStep<const D: usize> {
    pub state: CoupledState<D>,
    pub drive: f64,
}

const MAX_HALVINGS: u32 = 4;

impl<'a, const D: usize, F: MetricFlow<D> + ?Sized> Coupler<'a, D, F> {
    pub fn new(flow: &'a F, mode: CouplingMode) -> Self {
        Coupler { stepper: Stepper::new(flow), mode, extra_drift: None, glue_eps: 1e-6 }
    }

    pub fn with_stepper(stepper: Stepper<'a, D, F>, mode: CouplingMode) -> Self {
        Coupler { stepper, mode, extra_drift: None, glue_eps: 1e-6 }
    }

    pub fn with_drift(mut self, u: ExtraDrift<'a, D>) -> Self {
        self.extra_drift = Some(u);
        self
    }

    /// Advance both paths by Δt with normal ξ for the first one. `glue_uniform`, when given,
    /// enables the bridge glue of the mirror coupling: the paths are glued when the uniform falls
    /// below the probability that the distance hit 0 inside the step.
    pub fn step(&self, cs: &CoupledState<D>, dt: f64, xi: &Vector<D>, glue_uniform: Option<f64>) -> Result<CoupledStep<D>> {
        self.step_depth(cs, dt, xi, glue_uniform, 0)
    }

    fn step_depth(
        &self,
        cs: &CoupledState<D>,
        dt: f64,
        xi: &Vector<D>,
        glue_uniform: Option<f64>,
        depth: u32,
    ) -> Result<CoupledStep<D>> {
        match self.step_once(cs, dt, xi, glue_uniform) {
            Err(Error::CouplingStalled { t, reason }) => {
                if depth >= MAX_HALVINGS {
                    return Err(Error::CouplingStalled { t, reason: format!("{reason} (after {depth} halvings)") });
                }
                // split the increment evenly: two half steps with ξ/√2 each
                let half = xi / std::f64::consts::SQRT_2;
                let a = self.step_depth(cs, dt / 2.0, &half, glue_uniform, depth + 1)?;
                let b = self.step_depth(&a.state, dt / 2.0, &half, glue_uniform, depth + 1)?;
                Ok(CoupledStep { state: b.state, drive: a.drive + b.drive })
            }
            other => other,
        }
    }

    fn step_once(&self, cs: &CoupledState<D>, dt: f64, xi: &Vector<D>, glue_uniform: Option<f64>) -> Result<CoupledStep<D>> {
        let flow = self.stepper.flow;
        let out1 = self.stepper.step(&cs.first, dt, xi)?;
        let mut next = *cs;
        next.first = out1.state;
        if cs.coalesced {
            next.second = DiffusionState { l: cs.second.l + out1.dl, ..out1.state };
            return Ok(CoupledStep { state: next, drive: 0.0 });
        }
        let (t, x, y) = (cs.first.t, cs.first.x, cs.second.x);
        let gx = flow.metric(t, &x);
        let gy = flow.metric(t, &y);
        let v = cs.first.u * xi;
        let w = match self.mode {
            CouplingMode::Parallel => cs.link.transport * v,
            CouplingMode::Mirror => cs.link.mirror(&gx, &v),
        };
        let xi2 = cs.second.u.transpose() * gy * w;
        let mut proposal = self.stepper.propose(&cs.second, dt, &xi2)?;
        if let Some(u) = self.extra_drift {
            proposal += u(t, &x, &y) * dt;
        }
        let out2 = self.stepper.finish(&cs.second, dt, &proposal)?;
        next.second = out2.state;
        let drive = linalg::inner(&gx, &v, &cs.link.tangent_start) * dt.sqrt();

        let t_new = out1.state.t;
        let (x1, y1) = (out1.state.x, out2.state.x);
        let crossed = self.mode == CouplingMode::Mirror && (y1 - x1).dot(&(y - x)) <= 0.0;
        if crossed || x1 == y1 {
            next.glue(t_new);
            next.second.l = out2.state.l;
            return Ok(CoupledStep { state: next, drive });
        }
        let (l, guess) = link(flow, t_new, &x1, &y1, cs.guess)
            .map_err(|e| Error::CouplingStalled { t: t_new, reason: e.to_string() })?;
        next.link = l;
        next.guess = guess.or(cs.guess);
        next.rho = l.rho;
        let mut glue = l.rho < self.glue_eps * cs.rho0;
        if let (CouplingMode::Mirror, Some(u)) = (self.mode, glue_uniform) {
            // ρ carries 2√2ψ b: the bridge between ρ_n and ρ_{n+1} touches 0 w.p. exp(−ρ_nρ_{n+1}/(4ψ²Δt))
            let psi = self.stepper.psi_at(t, &x);
            glue |= u < (-cs.rho * l.rho / (4.0 * psi * psi * dt)).exp();
        }
        if glue {
            next.glue(t_new);
            next.second.l = out2.state.l;
        }
        Ok(CoupledStep { state: next, drive })
    }
}

pub fn coupled_step_parallel<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    cs: &CoupledState<D>,
    dt: f64,
    xi: &Vector<D>,
) -> Result<CoupledState<D>> {
    Ok(Coupler::new(flow, CouplingMode::Parallel).step(cs, dt, xi, None)?.state)
}

pub fn coupled_step_mirror<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    cs: &CoupledState<D>,
    dt: f64,
    xi: &Vector<D>,
) -> Result<CoupledState<D>> {
    Ok(Coupler::new(flow, CouplingMode::Mirror).step(cs, dt, xi, None)?.state)
}

/// A recorded coupled run: states on the grid and the per-step drives.
#[derive(Debug, Clone)]
pub struct CoupledPath<const D: usize> {
    pub mode: CouplingMode,
    pub states: Vec<CoupledState<D>>,
    pub drives: Vec<f64>,
}

/// Run a coupling on [s, t]. The first path consumes `noise` exactly as `simulate_path` does;
/// bridge-glue uniforms, if any, come from the separate `glue` stream.
pub fn coupled_path<const D: usize, F: MetricFlow<D> + ?Sized, N: NoiseSource>(
    coupler: &Coupler<'_, D, F>,
    x: Vector<D>,
    y: Vector<D>,
    s: f64,
    t: f64,
    n_steps: usize,
    noise: &mut N,
    mut glue: Option<&mut RngStream>,
    record: bool,
) -> Result<CoupledPath<D>> {
    validate_window(s, t, n_steps)?;
    let dt = (t - s) / n_steps as f64;
    let mut cs = CoupledState::new(coupler.stepper.flow, s, x, y)?;
    let mut states = vec![cs];
    let mut drives = Vec::new();
    for k in 0..n_steps {
        let xi = noise.normal_vector::<D>();
        let u = glue.as_deref_mut().map(|g| g.uniform());
        let mut out = coupler.step(&cs, dt, &xi, u)?;
        if k + 1 == n_steps {
            out.state.first.t = t;
            out.state.second.t = t;
        }
        cs = out.state;
        if record {
            states.push(cs);
            drives.push(out.drive);
        }
    }
    if !record {
        states.push(cs);
    }
    Ok(CoupledPath { mode: coupler.mode, states, drives })
}

/// I^Z_t(x, y), closed form when the flow has it.
pub fn index_value<const D: usize, F: MetricFlow<D> + ?Sized>(flow: &F, t: f64, x: &Vector<D>, y: &Vector<D>) -> Result<f64> {
    match flow.index_closed_form(t, x, y) {
        Some(v) => Ok(v),
        None => index_z(flow, t, x, y),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorReport {
    pub steps: usize,
    pub violations: usize,
    /// Largest Δρ − (bound·Δt + martingale part), slack not included.
    pub max_excess: f64,
    pub slack: f64,
}

impl MonitorReport {
    pub fn frequency(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.violations as f64 / self.steps as f64
        }
    }

    pub fn merge(&self, other: &MonitorReport) -> MonitorReport {
        MonitorReport {
            steps: self.steps + other.steps,
            violations: self.violations + other.violations,
            max_excess: self.max_excess.max(other.max_excess),
            slack: self.slack.max(other.slack),
        }
    }
}

/// Per-step check of dρ ≤ (½∫∂_t g(γ̇, γ̇) + I^Z) dt (+ 2√2 db for the mirror coupling, whose
/// known Brownian part is removed before comparing). ½∫∂_t g(γ̇, γ̇) is bounded by ½K₂(t)ρ.
/// A step violates when the excess exceeds 3√Δt. Glued steps are skipped.
pub fn distance_bound_monitor<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    bounds: &dyn CurvatureBounds,
    path: &CoupledPath<D>,
) -> Result<MonitorReport> {
    let mut report = MonitorReport { steps: 0, violations: 0, max_excess: f64::NEG_INFINITY, slack: 0.0 };
    for (k, w) in path.states.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        if a.coalesced || b.coalesced {
            continue;
        }
        let t = a.t();
        let dt = b.t() - t;
        let bound = 0.5 * bounds.dtg_upper(t) * a.rho + index_value(flow, t, &a.first.x, &a.second.x)?;
        let martingale = match path.mode {
            CouplingMode::Parallel => 0.0,
            CouplingMode::Mirror => -2.0 * std::f64::consts::SQRT_2 * path.drives.get(k).copied().unwrap_or(0.0),
        };
        let excess = (b.rho - a.rho) - bound * dt - martingale;
        let slack = 3.0 * dt.sqrt();
        report.steps += 1;
        report.slack = report.slack.max(slack);
        report.max_excess = report.max_excess.max(excess);
        if excess > slack {
            report.violations += 1;
        }
    }
    if report.steps == 0 {
        report.max_excess = 0.0;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WassersteinCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub stderr: f64,
    pub pass: bool,
}

/// (E ρ_t(X_t, Y_t)^p)^{1/p} under the parallel coupling against ρ_s(x, y) e^{−∫K}.
pub fn wasserstein_contraction_estimate<const D: usize, F: MetricFlow<D> + ?Sized + Sync>(
    flow: &F,
    bounds: &(dyn CurvatureBounds + Sync),
    x: &Vector<D>,
    y: &Vector<D>,
    s: f64,
    t: f64,
    p: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<WassersteinCheck> {
    if !(p >= 1.0) {
        return Err(crate::error::invalid("p must be at least 1"));
    }
    validate_window(s, t, n_steps)?;
    let rho_s = CoupledState::new(flow, s, *x, *y)?.rho;
    let rhs = rho_s * (-bounds.rz_integral(s, t)).exp();
    if rho_s == 0.0 {
        return Ok(WassersteinCheck { lhs: 0.0, rhs, stderr: 0.0, pass: true });
    }
    let coupler = Coupler::new(flow, CouplingMode::Parallel);
    let powers = run_paths(n_paths, seed, |stream| {
        let path = coupled_path(&coupler, *x, *y, s, t, n_steps, stream, None, false)?;
        Ok(path.states.last().expect("final state").rho.powf(p))
    })?;
    let m = Estimate::from_samples(&powers);
    let lhs = m.mean.max(0.0).powf(1.0 / p);
    // delta method for m^{1/p}
    let stderr = if m.mean > 0.0 { m.stderr * m.mean.powf(1.0 / p - 1.0) / p } else { 0.0 };
    Ok(WassersteinCheck { lhs, rhs, stderr, pass: lhs <= rhs + 3.0 * stderr })
}

/// Fraction of mirror-coupled pairs glued by time t (bridge glue on).
pub fn coalescence_rate<const D: usize, F: MetricFlow<D> + ?Sized + Sync>(
    coupler: &Coupler<'_, D, F>,
    x: &Vector<D>,
    y: &Vector<D>,
    s: f64,
    t: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<Estimate> {
    let glue_seed = derive_seed(seed, 0x6c75_65);
    let hits = run_paths(n_paths, seed, |stream| {
        let mut glue = RngStream::new(glue_seed, stream.index());
        let path = coupled_path(coupler, *x, *y, s, t, n_steps, stream, Some(&mut glue), false)?;
        Ok(if path.states.last().expect("final state").coalesced { 1.0 } else { 0.0 })
    })?;
    Ok(Estimate::from_samples(&hits))
}

/// Mean of ρ_t^p over a sample of coupled end states.
pub fn mean_distance_power<const D: usize>(ends: &[CoupledState<D>], p: f64) -> f64 {
    compensated_sum(ends.iter().map(|c| c.rho.powf(p))) / ends.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::IntervalFlow;
    use crate::diffusion::simulate_path;
    use crate::geometry::HalfPlaneBoundary;
    use crate::geometry::FlatFlow;
    use crate::rng::ZeroNoise;

    #[test]
    fn glued_state_moves_together() {
        let flow = FlatFlow::<2>::new();
        let x = Vector::<2>::new(0.3, 0.1);
        let cs = CoupledState::new(&flow, 0.0, x, x).unwrap();
        assert!(cs.coalesced);
        let xi = Vector::<2>::new(0.7, -0.2);
        for next in [coupled_step_parallel(&flow, &cs, 1e-3, &xi).unwrap(), coupled_step_mirror(&flow, &cs, 1e-3, &xi).unwrap()] {
            assert_eq!(next.first.x, next.second.x);
            assert_eq!(next.rho, 0.0);
        }
    }

    #[test]
    fn parallel_flat_distance_is_rigid() {
        let flow = FlatFlow::<2>::new();
        let mut cs = CoupledState::new(&flow, 0.0, Vector::<2>::new(0.0, 0.0), Vector::<2>::new(0.3, 0.4)).unwrap();
        let mut rng = RngStream::new(3, 0);
        for _ in 0..500 {
            cs = coupled_step_parallel(&flow, &cs, 1e-3, &rng.normal_vector()).unwrap();
            assert!((cs.rho - 0.5).abs() < 1e-13, "{}", cs.rho);
        }
    }

    #[test]
    fn mirror_flat_increment_is_twice_root_two() {
        let flow = FlatFlow::<2>::new();
        let cs = CoupledState::new(&flow, 0.0, Vector::<2>::new(0.0, 0.0), Vector::<2>::new(1.0, 0.0)).unwrap();
        let dt = 1e-4;
        let xi = Vector::<2>::new(0.8, -1.3);
        let c = Coupler::new(&flow, CouplingMode::Mirror);
        let out = c.step(&cs, dt, &xi, None).unwrap();
        // x moves by +0.8√(2Δt) toward y, y by −0.8√(2Δt): ρ shrinks by 2√(2Δt)·0.8
        let expected = 1.0 - 2.0 * (2.0 * dt).sqrt() * 0.8;
        assert!((out.state.rho - expected).abs() < 1e-12);
        assert!((out.drive - 0.8 * dt.sqrt()).abs() < 1e-15);
        assert_eq!(out.state.first.x[1], out.state.second.x[1]);
    }

    #[test]
    fn interval_parallel_growth_is_bounded_by_a_rho() {
        let a = 0.5;
        let flow = IntervalFlow::unit(a);
        let mut cs = CoupledState::new(&flow, 0.0, Vector::<1>::new(0.4), Vector::<1>::new(0.6)).unwrap();
        let dt = 1e-3;
        let mut rng = RngStream::new(9, 0);
        for _ in 0..100 {
            let next = coupled_step_parallel(&flow, &cs, dt, &rng.normal_vector()).unwrap();
            if next.first.l == cs.first.l && next.second.l == cs.second.l {
                assert!(next.rho - cs.rho <= a * cs.rho * dt + a * a * cs.rho * dt * dt, "{} {}", next.rho, cs.rho);
            }
            cs = next;
        }
    }

    #[test]
    fn first_marginal_is_untouched() {
        let flow = IntervalFlow::unit(0.5);
        let x = Vector::<1>::new(0.2);
        let path = simulate_path(&flow, x, 0.0, 0.2, 200, &mut RngStream::new(5, 1)).unwrap();
        for mode in [CouplingMode::Parallel, CouplingMode::Mirror] {
            let c = Coupler::new(&flow, mode);
            let cp = coupled_path(&c, x, Vector::<1>::new(0.7), 0.0, 0.2, 200, &mut RngStream::new(5, 1), None, true).unwrap();
            for (a, b) in path.states.iter().zip(&cp.states) {
                assert_eq!(a.x[0].to_bits(), b.first.x[0].to_bits());
                assert_eq!(a.l.to_bits(), b.first.l.to_bits());
            }
        }
    }

    #[test]
    fn glue_rule_keeps_paths_identical() {
        let flow = FlatFlow::<1>::with_boundary(HalfPlaneBoundary { axis: 0 });
        let c = Coupler::new(&flow, CouplingMode::Mirror);
        let cp = coupled_path(&c, Vector::<1>::new(1.0), Vector::<1>::new(1.02), 0.0, 1.0, 1000, &mut RngStream::new(1, 0), None, true)
            .unwrap();
        let glued = cp.states.iter().position(|s| s.coalesced).expect("pair at distance 0.02 glues within t = 1");
        for s in &cp.states[glued..] {
            assert_eq!(s.first.x, s.second.x);
        }
        for w in cp.states[glued..].windows(2) {
            assert_eq!(w[1].first.l - w[0].first.l, w[1].second.l - w[0].second.l);
        }
    }

    #[test]
    fn wasserstein_trivial_cases() {
        let flow = FlatFlow::<2>::new();
        struct Flat;
        impl CurvatureBounds for Flat {
            fn rz_lower(&self, _t: f64) -> f64 {
                0.0
            }
            fn ii_lower(&self, _t: f64) -> f64 {
                0.0
            }
            fn ric_z_lower(&self, _t: f64) -> f64 {
                0.0
            }
            fn dtg_upper(&self, _t: f64) -> f64 {
                0.0
            }
        }
        let x = Vector::<2>::new(0.0, 0.0);
        let same = wasserstein_contraction_estimate(&flow, &Flat, &x, &x, 0.0, 0.1, 2.0, 10, 10, 1).unwrap();
        assert_eq!((same.lhs, same.rhs), (0.0, 0.0));
        let y = Vector::<2>::new(0.3, 0.0);
        let w = wasserstein_contraction_estimate(&flow, &Flat, &x, &y, 0.0, 0.1, 2.0, 50, 20, 1).unwrap();
        assert!((w.lhs - 0.3).abs() < 1e-12 && (w.rhs - 0.3).abs() < 1e-15 && w.pass);
    }

    #[test]
    fn deterministic_mirror_pair_glues_on_overshoot() {
        let flow = FlatFlow::<1>::new();
        let c = Coupler::new(&flow, CouplingMode::Mirror).with_drift(&|_, x: &Vector<1>, y: &Vector<1>| (x - y).normalize() * 1.7);
        let cp = coupled_path(&c, Vector::<1>::new(0.0), Vector::<1>::new(0.1), 0.0, 0.1, 100, &mut ZeroNoise, None, true).unwrap();
        assert!(cp.states.last().unwrap().coalesced);
    }
}
