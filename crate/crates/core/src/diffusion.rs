//! Reflecting L_t-diffusion: Itô chart steps, boundary reflection with local time, horizontal
//! frame transport, and Monte-Carlo semigroup estimates.

use crate::geometry::{christoffel, MetricFlow, ScalarField};
use crate::linalg::{self, orthonormal_frame, renormalize_frame, spd_inverse};
use crate::rng::{NoiseSource, RngStream};
use crate::stats::{par_indexed, Estimate};
use crate::{Error, Matrix, Result, Vector};
use std::io::Write;

/// One reflecting path at a grid time: position, g_t-orthonormal frame and local time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionState<const D: usize> {
    pub t: f64,
    pub x: Vector<D>,
    pub u: Matrix<D>,
    pub l: f64,
}

impl<const D: usize> DiffusionState<D> {
    /// Start at x with the canonical frame g^{-1/2}.
    pub fn new<F: MetricFlow<D> + ?Sized>(flow: &F, t: f64, x: Vector<D>) -> Result<Self> {
        if let Some(b) = flow.boundary() {
            let level = b.level(&x);
            if level < -1e-12 {
                return Err(Error::InvalidArgument(format!("start point outside M (b = {level:e})")));
            }
        }
        if !flow.in_chart(&x) {
            return Err(Error::LeftChart { t, x: x.iter().copied().collect() });
        }
        let u = orthonormal_frame(&flow.metric(t, &x), t, &x)?;
        Ok(DiffusionState { t, x, u, l: 0.0 })
    }

    /// ‖uᵀ g u − I‖_F.
    pub fn frame_defect<F: MetricFlow<D> + ?Sized>(&self, flow: &F) -> f64 {
        let g = flow.metric(self.t, &self.x);
        (self.u.transpose() * g * self.u - Matrix::<D>::identity()).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReflectionScheme {
    /// Reflect the overshoot through the boundary point; dl = g-length of the full push.
    #[default]
    Mirror,
    /// Project the overshoot onto the boundary; dl = g-length of the projection.
    Projection,
}

/// Everything one step produced, for consumers that track more than the state.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome<const D: usize> {
    pub state: DiffusionState<D>,
    pub dl: f64,
    /// Boundary point hit during the step, when dl > 0.
    pub contact: Option<Vector<D>>,
    /// ‖uᵀgu − I‖_F before renormalization.
    pub residual: f64,
}

/// Newton projection of y onto {b = 0} along G = g^{-1}∇b.
pub(crate) fn project<const D: usize, F: MetricFlow<D> + ?Sized>(flow: &F, t: f64, y: &Vector<D>) -> Result<Vector<D>> {
    let b = flow.boundary().ok_or_else(|| crate::error::invalid("no boundary"))?;
    let mut p = *y;
    let mut level = b.level(&p);
    for _ in 0..50 {
        if level.abs() <= 1e-14 {
            return Ok(p);
        }
        let grad = b.gradient(&p);
        let dir = spd_inverse(&flow.metric(t, &p), t, &p)? * grad;
        let slope = grad.dot(&dir);
        if !(slope.abs() > 1e-300) {
            return Err(Error::ProjectionDiverged { level });
        }
        p -= dir * (level / slope);
        level = b.level(&p);
        if !level.is_finite() {
            return Err(Error::ProjectionDiverged { level });
        }
    }
    if level.abs() <= 1e-11 {
        Ok(p)
    } else {
        Err(Error::ProjectionDiverged { level })
    }
}

/// Bring a proposal back into M̄. Returns (point, dl, boundary contact point).
pub fn reflect_with<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    t: f64,
    y: &Vector<D>,
    scheme: ReflectionScheme,
) -> Result<(Vector<D>, f64, Option<Vector<D>>)> {
    let b = match flow.boundary() {
        Some(b) => b,
        None => return Ok((*y, 0.0, None)),
    };
    if b.level(y) >= 0.0 {
        return Ok((*y, 0.0, None));
    }
    let p = project(flow, t, y)?;
    let g = flow.metric(t, &p);
    let push = linalg::norm(&g, &(p - y));
    match scheme {
        ReflectionScheme::Projection => Ok((p, push, Some(p))),
        ReflectionScheme::Mirror => {
            let mut x = p * 2.0 - y;
            let mut dl = 2.0 * push;
            for _ in 0..8 {
                if b.level(&x) >= 0.0 {
                    return Ok((x, dl, Some(p)));
                }
                let q = project(flow, t, &x)?;
                let extra = linalg::norm(&flow.metric(t, &q), &(q - x));
                x = q * 2.0 - x;
                dl += 2.0 * extra;
            }
            Ok((p, push, Some(p)))
        }
    }
}

/// Projection-to-wall reflection: (point on M̄, g_t-length of the displacement).
pub fn reflect_step<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    t: f64,
    x_proposed: &Vector<D>,
    _u: &Matrix<D>,
) -> Result<(Vector<D>, f64)> {
    let (x, dl, _) = reflect_with(flow, t, x_proposed, ReflectionScheme::Projection)?;
    Ok((x, dl))
}

/// Transport the frame along x → x_new (Heun), apply the vertical correction −½g⁻¹∂_t g u Δt
/// and renormalize against g at (t_new, x_new). Returns the frame and the pre-fix residual.
pub fn evolve_frame<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    before: &DiffusionState<D>,
    t_new: f64,
    x_new: &Vector<D>,
) -> Result<(Matrix<D>, f64)> {
    let dx = x_new - before.x;
    let dt = t_new - before.t;
    let a0 = christoffel(flow, before.t, &before.x)?.along(&dx);
    let u = before.u;
    let pred = u - a0 * u;
    let a1 = christoffel(flow, t_new, x_new)?.along(&dx);
    let mut u_new = u - (a0 * u + a1 * pred) * 0.5;
    if dt != 0.0 {
        let tm = before.t + 0.5 * dt;
        let g = flow.metric(tm, x_new);
        let corr = spd_inverse(&g, tm, x_new)? * flow.metric_dt(tm, x_new);
        u_new -= corr * u_new * (0.5 * dt);
    }
    let g_new = flow.metric(t_new, x_new);
    renormalize_frame(&u_new, &g_new).ok_or(Error::SingularMetric { t: t_new, x: x_new.iter().copied().collect() })
}

/// Time stepper for (possibly ψ²-weighted) reflecting diffusions.
pub struct Stepper<'a, const D: usize, F: ?Sized> {
    pub flow: &'a F,
    pub scheme: ReflectionScheme,
    /// Variable diffusion coefficient: the generator becomes ψ²(Δ + Z).
    pub psi: Option<&'a dyn ScalarField<D>>,
}

impl<'a, const D: usize, F: MetricFlow<D> + ?Sized> Stepper<'a, D, F> {
    pub fn new(flow: &'a F) -> Self {
        Stepper { flow, scheme: ReflectionScheme::default(), psi: None }
    }

    pub fn with_scheme(mut self, scheme: ReflectionScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_psi(mut self, psi: &'a dyn ScalarField<D>) -> Self {
        self.psi = Some(psi);
        self
    }

    pub fn psi_at(&self, t: f64, x: &Vector<D>) -> f64 {
        self.psi.map_or(1.0, |p| p.value(t, x))
    }

    /// Unreflected Itô proposal x + √(2Δt)ψuξ + ψ²ZΔt − ψ²Γ(uuᵀ)Δt.
    pub fn propose(&self, state: &DiffusionState<D>, dt: f64, xi: &Vector<D>) -> Result<Vector<D>> {
        self.propose_with_frame(state, &state.u, dt, xi)
    }

    /// Proposal driven through an arbitrary frame (used by couplings).
    pub fn propose_with_frame(
        &self,
        state: &DiffusionState<D>,
        u: &Matrix<D>,
        dt: f64,
        xi: &Vector<D>,
    ) -> Result<Vector<D>> {
        let (t, x) = (state.t, &state.x);
        let psi = self.psi_at(t, x);
        let gamma = christoffel(self.flow, t, x)?;
        let uut = state.u * state.u.transpose();
        let drift = self.flow.drift(t, x) - gamma.trace_with(&uut);
        Ok(x + u * xi * ((2.0 * dt).sqrt() * psi) + drift * (psi * psi * dt))
    }

    fn check_time(&self, t_new: f64) -> Result<()> {
        let horizon = self.flow.horizon();
        if !(t_new < horizon) {
            return Err(Error::HorizonExceeded { t: t_new, horizon });
        }
        Ok(())
    }

    /// Reflect a proposal and update the frame and local time.
    pub fn finish(&self, state: &DiffusionState<D>, dt: f64, proposal: &Vector<D>) -> Result<StepOutcome<D>> {
        let t_new = state.t + dt;
        self.check_time(t_new)?;
        let (x_new, dl, contact) = reflect_with(self.flow, t_new, proposal, self.scheme)?;
        if !self.flow.in_chart(&x_new) || !x_new.iter().all(|c| c.is_finite()) {
            return Err(Error::LeftChart { t: t_new, x: x_new.iter().copied().collect() });
        }
        let (u, residual) = evolve_frame(self.flow, state, t_new, &x_new)?;
        Ok(StepOutcome { state: DiffusionState { t: t_new, x: x_new, u, l: state.l + dl }, dl, contact, residual })
    }

    pub fn step(&self, state: &DiffusionState<D>, dt: f64, xi: &Vector<D>) -> Result<StepOutcome<D>> {
        let proposal = self.propose(state, dt, xi)?;
        self.finish(state, dt, &proposal)
    }

    /// Run n steps on [s, t], calling `visit(step index, noise, outcome)` after each.
    pub fn drive<N: NoiseSource>(
        &self,
        x0: Vector<D>,
        s: f64,
        t: f64,
        n_steps: usize,
        noise: &mut N,
        mut visit: impl FnMut(usize, &Vector<D>, &StepOutcome<D>) -> Result<()>,
    ) -> Result<DiffusionState<D>> {
        validate_window(s, t, n_steps)?;
        let dt = (t - s) / n_steps as f64;
        let mut state = DiffusionState::new(self.flow, s, x0)?;
        for k in 0..n_steps {
            let xi = noise.normal_vector::<D>();
            let mut out = self.step(&state, dt, &xi)?;
            if k + 1 == n_steps {
                // pin the grid end exactly
                out.state.t = t;
            }
            visit(k, &xi, &out)?;
            state = out.state;
        }
        Ok(state)
    }
}

pub(crate) fn validate_window(s: f64, t: f64, n_steps: usize) -> Result<()> {
    if n_steps == 0 {
        return Err(crate::error::invalid("n_steps must be at least 1"));
    }
    if !(t > s) {
        return Err(crate::error::invalid("need s < t"));
    }
    Ok(())
}

/// One Itô step with mirror reflection and frame update.
pub fn ito_step<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    state: &DiffusionState<D>,
    dt: f64,
    xi: &Vector<D>,
) -> Result<DiffusionState<D>> {
    if !(dt > 0.0) {
        return Err(crate::error::invalid("dt must be positive"));
    }
    Ok(Stepper::new(flow).step(state, dt, xi)?.state)
}

/// A recorded path: grid times, states, Brownian normals used, local-time increments.
#[derive(Debug, Clone)]
pub struct PathSample<const D: usize> {
    pub times: Vec<f64>,
    pub states: Vec<DiffusionState<D>>,
    pub noise: Vec<Vector<D>>,
    pub dl: Vec<f64>,
    /// Frame residual before each renormalization.
    pub residuals: Vec<f64>,
}

impl<const D: usize> PathSample<D> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &DiffusionState<D> {
        self.states.last().expect("paths hold the initial state")
    }

    /// Columns: step, t, x0.., l, dl. Row 0 is the initial state with dl = 0.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string(), "t".to_string()];
        header.extend((0..D).map(|i| format!("x{i}")));
        header.push("l".into());
        header.push("dl".into());
        w.write_record(&header).map_err(io_err)?;
        for (k, st) in self.states.iter().enumerate() {
            let mut row = vec![k.to_string(), fmt(st.t)];
            row.extend(st.x.iter().map(|v| fmt(*v)));
            row.push(fmt(st.l));
            row.push(fmt(if k == 0 { 0.0 } else { self.dl[k - 1] }));
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush().map_err(|e| io_err(e.into()))?;
        Ok(())
    }
}

pub(crate) fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

fn io_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv output failed: {e}"))
}

/// Simulate a full path with the default stepper.
pub fn simulate_path<const D: usize, F: MetricFlow<D> + ?Sized, N: NoiseSource>(
    flow: &F,
    x0: Vector<D>,
    s: f64,
    t: f64,
    n_steps: usize,
    noise: &mut N,
) -> Result<PathSample<D>> {
    simulate_path_with(&Stepper::new(flow), x0, s, t, n_steps, noise)
}

pub fn simulate_path_with<const D: usize, F: MetricFlow<D> + ?Sized, N: NoiseSource>(
    stepper: &Stepper<'_, D, F>,
    x0: Vector<D>,
    s: f64,
    t: f64,
    n_steps: usize,
    noise: &mut N,
) -> Result<PathSample<D>> {
    let start = DiffusionState::new(stepper.flow, s, x0)?;
    let mut sample = PathSample {
        times: vec![s],
        states: vec![start],
        noise: Vec::with_capacity(n_steps),
        dl: Vec::with_capacity(n_steps),
        residuals: Vec::with_capacity(n_steps),
    };
    stepper.drive(x0, s, t, n_steps, noise, |_, xi, out| {
        sample.times.push(out.state.t);
        sample.states.push(out.state);
        sample.noise.push(*xi);
        sample.dl.push(out.dl);
        sample.residuals.push(out.residual);
        Ok(())
    })?;
    Ok(sample)
}

/// Run `n_paths` independent path functionals in index order with the failure policy: chart
/// exits are resampled on the continuing stream, other failures are counted, and the batch fails
/// when more than 0.1% of paths error.
pub fn run_paths<T, G>(n_paths: usize, seed: u64, body: G) -> Result<Vec<T>>
where
    T: Send,
    G: Fn(&mut RngStream) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = par_indexed(n_paths, |i| {
        let mut stream = RngStream::new(seed, i as u64);
        let mut last = None;
        for _ in 0..16 {
            match body(&mut stream) {
                Ok(v) => return Ok(v),
                Err(e @ Error::LeftChart { .. }) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("loop ran"))
    });
    let total = results.len();
    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed > 0 && (failed as f64) > 1e-3 * total as f64 {
        let first = results.iter().find_map(|r| r.as_ref().err()).map(|e| e.to_string()).unwrap_or_default();
        return Err(Error::TooManyPathFailures { failed, total, first });
    }
    Ok(results.into_iter().filter_map(|r| r.ok()).collect())
}

/// Monte-Carlo P_{s,t}f(x) with standard error.
pub fn mc_semigroup<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    f: &(dyn Fn(&Vector<D>) -> f64 + Sync),
    s: f64,
    t: f64,
    x: &Vector<D>,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<Estimate> {
    mc_semigroup_with(&Stepper::new(flow), f, s, t, x, n_paths, n_steps, seed)
}

pub fn mc_semigroup_with<const D: usize, F: MetricFlow<D> + ?Sized>(
    stepper: &Stepper<'_, D, F>,
    f: &(dyn Fn(&Vector<D>) -> f64 + Sync),
    s: f64,
    t: f64,
    x: &Vector<D>,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<Estimate>
where
    F: Sync,
{
    let values = terminal_values(stepper, &[f], s, t, x, n_paths, n_steps, seed)?;
    Ok(Estimate::from_samples(&values[0]))
}

/// Several functionals of X_t on the same paths; result `[k][path]`.
pub fn terminal_values<const D: usize, F: MetricFlow<D> + ?Sized>(
    stepper: &Stepper<'_, D, F>,
    fs: &[&(dyn Fn(&Vector<D>) -> f64 + Sync)],
    s: f64,
    t: f64,
    x: &Vector<D>,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>>
where
    F: Sync,
{
    validate_window(s, t, n_steps)?;
    let ends = run_paths(n_paths, seed, |stream| stepper.drive(*x, s, t, n_steps, stream, |_, _, _| Ok(())))?;
    Ok(fs.iter().map(|f| ends.iter().map(|st| f(&st.x)).collect()).collect())
}

/// Terminal states of n paths (after the failure policy).
pub fn terminal_states<const D: usize, F: MetricFlow<D> + ?Sized + Sync>(
    stepper: &Stepper<'_, D, F>,
    s: f64,
    t: f64,
    x: &Vector<D>,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<Vec<DiffusionState<D>>> {
    run_paths(n_paths, seed, |stream| stepper.drive(*x, s, t, n_steps, stream, |_, _, _| Ok(())))
}
