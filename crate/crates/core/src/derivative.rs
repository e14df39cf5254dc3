//! The damped process Q_{s,t} and Bismut-type representations of ∇P_{s,t}f.

use crate::catalog::CurvatureBounds;
use crate::diffusion::{run_paths, validate_window, DiffusionState, StepOutcome, Stepper};
use crate::geometry::{inward_normal, r_z_form, second_fundamental_matrix, MetricFlow};
use crate::linalg::{self, operator_norm, renormalize_frame};
use crate::rng::NoiseSource;
use crate::stats::Estimate;
use crate::{Error, Matrix, Result, Vector};

/// Q together with its norm certificate exp(−∫K dr − ∫σ dl).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QMatrix<const D: usize> {
    pub q: Matrix<D>,
    pub certificate: f64,
}

impl<const D: usize> Default for QMatrix<D> {
    fn default() -> Self {
        QMatrix { q: Matrix::<D>::identity(), certificate: 1.0 }
    }
}

impl<const D: usize> QMatrix<D> {
    pub fn norm(&self) -> f64 {
        operator_norm(&self.q)
    }

    pub fn within_certificate(&self) -> bool {
        self.norm() <= self.certificate + 1e-8
    }
}

/// R^Z in frame coordinates: uᵀ R u.
pub fn rz_frame<const D: usize, F: MetricFlow<D> + ?Sized>(flow: &F, t: f64, x: &Vector<D>, u: &Matrix<D>) -> Result<Matrix<D>> {
    Ok(u.transpose() * r_z_form(flow, t, x)? * u)
}

/// One step of Q: interior damping by R^Z(u) over Δt, then at a boundary contact p the shape
/// operator over dl followed by removal of the normal range. `before` supplies (t, x, u) for the
/// interior part; `after` supplies the frame carried to the contact.
pub fn q_step<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    bounds: &dyn CurvatureBounds,
    qm: &QMatrix<D>,
    before: &DiffusionState<D>,
    dt: f64,
    contact: Option<(&Vector<D>, f64, &Matrix<D>)>,
) -> Result<QMatrix<D>> {
    let r = rz_frame(flow, before.t, &before.x, &before.u)?;
    let mut q = (Matrix::<D>::identity() - r * dt) * qm.q;
    let mut cert = qm.certificate * (-bounds.rz_lower(before.t) * dt).exp();
    if let Some((p, dl, u_after)) = contact {
        if dl > 0.0 {
            let t_new = before.t + dt;
            let g = flow.metric(t_new, p);
            let (up, _) = renormalize_frame(u_after, &g)
                .ok_or(Error::SingularMetric { t: t_new, x: p.iter().copied().collect() })?;
            let n = inward_normal(flow, t_new, p)?;
            // n̂ = u⁻¹N = uᵀ g N
            let nh = up.transpose() * g * n;
            let nh = nh / nh.norm();
            let proj = Matrix::<D>::identity() - nh * nh.transpose();
            let ii = if D > 1 {
                let b = second_fundamental_matrix(flow, t_new, p)?;
                linalg::symmetrize(&(proj * (up.transpose() * b * up) * proj))
            } else {
                Matrix::<D>::zeros()
            };
            q = proj * (Matrix::<D>::identity() - ii * dl) * q;
            cert *= (-bounds.ii_lower(t_new) * dl).exp();
        }
    }
    Ok(QMatrix { q, certificate: cert })
}

/// g-distance to ∂M along the Newton projection, with the outward direction g⁻¹∇b there.
fn boundary_gap<const D: usize, F: MetricFlow<D> + ?Sized>(flow: &F, t: f64, x: &Vector<D>) -> Option<(f64, Vector<D>)> {
    let b = flow.boundary()?;
    let p = crate::diffusion::project(flow, t, x).ok()?;
    let g = flow.metric(t, x);
    let dir = linalg::spd_inverse(&g, t, x).ok()? * b.gradient(&p);
    let len = linalg::norm(&g, &dir);
    if !(len > 0.0) {
        return None;
    }
    Some((linalg::norm(&g, &(p - x)), dir / len))
}

/// Probability that the continuous path touched ∂M between two interior grid points (Brownian
/// bridge with normal variance 2ψ²Δt), with the normal in frame coordinates at the later point.
pub fn bridge_crossing<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    before: &DiffusionState<D>,
    after: &DiffusionState<D>,
    psi: f64,
) -> Option<(f64, Vector<D>)> {
    let (d0, _) = boundary_gap(flow, before.t, &before.x)?;
    let (d1, n) = boundary_gap(flow, after.t, &after.x)?;
    let dt = after.t - before.t;
    if !(d0 > 0.0 && d1 > 0.0 && dt > 0.0) {
        return None;
    }
    let p = (-d0 * d1 / (psi * psi * dt)).exp();
    if p < 1e-300 {
        return None;
    }
    let nh = after.u.transpose() * flow.metric(after.t, &after.x) * n;
    Some((p, nh / nh.norm()))
}

/// Cut-off functions h on [s, t] with h(s) = 0 and h(t) = 1.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Ramp {
    #[default]
    Linear,
    /// 3τ² − 2τ³.
    Cubic,
}

impl Ramp {
    pub fn value(&self, s: f64, t: f64, r: f64) -> f64 {
        let tau = ((r - s) / (t - s)).clamp(0.0, 1.0);
        match self {
            Ramp::Linear => tau,
            Ramp::Cubic => tau * tau * (3.0 - 2.0 * tau),
        }
    }
}

/// A test function with its chart differential.
pub trait Observable<const D: usize>: Sync {
    fn value(&self, x: &Vector<D>) -> f64;
    fn grad(&self, x: &Vector<D>) -> Vector<D>;
}

/// Observable built from two closures.
pub struct Smooth<V, G>(pub V, pub G);

impl<const D: usize, V, G> Observable<D> for Smooth<V, G>
where
    V: Fn(&Vector<D>) -> f64 + Sync,
    G: Fn(&Vector<D>) -> Vector<D> + Sync,
{
    fn value(&self, x: &Vector<D>) -> f64 {
        (self.0)(x)
    }
    fn grad(&self, x: &Vector<D>) -> Vector<D> {
        (self.1)(x)
    }
}

/// Per-path quantities behind the gradient estimators.
#[derive(Debug, Clone, Copy)]
pub struct GradientSample<const D: usize> {
    pub end: DiffusionState<D>,
    pub f_end: f64,
    /// |∇^t f|_t(X_t).
    pub grad_norm_end: f64,
    /// Qᵀ u_t⁻¹ ∇^t f(X_t).
    pub covariant: Vector<D>,
    /// (1/√2) f(X_t) ∫ h' Qᵀ dB.
    pub bismut: Vector<D>,
    /// ∫K dr + ∫σ dl along the path (log of the inverse certificate).
    pub log_weight: f64,
    pub max_norm_ratio: f64,
    pub violations: usize,
}

/// Replace the unobserved wall touch by its conditional expectation: Q ← (I − p n̂n̂ᵀ)Q.
fn damp_crossing<const D: usize, F: MetricFlow<D> + ?Sized>(
    stepper: &Stepper<'_, D, F>,
    qm: &mut QMatrix<D>,
    before: &DiffusionState<D>,
    after: &DiffusionState<D>,
) {
    let psi = stepper.psi_at(before.t, &before.x);
    if let Some((p, n)) = bridge_crossing(stepper.flow, before, after, psi) {
        qm.q = (Matrix::<D>::identity() - n * n.transpose() * p) * qm.q;
    }
}

/// Simulate one path with its Q-process.
pub fn gradient_path<const D: usize, F: MetricFlow<D> + ?Sized, N: NoiseSource>(
    stepper: &Stepper<'_, D, F>,
    bounds: &dyn CurvatureBounds,
    f: &dyn Observable<D>,
    s: f64,
    t: f64,
    x: &Vector<D>,
    n_steps: usize,
    ramp: Ramp,
    noise: &mut N,
) -> Result<GradientSample<D>> {
    let flow = stepper.flow;
    let dt = (t - s) / n_steps as f64;
    let sq = dt.sqrt();
    let mut qm = QMatrix::<D>::default();
    let mut prev = DiffusionState::new(flow, s, *x)?;
    let mut integral = Vector::<D>::zeros();
    let mut max_ratio: f64 = 1.0;
    let mut violations = 0;
    let end = stepper.drive(*x, s, t, n_steps, noise, |k, xi, out: &StepOutcome<D>| {
        let r0 = s + k as f64 * dt;
        let dh = ramp.value(s, t, r0 + dt) - ramp.value(s, t, r0);
        integral += qm.q.transpose() * xi * (dh / dt * sq);
        let contact = out.contact.as_ref().map(|p| (p, out.dl, &out.state.u));
        qm = q_step(flow, bounds, &qm, &prev, dt, contact)?;
        if contact.is_none() {
            damp_crossing(stepper, &mut qm, &prev, &out.state);
        }
        let n = qm.norm();
        max_ratio = max_ratio.max(n / qm.certificate);
        if n > qm.certificate + 1e-8 {
            violations += 1;
        }
        prev = out.state;
        Ok(())
    })?;
    let f_end = f.value(&end.x);
    let df = f.grad(&end.x);
    let g = flow.metric(end.t, &end.x);
    let grad_norm_end = linalg::norm(&g, &(crate::linalg::spd_inverse(&g, end.t, &end.x)? * df));
    Ok(GradientSample {
        end,
        f_end,
        grad_norm_end,
        covariant: qm.q.transpose() * (end.u.transpose() * df),
        bismut: integral * (f_end / std::f64::consts::SQRT_2),
        log_weight: -qm.certificate.ln(),
        max_norm_ratio: max_ratio,
        violations,
    })
}

/// Gradient estimate in u_s-frame components.
#[derive(Debug, Clone)]
pub struct GradientEstimate<const D: usize> {
    pub value: Vector<D>,
    pub stderr: Vector<D>,
    pub n: usize,
    pub certificate_violations: usize,
    pub max_norm_ratio: f64,
}

impl<const D: usize> GradientEstimate<D> {
    fn from_vectors(v: &[Vector<D>], violations: usize, ratio: f64) -> Self {
        let mut value = Vector::<D>::zeros();
        let mut stderr = Vector::<D>::zeros();
        for i in 0..D {
            let comp: Vec<f64> = v.iter().map(|w| w[i]).collect();
            let e = Estimate::from_samples(&comp);
            value[i] = e.mean;
            stderr[i] = e.stderr;
        }
        GradientEstimate { value, stderr, n: v.len(), certificate_violations: violations, max_norm_ratio: ratio }
    }

    pub fn component(&self, i: usize) -> Estimate {
        Estimate { mean: self.value[i], stderr: self.stderr[i], n: self.n }
    }
}

/// Both estimators and the raw samples from one batch of paths.
pub struct GradientBatch<const D: usize> {
    pub samples: Vec<GradientSample<D>>,
}

impl<const D: usize> GradientBatch<D> {
    fn totals(&self) -> (usize, f64) {
        let v = self.samples.iter().map(|s| s.violations).sum();
        let r = self.samples.iter().map(|s| s.max_norm_ratio).fold(0.0, f64::max);
        (v, r)
    }

    pub fn bismut(&self) -> GradientEstimate<D> {
        let (v, r) = self.totals();
        GradientEstimate::from_vectors(&self.samples.iter().map(|s| s.bismut).collect::<Vec<_>>(), v, r)
    }

    pub fn covariant(&self) -> GradientEstimate<D> {
        let (v, r) = self.totals();
        GradientEstimate::from_vectors(&self.samples.iter().map(|s| s.covariant).collect::<Vec<_>>(), v, r)
    }

    /// Paired difference bismut − covariant, per component.
    pub fn difference(&self) -> GradientEstimate<D> {
        let (v, r) = self.totals();
        GradientEstimate::from_vectors(&self.samples.iter().map(|s| s.bismut - s.covariant).collect::<Vec<_>>(), v, r)
    }

    pub fn map(&self, g: impl Fn(&GradientSample<D>) -> f64) -> Estimate {
        Estimate::from_samples(&self.samples.iter().map(g).collect::<Vec<_>>())
    }
}

pub fn gradient_batch<const D: usize, F: MetricFlow<D> + ?Sized + Sync>(
    stepper: &Stepper<'_, D, F>,
    bounds: &(dyn CurvatureBounds + Sync),
    f: &dyn Observable<D>,
    s: f64,
    t: f64,
    x: &Vector<D>,
    n_paths: usize,
    n_steps: usize,
    ramp: Ramp,
    seed: u64,
) -> Result<GradientBatch<D>> {
    validate_window(s, t, n_steps)?;
    let samples = run_paths(n_paths, seed, |stream| gradient_path(stepper, bounds, f, s, t, x, n_steps, ramp, stream))?;
    Ok(GradientBatch { samples })
}

/// (1/√2) E[f(X_t) ∫_s^t h'(r) Qᵀ_{s,r} dB_r].
pub fn bismut_gradient<const D: usize, F: MetricFlow<D> + ?Sized + Sync>(
    flow: &F,
    bounds: &(dyn CurvatureBounds + Sync),
    f: &dyn Observable<D>,
    s: f64,
    t: f64,
    x: &Vector<D>,
    n_paths: usize,
    n_steps: usize,
    ramp: Ramp,
    seed: u64,
) -> Result<GradientEstimate<D>> {
    Ok(gradient_batch(&Stepper::new(flow), bounds, f, s, t, x, n_paths, n_steps, ramp, seed)?.bismut())
}

/// E[Qᵀ_{s,t} u_t⁻¹ ∇^t f(X_t)].
pub fn covariant_gradient<const D: usize, F: MetricFlow<D> + ?Sized + Sync>(
    flow: &F,
    bounds: &(dyn CurvatureBounds + Sync),
    f: &dyn Observable<D>,
    s: f64,
    t: f64,
    x: &Vector<D>,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<GradientEstimate<D>> {
    Ok(gradient_batch(&Stepper::new(flow), bounds, f, s, t, x, n_paths, n_steps, Ramp::Linear, seed)?.covariant())
}

/// Axis-aligned spatial box; the space-time domain is [s, t] × box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceBox<const D: usize> {
    pub lo: Vector<D>,
    pub hi: Vector<D>,
}

impl<const D: usize> SpaceBox<D> {
    /// Chart distance to the faces (negative outside).
    pub fn depth(&self, x: &Vector<D>) -> f64 {
        (0..D).map(|i| (x[i] - self.lo[i]).min(self.hi[i] - x[i])).fold(f64::INFINITY, f64::min)
    }
}

/// Source of P_{r,t} f at the stopping point.
pub enum InnerSemigroup<'a, const D: usize> {
    /// Deterministic values, e.g. interpolated oracle slices.
    Table(&'a (dyn Fn(f64, &Vector<D>) -> f64 + Sync)),
    /// Nested Monte-Carlo with `paths` inner paths per stop and a total step budget.
    Nested { paths: usize, cost_cap: u64 },
}

/// Tuning of the adapted ramp h(r) = min(1, ∫_s^r [1/(t_pl − u) + κ·depth(X_u)^{−2}] du).
#[derive(Debug, Clone, Copy)]
pub struct LocalRamp {
    /// Fraction of [s, t] after which h is pinned at 1.
    pub plateau: f64,
    pub kappa: f64,
}

impl Default for LocalRamp {
    fn default() -> Self {
        LocalRamp { plateau: 0.5, kappa: 0.1 }
    }
}

/// Localized Bismut formula: the ramp saturates before the path leaves the box, and the
/// remaining time is covered by the inner semigroup at the saturation point.
pub fn local_bismut_gradient<const D: usize, F: MetricFlow<D> + ?Sized + Sync>(
    flow: &F,
    bounds: &(dyn CurvatureBounds + Sync),
    f: &dyn Observable<D>,
    s: f64,
    t: f64,
    x: &Vector<D>,
    domain: &SpaceBox<D>,
    n_paths: usize,
    n_steps: usize,
    ramp: LocalRamp,
    inner: &InnerSemigroup<'_, D>,
    seed: u64,
) -> Result<GradientEstimate<D>> {
    validate_window(s, t, n_steps)?;
    if !(domain.depth(x) > 0.0) {
        return Err(Error::InvalidArgument("start point must lie strictly inside the domain".into()));
    }
    if !(ramp.plateau > 0.0 && ramp.plateau <= 1.0) {
        return Err(Error::InvalidArgument("plateau fraction must lie in (0, 1]".into()));
    }
    if let InnerSemigroup::Nested { paths, cost_cap } = inner {
        let requested = (n_paths as u64) * (*paths as u64) * (n_steps as u64);
        if requested > *cost_cap {
            return Err(Error::NestedBudgetExceeded { requested, cap: *cost_cap });
        }
    }
    let dt = (t - s) / n_steps as f64;
    let t_pl = s + ramp.plateau * (t - s);
    let stepper = Stepper::new(flow);
    let samples = run_paths(n_paths, seed, |stream| {
        let mut qm = QMatrix::<D>::default();
        let mut state = DiffusionState::new(flow, s, *x)?;
        let mut h = 0.0;
        let mut integral = Vector::<D>::zeros();
        let mut k = 0;
        while h < 1.0 && k < n_steps {
            let r = s + k as f64 * dt;
            let depth = domain.depth(&state.x);
            let rate = if depth <= 0.0 || r + dt >= t_pl {
                f64::INFINITY
            } else {
                1.0 / (t_pl - r) + ramp.kappa / (depth * depth)
            };
            let dh = (rate * dt).min(1.0 - h);
            let xi = stream.normal_vector::<D>();
            integral += qm.q.transpose() * xi * (dh / dt.sqrt());
            h += dh;
            let out = stepper.step(&state, dt, &xi)?;
            let contact = out.contact.as_ref().map(|p| (p, out.dl, &out.state.u));
            qm = q_step(flow, bounds, &qm, &state, dt, contact)?;
            if contact.is_none() {
                damp_crossing(&stepper, &mut qm, &state, &out.state);
            }
            state = out.state;
            k += 1;
        }
        let stop_value = if k >= n_steps {
            f.value(&state.x)
        } else {
            match inner {
                InnerSemigroup::Table(p) => p(state.t, &state.x),
                InnerSemigroup::Nested { paths, .. } => {
                    let inner_seed = crate::rng::derive_seed(stream.seed(), stream.index());
                    let rem = n_steps - k;
                    let ends = run_paths(*paths, inner_seed, |s2| {
                        stepper.drive(state.x, state.t, t, rem, s2, |_, _, _| Ok(()))
                    })?;
                    crate::stats::compensated_sum(ends.iter().map(|e| f.value(&e.x))) / ends.len() as f64
                }
            }
        };
        Ok(integral * (stop_value / std::f64::consts::SQRT_2))
    })?;
    Ok(GradientEstimate::from_vectors(&samples, 0, f64::NAN))
}
