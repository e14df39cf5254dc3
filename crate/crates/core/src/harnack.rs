//! Girsanov coupling with an attracting drift: the ξ schedule, the density ledger, entropy and
//! moment bounds, and log/power Harnack checks (constant and variable diffusion coefficient,
//! and the conformal route for non-convex boundaries).

use crate::catalog::{CurvatureBounds, HalfPlaneBump, IntervalFlow};
use crate::diffusion::{run_paths, terminal_values, validate_window, DiffusionState, Stepper};
use crate::geometry::{conformal_flow, link, ConformalFlow, Link, MetricFlow, ScalarField};
use crate::oracle::{neumann_heat_march, Grid1D, OracleSolution};
use crate::quad;
use crate::rng::NoiseSource;
use crate::stats::{combined_stderr, Estimate};
use crate::{Error, Matrix, Result, Vector};

/// Cells of the cached quadrature tables.
const XI_CELLS: usize = 2048;

/// ξ_t = (2−θ) e^{−2∫_S^t K} ∫_t^T e^{2∫_S^r K} dr on [S, T), so that 2 + 2Kξ + ξ' = θ.
pub struct XiSchedule {
    pub theta: f64,
    pub start: f64,
    pub horizon: f64,
    k: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    h: f64,
    /// ∫_S^{t_i} K
    cum_k: Vec<f64>,
    /// ∫_{t_i}^T e^{2∫_S^r K} dr
    tail: Vec<f64>,
}

pub fn xi_schedule(theta: f64, k: impl Fn(f64) -> f64 + Send + Sync + 'static, start: f64, horizon: f64) -> Result<XiSchedule> {
    if !(theta > 0.0 && theta < 2.0) {
        return Err(Error::ThetaOutOfRange(theta));
    }
    if !(horizon > start) {
        return Err(crate::error::invalid("xi schedule needs S < T"));
    }
    let h = (horizon - start) / XI_CELLS as f64;
    let mut sched = XiSchedule {
        theta,
        start,
        horizon,
        k: Box::new(k),
        h,
        cum_k: vec![0.0; XI_CELLS + 1],
        tail: vec![0.0; XI_CELLS + 1],
    };
    for i in 0..XI_CELLS {
        let a = start + i as f64 * h;
        sched.cum_k[i + 1] = sched.cum_k[i] + quad::gauss_legendre(&|r| (sched.k)(r), a, a + h, 1);
    }
    for i in (0..XI_CELLS).rev() {
        let a = start + i as f64 * h;
        sched.tail[i] = sched.tail[i + 1] + quad::gauss_legendre(&|r| sched.weight(r), a, a + h, 1);
    }
    Ok(sched)
}

impl XiSchedule {
    fn cell(&self, t: f64) -> usize {
        (((t - self.start) / self.h).floor().max(0.0) as usize).min(XI_CELLS - 1)
    }

    /// ∫_S^t K.
    pub fn k_integral(&self, t: f64) -> f64 {
        let i = self.cell(t);
        let a = self.start + i as f64 * self.h;
        self.cum_k[i] + quad::gauss_legendre(&|r| (self.k)(r), a, t, 1)
    }

    /// e^{2∫_S^r K}.
    pub fn weight(&self, r: f64) -> f64 {
        (2.0 * self.k_integral(r)).exp()
    }

    /// ∫_t^T e^{2∫_S^r K} dr.
    pub fn tail_integral(&self, t: f64) -> f64 {
        if t >= self.horizon {
            return 0.0;
        }
        let i = self.cell(t);
        let b = self.start + (i + 1) as f64 * self.h;
        self.tail[i + 1] + quad::gauss_legendre(&|r| self.weight(r), t, b, 1)
    }

    /// ∫_S^T e^{2∫_S^r K} dr.
    pub fn total_weight(&self) -> f64 {
        self.tail[0]
    }

    pub fn value(&self, t: f64) -> f64 {
        (2.0 - self.theta) * (-2.0 * self.k_integral(t)).exp() * self.tail_integral(t)
    }

    pub fn k(&self, t: f64) -> f64 {
        (self.k)(t)
    }

    /// ∫_a^b ξ^{-1}; infinite once b reaches T.
    pub fn inverse_integral(&self, a: f64, b: f64) -> f64 {
        if b >= self.horizon - 1e-12 * (self.horizon - self.start) {
            return f64::INFINITY;
        }
        quad::gauss_legendre(&|r| 1.0 / self.value(r), a, b, 2)
    }

    /// ∫ξ⁻¹ over each cell of a uniform n-step grid on [S, T]; the last entry is infinite.
    pub fn step_integrals(&self, n_steps: usize) -> Vec<f64> {
        let dt = (self.horizon - self.start) / n_steps as f64;
        (0..n_steps)
            .map(|k| {
                let a = self.start + k as f64 * dt;
                let b = if k + 1 == n_steps { self.horizon } else { a + dt };
                self.inverse_integral(a, b)
            })
            .collect()
    }

    /// |2 + 2K(t)ξ_t + ξ'_t − θ| with a central difference for ξ'.
    pub fn ode_residual(&self, t: f64) -> f64 {
        let d = 1e-6 * (self.horizon - self.start);
        let dxi = (self.value(t + d) - self.value(t - d)) / (2.0 * d);
        (2.0 + 2.0 * self.k(t) * self.value(t) + dxi - self.theta).abs()
    }
}

/// ∫_s^t exp(2·sign·∫_s^r K) dr by nested quadrature.
pub fn exp_weight_integral(k: &dyn Fn(f64) -> f64, s: f64, t: f64, sign: f64) -> f64 {
    let inner = |r: f64| (2.0 * sign * quad::gauss_legendre(k, s, r, 2)).exp();
    quad::gauss_legendre(&inner, s, t, 16)
}

/// One path of the Girsanov coupling.
#[derive(Debug, Clone, Copy)]
pub struct GirsanovRun<const D: usize> {
    pub end_x: Vector<D>,
    pub end_y: Vector<D>,
    pub log_r: f64,
    /// ½ Σ |h|² Δt, the quadratic-variation accumulator.
    pub half_qv: f64,
    pub coalesced: bool,
    pub coalescence_time: Option<f64>,
    /// ρ_T(X_T, Y_T); zero once glued.
    pub residual_rho: f64,
}

impl<const D: usize> GirsanovRun<D> {
    pub fn density(&self) -> f64 {
        self.log_r.exp()
    }
}

const LOG_R_CAP: f64 = 700.0;

/// `inv_steps` holds ∫ξ⁻¹ per step (see `XiSchedule::step_integrals`) and fixes the grid.
/// X runs the plain diffusion from x; Y is parallel-coupled from y with the extra drift
/// −(ψ(Y)ρ / (ψ(X)ξ)) ∇ρ(X, ·)(Y). Over each step the drift is integrated exactly, so Y's
/// displacement toward X is d = ρ(1 − exp(−(ψ_Y/ψ_X)∫ξ⁻¹)) and on the last step d = ρ. The
/// density R = exp(−Σ⟨h, ξ⟩√Δt − ½Σ|h|²Δt) uses h = (Pu)⁻¹D/(√2 ψ_Y Δt) for the applied
/// displacement D, so under R·P the second path is exactly the discrete diffusion from y.
pub fn girsanov_coupled_run<const D: usize, F: MetricFlow<D> + ?Sized, N: NoiseSource>(
    stepper: &Stepper<'_, D, F>,
    xi: &XiSchedule,
    inv_steps: &[f64],
    x: &Vector<D>,
    y: &Vector<D>,
    noise: &mut N,
) -> Result<GirsanovRun<D>> {
    let flow = stepper.flow;
    let (s, t_end) = (xi.start, xi.horizon);
    let n_steps = inv_steps.len();
    validate_window(s, t_end, n_steps)?;
    if t_end >= flow.horizon() {
        return Err(Error::HorizonExceeded { t: t_end, horizon: flow.horizon() });
    }
    let dt = (t_end - s) / n_steps as f64;
    let mut xs = DiffusionState::new(flow, s, *x)?;
    let mut ys = DiffusionState::new(flow, s, *y)?;
    let (mut lk, mut guess): (Link<D>, Option<Vector<D>>) = link(flow, s, x, y, None)?;
    let rho0 = lk.rho;
    let mut coalesced = rho0 == 0.0;
    let mut coalescence_time = coalesced.then_some(s);
    let mut log_r = 0.0;
    let mut half_qv = 0.0;
    let sq2 = std::f64::consts::SQRT_2;
    for k in 0..n_steps {
        let t = xs.t;
        let t1 = if k + 1 == n_steps { t_end } else { s + (k + 1) as f64 * dt };
        let step = t1 - t;
        let e = noise.normal_vector::<D>();
        let out1 = stepper.step(&xs, step, &e)?;
        if coalesced {
            ys = DiffusionState { l: ys.l + out1.dl, ..out1.state };
            xs = out1.state;
            xs.t = t1;
            ys.t = t1;
            continue;
        }
        let gy = flow.metric(t, &ys.x);
        let pu: Matrix<D> = lk.transport * xs.u;
        let e2 = ys.u.transpose() * gy * (pu * e);
        let (px, py) = (stepper.psi_at(t, &xs.x), stepper.psi_at(t, &ys.x));
        let contraction = (-(py / px) * inv_steps[k]).exp();
        let d = lk.rho * (1.0 - contraction);
        let disp = -lk.tangent_end * d;
        let h = pu.transpose() * gy * disp / (sq2 * py * step);
        let proposal = stepper.propose(&ys, step, &e2)? + disp;
        let out2 = stepper.finish(&ys, step, &proposal)?;
        log_r += -h.dot(&e) * step.sqrt() - 0.5 * h.norm_squared() * step;
        half_qv += 0.5 * h.norm_squared() * step;
        if !(log_r.abs() <= LOG_R_CAP) {
            return Err(Error::LedgerOverflow { log_r });
        }
        xs = out1.state;
        ys = out2.state;
        xs.t = t1;
        ys.t = t1;
        if xs.x == ys.x {
            coalesced = true;
        } else {
            let (l2, g2) = link(flow, t1, &xs.x, &ys.x, guess)
                .map_err(|err| Error::CouplingStalled { t: t1, reason: err.to_string() })?;
            lk = l2;
            guess = g2.or(guess);
            coalesced = lk.rho < 1e-6 * rho0;
        }
        if coalesced {
            coalescence_time = Some(t1);
            ys.x = xs.x;
            ys.u = xs.u;
        }
    }
    Ok(GirsanovRun {
        end_x: xs.x,
        end_y: ys.x,
        log_r,
        half_qv,
        coalesced,
        coalescence_time,
        residual_rho: if coalesced { 0.0 } else { lk.rho },
    })
}

pub fn girsanov_batch<const D: usize, F: MetricFlow<D> + ?Sized + Sync>(
    stepper: &Stepper<'_, D, F>,
    xi: &XiSchedule,
    x: &Vector<D>,
    y: &Vector<D>,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<Vec<GirsanovRun<D>>> {
    let inv = xi.step_integrals(n_steps);
    run_paths(n_paths, seed, |stream| girsanov_coupled_run(stepper, xi, &inv, x, y, stream))
}

#[derive(Debug, Clone, Copy)]
pub struct GirsanovSummary {
    /// E[R]
    pub mean_r: Estimate,
    /// E[R log R]
    pub entropy: Estimate,
    pub coalesce_rate: f64,
    pub max_residual: f64,
}

pub fn summarize<const D: usize>(runs: &[GirsanovRun<D>]) -> GirsanovSummary {
    let r: Vec<f64> = runs.iter().map(|g| g.density()).collect();
    let rl: Vec<f64> = runs.iter().map(|g| g.density() * g.log_r).collect();
    let glued = runs.iter().filter(|g| g.coalesced).count();
    GirsanovSummary {
        mean_r: Estimate::from_samples(&r),
        entropy: Estimate::from_samples(&rl),
        coalesce_rate: glued as f64 / runs.len().max(1) as f64,
        max_residual: runs.iter().map(|g| g.residual_rho).fold(0.0, f64::max),
    }
}

/// ρ₀² / (4θ(2−θ) ∫_S^T e^{2∫K}).
pub fn entropy_bound(rho0: f64, xi: &XiSchedule) -> f64 {
    rho0 * rho0 / (4.0 * xi.theta * (2.0 - xi.theta) * xi.total_weight())
}

#[derive(Debug, Clone, Copy)]
pub struct MomentCheck {
    pub empirical: Estimate,
    pub bound: f64,
    pub pass: bool,
    /// Relative standard error above 20%.
    pub heavy_tail: bool,
}

/// E[R^{p/(p−1)}] against exp[pρ₀² / (4(p−1)²θ(2−θ) ∫e^{2∫K})].
pub fn moment_bound_check<const D: usize>(runs: &[GirsanovRun<D>], p: f64, rho0: f64, xi: &XiSchedule) -> Result<MomentCheck> {
    if !(p > 1.0) {
        return Err(Error::PConstraintViolated { p, min: 1.0 });
    }
    let q = p / (p - 1.0);
    let vals: Vec<f64> = runs.iter().map(|g| (q * g.log_r).exp()).collect();
    let empirical = Estimate::from_samples(&vals);
    let th = xi.theta;
    let bound = (p * rho0 * rho0 / (4.0 * (p - 1.0) * (p - 1.0) * th * (2.0 - th) * xi.total_weight())).exp();
    Ok(MomentCheck {
        empirical,
        bound,
        pass: empirical.mean <= bound + 3.0 * empirical.stderr,
        heavy_tail: empirical.stderr > 0.2 * empirical.mean.abs(),
    })
}

pub type Observable<'a, const D: usize> = &'a (dyn Fn(&Vector<D>) -> f64 + Sync);

/// Something that evaluates P_{s,t} f(x) for several f at once.
pub trait SemigroupEval<const D: usize>: Sync {
    fn eval(&self, fs: &[Observable<'_, D>], s: f64, t: f64, x: &Vector<D>) -> Result<Vec<Estimate>>;
}

pub struct MonteCarloEval<'a, const D: usize, F: ?Sized> {
    pub stepper: Stepper<'a, D, F>,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

impl<const D: usize, F: MetricFlow<D> + ?Sized + Sync> SemigroupEval<D> for MonteCarloEval<'_, D, F> {
    fn eval(&self, fs: &[Observable<'_, D>], s: f64, t: f64, x: &Vector<D>) -> Result<Vec<Estimate>> {
        let cols = terminal_values(&self.stepper, fs, s, t, x, self.n_paths, self.n_steps, self.seed)?;
        Ok(cols.iter().map(|c| Estimate::from_samples(c)).collect())
    }
}

/// Crank–Nicolson values on the interval (deterministic, zero stderr).
pub struct OracleEval<'a> {
    pub flow: &'a IntervalFlow,
    pub grid: Grid1D,
    pub psi: Option<&'a (dyn Fn(f64, f64) -> f64 + Sync)>,
}

impl SemigroupEval<1> for OracleEval<'_> {
    fn eval(&self, fs: &[Observable<'_, 1>], s: f64, t: f64, x: &Vector<1>) -> Result<Vec<Estimate>> {
        fs.iter()
            .map(|f| {
                let g = |r: f64| f(&Vector::<1>::new(r));
                let psi = self.psi.map(|p| p as &dyn Fn(f64, f64) -> f64);
                let sol = neumann_heat_march(self.flow, &g, s, t, &self.grid, psi, false)?;
                Ok(Estimate::exact(OracleSolution::interp(sol.initial(), &self.grid, x[0])))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnackReport {
    pub theorem: String,
    pub p: f64,
    pub theta: f64,
    pub s: f64,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub stderr_lhs: f64,
    pub stderr_rhs: f64,
    pub constant: f64,
    pub slack: f64,
    pub pass: bool,
}

impl HarnackReport {
    fn new(theorem: &str, p: f64, theta: f64, s: f64, t: f64, lhs: Estimate, rhs: Estimate, constant: f64) -> Self {
        let slack = rhs.mean - lhs.mean;
        let tol = 3.0 * combined_stderr(&[lhs.stderr, rhs.stderr]);
        HarnackReport {
            theorem: theorem.to_string(),
            p,
            theta,
            s,
            t,
            lhs: lhs.mean,
            rhs: rhs.mean,
            stderr_lhs: lhs.stderr,
            stderr_rhs: rhs.stderr,
            constant,
            slack,
            pass: lhs.mean <= rhs.mean + tol,
        }
    }
}

/// P log f(y) ≤ log P f(x) + C.
pub fn log_harnack_check<const D: usize>(
    eval: &dyn SemigroupEval<D>,
    f: Observable<'_, D>,
    x: &Vector<D>,
    y: &Vector<D>,
    s: f64,
    t: f64,
    constant: f64,
    label: &str,
) -> Result<HarnackReport> {
    let log_f = |z: &Vector<D>| f(z).ln();
    let at_y = eval.eval(&[&log_f], s, t, y)?;
    let at_x = eval.eval(&[f], s, t, x)?;
    let pf = at_x[0];
    if !(pf.mean > 0.0) {
        return Err(crate::error::invalid("log-Harnack needs f ≥ 1"));
    }
    let rhs = Estimate { mean: pf.mean.ln() + constant, stderr: pf.stderr / pf.mean, n: pf.n };
    Ok(HarnackReport::new(label, 1.0, 1.0, s, t, at_y[0], rhs, constant))
}

/// (P f(y))^p ≤ P f^p(x) · e^C.
pub fn p_harnack_check<const D: usize>(
    eval: &dyn SemigroupEval<D>,
    f: Observable<'_, D>,
    p: f64,
    x: &Vector<D>,
    y: &Vector<D>,
    s: f64,
    t: f64,
    constant: f64,
    label: &str,
) -> Result<HarnackReport> {
    let fp = |z: &Vector<D>| f(z).powf(p);
    let at_y = eval.eval(&[f], s, t, y)?[0];
    let at_x = eval.eval(&[&fp], s, t, x)?[0];
    let lhs = Estimate { mean: at_y.mean.powf(p), stderr: p * at_y.mean.abs().powf(p - 1.0) * at_y.stderr, n: at_y.n };
    let factor = constant.exp();
    let rhs = Estimate { mean: at_x.mean * factor, stderr: at_x.stderr * factor, n: at_x.n };
    Ok(HarnackReport::new(label, p, 1.0, s, t, lhs, rhs, constant))
}

/// Log-Harnack with C = ρ_S(x,y)² / (4 ∫_S^T e^{2∫_S^r K}).
pub fn log_harnack_verify<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    bounds: &dyn CurvatureBounds,
    eval: &dyn SemigroupEval<D>,
    f: Observable<'_, D>,
    x: &Vector<D>,
    y: &Vector<D>,
    s: f64,
    t: f64,
) -> Result<HarnackReport> {
    let rho = link(flow, s, x, y, None)?.0.rho;
    let w = exp_weight_integral(&|r| bounds.rz_lower(r), s, t, 1.0);
    log_harnack_check(eval, f, x, y, s, t, rho * rho / (4.0 * w), "log-harnack")
}

/// Power Harnack with C = pρ_S(x,y)² / (4(p−1) ∫_S^T e^{2∫_S^r K}).
pub fn p_harnack_verify<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    bounds: &dyn CurvatureBounds,
    eval: &dyn SemigroupEval<D>,
    f: Observable<'_, D>,
    p: f64,
    x: &Vector<D>,
    y: &Vector<D>,
    s: f64,
    t: f64,
) -> Result<HarnackReport> {
    if !(p > 1.0) {
        return Err(Error::PConstraintViolated { p, min: 1.0 });
    }
    let rho = link(flow, s, x, y, None)?.0.rho;
    let w = exp_weight_integral(&|r| bounds.rz_lower(r), s, t, 1.0);
    p_harnack_check(eval, f, p, x, y, s, t, p * rho * rho / (4.0 * (p - 1.0) * w), "p-harnack")
}

/// K̂ = 2K₁‖ψ‖² + 4‖Z‖‖ψ‖‖∇ψ‖ + 2d‖∇ψ‖² + K₂ with Ric^Z ≥ −K₁ and ∂_t g ≤ K₂.
pub fn k_hat(k1: f64, k2: f64, z_sup: f64, psi_sup: f64, grad_psi_sup: f64, d: usize) -> f64 {
    2.0 * k1 * psi_sup * psi_sup + 4.0 * z_sup * psi_sup * grad_psi_sup + 2.0 * d as f64 * grad_psi_sup * grad_psi_sup + k2
}

/// Constants of the variable-coefficient Harnack inequalities.
pub struct VariableConstants {
    pub k_hat: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    /// λ_T = inf ψ
    pub lambda: f64,
    /// δ_T = sup_t (sup ψ_t − inf ψ_t)
    pub delta: f64,
}

impl VariableConstants {
    /// ∫_S^T e^{−2∫_S^u K̂}.
    pub fn weight(&self, s: f64, t: f64) -> f64 {
        exp_weight_integral(&|r| (self.k_hat)(r), s, t, -1.0)
    }

    /// ρ² / (4λ² ∫e^{−2∫K̂}).
    pub fn log_constant(&self, rho: f64, s: f64, t: f64) -> f64 {
        rho * rho / (4.0 * self.lambda * self.lambda * self.weight(s, t))
    }

    pub fn p_min(&self) -> f64 {
        (1.0 + self.delta / self.lambda).powi(2)
    }

    /// δ_p = max{δ_T, λ_T(√p − 1)/2}.
    pub fn delta_p(&self, p: f64) -> f64 {
        self.delta.max(0.5 * self.lambda * (p.sqrt() - 1.0))
    }

    /// √p(√p−1)ρ² / (8δ_p[(√p−1)λ − δ_p] ∫e^{−2∫K̂}).
    pub fn p_constant(&self, p: f64, rho: f64, s: f64, t: f64) -> Result<f64> {
        let min = self.p_min();
        if !(p > min) {
            return Err(Error::PConstraintViolated { p, min });
        }
        let dp = self.delta_p(p);
        let sp = p.sqrt();
        Ok(sp * (sp - 1.0) * rho * rho / (8.0 * dp * ((sp - 1.0) * self.lambda - dp) * self.weight(s, t)))
    }
}

/// Both variable-coefficient inequalities for the ψ²(Δ + Z) semigroup carried by `eval`.
pub fn variable_coeff_harnack<const D: usize>(
    eval: &dyn SemigroupEval<D>,
    constants: &VariableConstants,
    rho: f64,
    f: Observable<'_, D>,
    p: f64,
    x: &Vector<D>,
    y: &Vector<D>,
    s: f64,
    t: f64,
) -> Result<(HarnackReport, HarnackReport)> {
    let c_log = constants.log_constant(rho, s, t);
    let c_p = constants.p_constant(p, rho, s, t)?;
    let log = log_harnack_check(eval, f, x, y, s, t, c_log, "variable-log-harnack")?;
    let pow = p_harnack_check(eval, f, p, x, y, s, t, c_p, "variable-p-harnack")?;
    Ok((log, pow))
}

/// Boundary-distance profile making a concave boundary convex after g̃ = φ⁻²g. With
/// h(s) = cos(√k s) − (θ/√k) sin(√k s), G(s) = (h(s) − h(r₀))^{1−d} ∫_s^{r₀}(h − h(r₀))^{d−1} and
/// δ = σ(1 − h(r₀))^{d−1} / ∫_0^{r₀}(h − h(r₀))^{d−1}, φ(r) = 1 + δ∫_0^{r∧r₀} G. Then φ(0) = 1,
/// φ'(0) = σ, and φ is constant (= ‖φ‖_∞) beyond r₀.
#[derive(Debug, Clone)]
pub struct PhiProfile {
    pub r0: f64,
    pub sigma: f64,
    pub k: f64,
    pub theta: f64,
    pub d: usize,
    pub delta: f64,
    pub sup: f64,
    h0: f64,
    step: f64,
    inner: Vec<f64>,
    cum: Vec<f64>,
}

const PROFILE_CELLS: usize = 2048;

pub fn phi_profile(r0: f64, sigma: f64, k: f64, theta: f64, d: usize) -> Result<PhiProfile> {
    if !(r0 > 0.0 && k > 0.0 && theta >= 0.0 && sigma >= 0.0 && d >= 1) {
        return Err(crate::error::invalid("phi profile needs r0, k > 0 and sigma, theta >= 0"));
    }
    let max = (k.sqrt() / (k + theta * theta).sqrt()).asin() / k.sqrt();
    if r0 > max {
        return Err(Error::R0TooLarge { r0, max });
    }
    let step = r0 / PROFILE_CELLS as f64;
    let mut prof = PhiProfile {
        r0,
        sigma,
        k,
        theta,
        d,
        delta: 0.0,
        sup: 1.0,
        h0: 0.0,
        step,
        inner: vec![0.0; PROFILE_CELLS + 1],
        cum: vec![0.0; PROFILE_CELLS + 1],
    };
    prof.h0 = prof.h(r0);
    for i in (0..PROFILE_CELLS).rev() {
        let a = i as f64 * step;
        prof.inner[i] = prof.inner[i + 1] + quad::gauss_legendre(&|u| prof.gap(u).powi(d as i32 - 1), a, a + step, 1);
    }
    if sigma == 0.0 {
        return Ok(prof);
    }
    prof.delta = sigma * (1.0 - prof.h0).powi(d as i32 - 1) / prof.inner[0];
    for i in 0..PROFILE_CELLS {
        let a = i as f64 * step;
        prof.cum[i + 1] = prof.cum[i] + quad::gauss_legendre(&|s| prof.g(s), a, a + step, 1);
    }
    prof.sup = 1.0 + prof.delta * prof.cum[PROFILE_CELLS];
    Ok(prof)
}

impl PhiProfile {
    pub fn h(&self, s: f64) -> f64 {
        let sk = self.k.sqrt();
        (sk * s).cos() - self.theta / sk * (sk * s).sin()
    }

    fn dh(&self, s: f64) -> f64 {
        let sk = self.k.sqrt();
        -sk * (sk * s).sin() - self.theta * (sk * s).cos()
    }

    fn gap(&self, s: f64) -> f64 {
        self.h(s) - self.h0
    }

    fn cell(&self, s: f64) -> usize {
        ((s / self.step).floor().max(0.0) as usize).min(PROFILE_CELLS - 1)
    }

    /// ∫_s^{r₀}(h − h(r₀))^{d−1}.
    fn inner_at(&self, s: f64) -> f64 {
        let i = self.cell(s);
        let b = (i + 1) as f64 * self.step;
        self.inner[i + 1] + quad::gauss_legendre(&|u| self.gap(u).powi(self.d as i32 - 1), s, b, 1)
    }

    fn g(&self, s: f64) -> f64 {
        if s >= self.r0 {
            return 0.0;
        }
        self.inner_at(s) / self.gap(s).powi(self.d as i32 - 1)
    }

    /// (φ, φ', φ'') at boundary distance r.
    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        if self.delta == 0.0 || r >= self.r0 {
            return (self.sup, 0.0, 0.0);
        }
        let r = r.max(0.0);
        let i = self.cell(r);
        let a = i as f64 * self.step;
        let phi = 1.0 + self.delta * (self.cum[i] + quad::gauss_legendre(&|s| self.g(s), a, r, 1));
        let d1 = self.delta * self.g(r);
        // G' = −1 + (1−d) I h' / (h − h₀)^d, held at its value just inside r₀
        let rr = r.min(self.r0 * (1.0 - 1e-6));
        let dm = self.d as i32;
        let gp = -1.0 + (1.0 - self.d as f64) * self.inner_at(rr) * self.dh(rr) / self.gap(rr).powi(dm);
        (phi, d1, self.delta * gp)
    }

    /// The 1 + r₀²/δ expression printed next to ‖φ‖_∞ (reported, not asserted).
    pub fn printed_bound(&self) -> f64 {
        1.0 + self.r0 * self.r0 / self.delta
    }
}

/// φ(x) = profile(ρ_∂(x)) on the half-plane bump.
#[derive(Debug, Clone)]
pub struct BumpPhi {
    pub bump: HalfPlaneBump,
    pub profile: PhiProfile,
}

impl ScalarField<2> for BumpPhi {
    fn value(&self, _t: f64, x: &Vector<2>) -> f64 {
        self.profile.eval(self.bump.boundary_distance(x[1])).0
    }
    fn grad(&self, _t: f64, x: &Vector<2>) -> Vector<2> {
        let r = self.bump.boundary_distance(x[1]);
        Vector::<2>::new(0.0, self.profile.eval(r).1 * self.bump.w(x[1]).exp())
    }
    fn dt(&self, _t: f64, _x: &Vector<2>) -> f64 {
        0.0
    }
}

/// Constants of the conformal route, in the notation K_{φ,1}, K_{φ,2}, K_φ, λ_T, δ_T.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConformalConstants {
    pub k1: f64,
    pub k_phi_1: f64,
    pub k_phi_2: f64,
    pub grad_phi_sup: f64,
    pub phi_z_term: f64,
    pub k_phi: f64,
    pub lambda: f64,
    pub delta: f64,
}

impl BumpPhi {
    /// Builds the profile for the bump's boundary concavity σ = −II with θ = 0 and
    /// k = max(sup of the Gauss curvature on the collar, 1e-4).
    pub fn for_bump(bump: HalfPlaneBump, r0: f64) -> Result<Self> {
        let sigma = (-bump.boundary_ii()).max(0.0);
        let x2_end = bump_collar_end(&bump, r0);
        let (_, kmax) = quad::maximize(&|x2| bump.gauss_curvature(x2), 0.0, x2_end, 400);
        let profile = phi_profile(r0, sigma, kmax.max(1e-4), 0.0, 2)?;
        Ok(BumpPhi { bump, profile })
    }

    /// II + N log φ on the boundary; must be ≥ 0.
    pub fn admissibility(&self) -> f64 {
        let (phi, d1, _) = self.profile.eval(0.0);
        self.bump.boundary_ii() + d1 / phi
    }

    /// Integrand of K_{φ,1}: K₁φ² − φΔφ + (d−3)|∇φ|² + 2|Z|φ|∇φ| with Z = 0, d = 2.
    pub fn k_phi_1_integrand(&self, k1: f64, x2: f64) -> f64 {
        let r = self.bump.boundary_distance(x2);
        let (phi, d1, d2) = self.profile.eval(r);
        let lap = d2 + d1 * self.bump.laplacian_boundary_distance(x2);
        k1 * phi * phi - phi * lap - d1 * d1
    }

    /// Sup-norm constants by the given 1-D maximizer over the normal coordinate.
    pub fn constants_with(&self, maximize: &dyn Fn(&dyn Fn(f64) -> f64, f64, f64) -> f64) -> ConformalConstants {
        let b = &self.bump;
        let far = 8.0 * b.width;
        let k1 = maximize(&|x2| -b.gauss_curvature(x2), 0.0, far).max(0.0);
        let x2_end = bump_collar_end(b, self.profile.r0) * 1.05;
        let inside = maximize(&|x2| self.k_phi_1_integrand(k1, x2), 0.0, x2_end);
        // beyond the collar φ ≡ ‖φ‖ and the integrand is K₁‖φ‖²
        let k_phi_1 = inside.max(k1 * self.profile.sup * self.profile.sup);
        let grad = maximize(&|x2| self.profile.eval(b.boundary_distance(x2)).1.abs(), 0.0, x2_end);
        let k_phi_2 = 0.0;
        let phi_z_term = 0.0;
        let d = 2.0;
        let k_phi = 2.0 * k_phi_1 + 4.0 * phi_z_term * grad + 2.0 * d * grad * grad + k_phi_2;
        let lambda = 1.0 / self.profile.sup;
        ConformalConstants { k1, k_phi_1, k_phi_2, grad_phi_sup: grad, phi_z_term, k_phi, lambda, delta: 1.0 - lambda }
    }

    pub fn constants(&self) -> ConformalConstants {
        self.constants_with(&|f, a, b| quad::maximize(f, a, b, 400).1)
    }

    pub fn conformal(&self, probes: &[(f64, Vector<2>)]) -> Result<ConformalFlow<HalfPlaneBump, BumpPhi>> {
        if self.admissibility() < -1e-9 {
            return Err(Error::PhiNotInD { excess: self.admissibility() });
        }
        conformal_flow(self.bump.clone(), self.clone(), probes)
    }
}

/// Normal coordinate where the boundary distance reaches r₀.
fn bump_collar_end(bump: &HalfPlaneBump, r0: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while bump.boundary_distance(hi) < r0 {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if bump.boundary_distance(mid) < r0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Log and power Harnack on a non-convex instance via g̃ = φ⁻²g and ψ = φ⁻¹: K̂ → K_φ,
/// λ_T = inf φ⁻¹, δ_T = 1 − inf φ⁻¹, distances measured in g̃. The semigroup is the base one.
pub fn nonconvex_harnack(
    eval: &dyn SemigroupEval<2>,
    phi: &BumpPhi,
    f: Observable<'_, 2>,
    p: f64,
    x: &Vector<2>,
    y: &Vector<2>,
    s: f64,
    t: f64,
) -> Result<(HarnackReport, HarnackReport, ConformalConstants)> {
    let flow = phi.conformal(&[(s, *x), (s, *y)])?;
    let rho = link(&flow, s, x, y, None)?.0.rho;
    let c = phi.constants();
    let k_phi = c.k_phi;
    let constants = VariableConstants { k_hat: Box::new(move |_| k_phi), lambda: c.lambda, delta: c.delta };
    let (mut log, mut pow) = variable_coeff_harnack(eval, &constants, rho, f, p, x, y, s, t)?;
    log.theorem = "nonconvex-log-harnack".into();
    pow.theorem = "nonconvex-p-harnack".into();
    Ok((log, pow, c))
}
