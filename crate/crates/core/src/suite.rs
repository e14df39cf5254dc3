//! The verification manifest: groups of checks on designated catalog instances, shared by the
//! command-line runner and the acceptance test. Items inside a group run concurrently; reports
//! come back in declaration order, and every item derives its own seed from the master seed
//! and a fixed tag, so output does not depend on the worker count.

use crate::catalog::{CubicSpline, CurvatureBounds, HalfPlaneBump, Instance, IntervalFlow, RicciFlowCap, ScaledDisk};
use crate::coupling::{
    coupled_path, coupled_step_parallel, distance_bound_monitor, wasserstein_contraction_estimate, CoupledState, Coupler,
    CouplingMode, MonitorReport,
};
use crate::derivative::{gradient_batch, Observable, Ramp, Smooth};
use crate::diffusion::{run_paths, terminal_values, Stepper};
use crate::geometry::{
    link, r_z, second_fundamental_form, ConstantField, FlatFlow, HalfPlaneBoundary, MetricFlow,
};
use crate::harnack::{
    entropy_bound, girsanov_batch, k_hat, log_harnack_verify, moment_bound_check, nonconvex_harnack, p_harnack_verify,
    summarize, variable_coeff_harnack, xi_schedule, BumpPhi, MonteCarloEval, OracleEval, SemigroupEval, VariableConstants,
};
use crate::oracle::Grid1D;
use crate::report::harnack_to_check;
use crate::rng::{derive_seed, NoiseSource, RngStream};
use crate::stats::Estimate;
use crate::verify::*;
use crate::{linalg, Result, Vector};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    /// Paths for the main Monte-Carlo estimates; heavier items use a fixed fraction.
    pub n_paths: usize,
    /// Step size; step counts are span / dt.
    pub dt: f64,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { n_paths: 200_000, dt: 5e-4, seed: 20_240_601 }
    }
}

impl SuiteConfig {
    pub fn steps(&self, span: f64) -> usize {
        ((span / self.dt).round() as usize).max(1)
    }

    pub fn paths(&self, divisor: usize) -> usize {
        (self.n_paths / divisor).max(100)
    }

    pub fn seed_for(&self, tag: &str) -> u64 {
        // FNV-1a, stable across platforms and releases
        let h = tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
        derive_seed(self.seed, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    OracleAgreement,
    LocalTime,
    Derivative,
    GradientEstimate,
    Coupling,
    Girsanov,
    VariableHarnack,
    Curvature,
    Inequalities,
}

impl Group {
    pub const ALL: [Group; 9] = [
        Group::OracleAgreement,
        Group::LocalTime,
        Group::Derivative,
        Group::GradientEstimate,
        Group::Coupling,
        Group::Girsanov,
        Group::VariableHarnack,
        Group::Curvature,
        Group::Inequalities,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Group::OracleAgreement => "oracle-agreement",
            Group::LocalTime => "local-time",
            Group::Derivative => "derivative",
            Group::GradientEstimate => "gradient-estimate",
            Group::Coupling => "coupling",
            Group::Girsanov => "girsanov-harnack",
            Group::VariableHarnack => "variable-harnack",
            Group::Curvature => "curvature",
            Group::Inequalities => "inequalities",
        }
    }

    pub fn from_key(key: &str) -> Option<Group> {
        Group::ALL.into_iter().find(|g| g.key() == key)
    }

    /// Instances the group runs on when no override is given.
    pub fn designated(self) -> Vec<Instance> {
        let interval = |a| Instance::Interval(IntervalFlow::unit(a));
        let disk = || Instance::Disk(default_disk());
        let cap = || Instance::Cap(RicciFlowCap::new(1.0).expect("default cap"));
        let bump = || Instance::Bump(HalfPlaneBump::new(0.3, 0.5).expect("default bump"));
        match self {
            Group::OracleAgreement => vec![interval(0.0), interval(0.5)],
            Group::LocalTime => vec![interval(0.5)],
            Group::Derivative => vec![interval(0.5), disk()],
            Group::GradientEstimate => vec![interval(0.5), cap()],
            Group::Coupling => vec![interval(0.5), cap(), disk()],
            Group::Girsanov => vec![interval(0.5), disk()],
            Group::VariableHarnack => vec![interval(0.5), bump()],
            Group::Curvature => vec![interval(0.5), cap(), disk()],
            Group::Inequalities => vec![interval(0.5), bump()],
        }
    }

    /// Whether the group has items for this kind of instance.
    pub fn supports(self, inst: &Instance) -> bool {
        self.designated().iter().any(|d| d.key() == inst.key())
    }
}

fn default_disk() -> ScaledDisk {
    ScaledDisk::new(1.0, CubicSpline::new(&[(0.0, 1.0), (0.5, 1.15), (1.0, 1.25)]).expect("default knots"))
}

type Item<'a> = Box<dyn Fn() -> Result<Vec<CheckReport>> + Send + Sync + 'a>;

/// Runs one group. With an override, only that instance is used (and only if the group
/// supports its kind); instance-free items (flat reference cases) run only without one.
pub fn run_group(group: Group, cfg: &SuiteConfig, instance: Option<&Instance>) -> Result<Vec<CheckReport>> {
    let instances = match instance {
        Some(i) if group.supports(i) => vec![i.clone()],
        Some(_) => Vec::new(),
        None => group.designated(),
    };
    let mut items: Vec<Item<'_>> = Vec::new();
    for inst in &instances {
        items.extend(group_items(group, cfg, inst));
    }
    if instance.is_none() {
        items.extend(reference_items(group, cfg));
    }
    let parts = items.par_iter().map(|item| item()).collect::<Vec<_>>();
    let mut out = Vec::new();
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Groups behind the `verify-suite` command: the verify module proper.
pub const VERIFY_SUITE: [Group; 3] = [Group::LocalTime, Group::Curvature, Group::Inequalities];

pub fn run_groups(groups: &[Group], cfg: &SuiteConfig, instance: Option<&Instance>) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    for &g in groups {
        out.extend(run_group(g, cfg, instance)?);
    }
    Ok(out)
}

fn group_items<'a>(group: Group, cfg: &'a SuiteConfig, inst: &'a Instance) -> Vec<Item<'a>> {
    let c = *cfg;
    match (group, inst) {
        (Group::OracleAgreement, Instance::Interval(iv)) => {
            [0.1, 0.5, 0.9].into_iter().map(|x| Box::new(move || oracle_agreement(iv, x, &c)) as Item<'a>).collect()
        }
        (Group::LocalTime, Instance::Interval(iv)) => vec![Box::new(move || local_time_interval(iv, &c))],
        (Group::Derivative, Instance::Interval(iv)) => {
            let mut v: Vec<Item<'a>> =
                [0.1, 0.3, 0.5].into_iter().map(|x| Box::new(move || derivative_interval(iv, x, &c)) as Item<'a>).collect();
            v.push(Box::new(move || certificate_interval(iv, &c)));
            v
        }
        (Group::Derivative, Instance::Disk(d)) => vec![Box::new(move || derivative_disk(d, &c))],
        (Group::GradientEstimate, Instance::Interval(iv)) => vec![Box::new(move || gradient_estimate_interval(iv))],
        (Group::GradientEstimate, Instance::Cap(cap)) => {
            cap_probes().into_iter().map(|pr| Box::new(move || gradient_estimate_cap(cap, pr, &c)) as Item<'a>).collect()
        }
        (Group::Coupling, Instance::Interval(iv)) => {
            let (x, y) = (Vector::<1>::new(0.3 * iv.length), Vector::<1>::new(0.6 * iv.length));
            vec![Box::new(move || coupling_checks(iv, iv, x, y, &c))]
        }
        (Group::Coupling, Instance::Cap(cap)) => {
            let x = RicciFlowCap::centre();
            vec![Box::new(move || coupling_checks(cap, cap, x, x + Vector::<2>::new(0.3, 0.2), &c))]
        }
        (Group::Coupling, Instance::Disk(d)) => {
            vec![Box::new(move || coupling_checks(d, d, Vector::<2>::new(0.1, 0.0), Vector::<2>::new(0.5, 0.2), &c))]
        }
        (Group::Girsanov, Instance::Interval(iv)) => {
            let mut v: Vec<Item<'a>> =
                [0.5, 1.0, 1.5].into_iter().map(|th| Box::new(move || girsanov_interval(iv, th, &c)) as Item<'a>).collect();
            v.push(Box::new(move || harnack_interval(iv)));
            v
        }
        (Group::Girsanov, Instance::Disk(d)) => vec![Box::new(move || girsanov_disk(d, &c)), Box::new(move || harnack_disk(d, &c))],
        (Group::VariableHarnack, Instance::Interval(iv)) => vec![Box::new(move || variable_interval(iv))],
        (Group::VariableHarnack, Instance::Bump(b)) => {
            vec![Box::new(move || conformal_constants(b)), Box::new(move || nonconvex_bump(b, &c))]
        }
        (Group::Curvature, Instance::Interval(iv)) => vec![Box::new(move || curvature_interval(iv))],
        (Group::Curvature, Instance::Cap(cap)) => vec![Box::new(move || curvature_cap(cap, &c))],
        (Group::Curvature, Instance::Disk(d)) => vec![Box::new(move || curvature_disk(d, &c))],
        (Group::Inequalities, Instance::Interval(iv)) => vec![Box::new(move || inequalities_interval(iv))],
        (Group::Inequalities, Instance::Bump(b)) => vec![Box::new(move || conformal_gradient_bump(b, &c))],
        _ => Vec::new(),
    }
}

/// Items on flat reference flows that are not catalog instances.
fn reference_items<'a>(group: Group, cfg: &'a SuiteConfig) -> Vec<Item<'a>> {
    let c = *cfg;
    match group {
        Group::LocalTime => vec![Box::new(move || local_time_halfline(&c))],
        Group::Coupling => vec![Box::new(move || parallel_flat_rigidity(&c))],
        Group::VariableHarnack => vec![Box::new(move || time_change_cross_check(&c))],
        Group::Curvature => vec![Box::new(move || ii_halfplane(&c))],
        _ => Vec::new(),
    }
}

fn one_d(x: f64) -> Vector<1> {
    Vector::<1>::new(x)
}

// ---------------------------------------------------------------- oracle agreement

fn oracle_agreement(iv: &IntervalFlow, frac: f64, cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let (s, t) = (0.0, 0.2);
    let len = iv.length;
    let x = frac * len;
    let fs: [(&str, Box<dyn Fn(f64) -> f64 + Sync>); 3] = [
        ("cos", Box::new(move |y: f64| (PI * y / len).cos())),
        ("quartic", Box::new(move |y: f64| (y / len).powi(2) * (1.0 - y / len).powi(2))),
        ("exp", Box::new(|y: f64| (-y).exp())),
    ];
    let n = cfg.steps(t - s);
    let dt = (t - s) / n as f64;
    let wrapped: Vec<Box<dyn Fn(&Vector<1>) -> f64 + Sync>> =
        fs.iter().map(|(_, f)| Box::new(move |z: &Vector<1>| f(z[0])) as Box<dyn Fn(&Vector<1>) -> f64 + Sync>).collect();
    let one = |_: &Vector<1>| 1.0;
    let mut cols: Vec<&(dyn Fn(&Vector<1>) -> f64 + Sync)> = wrapped.iter().map(|b| b.as_ref()).collect();
    cols.push(&one);
    let seed = cfg.seed_for(&format!("oracle:{}:{frac}", iv.a));
    let values = terminal_values(&Stepper::new(iv), &cols, s, t, &one_d(x), cfg.n_paths, n, seed)?;
    let o = IntervalOracle::new(iv);
    let mut out = Vec::new();
    for (k, (name, f)) in fs.iter().enumerate() {
        let mc = Estimate::from_samples(&values[k]);
        let exact = o.at(&o.apply(f.as_ref(), s, t)?, x);
        let params = format!("f={name};s={s};t={t};x={x};paths={};steps={n}", cfg.n_paths);
        out.push(CheckReport::identity("oracle-agreement", &iv.label(), params, mc, Estimate::exact(exact), 2.0 * dt).timed(start));
    }
    let mc1 = Estimate::from_samples(&values[3]);
    out.push(CheckReport::identity("conservation-mc", &iv.label(), format!("x={x}"), mc1, Estimate::exact(1.0), 0.0));
    let oracle1 = o.apply(&|_| 1.0, s, t)?;
    let dev = oracle1.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    out.push(CheckReport::identity(
        "conservation-oracle",
        &iv.label(),
        format!("s={s};t={t}"),
        Estimate::exact(1.0 + dev),
        Estimate::exact(1.0),
        1e-10,
    ));
    Ok(out)
}

// ---------------------------------------------------------------- local time

const LOCAL_LADDER: [f64; 3] = [1e-3, 4e-3, 1.6e-2];
const LOCAL_STEPS: usize = 32;

fn local_time_interval(iv: &IntervalFlow, cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let (mut r, _) = local_time_asymptotic_check(iv, &one_d(0.0), &LOCAL_LADDER, cfg.n_paths, LOCAL_STEPS, cfg.seed_for("local:interval"))?;
    r.params = format!("x=0;{}", r.params);
    // interior start far from both walls: no local time at all
    let t = LOCAL_LADDER[0];
    let ends = crate::diffusion::terminal_states(
        &Stepper::new(iv),
        0.0,
        t,
        &one_d(0.5 * iv.length),
        cfg.paths(10),
        LOCAL_STEPS,
        cfg.seed_for("local:interior"),
    )?;
    let l: Vec<f64> = ends.iter().map(|e| e.l).collect();
    let interior = CheckReport::identity(
        "local-time-interior",
        &iv.label(),
        format!("x={};t={t}", 0.5 * iv.length),
        Estimate::from_samples(&l),
        Estimate::exact(0.0),
        0.0,
    );
    Ok(vec![r, interior])
}

fn local_time_halfline(cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let flow = FlatFlow::<1>::with_boundary(HalfPlaneBoundary { axis: 0 });
    let (mut r, _) = local_time_asymptotic_check(&flow, &one_d(0.0), &LOCAL_LADDER, cfg.n_paths, LOCAL_STEPS, cfg.seed_for("local:halfline"))?;
    r.instance = "flat-halfline".into();
    Ok(vec![r])
}

// ---------------------------------------------------------------- derivative formulas

fn cosine(len: f64) -> Smooth<impl Fn(&Vector<1>) -> f64 + Sync, impl Fn(&Vector<1>) -> Vector<1> + Sync> {
    Smooth(move |z: &Vector<1>| (PI * z[0] / len).cos(), move |z: &Vector<1>| one_d(-PI / len * (PI * z[0] / len).sin()))
}

fn derivative_interval(iv: &IntervalFlow, frac: f64, cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let (s, t) = (0.0, 0.1);
    let x = frac * iv.length;
    let f = cosine(iv.length);
    let n = cfg.steps(t - s);
    let seed = cfg.seed_for(&format!("derivative:interval:{frac}"));
    let batch = gradient_batch(&Stepper::new(iv), iv, &f, s, t, &one_d(x), cfg.n_paths, n, Ramp::Linear, seed)?;
    let o = IntervalOracle::new(iv);
    let exact = Estimate::exact(o.gradient(&o.apply(&|y| (PI * y / iv.length).cos(), s, t)?, s, x)?);
    let params = format!("f=cos;s={s};t={t};x={x};paths={};steps={n}", cfg.n_paths);
    let label = iv.label();
    let bis = batch.bismut().component(0);
    let cov = batch.covariant().component(0);
    let diff = batch.difference().component(0);
    let mut out = vec![
        CheckReport::identity("bismut-vs-oracle", &label, params.clone(), bis, exact, 0.0),
        CheckReport::identity("covariant-vs-oracle", &label, params.clone(), cov, exact, 0.0),
        CheckReport::identity("bismut-vs-covariant", &label, params.clone(), diff, Estimate::exact(0.0), 0.0),
    ];
    out.push(certificate_report(&label, &params, &batch.samples));
    Ok(out.into_iter().map(|r| r.timed(start)).collect())
}

/// The certificate |Q| ≤ exp(−∫K − ∫σ dl) over at least 10⁵ paths, started at a wall.
fn certificate_interval(iv: &IntervalFlow, cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let (s, t) = (0.0, 0.1);
    let paths = cfg.n_paths.max(100_000);
    let n = cfg.steps(t - s);
    let f = cosine(iv.length);
    let batch = gradient_batch(&Stepper::new(iv), iv, &f, s, t, &one_d(0.0), paths, n, Ramp::Linear, cfg.seed_for("certificate"))?;
    let params = format!("x=0;s={s};t={t};paths={paths};steps={n}");
    Ok(vec![certificate_report(&iv.label(), &params, &batch.samples).timed(start)])
}

fn certificate_report<const D: usize>(label: &str, params: &str, samples: &[crate::derivative::GradientSample<D>]) -> CheckReport {
    let violations: usize = samples.iter().map(|g| g.violations).sum();
    let ratio = samples.iter().map(|g| g.max_norm_ratio).fold(0.0, f64::max);
    CheckReport::identity(
        "q-certificate",
        label,
        format!("{params};max_ratio={ratio}"),
        Estimate::exact(violations as f64),
        Estimate::exact(0.0),
        0.0,
    )
}

fn derivative_disk(d: &ScaledDisk, cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let (s, t) = (0.0, 0.1);
    let x = Vector::<2>::new(0.3 * d.radius, 0.2 * d.radius);
    let f = Smooth(|z: &Vector<2>| z[0] + 0.5 * z[1] * z[1], |z: &Vector<2>| Vector::<2>::new(1.0, z[1]));
    let n = cfg.steps(t - s);
    let paths = cfg.paths(2);
    let batch = gradient_batch(&Stepper::new(d), d, &f, s, t, &x, paths, n, Ramp::Linear, cfg.seed_for("derivative:disk"))?;
    let params = format!("f=x+y2/2;s={s};t={t};x={:?};paths={paths};steps={n}", x.as_slice());
    let label = d.label();
    let diff = batch.difference();
    let mut out: Vec<CheckReport> = (0..2)
        .map(|i| {
            CheckReport::identity("bismut-vs-covariant", &label, format!("{params};component={i}"), diff.component(i), Estimate::exact(0.0), 0.0)
        })
        .collect();
    out.push(certificate_report(&label, &params, &batch.samples));
    Ok(out.into_iter().map(|r| r.timed(start)).collect())
}

// ---------------------------------------------------------------- gradient estimate

fn gradient_estimate_interval(iv: &IntervalFlow) -> Result<Vec<CheckReport>> {
    let len = iv.length;
    let cos = move |y: f64| 1.0 + 0.5 * (PI * y / len).cos();
    let dcos = move |y: f64| -0.5 * PI / len * (PI * y / len).sin();
    let quartic = move |y: f64| (y / len).powi(2) * (1.0 - y / len).powi(2);
    let dquartic = move |y: f64| {
        let u = y / len;
        (2.0 * u * (1.0 - u).powi(2) - 2.0 * u * u * (1.0 - u)) / len
    };
    let fs: [(&dyn Fn(f64) -> f64, &dyn Fn(f64) -> f64); 2] = [(&cos, &dcos), (&quartic, &dquartic)];
    let mut out = Vec::new();
    for (f, df) in fs {
        for p in [1.0, 2.0] {
            for (s, t) in [(0.0, 0.1), (0.1, 0.4)] {
                for frac in [0.2, 0.7] {
                    out.push(gradient_bound_oracle(iv, f, df, p, s, t, frac * len)?);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct CapProbe {
    p: f64,
    t: f64,
    offset: (f64, f64),
}

fn cap_probes() -> Vec<CapProbe> {
    let mut v = Vec::new();
    for p in [1.0, 2.0] {
        for t in [0.05, 0.1] {
            for offset in [(0.2, 0.3), (0.5, 0.4)] {
                v.push(CapProbe { p, t, offset });
            }
        }
    }
    v
}

fn gradient_estimate_cap(cap: &RicciFlowCap, pr: CapProbe, cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let f = CapLinear { inner: 0.3 * cap.r_cap, outer: 0.9 * cap.r_cap };
    let x = RicciFlowCap::centre() + Vector::<2>::new(pr.offset.0, pr.offset.1) * cap.r_cap;
    let seed = cfg.seed_for(&format!("gradient:cap:{}:{}:{:?}", pr.p, pr.t, pr.offset));
    Ok(vec![gradient_bound_mc(cap, cap, &f, pr.p, 0.0, pr.t, &x, cfg.paths(8), cfg.steps(pr.t), seed)?])
}

// ---------------------------------------------------------------- coupling

fn parallel_flat_rigidity(cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let flow = FlatFlow::<2>::new();
    let (x, y) = (Vector::<2>::new(0.0, 0.0), Vector::<2>::new(0.3, 0.4));
    let n = cfg.steps(0.25);
    let devs = run_paths(cfg.paths(1000), cfg.seed_for("coupling:flat"), |stream| {
        let mut cs = CoupledState::new(&flow, 0.0, x, y)?;
        let dt = 0.25 / n as f64;
        let mut worst: f64 = 0.0;
        for _ in 0..n {
            cs = coupled_step_parallel(&flow, &cs, dt, &stream.normal_vector())?;
            worst = worst.max((cs.rho - 0.5).abs());
        }
        Ok(worst)
    })?;
    let worst = devs.iter().copied().fold(0.0, f64::max);
    Ok(vec![CheckReport::identity(
        "parallel-rigidity",
        "flat-plane",
        format!("rho=0.5;t=0.25;steps={n};paths={}", devs.len()),
        Estimate::exact(0.5 + worst),
        Estimate::exact(0.5),
        1e-12,
    )])
}

fn monitor<const D: usize, F: MetricFlow<D> + ?Sized + Sync>(
    flow: &F,
    bounds: &(dyn CurvatureBounds + Sync),
    mode: CouplingMode,
    x: Vector<D>,
    y: Vector<D>,
    t: f64,
    n: usize,
    paths: usize,
    seed: u64,
) -> Result<MonitorReport> {
    let c = Coupler::new(flow, mode);
    let glue_seed = derive_seed(seed, 0x676c);
    let reps = run_paths(paths, seed, |stream| {
        let mut glue = RngStream::new(glue_seed, stream.index());
        let p = coupled_path(&c, x, y, 0.0, t, n, stream, Some(&mut glue), true)?;
        distance_bound_monitor(flow, bounds, &p)
    })?;
    Ok(reps.iter().skip(1).fold(reps[0], |a, b| a.merge(b)))
}

fn coupling_checks<const D: usize, F: MetricFlow<D> + Sync>(
    flow: &F,
    bounds: &(dyn CurvatureBounds + Sync),
    x: Vector<D>,
    y: Vector<D>,
    cfg: &SuiteConfig,
) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let label = flow.label();
    let t = 0.2;
    let fine = cfg.steps(t).max(10);
    let coarse = fine / 10;
    let paths = cfg.paths(200);
    let mut out = Vec::new();
    for mode in [CouplingMode::Parallel, CouplingMode::Mirror] {
        let seed = cfg.seed_for(&format!("monitor:{label}:{}", mode.key()));
        let a = monitor(flow, bounds, mode, x, y, t, coarse, paths, seed)?;
        let b = monitor(flow, bounds, mode, x, y, t, fine, paths, seed)?;
        let params = format!("mode={};t={t};steps={coarse}->{fine};paths={paths}", mode.key());
        out.push(CheckReport::inequality(
            "monitor-frequency",
            &label,
            format!("{params};violations={}->{}", a.violations, b.violations),
            Estimate::exact(4.0 * b.frequency()),
            Estimate::exact(a.frequency()),
            0.0,
        ));
        out.push(CheckReport::inequality(
            "monitor-excess",
            &label,
            params,
            Estimate::exact(4.0 * b.max_excess.max(0.0)),
            Estimate::exact(a.max_excess.max(0.0)),
            0.0,
        ));
    }
    for p in [1.0, 2.0] {
        let w = wasserstein_contraction_estimate(flow, bounds, &x, &y, 0.0, t, p, cfg.paths(20), cfg.steps(t), cfg.seed_for(&format!("w:{label}:{p}")))?;
        out.push(CheckReport::inequality(
            "wasserstein-contraction",
            &label,
            format!("p={p};t={t};paths={}", cfg.paths(20)),
            Estimate { mean: w.lhs, stderr: w.stderr, n: 0 },
            Estimate::exact(w.rhs),
            0.0,
        ));
    }
    Ok(out.into_iter().map(|r| r.timed(start)).collect())
}

// ---------------------------------------------------------------- Girsanov and Harnack

fn xi_residual_report(label: &str, xi: &crate::harnack::XiSchedule, horizon: f64) -> CheckReport {
    let worst = (0..50).map(|i| xi.ode_residual(horizon * i as f64 / 50.0)).fold(0.0, f64::max);
    CheckReport::identity("xi-ode-residual", label, format!("theta={}", xi.theta), Estimate::exact(worst), Estimate::exact(0.0), 1e-8)
}

fn girsanov_reports<const D: usize>(
    label: &str,
    runs: &[crate::harnack::GirsanovRun<D>],
    xi: &crate::harnack::XiSchedule,
    rho0: f64,
    params: &str,
) -> Result<Vec<CheckReport>> {
    let sum = summarize(runs);
    let m = moment_bound_check(runs, 2.0, rho0, xi)?;
    Ok(vec![
        CheckReport::identity("girsanov-mean", label, params.to_string(), sum.mean_r, Estimate::exact(1.0), 0.0),
        CheckReport::inequality("girsanov-entropy", label, params.to_string(), sum.entropy, Estimate::exact(entropy_bound(rho0, xi)), 0.0),
        CheckReport::inequality("girsanov-moment", label, format!("{params};p=2"), m.empirical, Estimate::exact(m.bound), 0.0),
        CheckReport::inequality(
            "coalescence-failure",
            label,
            params.to_string(),
            Estimate::exact(1.0 - sum.coalesce_rate),
            Estimate::exact(0.02),
            0.0,
        ),
    ])
}

fn girsanov_interval(iv: &IntervalFlow, theta: f64, cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let horizon = 0.5;
    let a = iv.a;
    let xi = xi_schedule(theta, move |_| -a, 0.0, horizon)?;
    let (x, y) = (one_d(0.3 * iv.length), one_d(0.5 * iv.length));
    let rho0 = link(iv, 0.0, &x, &y, None)?.0.rho;
    let paths = cfg.paths(10);
    let n = cfg.steps(horizon) / 2;
    let runs = girsanov_batch(&Stepper::new(iv), &xi, &x, &y, paths, n, cfg.seed_for(&format!("girsanov:interval:{theta}")))?;
    let label = iv.label();
    let mut out = vec![xi_residual_report(&label, &xi, horizon)];
    out.extend(girsanov_reports(&label, &runs, &xi, rho0, &format!("theta={theta};T={horizon};paths={paths};steps={n}"))?);
    Ok(out.into_iter().map(|r| r.timed(start)).collect())
}

fn harnack_f1(z: &Vector<1>) -> f64 {
    2.0 + (PI * z[0]).cos()
}

fn harnack_interval(iv: &IntervalFlow) -> Result<Vec<CheckReport>> {
    let oe = OracleEval { flow: iv, grid: Grid1D::for_flow(iv), psi: None };
    let len = iv.length;
    let f = move |z: &Vector<1>| 2.0 + (PI * z[0] / len).cos();
    let (x, y) = (one_d(0.3 * len), one_d(0.6 * len));
    let mut out = Vec::new();
    for (a, b, tag) in [(x, y, ""), (y, x, "-swapped")] {
        let mut l = harnack_to_check(&log_harnack_verify(iv, iv, &oe, &f, &a, &b, 0.0, 0.5)?, &iv.label());
        let mut p = harnack_to_check(&p_harnack_verify(iv, iv, &oe, &f, 2.0, &a, &b, 0.0, 0.5)?, &iv.label());
        l.check.push_str(tag);
        p.check.push_str(tag);
        out.push(l);
        out.push(p);
    }
    let _ = harnack_f1;
    Ok(out)
}

fn girsanov_disk(d: &ScaledDisk, cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let horizon = 0.3;
    let bounds = d.clone();
    let xi = xi_schedule(1.0, move |t| bounds.rz_lower(t), 0.0, horizon)?;
    let (x, y) = (Vector::<2>::new(0.1, 0.0) * d.radius, Vector::<2>::new(0.5, 0.2) * d.radius);
    let rho0 = link(d, 0.0, &x, &y, None)?.0.rho;
    let paths = cfg.paths(10);
    let n = cfg.steps(horizon) / 2;
    let runs = girsanov_batch(&Stepper::new(d), &xi, &x, &y, paths, n, cfg.seed_for("girsanov:disk"))?;
    let label = d.label();
    let mut out = vec![xi_residual_report(&label, &xi, horizon)];
    out.extend(girsanov_reports(&label, &runs, &xi, rho0, &format!("theta=1;T={horizon};paths={paths};steps={n}"))?);
    Ok(out.into_iter().map(|r| r.timed(start)).collect())
}

fn harnack_disk(d: &ScaledDisk, cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let t = 0.3;
    let me = MonteCarloEval { stepper: Stepper::new(d), n_paths: cfg.paths(4), n_steps: cfg.steps(t) / 2, seed: cfg.seed_for("harnack:disk") };
    let f = |z: &Vector<2>| 2.0 + z[0] + 0.5 * z[1] * z[1];
    let (x, y) = (Vector::<2>::new(0.1, 0.0) * d.radius, Vector::<2>::new(0.5, 0.2) * d.radius);
    let label = d.label();
    let l = harnack_to_check(&log_harnack_verify(d, d, &me, &f, &x, &y, 0.0, t)?, &label);
    let p = harnack_to_check(&p_harnack_verify(d, d, &me, &f, 2.0, &x, &y, 0.0, t)?, &label);
    Ok(vec![l.timed(start), p.timed(start)])
}

// ---------------------------------------------------------------- variable coefficients, non-convex

fn time_change_cross_check(cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let flat = IntervalFlow::unit(0.0);
    let two = |_t: f64, _x: f64| 2.0;
    let grid = Grid1D::for_flow(&flat);
    let with_psi = OracleEval { flow: &flat, grid, psi: Some(&two) };
    let base = OracleEval { flow: &flat, grid, psi: None };
    let c2 = ConstantField(2.0);
    let t = 0.05;
    let n = cfg.steps(4.0 * t);
    let mc = MonteCarloEval { stepper: Stepper::new(&flat).with_psi(&c2), n_paths: cfg.paths(4), n_steps: n, seed: cfg.seed_for("psi2") };
    let x = one_d(0.2);
    let fx = |z: &Vector<1>| harnack_f1(z);
    let reference = base.eval(&[&fx], 0.0, 4.0 * t, &x)?[0];
    let oracle_psi = with_psi.eval(&[&fx], 0.0, t, &x)?[0];
    let mc_psi = mc.eval(&[&fx], 0.0, t, &x)?[0];
    let label = "interval(a=0)";
    Ok(vec![
        CheckReport::identity("time-change-oracle", label, format!("psi=2;t={t};x=0.2"), oracle_psi, reference, 1e-5).timed(start),
        CheckReport::identity(
            "time-change-mc",
            label,
            format!("psi=2;t={t};x=0.2;paths={};steps={n}", cfg.paths(4)),
            mc_psi,
            reference,
            0.0,
        )
        .timed(start),
    ])
}

fn variable_interval(iv: &IntervalFlow) -> Result<Vec<CheckReport>> {
    let len = iv.length;
    let psi = move |_t: f64, x: f64| 1.0 + 0.25 * (PI * x / len).sin().powi(2);
    let ov = OracleEval { flow: iv, grid: Grid1D::for_flow(iv), psi: Some(&psi) };
    let a = iv.a;
    let constants = VariableConstants {
        k_hat: Box::new(move |t| k_hat(0.0, 2.0 * a.max(0.0), 0.0, 1.25, (-a * t).exp() * PI / (4.0 * len), 1)),
        lambda: 1.0,
        delta: 0.25,
    };
    let f = move |z: &Vector<1>| 2.0 + (PI * z[0] / len).cos();
    let (x, y) = (one_d(0.3 * len), one_d(0.6 * len));
    let rho = link(iv, 0.0, &x, &y, None)?.0.rho;
    let (l, p) = variable_coeff_harnack(&ov, &constants, rho, &f, 2.0, &x, &y, 0.0, 0.5)?;
    Ok(vec![harnack_to_check(&l, &iv.label()), harnack_to_check(&p, &iv.label())])
}

fn bump_phi(b: &HalfPlaneBump) -> Result<BumpPhi> {
    BumpPhi::for_bump(b.clone(), 0.25)
}

fn conformal_constants(b: &HalfPlaneBump) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let phi = bump_phi(b)?;
    let c1 = phi.constants();
    let c2 = phi.constants_with(&|f, lo, hi| (0..=20_000).map(|i| f(lo + (hi - lo) * i as f64 / 20_000.0)).fold(f64::NEG_INFINITY, f64::max));
    let label = b.label();
    let pairs = [
        ("k1", c1.k1, c2.k1),
        ("k_phi_1", c1.k_phi_1, c2.k_phi_1),
        ("grad_phi_sup", c1.grad_phi_sup, c2.grad_phi_sup),
        ("k_phi", c1.k_phi, c2.k_phi),
        ("lambda", c1.lambda, c2.lambda),
    ];
    let mut out: Vec<CheckReport> = pairs
        .iter()
        .map(|&(name, a, g)| {
            CheckReport::identity("constant-reextremized", &label, format!("constant={name}"), Estimate::exact(a), Estimate::exact(g), 0.01 * g.abs().max(1e-12))
                .timed(start)
        })
        .collect();
    out.push(CheckReport::inequality(
        "phi-admissible",
        &label,
        "II+N log phi >= 0".into(),
        Estimate::exact(-phi.admissibility()),
        Estimate::exact(0.0),
        1e-9,
    ));
    Ok(out)
}

fn nonconvex_bump(b: &HalfPlaneBump, cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let phi = bump_phi(b)?;
    let t = 0.5;
    let n = cfg.steps(t) / 5;
    let mb = MonteCarloEval { stepper: Stepper::new(b), n_paths: cfg.paths(10), n_steps: n, seed: cfg.seed_for("nonconvex:bump") };
    let f = |z: &Vector<2>| 2.0 + 0.5 * z[0].sin() + 0.3 * z[1];
    let (x, y) = (Vector::<2>::new(0.0, 0.3), Vector::<2>::new(0.3, 0.4));
    let (l, p, _) = nonconvex_harnack(&mb, &phi, &f, 5.0, &x, &y, 0.0, t)?;
    let label = b.label();
    Ok(vec![harnack_to_check(&l, &label).timed(start), harnack_to_check(&p, &label).timed(start)])
}

// ---------------------------------------------------------------- curvature identification

const RZ_INTERVAL_LADDER: [f64; 3] = [0.002, 0.001, 0.0005];
const RZ_CAP_LADDER: [f64; 3] = [0.004, 0.002, 0.001];
const II_LADDER: [f64; 4] = [0.01, 0.0025, 0.000625, 0.000_156_25];

fn unit_gradient<const D: usize, F: MetricFlow<D> + ?Sized>(flow: &F, t: f64, x: &Vector<D>, df: &Vector<D>) -> Result<Vector<D>> {
    let g = flow.metric(t, x);
    let v = linalg::spd_inverse(&g, t, x)? * df;
    Ok(v / linalg::norm(&g, &v))
}

fn extrapolation_report(check: &str, label: &str, params: String, e: &Extrapolation, target: f64, rel: f64, abs: f64) -> CheckReport {
    let rungs: Vec<String> = e.rungs.iter().map(|(h, v)| format!("{h}:{}", v.mean)).collect();
    // the stated relative tolerance is the whole budget; the fit stderr is reported, not added
    CheckReport::new(
        check,
        label,
        format!("{params};rungs={}", rungs.join("|")),
        CheckKind::Identity,
        e.value,
        Estimate::exact(target),
        rel * target.abs() + abs,
    )
}

fn curvature_interval(iv: &IntervalFlow) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let x = 0.5 * iv.length;
    let s = 0.0;
    let v = one_d((-iv.a * s).exp());
    let target = r_z(iv, s, &one_d(x), &v)?;
    let label = iv.label();
    let mut out = Vec::new();
    for p in [1.0, 2.0] {
        let e = rz_smalltime_interval(iv, x, p, s, &RZ_INTERVAL_LADDER)?;
        out.push(extrapolation_report("rz-smalltime", &label, format!("p={p};x={x}"), &e, target, 0.1, 1e-3));
    }
    let var = rz_variance_interval(iv, x, s, &RZ_INTERVAL_LADDER)?;
    out.push(extrapolation_report("rz-variance-form", &label, format!("x={x}"), &var, target, 0.1, 1e-3));
    let ent = rz_entropy_interval(iv, x, s, &RZ_INTERVAL_LADDER, 100.0)?;
    out.push(extrapolation_report("rz-entropy-form", &label, format!("x={x};shift=100"), &ent, target, 0.1, 1e-3));
    Ok(out.into_iter().map(|r| r.timed(start)).collect())
}

fn curvature_cap(cap: &RicciFlowCap, cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let x = RicciFlowCap::centre();
    let f = CapLinear { inner: 0.6 * cap.r_cap, outer: 0.95 * cap.r_cap };
    let v = unit_gradient(cap, 0.0, &x, &f.grad(&x))?;
    let target = r_z(cap, 0.0, &x, &v)?;
    let paths = cfg.paths(10);
    let e = rz_smalltime_mc(cap, cap, &f, &x, 2.0, 0.0, &RZ_CAP_LADDER, paths, 20, cfg.seed_for("rz:cap"))?;
    Ok(vec![extrapolation_report("rz-smalltime", &cap.label(), format!("p=2;x=centre;paths={paths}"), &e, target, 0.1, 0.0).timed(start)])
}

fn curvature_disk(d: &ScaledDisk, cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let x = Vector::<2>::new(d.radius, 0.0);
    let f = Smooth(|z: &Vector<2>| z[1].atan2(z[0]), |z: &Vector<2>| Vector::<2>::new(-z[1], z[0]) / z.norm_squared());
    let v = unit_gradient(d, 0.0, &x, &f.grad(&x))?;
    let target = second_fundamental_form(d, 0.0, &x, &v, &v)?;
    let paths = cfg.paths(4);
    let e = ii_smalltime(d, &f, &x, 2.0, 0.0, &II_LADDER, paths, 40, cfg.seed_for("ii:disk"))?;
    Ok(vec![extrapolation_report("ii-smalltime", &d.label(), format!("p=2;x=(R,0);paths={paths}"), &e, target, 0.15, 0.0).timed(start)])
}

fn ii_halfplane(cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let flow = FlatFlow::<2>::with_boundary(HalfPlaneBoundary { axis: 1 });
    let f = Smooth(|z: &Vector<2>| z[0], |_: &Vector<2>| Vector::<2>::new(1.0, 0.0));
    let paths = cfg.paths(10);
    let e = ii_smalltime(&flow, &f, &Vector::<2>::zeros(), 2.0, 0.0, &II_LADDER, paths, 40, cfg.seed_for("ii:halfplane"))?;
    Ok(vec![extrapolation_report("ii-smalltime", "flat-halfplane", format!("p=2;x=0;paths={paths}"), &e, 0.0, 0.0, 0.05).timed(start)])
}

// ---------------------------------------------------------------- inequality battery

fn inequalities_interval(iv: &IntervalFlow) -> Result<Vec<CheckReport>> {
    let len = iv.length;
    let grid = Grid1D::for_flow(iv);
    let mut out = Vec::new();
    let cos = move |y: f64| (PI * y / len).cos();
    let quartic = move |y: f64| (y / len).powi(2) * (1.0 - y / len).powi(2);
    for f in [&cos as &dyn Fn(f64) -> f64, &quartic] {
        let (b, n) = kolmogorov_check(iv, f, 0.0, 0.3, &grid)?;
        out.push(b);
        out.push(n);
    }
    let f = move |y: f64| 1.0 + 0.5 * (PI * y / len).cos();
    let df = move |y: f64| -0.5 * PI / len * (PI * y / len).sin();
    let (x, y) = (0.3 * len, 0.6 * len);
    out.extend(gradient_entropy_suite(iv, &f, &df, 0.0, 0.3, x)?);
    out.extend(semigroup_inequality_suite(iv, &f, &df, 0.0, 0.3, x, y)?);
    out.extend(hypercontractivity_suite(iv, &f, 0.0, 0.15, 0.3)?);
    // degenerate cases: constant f, and u = t where q₂ = q₁
    let c = |_: f64| 1.5;
    let zero = |_: f64| 0.0;
    for mut r in gradient_entropy_suite(iv, &c, &zero, 0.0, 0.3, x)? {
        r.params.push_str(";f=const");
        out.push(r);
    }
    let mut same = hypercontractivity_check(iv, &f, 0.0, 0.3, 0.3, 2.0)?;
    same.params.push_str(";u=t");
    out.push(same);
    Ok(out)
}

fn conformal_gradient_bump(b: &HalfPlaneBump, cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let phi = bump_phi(b)?;
    let f = Smooth(|z: &Vector<2>| 1.0 + 0.5 * z[0].sin() + 0.3 * z[1], |z: &Vector<2>| Vector::<2>::new(0.5 * z[0].cos(), 0.3));
    let t = 0.3;
    Ok(vec![conformal_gradient_check(&phi, &f, 0.0, t, &Vector::<2>::new(0.0, 0.2), cfg.paths(10), cfg.steps(t) / 4, cfg.seed_for("conformal:bump"))?])
}
