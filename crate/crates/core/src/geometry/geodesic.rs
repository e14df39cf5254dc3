use super::curvature::{christoffel, christoffel_from, riemann, Christoffel};
use super::{fd_step, MetricFlow};
use crate::linalg::{self, spd_inverse};
use crate::{Error, Matrix, Result, Vector};

/// What couplings need from the minimal geodesic between x and y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link<const D: usize> {
    pub rho: f64,
    /// Unit tangent at x pointing toward y.
    pub tangent_start: Vector<D>,
    /// Unit tangent at y, continuing away from x.
    pub tangent_end: Vector<D>,
    /// Parallel transport T_xM → T_yM along the geodesic, acting on components.
    pub transport: Matrix<D>,
}

impl<const D: usize> Link<D> {
    pub fn degenerate() -> Self {
        Link {
            rho: 0.0,
            tangent_start: Vector::<D>::zeros(),
            tangent_end: Vector::<D>::zeros(),
            transport: Matrix::<D>::identity(),
        }
    }

    /// Straight chart segment for a metric c²·δ (spatially constant conformal factor).
    pub fn straight(x: &Vector<D>, y: &Vector<D>, c: f64) -> Self {
        let d = y - x;
        let e = d.norm();
        if e == 0.0 {
            return Link::degenerate();
        }
        let tan = d / (e * c);
        Link { rho: c * e, tangent_start: tan, tangent_end: tan, transport: Matrix::<D>::identity() }
    }

    /// v ↦ P v − 2⟨v, γ̇(0)⟩ γ̇(ρ); identity when the points coincide.
    pub fn mirror(&self, g_start: &Matrix<D>, v: &Vector<D>) -> Vector<D> {
        if self.rho < 1e-12 {
            return *v;
        }
        self.transport * v - 2.0 * linalg::inner(g_start, v, &self.tangent_start) * self.tangent_end
    }

    /// The same geodesic traversed from y to x.
    pub fn reversed(&self) -> Self {
        if self.rho == 0.0 {
            return *self;
        }
        Link {
            rho: self.rho,
            tangent_start: -self.tangent_end,
            tangent_end: -self.tangent_start,
            transport: linalg::inverse(&self.transport).unwrap_or(Matrix::<D>::identity()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ShootingOptions {
    pub n_points: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        ShootingOptions { n_points: 64, tol: 1e-8, max_iter: 50 }
    }
}

/// A shot geodesic: polyline, initial chart velocity (parameter s ∈ [0,1]) and link data.
#[derive(Debug, Clone)]
pub struct Geodesic<const D: usize> {
    pub rho: f64,
    pub points: Vec<Vector<D>>,
    pub velocities: Vec<Vector<D>>,
    pub initial_velocity: Vector<D>,
    pub link: Link<D>,
}

struct Flowed<const D: usize> {
    points: Vec<Vector<D>>,
    velocities: Vec<Vector<D>>,
    transport: Matrix<D>,
}

fn gamma_at<const D: usize, F: MetricFlow<D> + ?Sized>(flow: &F, t: f64, x: &Vector<D>) -> Result<Christoffel<D>> {
    christoffel(flow, t, x)
}

/// RK4 on (x, v, P) with ẍ = −Γ(ẋ,ẋ), Ṗ = −Γ(ẋ, P).
fn integrate<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    t: f64,
    x0: &Vector<D>,
    v0: &Vector<D>,
    n_points: usize,
    with_transport: bool,
) -> Result<Flowed<D>> {
    let n = n_points.max(2) - 1;
    let h = 1.0 / n as f64;
    let mut x = *x0;
    let mut v = *v0;
    let mut p = Matrix::<D>::identity();
    let mut points = Vec::with_capacity(n + 1);
    let mut velocities = Vec::with_capacity(n + 1);
    points.push(x);
    velocities.push(v);
    let rhs = |x: &Vector<D>, v: &Vector<D>, p: &Matrix<D>| -> Result<(Vector<D>, Vector<D>, Matrix<D>)> {
        let gm = gamma_at(flow, t, x)?;
        let a = -gm.contract(v, v);
        let dp = if with_transport { -gm.along(v) * p } else { Matrix::<D>::zeros() };
        Ok((*v, a, dp))
    };
    for _ in 0..n {
        let (k1x, k1v, k1p) = rhs(&x, &v, &p)?;
        let (k2x, k2v, k2p) = rhs(&(x + k1x * (0.5 * h)), &(v + k1v * (0.5 * h)), &(p + k1p * (0.5 * h)))?;
        let (k3x, k3v, k3p) = rhs(&(x + k2x * (0.5 * h)), &(v + k2v * (0.5 * h)), &(p + k2p * (0.5 * h)))?;
        let (k4x, k4v, k4p) = rhs(&(x + k3x * h), &(v + k3v * h), &(p + k3p * h))?;
        x += (k1x + 2.0 * k2x + 2.0 * k3x + k4x) * (h / 6.0);
        v += (k1v + 2.0 * k2v + 2.0 * k3v + k4v) * (h / 6.0);
        p += (k1p + 2.0 * k2p + 2.0 * k3p + k4p) * (h / 6.0);
        if !x.iter().all(|c| c.is_finite()) {
            return Err(Error::ShootingNoConvergence { miss: f64::INFINITY, iterations: 0 });
        }
        points.push(x);
        velocities.push(v);
    }
    Ok(Flowed { points, velocities, transport: p })
}

/// Two-point shooting by damped Newton on the initial velocity, started from the chart straight
/// line (or from `guess`).
pub fn shoot<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    t: f64,
    x: &Vector<D>,
    y: &Vector<D>,
    opts: &ShootingOptions,
    guess: Option<Vector<D>>,
) -> Result<Geodesic<D>> {
    if x == y {
        return Ok(Geodesic {
            rho: 0.0,
            points: vec![*x, *y],
            velocities: vec![Vector::<D>::zeros(); 2],
            initial_velocity: Vector::<D>::zeros(),
            link: Link::degenerate(),
        });
    }
    let end = |v: &Vector<D>| -> Result<Vector<D>> {
        let f = integrate(flow, t, x, v, opts.n_points, false)?;
        Ok(*f.points.last().unwrap())
    };
    let mut v = guess.unwrap_or(y - x);
    let mut miss_vec = end(&v)? - y;
    let mut miss = miss_vec.norm();
    let mut iter = 0;
    while miss > opts.tol {
        if iter >= opts.max_iter {
            return Err(Error::ShootingNoConvergence { miss, iterations: iter });
        }
        iter += 1;
        let mut jac = Matrix::<D>::zeros();
        for j in 0..D {
            let h = 1e-7 * v.amax().max(1.0);
            let mut vp = v;
            vp[j] += h;
            let col = (end(&vp)? - y - miss_vec) / h;
            jac.set_column(j, &col);
        }
        let step = linalg::solve(&jac, &(-miss_vec))
            .ok_or(Error::ShootingNoConvergence { miss, iterations: iter })?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial = v + step * lambda;
            if let Ok(e) = end(&trial) {
                let r = e - y;
                if r.norm() < miss {
                    v = trial;
                    miss_vec = r;
                    miss = r.norm();
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::ShootingNoConvergence { miss, iterations: iter });
        }
    }
    let flowed = integrate(flow, t, x, &v, opts.n_points, true)?;
    let gx = flow.metric(t, x);
    let rho = linalg::norm(&gx, &v);
    let v_end = *flowed.velocities.last().unwrap();
    let gy = flow.metric(t, y);
    let mut points = flowed.points;
    *points.last_mut().unwrap() = *y;
    Ok(Geodesic {
        rho,
        points,
        velocities: flowed.velocities,
        initial_velocity: v,
        link: Link {
            rho,
            tangent_start: v / rho,
            tangent_end: v_end / linalg::norm(&gy, &v_end),
            transport: flowed.transport,
        },
    })
}

/// ρ_t(x, y) and the discretized minimal geodesic from x.
pub fn geodesic_distance<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    t: f64,
    x: &Vector<D>,
    y: &Vector<D>,
) -> Result<(f64, Vec<Vector<D>>)> {
    let geo = shoot(flow, t, x, y, &ShootingOptions::default(), None)?;
    if geo.rho == 0.0 {
        return Ok((0.0, geo.points));
    }
    // both directions, each from the default guess: then ρ(y,x) averages the very same two shots
    let back = shoot(flow, t, y, x, &ShootingOptions::default(), None)?;
    Ok((0.5 * (geo.rho + back.rho), geo.points))
}

/// Link data, closed form when the instance provides it, otherwise by shooting.
pub fn link<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    t: f64,
    x: &Vector<D>,
    y: &Vector<D>,
    guess: Option<Vector<D>>,
) -> Result<(Link<D>, Option<Vector<D>>)> {
    if let Some(l) = flow.link_closed_form(t, x, y) {
        return Ok((l, None));
    }
    let geo = shoot(flow, t, x, y, &ShootingOptions::default(), guess)?;
    Ok((geo.link, Some(geo.initial_velocity)))
}

/// Discrete g_t-length of a polyline, metric evaluated at segment midpoints.
pub fn polyline_length<const D: usize, F: MetricFlow<D> + ?Sized>(flow: &F, t: f64, pts: &[Vector<D>]) -> f64 {
    pts.windows(2)
        .map(|w| {
            let mid = (w[0] + w[1]) * 0.5;
            linalg::norm(&flow.metric(t, &mid), &(w[1] - w[0]))
        })
        .sum()
}

/// Parallel transport of v along a polyline (linearly interpolated), RK4 per segment.
pub fn parallel_transport<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    t: f64,
    curve: &[Vector<D>],
    v: &Vector<D>,
) -> Result<Vector<D>> {
    let mut w = *v;
    for seg in curve.windows(2) {
        let a = seg[0];
        let d = seg[1] - seg[0];
        let rhs = |s: f64, w: &Vector<D>| -> Result<Vector<D>> {
            let gm = christoffel(flow, t, &(a + d * s))?;
            Ok(-gm.contract(&d, w))
        };
        let k1 = rhs(0.0, &w)?;
        let k2 = rhs(0.5, &(w + k1 * 0.5))?;
        let k3 = rhs(0.5, &(w + k2 * 0.5))?;
        let k4 = rhs(1.0, &(w + k3))?;
        w += (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
    }
    Ok(w)
}

/// Mirror map M^t_{x,y} v = P v − 2⟨v, γ̇⟩_t(x) γ̇(y); identity when x = y.
pub fn mirror_map<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    t: f64,
    x: &Vector<D>,
    y: &Vector<D>,
    v: &Vector<D>,
) -> Result<Vector<D>> {
    let (l, _) = link(flow, t, x, y, None)?;
    Ok(l.mirror(&flow.metric(t, x), v))
}

/// g-orthonormal basis of the complement of the unit vector e.
fn orthonormal_complement<const D: usize>(g: &Matrix<D>, e: &Vector<D>) -> Vec<Vector<D>> {
    let mut basis: Vec<Vector<D>> = vec![*e];
    let mut out = Vec::new();
    for k in 0..D {
        let mut v = Vector::<D>::zeros();
        v[k] = 1.0;
        for b in &basis {
            v -= b * linalg::inner(g, &v, b);
        }
        let n = linalg::norm(g, &v);
        if n > 1e-8 && basis.len() < D {
            let v = v / n;
            basis.push(v);
            out.push(v);
        }
    }
    out
}

/// Jacobi fields along a shot geodesic as solutions of the linearized geodesic equation.
/// Returns, per complement direction, (J(s_k), J'(s_k)) at the polyline nodes (s-parameter).
fn jacobi_fields<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    t: f64,
    geo: &Geodesic<D>,
) -> Result<Vec<Vec<(Vector<D>, Vector<D>)>>> {
    let x = geo.points[0];
    let gx = flow.metric(t, &x);
    let starts = orthonormal_complement(&gx, &geo.link.tangent_start);
    let n = geo.points.len() - 1;
    let h = 1.0 / n as f64;
    // Linearized system: δẍ = −(∂_m Γ)(ẋ, ẋ) δx^m − 2Γ(ẋ, δẋ), with the base geodesic re-integrated
    // alongside so that every RK stage sees a consistent base state.
    let dgamma = |x: &Vector<D>| -> Result<(Christoffel<D>, [Christoffel<D>; D])> {
        let g0 = christoffel(flow, t, x)?;
        let mut d = [g0; D];
        for m in 0..D {
            let hh = fd_step(x[m]);
            let mut xp = *x;
            let mut xm = *x;
            xp[m] += hh;
            xm[m] -= hh;
            let gp = christoffel(flow, t, &xp)?;
            let gmn = christoffel(flow, t, &xm)?;
            d[m] = Christoffel(std::array::from_fn(|k| (gp.0[k] - gmn.0[k]) / (2.0 * hh)));
        }
        Ok((g0, d))
    };
    // Fundamental solutions: columns (δx(0), δẋ(0)) = (e_j, 0) and (0, e_j).
    let solve = |dx0: Vector<D>, dv0: Vector<D>| -> Result<Vec<(Vector<D>, Vector<D>)>> {
        let mut xb = x;
        let mut vb = geo.initial_velocity;
        let mut dx = dx0;
        let mut dv = dv0;
        let mut out = Vec::with_capacity(n + 1);
        out.push((dx, dv));
        let rhs = |xb: &Vector<D>, vb: &Vector<D>, dx: &Vector<D>, dv: &Vector<D>| -> Result<[Vector<D>; 4]> {
            let (g0, d) = dgamma(xb)?;
            let mut a = -2.0 * g0.contract(vb, dv);
            for m in 0..D {
                a -= d[m].contract(vb, vb) * dx[m];
            }
            Ok([*vb, -g0.contract(vb, vb), *dv, a])
        };
        for _ in 0..n {
            let k1 = rhs(&xb, &vb, &dx, &dv)?;
            let k2 = rhs(&(xb + k1[0] * (0.5 * h)), &(vb + k1[1] * (0.5 * h)), &(dx + k1[2] * (0.5 * h)), &(dv + k1[3] * (0.5 * h)))?;
            let k3 = rhs(&(xb + k2[0] * (0.5 * h)), &(vb + k2[1] * (0.5 * h)), &(dx + k2[2] * (0.5 * h)), &(dv + k2[3] * (0.5 * h)))?;
            let k4 = rhs(&(xb + k3[0] * h), &(vb + k3[1] * h), &(dx + k3[2] * h), &(dv + k3[3] * h))?;
            xb += (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]) * (h / 6.0);
            vb += (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]) * (h / 6.0);
            dx += (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]) * (h / 6.0);
            dv += (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]) * (h / 6.0);
            out.push((dx, dv));
        }
        Ok(out)
    };
    let mut pos_sols = Vec::new();
    let mut vel_sols = Vec::new();
    for j in 0..D {
        let mut e = Vector::<D>::zeros();
        e[j] = 1.0;
        pos_sols.push(solve(e, Vector::<D>::zeros())?);
        vel_sols.push(solve(Vector::<D>::zeros(), e)?);
    }
    // Endpoint map A: δẋ(0) ↦ δx(1) for δx(0) = 0.
    let a = Matrix::<D>::from_fn(|i, j| vel_sols[j][n].0[i]);
    let mut fields = Vec::new();
    for e in starts {
        let target = geo.link.transport * e;
        let from_pos: Vector<D> = (0..D).fold(Vector::<D>::zeros(), |acc, j| acc + pos_sols[j][n].0 * e[j]);
        let c = linalg::solve(&a, &(target - from_pos))
            .ok_or(Error::ShootingNoConvergence { miss: f64::NAN, iterations: 0 })?;
        let field: Vec<(Vector<D>, Vector<D>)> = (0..=n)
            .map(|k| {
                let mut jx = Vector::<D>::zeros();
                let mut jv = Vector::<D>::zeros();
                for j in 0..D {
                    jx += pos_sols[j][k].0 * e[j] + vel_sols[j][k].0 * c[j];
                    jv += pos_sols[j][k].1 * e[j] + vel_sols[j][k].1 * c[j];
                }
                (jx, jv)
            })
            .collect();
        fields.push(field);
    }
    Ok(fields)
}

fn z_terms<const D: usize, F: MetricFlow<D> + ?Sized>(flow: &F, t: f64, x: &Vector<D>, y: &Vector<D>, l: &Link<D>) -> f64 {
    let gx = flow.metric(t, x);
    let gy = flow.metric(t, y);
    -linalg::inner(&gx, &flow.drift(t, x), &l.tangent_start) + linalg::inner(&gy, &flow.drift(t, y), &l.tangent_end)
}

/// I^Z_t(x, y): index forms of the Jacobi fields J_i with J_i(x) an orthonormal complement of γ̇
/// and J_i(y) its parallel transport, evaluated by quadrature of ⟨J', J'⟩ − ⟨R(J, γ̇)γ̇, J⟩,
/// plus the Z-derivatives of the distance.
pub fn index_z<const D: usize, F: MetricFlow<D> + ?Sized>(flow: &F, t: f64, x: &Vector<D>, y: &Vector<D>) -> Result<f64> {
    if x == y {
        return Ok(0.0);
    }
    let geo = shoot(flow, t, x, y, &ShootingOptions { n_points: 129, ..Default::default() }, None)?;
    let mut total = z_terms(flow, t, x, y, &geo.link);
    if D == 1 {
        return Ok(total);
    }
    let fields = jacobi_fields(flow, t, &geo)?;
    let n = geo.points.len() - 1;
    let rho = geo.rho;
    // integrand in arclength σ = ρ s; values at the nodes, composite Simpson in s
    let mut integrand = vec![0.0; n + 1];
    let curv: Vec<_> = geo.points.iter().map(|p| riemann(flow, t, p)).collect::<Result<_>>()?;
    let gam: Vec<_> = geo.points.iter().map(|p| christoffel(flow, t, p)).collect::<Result<_>>()?;
    for field in &fields {
        for k in 0..=n {
            let p = geo.points[k];
            let g = flow.metric(t, &p);
            let vel = geo.velocities[k];
            let (j, jd) = field[k];
            // covariant derivative in σ
            let cov = (jd + gam[k].contract(&vel, &j)) / rho;
            let unit = vel / rho;
            let rj = curv[k].apply(&j, &unit, &unit);
            integrand[k] = linalg::inner(&g, &cov, &cov) - linalg::inner(&g, &rj, &j);
        }
        total += simpson(&integrand, rho / n as f64);
    }
    Ok(total)
}

/// Same quantity through the boundary-term identity I(J, J) = ⟨∇J, J⟩|_0^ρ valid for Jacobi fields.
pub fn index_z_boundary_form<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    t: f64,
    x: &Vector<D>,
    y: &Vector<D>,
) -> Result<f64> {
    if x == y {
        return Ok(0.0);
    }
    let geo = shoot(flow, t, x, y, &ShootingOptions { n_points: 129, ..Default::default() }, None)?;
    let mut total = z_terms(flow, t, x, y, &geo.link);
    if D == 1 {
        return Ok(total);
    }
    let fields = jacobi_fields(flow, t, &geo)?;
    let n = geo.points.len() - 1;
    for field in &fields {
        let mut ends = [0.0; 2];
        for (slot, k) in [0usize, n].into_iter().enumerate() {
            let p = geo.points[k];
            let g = flow.metric(t, &p);
            let ginv = spd_inverse(&g, t, &p)?;
            let gm = christoffel_from(&ginv, &flow.metric_dx(t, &p));
            let (j, jd) = field[k];
            let cov = (jd + gm.contract(&geo.velocities[k], &j)) / geo.rho;
            ends[slot] = linalg::inner(&g, &cov, &j);
        }
        total += ends[1] - ends[0];
    }
    Ok(total)
}

fn simpson(v: &[f64], h: f64) -> f64 {
    let n = v.len() - 1;
    if n % 2 == 1 {
        // trapezoid fallback on odd panel counts
        return h * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[n]));
    }
    let mut s = v[0] + v[n];
    for (k, val) in v.iter().enumerate().take(n).skip(1) {
        s += if k % 2 == 1 { 4.0 * val } else { 2.0 * val };
    }
    s * h / 3.0
}
