//! Model manifolds with closed-form geometry: an exponentially growing interval, a scaled flat
//! disk, a geodesic cap under Ricci flow, and a half-plane with a concave conformal bump.

use crate::geometry::{Boundary, DiskBoundary, HalfPlaneBoundary, IntervalBoundary, Link, MetricFlow};
use crate::{quad, Error, Matrix, Result, Vector};
use std::f64::consts::PI;

/// Pointwise curvature bounds that the estimates of the library are stated in.
pub trait CurvatureBounds {
    /// K(t) with R^Z_t ≥ K(t) g_t.
    fn rz_lower(&self, t: f64) -> f64;
    /// σ(t) with II_t ≥ σ(t) on ∂M.
    fn ii_lower(&self, t: f64) -> f64;
    /// Lower bound of Ric^Z_t.
    fn ric_z_lower(&self, t: f64) -> f64;
    /// K₂(t) with ∂_t g_t ≤ K₂(t) g_t.
    fn dtg_upper(&self, t: f64) -> f64;
    /// ∫_s^t K(r) dr.
    fn rz_integral(&self, s: f64, t: f64) -> f64 {
        quad::gauss_legendre(&|r| self.rz_lower(r), s, t, 8)
    }
}

/// g_t = e^{2at} dx² on [0, L] with constant drift z ∂_x.
#[derive(Debug, Clone)]
pub struct IntervalFlow {
    pub a: f64,
    pub z: f64,
    pub length: f64,
    boundary: IntervalBoundary,
}

impl IntervalFlow {
    pub fn new(a: f64, z: f64, length: f64) -> Self {
        IntervalFlow { a, z, length, boundary: IntervalBoundary { lo: 0.0, hi: length } }
    }

    /// The unit interval without drift.
    pub fn unit(a: f64) -> Self {
        Self::new(a, 0.0, 1.0)
    }

    pub fn scale(&self, t: f64) -> f64 {
        (self.a * t).exp()
    }
}

impl MetricFlow<1> for IntervalFlow {
    fn metric(&self, t: f64, _x: &Vector<1>) -> Matrix<1> {
        Matrix::<1>::new((2.0 * self.a * t).exp())
    }
    fn metric_dt(&self, t: f64, _x: &Vector<1>) -> Matrix<1> {
        Matrix::<1>::new(2.0 * self.a * (2.0 * self.a * t).exp())
    }
    fn metric_dx(&self, _t: f64, _x: &Vector<1>) -> [Matrix<1>; 1] {
        [Matrix::<1>::zeros()]
    }
    fn drift(&self, _t: f64, _x: &Vector<1>) -> Vector<1> {
        Vector::<1>::new(self.z)
    }
    fn drift_dx(&self, _t: f64, _x: &Vector<1>) -> Matrix<1> {
        Matrix::<1>::zeros()
    }
    fn boundary(&self) -> Option<&dyn Boundary<1>> {
        Some(&self.boundary)
    }
    fn ricci_closed_form(&self, _t: f64, _x: &Vector<1>) -> Option<Matrix<1>> {
        Some(Matrix::<1>::zeros())
    }
    fn link_closed_form(&self, t: f64, x: &Vector<1>, y: &Vector<1>) -> Option<Link<1>> {
        Some(Link::straight(x, y, self.scale(t)))
    }
    fn index_closed_form(&self, _t: f64, _x: &Vector<1>, _y: &Vector<1>) -> Option<f64> {
        // Z is g-parallel along the segment, the two Z-terms cancel
        Some(0.0)
    }
    fn label(&self) -> String {
        format!("interval-exp(a={})", self.a)
    }
}

impl CurvatureBounds for IntervalFlow {
    fn rz_lower(&self, _t: f64) -> f64 {
        -self.a
    }
    fn ii_lower(&self, _t: f64) -> f64 {
        0.0
    }
    fn ric_z_lower(&self, _t: f64) -> f64 {
        0.0
    }
    fn dtg_upper(&self, _t: f64) -> f64 {
        2.0 * self.a
    }
    fn rz_integral(&self, s: f64, t: f64) -> f64 {
        -self.a * (t - s)
    }
}

/// Zero is a valid lower bound for every flat boundary in the library (half-spaces, intervals, balls).
impl<const D: usize> CurvatureBounds for crate::geometry::FlatFlow<D> {
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
    fn rz_integral(&self, _s: f64, _t: f64) -> f64 {
        0.0
    }
}

/// Natural cubic spline through (t_i, c_i); linear continuation outside the knots.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    pub fn new(knots: &[(f64, f64)]) -> Result<Self> {
        if knots.is_empty() {
            return Err(crate::error::invalid("spline needs at least one knot"));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(crate::error::invalid("spline knots must be strictly increasing"));
        }
        let t: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let c: Vec<f64> = knots.iter().map(|k| k.1).collect();
        let n = t.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system for interior second derivatives
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                let h0 = t[i + 1] - t[i];
                let h1 = t[i + 2] - t[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((c[i + 2] - c[i + 1]) / h1 - (c[i + 1] - c[i]) / h0);
            }
            let lower: Vec<f64> = (0..k).map(|i| t[i + 1] - t[i]).collect();
            let sol = thomas(&lower, &diag, &upper, &rhs).ok_or_else(|| crate::error::invalid("spline solve failed"))?;
            m[1..n - 1].copy_from_slice(&sol);
        }
        Ok(CubicSpline { knots: t, values: c, second: m })
    }

    pub fn constant(c: f64) -> Self {
        CubicSpline { knots: vec![0.0], values: vec![c], second: vec![0.0] }
    }

    /// (value, first derivative).
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let t = &self.knots;
        let c = &self.values;
        let n = t.len();
        if n == 1 {
            return (c[0], 0.0);
        }
        if x <= t[0] {
            let (_, d) = self.segment(0, t[0]);
            return (c[0] + d * (x - t[0]), d);
        }
        if x >= t[n - 1] {
            let (_, d) = self.segment(n - 2, t[n - 1]);
            return (c[n - 1] + d * (x - t[n - 1]), d);
        }
        let i = t.partition_point(|&k| k <= x).saturating_sub(1).min(n - 2);
        self.segment(i, x)
    }

    fn segment(&self, i: usize, x: f64) -> (f64, f64) {
        let (t0, t1) = (self.knots[i], self.knots[i + 1]);
        let (c0, c1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let h = t1 - t0;
        let a = (t1 - x) / h;
        let b = (x - t0) / h;
        let v = a * c0 + b * c1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d = (c1 - c0) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0 + (3.0 * b * b - 1.0) * h * m1 / 6.0;
        (v, d)
    }
}

/// Thomas algorithm; `lower[0]` and `upper[n-1]` are ignored.
pub(crate) fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut beta = diag[0];
    if beta.abs() < 1e-300 {
        return None;
    }
    c[0] = upper[0] / beta;
    d[0] = rhs[0] / beta;
    for i in 1..n {
        beta = diag[i] - lower[i] * c[i - 1];
        if beta.abs() < 1e-300 || !beta.is_finite() {
            return None;
        }
        c[i] = if i + 1 < n { upper[i] / beta } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

/// Flat disk of radius R with g_t = c(t)² δ.
#[derive(Debug, Clone)]
pub struct ScaledDisk {
    pub radius: f64,
    pub c: CubicSpline,
    boundary: DiskBoundary,
}

impl ScaledDisk {
    pub fn new(radius: f64, c: CubicSpline) -> Self {
        ScaledDisk { radius, c, boundary: DiskBoundary { radius } }
    }

    pub fn scale(&self, t: f64) -> f64 {
        self.c.eval(t).0
    }
}

impl MetricFlow<2> for ScaledDisk {
    fn metric(&self, t: f64, _x: &Vector<2>) -> Matrix<2> {
        let c = self.scale(t);
        Matrix::<2>::identity() * (c * c)
    }
    fn metric_dt(&self, t: f64, _x: &Vector<2>) -> Matrix<2> {
        let (c, dc) = self.c.eval(t);
        Matrix::<2>::identity() * (2.0 * c * dc)
    }
    fn metric_dx(&self, _t: f64, _x: &Vector<2>) -> [Matrix<2>; 2] {
        [Matrix::<2>::zeros(); 2]
    }
    fn drift_dx(&self, _t: f64, _x: &Vector<2>) -> Matrix<2> {
        Matrix::<2>::zeros()
    }
    fn boundary(&self) -> Option<&dyn Boundary<2>> {
        Some(&self.boundary)
    }
    fn ricci_closed_form(&self, _t: f64, _x: &Vector<2>) -> Option<Matrix<2>> {
        Some(Matrix::<2>::zeros())
    }
    fn link_closed_form(&self, t: f64, x: &Vector<2>, y: &Vector<2>) -> Option<Link<2>> {
        Some(Link::straight(x, y, self.scale(t)))
    }
    fn index_closed_form(&self, _t: f64, _x: &Vector<2>, _y: &Vector<2>) -> Option<f64> {
        Some(0.0)
    }
    fn label(&self) -> String {
        "scaled-disk".to_string()
    }
}

impl CurvatureBounds for ScaledDisk {
    fn rz_lower(&self, t: f64) -> f64 {
        let (c, dc) = self.c.eval(t);
        -dc / c
    }
    fn ii_lower(&self, t: f64) -> f64 {
        1.0 / (self.scale(t) * self.radius)
    }
    fn ric_z_lower(&self, _t: f64) -> f64 {
        0.0
    }
    fn dtg_upper(&self, t: f64) -> f64 {
        let (c, dc) = self.c.eval(t);
        2.0 * dc / c
    }
    fn rz_integral(&self, s: f64, t: f64) -> f64 {
        (self.scale(s) / self.scale(t)).ln()
    }
}

/// Geodesic cap of angular radius r_cap < π/2 about the equator point (θ, φ) = (π/2, 0) of the
/// round sphere, polar chart, under the Ricci flow g_t = (1 − 2t) g_{S²}.
#[derive(Debug, Clone)]
pub struct RicciFlowCap {
    pub r_cap: f64,
    boundary: CapBoundary,
}

#[derive(Debug, Clone, Copy)]
struct CapBoundary {
    cos_r: f64,
}

impl Boundary<2> for CapBoundary {
    fn level(&self, x: &Vector<2>) -> f64 {
        x[0].sin() * x[1].cos() - self.cos_r
    }
    fn gradient(&self, x: &Vector<2>) -> Vector<2> {
        Vector::<2>::new(x[0].cos() * x[1].cos(), -x[0].sin() * x[1].sin())
    }
}

type V3 = nalgebra::Vector3<f64>;

impl RicciFlowCap {
    pub fn new(r_cap: f64) -> Result<Self> {
        if !(r_cap > 0.0 && r_cap < 0.5 * PI) {
            return Err(crate::error::invalid("cap radius must lie in (0, π/2)"));
        }
        Ok(RicciFlowCap { r_cap, boundary: CapBoundary { cos_r: r_cap.cos() } })
    }

    pub fn centre() -> Vector<2> {
        Vector::<2>::new(0.5 * PI, 0.0)
    }

    pub fn lambda(t: f64) -> f64 {
        1.0 - 2.0 * t
    }

    pub fn embed(x: &Vector<2>) -> V3 {
        V3::new(x[0].sin() * x[1].cos(), x[0].sin() * x[1].sin(), x[0].cos())
    }

    pub fn from_embedding(p: &V3) -> Vector<2> {
        let p = p.normalize();
        Vector::<2>::new(p[2].clamp(-1.0, 1.0).acos(), p[1].atan2(p[0]))
    }

    /// Chart vector at x as a vector in R³.
    pub fn push(x: &Vector<2>, v: &Vector<2>) -> V3 {
        let (st, ct) = x[0].sin_cos();
        let (sp, cp) = x[1].sin_cos();
        V3::new(ct * cp, ct * sp, -st) * v[0] + V3::new(-st * sp, st * cp, 0.0) * v[1]
    }

    /// Tangent R³ vector at x back to chart components.
    pub fn pull(x: &Vector<2>, w: &V3) -> Vector<2> {
        let (st, ct) = x[0].sin_cos();
        let (sp, cp) = x[1].sin_cos();
        let e_theta = V3::new(ct * cp, ct * sp, -st);
        let e_phi = V3::new(-sp, cp, 0.0);
        Vector::<2>::new(w.dot(&e_theta), w.dot(&e_phi) / st)
    }
}

impl MetricFlow<2> for RicciFlowCap {
    fn metric(&self, t: f64, x: &Vector<2>) -> Matrix<2> {
        let s = x[0].sin();
        Matrix::<2>::new(1.0, 0.0, 0.0, s * s) * Self::lambda(t)
    }
    fn metric_dt(&self, _t: f64, x: &Vector<2>) -> Matrix<2> {
        let s = x[0].sin();
        Matrix::<2>::new(1.0, 0.0, 0.0, s * s) * -2.0
    }
    fn metric_dx(&self, t: f64, x: &Vector<2>) -> [Matrix<2>; 2] {
        let (s, c) = x[0].sin_cos();
        [Matrix::<2>::new(0.0, 0.0, 0.0, 2.0 * s * c) * Self::lambda(t), Matrix::<2>::zeros()]
    }
    fn drift_dx(&self, _t: f64, _x: &Vector<2>) -> Matrix<2> {
        Matrix::<2>::zeros()
    }
    fn boundary(&self) -> Option<&dyn Boundary<2>> {
        Some(&self.boundary)
    }
    fn horizon(&self) -> f64 {
        0.5
    }
    fn in_chart(&self, x: &Vector<2>) -> bool {
        x[0] > 1e-3 && x[0] < PI - 1e-3 && x[1].abs() < PI - 1e-3
    }
    fn ricci_closed_form(&self, _t: f64, x: &Vector<2>) -> Option<Matrix<2>> {
        let s = x[0].sin();
        Some(Matrix::<2>::new(1.0, 0.0, 0.0, s * s))
    }
    fn link_closed_form(&self, t: f64, x: &Vector<2>, y: &Vector<2>) -> Option<Link<2>> {
        let r = Self::lambda(t).sqrt();
        let p = Self::embed(x);
        let q = Self::embed(y);
        let cross = p.cross(&q);
        let sin_a = cross.norm();
        let angle = sin_a.atan2(p.dot(&q));
        if angle < 1e-14 {
            return Some(Link::degenerate());
        }
        let w0 = (q - p * p.dot(&q)).normalize();
        let w1 = -(p - q * p.dot(&q)).normalize();
        let axis = cross / sin_a;
        let (s, c) = angle.sin_cos();
        let rotate = |v: &V3| v * c + axis.cross(v) * s + axis * axis.dot(v) * (1.0 - c);
        let mut transport = Matrix::<2>::zeros();
        for j in 0..2 {
            let mut e = Vector::<2>::zeros();
            e[j] = 1.0;
            transport.set_column(j, &Self::pull(y, &rotate(&Self::push(x, &e))));
        }
        Some(Link {
            rho: r * angle,
            tangent_start: Self::pull(x, &w0) / r,
            tangent_end: Self::pull(y, &w1) / r,
            transport,
        })
    }
    fn index_closed_form(&self, t: f64, x: &Vector<2>, y: &Vector<2>) -> Option<f64> {
        let r = Self::lambda(t).sqrt();
        let rho = self.link_closed_form(t, x, y)?.rho;
        Some(-(2.0 / r) * (rho / (2.0 * r)).tan())
    }
    fn label(&self) -> String {
        format!("ricciflow-capband(r={})", self.r_cap)
    }
}

impl CurvatureBounds for RicciFlowCap {
    fn rz_lower(&self, t: f64) -> f64 {
        2.0 / Self::lambda(t)
    }
    fn ii_lower(&self, t: f64) -> f64 {
        1.0 / (self.r_cap.tan() * Self::lambda(t).sqrt())
    }
    fn ric_z_lower(&self, t: f64) -> f64 {
        1.0 / Self::lambda(t)
    }
    fn dtg_upper(&self, t: f64) -> f64 {
        -2.0 / Self::lambda(t)
    }
    fn rz_integral(&self, s: f64, t: f64) -> f64 {
        (Self::lambda(s) / Self::lambda(t)).ln()
    }
}

/// Half-plane {x₂ ≥ 0} with the static metric e^{2w(x₂)} δ, w(x₂) = A (x₂/s) e^{½ − x₂²/(2s²)}.
/// For A > 0 the boundary is concave: II = −A e^{½}/s.
#[derive(Debug, Clone)]
pub struct HalfPlaneBump {
    pub amp: f64,
    pub width: f64,
    boundary: HalfPlaneBoundary,
    table_step: f64,
    table: Vec<f64>,
}

impl HalfPlaneBump {
    const TABLE_LEN: usize = 4097;

    pub fn new(amp: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(crate::error::invalid("bump width must be positive"));
        }
        let extent = 12.0 * width;
        let step = extent / (Self::TABLE_LEN - 1) as f64;
        let mut table = vec![0.0; Self::TABLE_LEN];
        let mut w = HalfPlaneBump { amp, width, boundary: HalfPlaneBoundary { axis: 1 }, table_step: step, table: vec![] };
        for i in 1..Self::TABLE_LEN {
            let a = (i - 1) as f64 * step;
            table[i] = table[i - 1] + quad::gauss_legendre(&|u| w.w(u).exp(), a, a + step, 1);
        }
        w.table = table;
        Ok(w)
    }

    pub fn flat() -> Self {
        Self::new(0.0, 1.0).expect("valid")
    }

    pub fn w(&self, x2: f64) -> f64 {
        let u = x2 / self.width;
        self.amp * u * (0.5 - 0.5 * u * u).exp()
    }

    pub fn dw(&self, x2: f64) -> f64 {
        let u = x2 / self.width;
        self.amp / self.width * (0.5 - 0.5 * u * u).exp() * (1.0 - u * u)
    }

    pub fn d2w(&self, x2: f64) -> f64 {
        let u = x2 / self.width;
        self.amp / (self.width * self.width) * (0.5 - 0.5 * u * u).exp() * u * (u * u - 3.0)
    }

    /// Gaussian curvature −e^{−2w} w''.
    pub fn gauss_curvature(&self, x2: f64) -> f64 {
        -(-2.0 * self.w(x2)).exp() * self.d2w(x2)
    }

    /// g-distance to the boundary, ∫₀^{x₂} e^{w}.
    pub fn boundary_distance(&self, x2: f64) -> f64 {
        let x2 = x2.max(0.0);
        let pos = x2 / self.table_step;
        let i = pos.floor() as usize;
        if i + 1 >= self.table.len() {
            let end = (self.table.len() - 1) as f64 * self.table_step;
            return self.table[self.table.len() - 1] + (x2 - end);
        }
        // cubic Hermite with the exact derivative e^{w}
        let (x0, x1) = (i as f64 * self.table_step, (i + 1) as f64 * self.table_step);
        let h = self.table_step;
        let s = (x2 - x0) / h;
        let (y0, y1) = (self.table[i], self.table[i + 1]);
        let (d0, d1) = (self.w(x0).exp() * h, self.w(x1).exp() * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * d1
    }

    /// Δ_g of the boundary distance, w' e^{−w}.
    pub fn laplacian_boundary_distance(&self, x2: f64) -> f64 {
        self.dw(x2) * (-self.w(x2)).exp()
    }

    /// Boundary concavity II = −e^{−w(0)} w'(0).
    pub fn boundary_ii(&self) -> f64 {
        -self.dw(0.0)
    }
}

impl MetricFlow<2> for HalfPlaneBump {
    fn metric(&self, _t: f64, x: &Vector<2>) -> Matrix<2> {
        Matrix::<2>::identity() * (2.0 * self.w(x[1])).exp()
    }
    fn metric_dt(&self, _t: f64, _x: &Vector<2>) -> Matrix<2> {
        Matrix::<2>::zeros()
    }
    fn metric_dx(&self, _t: f64, x: &Vector<2>) -> [Matrix<2>; 2] {
        let e = (2.0 * self.w(x[1])).exp();
        [Matrix::<2>::zeros(), Matrix::<2>::identity() * (2.0 * self.dw(x[1]) * e)]
    }
    fn drift_dx(&self, _t: f64, _x: &Vector<2>) -> Matrix<2> {
        Matrix::<2>::zeros()
    }
    fn boundary(&self) -> Option<&dyn Boundary<2>> {
        Some(&self.boundary)
    }
    fn ricci_closed_form(&self, _t: f64, x: &Vector<2>) -> Option<Matrix<2>> {
        Some(self.metric(0.0, x) * self.gauss_curvature(x[1]))
    }
    fn link_closed_form(&self, _t: f64, x: &Vector<2>, y: &Vector<2>) -> Option<Link<2>> {
        (self.amp == 0.0).then(|| Link::straight(x, y, 1.0))
    }
    fn label(&self) -> String {
        format!("halfplane-bump(A={}, s={})", self.amp, self.width)
    }
}

impl CurvatureBounds for HalfPlaneBump {
    fn rz_lower(&self, _t: f64) -> f64 {
        if self.amp == 0.0 {
            return 0.0;
        }
        let (_, m) = quad::maximize(&|x2| -self.gauss_curvature(x2), 0.0, 8.0 * self.width, 400);
        -m
    }
    fn ii_lower(&self, _t: f64) -> f64 {
        self.boundary_ii()
    }
    fn ric_z_lower(&self, t: f64) -> f64 {
        self.rz_lower(t)
    }
    fn dtg_upper(&self, _t: f64) -> f64 {
        0.0
    }
}

/// Catalog instance selected by key.
#[derive(Debug, Clone)]
pub enum Instance {
    Interval(IntervalFlow),
    Disk(ScaledDisk),
    Cap(RicciFlowCap),
    Bump(HalfPlaneBump),
}

/// Numeric parameters for catalog construction; unset fields take defaults.
#[derive(Debug, Clone, Default)]
pub struct InstanceParams {
    pub a: Option<f64>,
    pub z: Option<f64>,
    pub length: Option<f64>,
    pub radius: Option<f64>,
    pub knots: Option<Vec<(f64, f64)>>,
    pub r_cap: Option<f64>,
    pub amp: Option<f64>,
    pub width: Option<f64>,
}

pub const INSTANCE_KEYS: [&str; 4] = ["interval-exp", "scaled-disk", "ricciflow-capband", "halfplane-bump"];

impl Instance {
    pub fn from_key(key: &str, p: &InstanceParams) -> Result<Self> {
        Ok(match key {
            "interval-exp" => Instance::Interval(IntervalFlow::new(
                p.a.unwrap_or(0.5),
                p.z.unwrap_or(0.0),
                p.length.unwrap_or(1.0),
            )),
            "scaled-disk" => {
                let spline = match &p.knots {
                    Some(k) => CubicSpline::new(k)?,
                    None => CubicSpline::new(&[(0.0, 1.0), (0.5, 1.15), (1.0, 1.25)])?,
                };
                Instance::Disk(ScaledDisk::new(p.radius.unwrap_or(1.0), spline))
            }
            "ricciflow-capband" => Instance::Cap(RicciFlowCap::new(p.r_cap.unwrap_or(1.0))?),
            "halfplane-bump" => Instance::Bump(HalfPlaneBump::new(p.amp.unwrap_or(0.3), p.width.unwrap_or(0.5))?),
            other => return Err(Error::InvalidArgument(format!("unknown instance key '{other}'"))),
        })
    }

    pub fn key(&self) -> &'static str {
        match self {
            Instance::Interval(_) => "interval-exp",
            Instance::Disk(_) => "scaled-disk",
            Instance::Cap(_) => "ricciflow-capband",
            Instance::Bump(_) => "halfplane-bump",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Instance::Interval(_) => 1,
            _ => 2,
        }
    }
}
