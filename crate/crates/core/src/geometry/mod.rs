//! Time-dependent Riemannian geometry in a single global chart.

mod boundary;
mod conformal;
mod curvature;
mod geodesic;

pub use boundary::{DiskBoundary, ExteriorDiskBoundary, HalfPlaneBoundary, IntervalBoundary};
pub use conformal::{conformal_flow, ConformalFlow, ConstantField, ScalarField};
pub use curvature::{
    apply_generator, christoffel, hessian_fd, inward_normal, laplacian, r_z, r_z_form, ricci,
    ricci_generic, riemann, second_fundamental_form, second_fundamental_matrix, BoundaryFrame,
    Christoffel, Riemann,
};
pub use geodesic::{
    geodesic_distance, index_z, index_z_boundary_form, link, mirror_map, parallel_transport,
    polyline_length, shoot, Geodesic, Link, ShootingOptions,
};

use crate::{linalg, Matrix, Vector};

/// Relative step for first-order central differences.
pub const FD_STEP: f64 = 1e-5;

#[inline]
pub(crate) fn fd_step(v: f64) -> f64 {
    FD_STEP * v.abs().max(1.0)
}

/// M = {b ≥ 0}, ∂M = {b = 0}.
pub trait Boundary<const D: usize>: Send + Sync {
    fn level(&self, x: &Vector<D>) -> f64;

    fn gradient(&self, x: &Vector<D>) -> Vector<D> {
        Vector::<D>::from_fn(|k, _| {
            let h = fd_step(x[k]);
            let mut xp = *x;
            let mut xm = *x;
            xp[k] += h;
            xm[k] -= h;
            (self.level(&xp) - self.level(&xm)) / (2.0 * h)
        })
    }
}

/// A one-parameter family of metrics g_t in chart coordinates with drift Z_t and optional boundary.
pub trait MetricFlow<const D: usize>: Send + Sync {
    fn metric(&self, t: f64, x: &Vector<D>) -> Matrix<D>;

    fn metric_dt(&self, t: f64, x: &Vector<D>) -> Matrix<D> {
        let h = fd_step(t);
        (self.metric(t + h, x) - self.metric(t - h, x)) / (2.0 * h)
    }

    /// `[k]` is ∂_k g.
    fn metric_dx(&self, t: f64, x: &Vector<D>) -> [Matrix<D>; D] {
        std::array::from_fn(|k| {
            let h = fd_step(x[k]);
            let mut xp = *x;
            let mut xm = *x;
            xp[k] += h;
            xm[k] -= h;
            (self.metric(t, &xp) - self.metric(t, &xm)) / (2.0 * h)
        })
    }

    fn drift(&self, _t: f64, _x: &Vector<D>) -> Vector<D> {
        Vector::<D>::zeros()
    }

    /// Column i holds ∂_i Z.
    fn drift_dx(&self, t: f64, x: &Vector<D>) -> Matrix<D> {
        let mut m = Matrix::<D>::zeros();
        for i in 0..D {
            let h = fd_step(x[i]);
            let mut xp = *x;
            let mut xm = *x;
            xp[i] += h;
            xm[i] -= h;
            let col = (self.drift(t, &xp) - self.drift(t, &xm)) / (2.0 * h);
            m.set_column(i, &col);
        }
        m
    }

    fn boundary(&self) -> Option<&dyn Boundary<D>> {
        None
    }

    /// T_c: every simulated time must stay strictly below it.
    fn horizon(&self) -> f64 {
        f64::INFINITY
    }

    fn in_chart(&self, _x: &Vector<D>) -> bool {
        true
    }

    /// Closed-form Ricci tensor, when the instance knows it.
    fn ricci_closed_form(&self, _t: f64, _x: &Vector<D>) -> Option<Matrix<D>> {
        None
    }

    /// Closed-form geodesic data (distance, end tangents, transport), when available.
    fn link_closed_form(&self, _t: f64, _x: &Vector<D>, _y: &Vector<D>) -> Option<Link<D>> {
        None
    }

    /// Closed-form I^Z_t(x, y), when available.
    fn index_closed_form(&self, _t: f64, _x: &Vector<D>, _y: &Vector<D>) -> Option<f64> {
        None
    }

    fn label(&self) -> String {
        "flow".to_string()
    }
}

impl<const D: usize, F: MetricFlow<D> + ?Sized> MetricFlow<D> for &F {
    fn metric(&self, t: f64, x: &Vector<D>) -> Matrix<D> {
        (**self).metric(t, x)
    }
    fn metric_dt(&self, t: f64, x: &Vector<D>) -> Matrix<D> {
        (**self).metric_dt(t, x)
    }
    fn metric_dx(&self, t: f64, x: &Vector<D>) -> [Matrix<D>; D] {
        (**self).metric_dx(t, x)
    }
    fn drift(&self, t: f64, x: &Vector<D>) -> Vector<D> {
        (**self).drift(t, x)
    }
    fn drift_dx(&self, t: f64, x: &Vector<D>) -> Matrix<D> {
        (**self).drift_dx(t, x)
    }
    fn boundary(&self) -> Option<&dyn Boundary<D>> {
        (**self).boundary()
    }
    fn horizon(&self) -> f64 {
        (**self).horizon()
    }
    fn in_chart(&self, x: &Vector<D>) -> bool {
        (**self).in_chart(x)
    }
    fn ricci_closed_form(&self, t: f64, x: &Vector<D>) -> Option<Matrix<D>> {
        (**self).ricci_closed_form(t, x)
    }
    fn link_closed_form(&self, t: f64, x: &Vector<D>, y: &Vector<D>) -> Option<Link<D>> {
        (**self).link_closed_form(t, x, y)
    }
    fn index_closed_form(&self, t: f64, x: &Vector<D>, y: &Vector<D>) -> Option<f64> {
        (**self).index_closed_form(t, x, y)
    }
    fn label(&self) -> String {
        (**self).label()
    }
}

/// A tangent vector with its base point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVector<const D: usize> {
    pub t: f64,
    pub x: Vector<D>,
    pub v: Vector<D>,
}

impl<const D: usize> TangentVector<D> {
    pub fn new(t: f64, x: Vector<D>, v: Vector<D>) -> Self {
        TangentVector { t, x, v }
    }

    pub fn norm<F: MetricFlow<D> + ?Sized>(&self, flow: &F) -> f64 {
        linalg::norm(&flow.metric(self.t, &self.x), &self.v)
    }
}

/// Flat metric g = identity on R^D, optionally with constant drift and a boundary.
pub struct FlatFlow<const D: usize> {
    pub drift: Vector<D>,
    pub boundary: Option<Box<dyn Boundary<D>>>,
}

impl<const D: usize> FlatFlow<D> {
    pub fn new() -> Self {
        FlatFlow { drift: Vector::<D>::zeros(), boundary: None }
    }

    pub fn with_boundary(b: impl Boundary<D> + 'static) -> Self {
        FlatFlow { drift: Vector::<D>::zeros(), boundary: Some(Box::new(b)) }
    }
}

impl<const D: usize> Default for FlatFlow<D> {
    fn default() -> Self {
        Self::new()
    }
}

impl<const D: usize> MetricFlow<D> for FlatFlow<D> {
    fn metric(&self, _t: f64, _x: &Vector<D>) -> Matrix<D> {
        Matrix::<D>::identity()
    }
    fn metric_dt(&self, _t: f64, _x: &Vector<D>) -> Matrix<D> {
        Matrix::<D>::zeros()
    }
    fn metric_dx(&self, _t: f64, _x: &Vector<D>) -> [Matrix<D>; D] {
        [Matrix::<D>::zeros(); D]
    }
    fn drift(&self, _t: f64, _x: &Vector<D>) -> Vector<D> {
        self.drift
    }
    fn drift_dx(&self, _t: f64, _x: &Vector<D>) -> Matrix<D> {
        Matrix::<D>::zeros()
    }
    fn boundary(&self) -> Option<&dyn Boundary<D>> {
        self.boundary.as_deref()
    }
    fn ricci_closed_form(&self, _t: f64, _x: &Vector<D>) -> Option<Matrix<D>> {
        Some(Matrix::<D>::zeros())
    }
    fn link_closed_form(&self, _t: f64, x: &Vector<D>, y: &Vector<D>) -> Option<Link<D>> {
        Some(Link::straight(x, y, 1.0))
    }
    fn index_closed_form(&self, _t: f64, x: &Vector<D>, y: &Vector<D>) -> Option<f64> {
        let link = Link::straight(x, y, 1.0);
        if link.rho == 0.0 {
            return Some(0.0);
        }
        Some(-self.drift.dot(&link.tangent_start) + self.drift.dot(&link.tangent_end))
    }
    fn label(&self) -> String {
        "flat".to_string()
    }
}
