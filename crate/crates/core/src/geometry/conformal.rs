use super::{fd_step, Boundary, MetricFlow};
use crate::linalg::spd_inverse;
use crate::{Error, Matrix, Result, Vector};

/// A time-dependent scalar field φ_t(x) with chart derivatives.
pub trait ScalarField<const D: usize>: Send + Sync {
    fn value(&self, t: f64, x: &Vector<D>) -> f64;

    /// Chart partials ∂_k φ.
    fn grad(&self, t: f64, x: &Vector<D>) -> Vector<D> {
        Vector::<D>::from_fn(|k, _| {
            let h = fd_step(x[k]);
            let mut xp = *x;
            let mut xm = *x;
            xp[k] += h;
            xm[k] -= h;
            (self.value(t, &xp) - self.value(t, &xm)) / (2.0 * h)
        })
    }

    fn dt(&self, t: f64, x: &Vector<D>) -> f64 {
        let h = fd_step(t);
        (self.value(t + h, x) - self.value(t - h, x)) / (2.0 * h)
    }

    fn hessian(&self, t: f64, x: &Vector<D>) -> Matrix<D> {
        let mut m = Matrix::<D>::zeros();
        for i in 0..D {
            let h = 1e-4 * x[i].abs().max(1.0);
            let mut xp = *x;
            let mut xm = *x;
            xp[i] += h;
            xm[i] -= h;
            let col = (self.grad(t, &xp) - self.grad(t, &xm)) / (2.0 * h);
            m.set_column(i, &col);
        }
        crate::linalg::symmetrize(&m)
    }
}

impl<const D: usize, G: Fn(f64, &Vector<D>) -> f64 + Send + Sync> ScalarField<D> for G {
    fn value(&self, t: f64, x: &Vector<D>) -> f64 {
        self(t, x)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantField(pub f64);

impl<const D: usize> ScalarField<D> for ConstantField {
    fn value(&self, _t: f64, _x: &Vector<D>) -> f64 {
        self.0
    }
    fn grad(&self, _t: f64, _x: &Vector<D>) -> Vector<D> {
        Vector::<D>::zeros()
    }
    fn dt(&self, _t: f64, _x: &Vector<D>) -> f64 {
        0.0
    }
    fn hessian(&self, _t: f64, _x: &Vector<D>) -> Matrix<D> {
        Matrix::<D>::zeros()
    }
}

/// g̃_t = φ_t^{-2} g_t with drift Z̃_t = φ_t² Z_t + (d−2)/2 ∇^t φ_t², so that φ²L_t = Δ̃_t + Z̃_t.
pub struct ConformalFlow<F, P> {
    pub base: F,
    pub phi: P,
}

impl<const D: usize, F: MetricFlow<D>, P: ScalarField<D>> MetricFlow<D> for ConformalFlow<F, P> {
    fn metric(&self, t: f64, x: &Vector<D>) -> Matrix<D> {
        let p = self.phi.value(t, x);
        self.base.metric(t, x) / (p * p)
    }

    fn metric_dt(&self, t: f64, x: &Vector<D>) -> Matrix<D> {
        let p = self.phi.value(t, x);
        let pt = self.phi.dt(t, x);
        self.base.metric_dt(t, x) / (p * p) - self.base.metric(t, x) * (2.0 * pt / (p * p * p))
    }

    fn metric_dx(&self, t: f64, x: &Vector<D>) -> [Matrix<D>; D] {
        let p = self.phi.value(t, x);
        let dp = self.phi.grad(t, x);
        let g = self.base.metric(t, x);
        let dg = self.base.metric_dx(t, x);
        std::array::from_fn(|k| dg[k] / (p * p) - g * (2.0 * dp[k] / (p * p * p)))
    }

    fn drift(&self, t: f64, x: &Vector<D>) -> Vector<D> {
        let p = self.phi.value(t, x);
        let mut z = self.base.drift(t, x) * (p * p);
        if D != 2 {
            let g = self.base.metric(t, x);
            if let Ok(ginv) = spd_inverse(&g, t, x) {
                z += ginv * self.phi.grad(t, x) * ((D as f64 - 2.0) * p);
            }
        }
        z
    }

    fn boundary(&self) -> Option<&dyn Boundary<D>> {
        self.base.boundary()
    }

    fn horizon(&self) -> f64 {
        self.base.horizon()
    }

    fn in_chart(&self, x: &Vector<D>) -> bool {
        self.base.in_chart(x)
    }

    fn label(&self) -> String {
        format!("conformal({})", self.base.label())
    }
}

/// Conformal change by φ ≥ 1, checking the lower bound on the supplied probe points.
pub fn conformal_flow<const D: usize, F: MetricFlow<D>, P: ScalarField<D>>(
    base: F,
    phi: P,
    probes: &[(f64, Vector<D>)],
) -> Result<ConformalFlow<F, P>> {
    for (t, x) in probes {
        let value = phi.value(*t, x);
        if !(value >= 1.0 - 1e-12) {
            return Err(Error::PhiBelowOne { value });
        }
    }
    Ok(ConformalFlow { base, phi })
}
