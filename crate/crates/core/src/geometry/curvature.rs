use super::{fd_step, MetricFlow};
use crate::linalg::{self, spd_inverse, symmetrize};
use crate::{Error, Matrix, Result, Vector};

/// Γ^k_{ij} stored as `0[k][(i, j)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Christoffel<const D: usize>(pub [Matrix<D>; D]);

impl<const D: usize> Christoffel<D> {
    /// (Γ(a, b))^k = Γ^k_{ij} a^i b^j.
    #[inline]
    pub fn contract(&self, a: &Vector<D>, b: &Vector<D>) -> Vector<D> {
        Vector::<D>::from_fn(|k, _| (a.transpose() * self.0[k] * b)[(0, 0)])
    }

    /// A^k_j = Γ^k_{ij} a^i, so that parallel transport along a reads dV = −A V.
    #[inline]
    pub fn along(&self, a: &Vector<D>) -> Matrix<D> {
        Matrix::<D>::from_fn(|k, j| (0..D).map(|i| self.0[k][(i, j)] * a[i]).sum())
    }

    /// Γ^k_{ij} m^{ij} for a symmetric matrix m.
    #[inline]
    pub fn trace_with(&self, m: &Matrix<D>) -> Vector<D> {
        Vector::<D>::from_fn(|k, _| self.0[k].component_mul(m).sum())
    }
}

/// Levi-Civita symbols of g_t at x.
pub fn christoffel<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    t: f64,
    x: &Vector<D>,
) -> Result<Christoffel<D>> {
    let g = flow.metric(t, x);
    let ginv = spd_inverse(&g, t, x)?;
    let dg = flow.metric_dx(t, x);
    Ok(christoffel_from(&ginv, &dg))
}

pub(crate) fn christoffel_from<const D: usize>(ginv: &Matrix<D>, dg: &[Matrix<D>; D]) -> Christoffel<D> {
    // lowered: Γ_{l,ij} = ½(∂_i g_{lj} + ∂_j g_{li} − ∂_l g_{ij})
    let lowered: [Matrix<D>; D] = std::array::from_fn(|l| {
        Matrix::<D>::from_fn(|i, j| 0.5 * (dg[i][(l, j)] + dg[j][(l, i)] - dg[l][(i, j)]))
    });
    Christoffel(std::array::from_fn(|k| {
        let mut m = Matrix::<D>::zeros();
        for l in 0..D {
            m += lowered[l] * ginv[(k, l)];
        }
        m
    }))
}

/// R^l_{ijk} stored as `r[l][i][(j, k)]`, convention R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_[X,Y]Z.
#[derive(Debug, Clone, Copy)]
pub struct Riemann<const D: usize> {
    pub r: [[Matrix<D>; D]; D],
}

impl<const D: usize> Riemann<D> {
    /// R(a, b)c.
    pub fn apply(&self, a: &Vector<D>, b: &Vector<D>, c: &Vector<D>) -> Vector<D> {
        Vector::<D>::from_fn(|l, _| {
            let mut s = 0.0;
            for i in 0..D {
                s += a[i] * (b.transpose() * self.r[l][i] * c)[(0, 0)];
            }
            s
        })
    }

    pub fn ricci(&self) -> Matrix<D> {
        Matrix::<D>::from_fn(|j, k| (0..D).map(|i| self.r[i][i][(j, k)]).sum())
    }
}

/// Curvature tensor from finite differences of the Christoffel symbols.
pub fn riemann<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    t: f64,
    x: &Vector<D>,
) -> Result<Riemann<D>> {
    let gamma = christoffel(flow, t, x)?;
    let mut dgamma = [[Matrix::<D>::zeros(); D]; D]; // dgamma[m][k] = ∂_m Γ^k
    for m in 0..D {
        let h = fd_step(x[m]);
        let mut xp = *x;
        let mut xm = *x;
        xp[m] += h;
        xm[m] -= h;
        let gp = christoffel(flow, t, &xp)?;
        let gm = christoffel(flow, t, &xm)?;
        for k in 0..D {
            dgamma[m][k] = (gp.0[k] - gm.0[k]) / (2.0 * h);
        }
    }
    let mut r = [[Matrix::<D>::zeros(); D]; D];
    for l in 0..D {
        for i in 0..D {
            r[l][i] = Matrix::<D>::from_fn(|j, k| {
                let mut v = dgamma[i][l][(j, k)] - dgamma[j][l][(i, k)];
                for m in 0..D {
                    v += gamma.0[l][(i, m)] * gamma.0[m][(j, k)] - gamma.0[l][(j, m)] * gamma.0[m][(i, k)];
                }
                v
            });
        }
    }
    Ok(Riemann { r })
}

/// Ricci tensor by contraction of the finite-difference curvature tensor.
pub fn ricci_generic<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    t: f64,
    x: &Vector<D>,
) -> Result<Matrix<D>> {
    Ok(symmetrize(&riemann(flow, t, x)?.ricci()))
}

/// Ricci tensor, closed form when the instance provides it.
pub fn ricci<const D: usize, F: MetricFlow<D> + ?Sized>(flow: &F, t: f64, x: &Vector<D>) -> Result<Matrix<D>> {
    match flow.ricci_closed_form(t, x) {
        Some(r) => Ok(r),
        None => ricci_generic(flow, t, x),
    }
}

/// Bilinear form of R^Z_t = Ric_t − ⟨∇^t Z_t, ·⟩_t − ½∂_t g_t as a symmetric matrix.
pub fn r_z_form<const D: usize, F: MetricFlow<D> + ?Sized>(flow: &F, t: f64, x: &Vector<D>) -> Result<Matrix<D>> {
    let g = flow.metric(t, x);
    let ric = ricci(flow, t, x)?;
    let z = flow.drift(t, x);
    let gamma = christoffel(flow, t, x)?;
    // (k, i) entry: (∇_i Z)^k = ∂_i Z^k + Γ^k_{ij} Z^j
    let nabla_z = flow.drift_dx(t, x) + gamma.along(&z);
    Ok(symmetrize(&(ric - g * nabla_z - flow.metric_dt(t, x) * 0.5)))
}

/// R^Z_t(v, v).
pub fn r_z<const D: usize, F: MetricFlow<D> + ?Sized>(flow: &F, t: f64, x: &Vector<D>, v: &Vector<D>) -> Result<f64> {
    let m = r_z_form(flow, t, x)?;
    Ok((v.transpose() * m * v)[(0, 0)])
}

/// Inward unit normal g^{-1}db / |db|, defined wherever db ≠ 0.
pub fn inward_normal<const D: usize, F: MetricFlow<D> + ?Sized>(flow: &F, t: f64, x: &Vector<D>) -> Result<Vector<D>> {
    let b = flow
        .boundary()
        .ok_or_else(|| crate::error::invalid("flow has no boundary"))?;
    let g = flow.metric(t, x);
    let ginv = spd_inverse(&g, t, x)?;
    let db = b.gradient(x);
    let n = ginv * db;
    let len = linalg::norm(&g, &n);
    if !(len > 0.0) {
        return Err(crate::error::invalid("boundary gradient vanishes"));
    }
    Ok(n / len)
}

/// Inward normal and the g_t-orthogonal projector onto its complement at a boundary point.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryFrame<const D: usize> {
    pub t: f64,
    pub x: Vector<D>,
    pub normal: Vector<D>,
    pub projector: Matrix<D>,
}

impl<const D: usize> BoundaryFrame<D> {
    pub fn at<F: MetricFlow<D> + ?Sized>(flow: &F, t: f64, x: &Vector<D>) -> Result<Self> {
        let normal = inward_normal(flow, t, x)?;
        let g = flow.metric(t, x);
        let projector = Matrix::<D>::identity() - normal * (g * normal).transpose();
        Ok(BoundaryFrame { t, x: *x, normal, projector })
    }
}

/// Symmetric matrix B with II_t(v, w) = vᵀ B w for tangential v, w (normal directions projected out).
pub fn second_fundamental_matrix<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    t: f64,
    x: &Vector<D>,
) -> Result<Matrix<D>> {
    let frame = BoundaryFrame::at(flow, t, x)?;
    let gamma = christoffel(flow, t, x)?;
    let g = flow.metric(t, x);
    // S(k, i) = ∂_i N^k + Γ^k_{ij} N^j
    let mut s = Matrix::<D>::zeros();
    for i in 0..D {
        let h = fd_step(x[i]);
        let mut xp = *x;
        let mut xm = *x;
        xp[i] += h;
        xm[i] -= h;
        let col = (inward_normal(flow, t, &xp)? - inward_normal(flow, t, &xm)?) / (2.0 * h);
        s.set_column(i, &col);
    }
    s += gamma.along(&frame.normal);
    let b = -symmetrize(&(g * s));
    Ok(frame.projector.transpose() * b * frame.projector)
}

/// II_t(v, w) = −⟨∇^t_v N_t, w⟩_t at a boundary point for tangential v, w.
pub fn second_fundamental_form<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    t: f64,
    x: &Vector<D>,
    v: &Vector<D>,
    w: &Vector<D>,
) -> Result<f64> {
    let b = flow
        .boundary()
        .ok_or_else(|| crate::error::invalid("flow has no boundary"))?;
    let level = b.level(x);
    if level.abs() > 1e-10 {
        return Err(Error::NotOnBoundary { level });
    }
    let frame = BoundaryFrame::at(flow, t, x)?;
    let g = flow.metric(t, x);
    for u in [v, w] {
        let inner = linalg::inner(&g, u, &frame.normal);
        if inner.abs() >= 1e-8 {
            return Err(Error::NotTangential { inner });
        }
    }
    let m = second_fundamental_matrix(flow, t, x)?;
    Ok((v.transpose() * m * w)[(0, 0)])
}

/// Gradient and Hessian of f by central differences with step h.
pub fn hessian_fd<const D: usize>(f: &dyn Fn(&Vector<D>) -> f64, x: &Vector<D>, h: f64) -> (Vector<D>, Matrix<D>) {
    let f0 = f(x);
    let mut grad = Vector::<D>::zeros();
    let mut hess = Matrix::<D>::zeros();
    for i in 0..D {
        let mut xp = *x;
        let mut xm = *x;
        xp[i] += h;
        xm[i] -= h;
        let fp = f(&xp);
        let fm = f(&xm);
        grad[i] = (fp - fm) / (2.0 * h);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let mut a = *x;
            let mut b = *x;
            let mut c = *x;
            let mut d = *x;
            a[i] += h;
            a[j] += h;
            b[i] += h;
            b[j] -= h;
            c[i] -= h;
            c[j] += h;
            d[i] -= h;
            d[j] -= h;
            let v = (f(&a) - f(&b) - f(&c) + f(&d)) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    (grad, hess)
}

/// L_t f = Δ_t f + Z_t f at x, by finite differences of f.
pub fn apply_generator<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    t: f64,
    x: &Vector<D>,
    f: &dyn Fn(&Vector<D>) -> f64,
) -> Result<f64> {
    Ok(laplacian(flow, t, x, f)? + {
        let (grad, _) = hessian_fd(f, x, 1e-4 * x.amax().max(1.0));
        flow.drift(t, x).dot(&grad)
    })
}

/// Δ_t f = g^{ij}(∂_i∂_j f − Γ^k_{ij}∂_k f).
pub fn laplacian<const D: usize, F: MetricFlow<D> + ?Sized>(
    flow: &F,
    t: f64,
    x: &Vector<D>,
    f: &dyn Fn(&Vector<D>) -> f64,
) -> Result<f64> {
    let g = flow.metric(t, x);
    let ginv = spd_inverse(&g, t, x)?;
    let gamma = christoffel(flow, t, x)?;
    let (grad, hess) = hessian_fd(f, x, 1e-4 * x.amax().max(1.0));
    Ok(ginv.component_mul(&hess).sum() - gamma.trace_with(&ginv).dot(&grad))
}
