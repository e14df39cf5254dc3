//! Small dense helpers on statically sized matrices.

use crate::{Error, Matrix, Result, Vector};

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse<const D: usize>(g: &Matrix<D>, t: f64, x: &Vector<D>) -> Result<Matrix<D>> {
    match g.cholesky() {
        Some(ch) => Ok(ch.inverse()),
        None => Err(Error::SingularMetric { t, x: x.iter().copied().collect() }),
    }
}

/// Symmetric inverse square root S^{-1/2} of an SPD matrix.
pub fn inv_sqrt_spd<const D: usize>(s: &Matrix<D>) -> Option<Matrix<D>> {
    if D == 1 {
        let v = s[(0, 0)];
        return if v > 0.0 { Some(Matrix::<D>::from_element(1.0 / v.sqrt())) } else { None };
    }
    let (vals, vecs) = symmetric_eigen(s);
    if vals.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
        return None;
    }
    let mut d = Matrix::<D>::zeros();
    for i in 0..D {
        d[(i, i)] = 1.0 / vals[i].sqrt();
    }
    Some(vecs * d * vecs.transpose())
}

/// Canonical g-orthonormal frame g^{-1/2}.
pub fn orthonormal_frame<const D: usize>(g: &Matrix<D>, t: f64, x: &Vector<D>) -> Result<Matrix<D>> {
    inv_sqrt_spd(g).ok_or(Error::SingularMetric { t, x: x.iter().copied().collect() })
}

/// Re-orthonormalize a frame: u (uᵀ g u)^{-1/2}. Returns the frame and ‖uᵀgu − I‖_F before the fix.
pub fn renormalize_frame<const D: usize>(u: &Matrix<D>, g: &Matrix<D>) -> Option<(Matrix<D>, f64)> {
    let s = u.transpose() * g * u;
    let residual = (s - Matrix::<D>::identity()).norm();
    let fix = inv_sqrt_spd(&s)?;
    Some((u * fix, residual))
}

/// Spectral norm; closed form for d ≤ 2.
pub fn operator_norm<const D: usize>(q: &Matrix<D>) -> f64 {
    match D {
        1 => q[(0, 0)].abs(),
        _ => {
            let m = q.transpose() * q;
            let (vals, _) = symmetric_eigen(&m);
            vals.iter().cloned().fold(0.0, f64::max).sqrt()
        }
    }
}

pub fn symmetrize<const D: usize>(m: &Matrix<D>) -> Matrix<D> {
    (m + m.transpose()) * 0.5
}

pub fn inner<const D: usize>(g: &Matrix<D>, v: &Vector<D>, w: &Vector<D>) -> f64 {
    (v.transpose() * g * w)[(0, 0)]
}

pub fn norm<const D: usize>(g: &Matrix<D>, v: &Vector<D>) -> f64 {
    inner(g, v, v).max(0.0).sqrt()
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix: (eigenvalues, eigenvectors as columns).
pub fn symmetric_eigen<const D: usize>(m: &Matrix<D>) -> (Vector<D>, Matrix<D>) {
    let mut a = symmetrize(m);
    let mut v = Matrix::<D>::identity();
    for _sweep in 0..50 {
        let off: f64 = (0..D).flat_map(|i| (0..D).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)] * a[(i, j)]).sum();
        if off <= 1e-30 * a.norm_squared().max(1e-300) {
            break;
        }
        for p in 0..D {
            for q in p + 1..D {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let mut rot = Matrix::<D>::identity();
                rot[(p, p)] = c;
                rot[(q, q)] = c;
                rot[(p, q)] = s;
                rot[(q, p)] = -s;
                a = rot.transpose() * a * rot;
                v *= rot;
            }
        }
    }
    (Vector::<D>::from_fn(|i, _| a[(i, i)]), v)
}

/// Solve A x = b by Gaussian elimination with partial pivoting.
pub fn solve<const D: usize>(a: &Matrix<D>, b: &Vector<D>) -> Option<Vector<D>> {
    let mut m = *a;
    let mut r = *b;
    let scale = a.amax().max(1e-300);
    for col in 0..D {
        let piv = (col..D).max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))?;
        if m[(piv, col)].abs() <= 1e-14 * scale {
            return None;
        }
        m.swap_rows(col, piv);
        r.swap_rows(col, piv);
        for row in col + 1..D {
            let f = m[(row, col)] / m[(col, col)];
            for k in col..D {
                m[(row, k)] -= f * m[(col, k)];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = Vector::<D>::zeros();
    for i in (0..D).rev() {
        let mut acc = r[i];
        for k in i + 1..D {
            acc -= m[(i, k)] * x[k];
        }
        x[i] = acc / m[(i, i)];
    }
    Some(x)
}

/// General inverse through column solves.
pub fn inverse<const D: usize>(a: &Matrix<D>) -> Option<Matrix<D>> {
    let mut out = Matrix::<D>::zeros();
    for j in 0..D {
        let mut e = Vector::<D>::zeros();
        e[j] = 1.0;
        out.set_column(j, &solve(a, &e)?);
    }
    Some(out)
}
