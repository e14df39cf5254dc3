//! Crank–Nicolson reference solutions of the backward Neumann problem on the interval flow.

use crate::catalog::{thomas, IntervalFlow};
use crate::{Error, Result};
use std::io::Write;

/// Uniform grid on [0, L] with a nominal time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub n: usize,
    pub length: f64,
    pub dt: f64,
}

impl Default for Grid1D {
    fn default() -> Self {
        Grid1D { n: 401, length: 1.0, dt: 1e-4 }
    }
}

impl Grid1D {
    pub fn new(n: usize, length: f64, dt: f64) -> Result<Self> {
        if n < 32 {
            return Err(Error::OracleFailure(format!("grid needs at least 32 points, got {n}")));
        }
        if !(length > 0.0 && dt > 0.0) {
            return Err(Error::OracleFailure("grid length and time step must be positive".into()));
        }
        Ok(Grid1D { n, length, dt })
    }

    pub fn for_flow(flow: &IntervalFlow) -> Self {
        Grid1D { length: flow.length, ..Default::default() }
    }

    pub fn spacing(&self) -> f64 {
        self.length / (self.n - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n).map(|i| i as f64 * h).collect()
    }
}

/// Slices of F(r, ·) = P_{r,t} f on the grid, at increasing times r.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub grid: Grid1D,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl OracleSolution {
    /// Slice at the earliest stored time (the s-slice).
    pub fn initial(&self) -> &[f64] {
        &self.values[0]
    }

    /// Linear interpolation on a slice.
    pub fn interp(values: &[f64], grid: &Grid1D, x: f64) -> f64 {
        let h = grid.spacing();
        let pos = (x / h).clamp(0.0, (grid.n - 1) as f64);
        let i = (pos.floor() as usize).min(grid.n - 2);
        let w = pos - i as f64;
        values[i] * (1.0 - w) + values[i + 1] * w
    }

    /// Value at (r, x), r on the stored time grid (nearest slice) and x interpolated.
    pub fn value(&self, r: f64, x: f64) -> f64 {
        let k = self.slice_index(r);
        Self::interp(&self.values[k], &self.grid, x)
    }

    pub fn slice_index(&self, r: f64) -> usize {
        match self.times.binary_search_by(|p| p.total_cmp(&r)) {
            Ok(k) => k,
            Err(k) => {
                if k == 0 {
                    0
                } else if k >= self.times.len() {
                    self.times.len() - 1
                } else if (self.times[k] - r).abs() < (r - self.times[k - 1]).abs() {
                    k
                } else {
                    k - 1
                }
            }
        }
    }

    pub fn write_csv<W: Write>(&self, values: &[f64], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::OracleFailure(format!("csv: {e}"));
        w.write_record(["x", "value"]).map_err(io)?;
        for (x, v) in self.grid.nodes().iter().zip(values) {
            w.write_record([crate::diffusion::fmt(*x), crate::diffusion::fmt(*v)]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::OracleFailure(format!("csv: {e}")))?;
        Ok(())
    }
}

/// Coefficients of L_r = ψ²(e^{−2ar}∂² + z∂) at the grid nodes.
fn operator_rows(flow: &IntervalFlow, grid: &Grid1D, r: f64, psi: Option<&dyn Fn(f64, f64) -> f64>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let h = grid.spacing();
    let n = grid.n;
    let diff = (-2.0 * flow.a * r).exp();
    let mut lo = vec![0.0; n];
    let mut di = vec![0.0; n];
    let mut up = vec![0.0; n];
    for i in 0..n {
        let x = i as f64 * h;
        let w = psi.map_or(1.0, |p| {
            let v = p(r, x);
            v * v
        });
        let a2 = w * diff / (h * h);
        let a1 = w * flow.z / (2.0 * h);
        if i == 0 {
            // ghost node F_{-1} = F_1
            di[i] = -2.0 * a2;
            up[i] = 2.0 * a2;
        } else if i == n - 1 {
            lo[i] = 2.0 * a2;
            di[i] = -2.0 * a2;
        } else {
            lo[i] = a2 - a1;
            di[i] = -2.0 * a2;
            up[i] = a2 + a1;
        }
    }
    (lo, di, up)
}

/// P_{s,t} f on the grid by a Crank–Nicolson backward march from t to s. `keep` stores every
/// intermediate slice (needed when callers want P_{r,t}f for r ∈ [s, t]).
pub fn neumann_heat_march(
    flow: &IntervalFlow,
    f: &dyn Fn(f64) -> f64,
    s: f64,
    t: f64,
    grid: &Grid1D,
    psi: Option<&dyn Fn(f64, f64) -> f64>,
    keep: bool,
) -> Result<OracleSolution> {
    if (grid.length - flow.length).abs() > 1e-12 {
        return Err(Error::OracleFailure("grid length differs from the interval".into()));
    }
    if !(t >= s) {
        return Err(Error::OracleFailure("need s ≤ t".into()));
    }
    let nodes = grid.nodes();
    let mut cur: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
    // spans that are whole multiples of dt up to rounding take exactly that many steps
    let steps = ((t - s) / grid.dt - 1e-9).ceil().max(if t > s { 1.0 } else { 0.0 }) as usize;
    let mut times = vec![t];
    let mut values = vec![cur.clone()];
    if steps > 0 {
        let dt = (t - s) / steps as f64;
        let n = grid.n;
        for k in (0..steps).rev() {
            let r_new = s + k as f64 * dt;
            let r_old = s + (k + 1) as f64 * dt;
            let (lo1, di1, up1) = operator_rows(flow, grid, r_old, psi);
            let (lo0, di0, up0) = operator_rows(flow, grid, r_new, psi);
            let mut rhs = vec![0.0; n];
            for i in 0..n {
                let mut lv = di1[i] * cur[i];
                if i > 0 {
                    lv += lo1[i] * cur[i - 1];
                }
                if i + 1 < n {
                    lv += up1[i] * cur[i + 1];
                }
                rhs[i] = cur[i] + 0.5 * dt * lv;
            }
            let lower: Vec<f64> = lo0.iter().map(|v| -0.5 * dt * v).collect();
            let diag: Vec<f64> = di0.iter().map(|v| 1.0 - 0.5 * dt * v).collect();
            let upper: Vec<f64> = up0.iter().map(|v| -0.5 * dt * v).collect();
            cur = thomas(&lower, &diag, &upper, &rhs)
                .ok_or_else(|| Error::OracleFailure(format!("tridiagonal solve failed at r = {r_new}")))?;
            if keep || k == 0 {
                times.push(r_new);
                values.push(cur.clone());
            }
        }
    }
    times.reverse();
    values.reverse();
    Ok(OracleSolution { grid: *grid, times, values })
}

/// The s-slice of P_{s,t} f.
pub fn neumann_heat_solve(
    flow: &IntervalFlow,
    f: &dyn Fn(f64) -> f64,
    s: f64,
    t: f64,
    grid: &Grid1D,
) -> Result<Vec<f64>> {
    Ok(neumann_heat_march(flow, f, s, t, grid, None, false)?.values.swap_remove(0))
}

/// Signed frame component ∂_x F · e^{−at} (its absolute value is |∇^t F|_t): 4th-order central
/// stencils inside, 4th-order one-sided stencils at the walls.
pub fn oracle_gradient(values: &[f64], grid: &Grid1D, a: f64, t: f64) -> Result<Vec<f64>> {
    let n = grid.n;
    if values.len() != n {
        return Err(Error::OracleFailure(format!("expected {n} values, got {}", values.len())));
    }
    let h = grid.spacing();
    let scale = (-a * t).exp();
    let v = values;
    let d = (0..n)
        .map(|i| {
            let der = if i >= 2 && i + 2 < n {
                (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * h)
            } else if i < 2 {
                (-25.0 * v[i] + 48.0 * v[i + 1] - 36.0 * v[i + 2] + 16.0 * v[i + 3] - 3.0 * v[i + 4]) / (12.0 * h)
            } else {
                (25.0 * v[i] - 48.0 * v[i - 1] + 36.0 * v[i - 2] - 16.0 * v[i - 3] + 3.0 * v[i - 4]) / (12.0 * h)
            };
            der * scale
        })
        .collect();
    Ok(d)
}

/// exp(−(π/L)²∫_s^t e^{−2ar}dr): decay factor of cos(πx/L) under the interval flow without drift.
pub fn eigen_decay(a: f64, length: f64, s: f64, t: f64) -> f64 {
    let k = std::f64::consts::PI / length;
    let integral = if a.abs() < 1e-14 { t - s } else { ((-2.0 * a * s).exp() - (-2.0 * a * t).exp()) / (2.0 * a) };
    (-k * k * integral).exp()
}
