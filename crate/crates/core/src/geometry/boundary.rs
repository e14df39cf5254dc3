use super::Boundary;
use crate::Vector;

/// [lo, hi] in a 1-D chart: b = (x − lo)(hi − x).
#[derive(Debug, Clone, Copy)]
pub struct IntervalBoundary {
    pub lo: f64,
    pub hi: f64,
}

impl Boundary<1> for IntervalBoundary {
    fn level(&self, x: &Vector<1>) -> f64 {
        (x[0] - self.lo) * (self.hi - x[0])
    }
    fn gradient(&self, x: &Vector<1>) -> Vector<1> {
        Vector::<1>::new(self.lo + self.hi - 2.0 * x[0])
    }
}

/// Centered disk |x| ≤ R: b = R² − |x|².
#[derive(Debug, Clone, Copy)]
pub struct DiskBoundary {
    pub radius: f64,
}

impl<const D: usize> Boundary<D> for DiskBoundary {
    fn level(&self, x: &Vector<D>) -> f64 {
        self.radius * self.radius - x.norm_squared()
    }
    fn gradient(&self, x: &Vector<D>) -> Vector<D> {
        -2.0 * x
    }
}

/// Exterior of a centered disk: b = |x|² − R².
#[derive(Debug, Clone, Copy)]
pub struct ExteriorDiskBoundary {
    pub radius: f64,
}

impl<const D: usize> Boundary<D> for ExteriorDiskBoundary {
    fn level(&self, x: &Vector<D>) -> f64 {
        x.norm_squared() - self.radius * self.radius
    }
    fn gradient(&self, x: &Vector<D>) -> Vector<D> {
        2.0 * x
    }
}

/// {x_axis ≥ 0}.
#[derive(Debug, Clone, Copy)]
pub struct HalfPlaneBoundary {
    pub axis: usize,
}

impl<const D: usize> Boundary<D> for HalfPlaneBoundary {
    fn level(&self, x: &Vector<D>) -> f64 {
        x[self.axis]
    }
    fn gradient(&self, _x: &Vector<D>) -> Vector<D> {
        let mut g = Vector::<D>::zeros();
        g[self.axis] = 1.0;
        g
    }
}
