//! Order-fixed reductions and Monte-Carlo summaries.

use rayon::prelude::*;

/// Neumaier-compensated sum in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { mean: value, stderr: 0.0, n: 0 }
    }

    /// Two-pass mean and standard error of the mean.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Estimate { mean: f64::NAN, stderr: f64::NAN, n };
        }
        if xs.iter().all(|&x| x == xs[0]) {
            // rounding in the sum would otherwise leak into a constant sample
            return Estimate { mean: xs[0], stderr: 0.0, n };
        }
        let mean = compensated_sum(xs.iter().copied()) / n as f64;
        if n == 1 {
            return Estimate { mean, stderr: 0.0, n };
        }
        let ss = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean)));
        let stderr = (ss / (n as f64 - 1.0) / n as f64).sqrt();
        Estimate { mean, stderr, n }
    }

    /// Standard error of a difference of two estimates from paired samples.
    pub fn paired_difference(a: &[f64], b: &[f64]) -> Self {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        Estimate::from_samples(&d)
    }
}

/// Combined standard error of independent estimates.
pub fn combined_stderr(parts: &[f64]) -> f64 {
    parts.iter().map(|s| s * s).sum::<f64>().sqrt()
}

/// Evaluate `f(i)` for i in 0..n on the current rayon pool; results come back in index order.
pub fn par_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Mean and standard error of a ratio-free functional: sample covariance of two paired columns.
pub fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = compensated_sum(a.iter().copied()) / n;
    let mb = compensated_sum(b.iter().copied()) / n;
    compensated_sum(a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb))) / (n - 1.0)
}

/// Delta-method standard error of φ(E[a], E[b]) given the partial derivatives at the means.
pub fn delta_stderr(a: &[f64], b: &[f64], da: f64, db: f64) -> f64 {
    let n = a.len() as f64;
    let va = covariance(a, a);
    let vb = covariance(b, b);
    let cab = covariance(a, b);
    ((da * da * va + db * db * vb + 2.0 * da * db * cab) / n).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn estimate_of_constant_has_zero_stderr() {
        let e = Estimate::from_samples(&[3.0; 10]);
        assert_eq!(e.mean, 3.0);
        assert_eq!(e.stderr, 0.0);
    }
}
