//! Least-squares power-law fits.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Ordinary least-squares line `y = intercept + slope·x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    /// 95% confidence interval of the slope (normal approximation).
    pub ci95: (f64, f64),
    pub residual_rms: f64,
    pub points: usize,
}

impl SlopeFit {
    pub fn contains(&self, v: f64) -> bool {
        self.ci95.0 <= v && v <= self.ci95.1
    }
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<SlopeFit> {
    let n = x.len().min(y.len());
    if n < 2 {
        return Err(Error::InsufficientData(n));
    }
    let nf = n as f64;
    let mx = x[..n].iter().sum::<f64>() / nf;
    let my = y[..n].iter().sum::<f64>() / nf;
    let sxx: f64 = x[..n].iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x[..n].iter().zip(&y[..n]).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData(1));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x[..n].iter().zip(&y[..n]).map(|(a, b)| { let e = b - intercept - slope * a; e * e }).sum();
    let stderr = if n > 2 { libm::sqrt(rss / (nf - 2.0) / sxx) } else { 0.0 };
    Ok(SlopeFit {
        slope,
        intercept,
        stderr,
        ci95: (slope - 1.96 * stderr, slope + 1.96 * stderr),
        residual_rms: libm::sqrt(rss / nf),
        points: n,
    })
}

/// Fit `log y = a + s·log x`; nonpositive samples are rejected.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<SlopeFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (libm::log(*a), libm::log(*b)))
        .unzip();
    fit_line(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let x = [1.0, 10.0, 100.0, 1000.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        let f = fit_loglog(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!(f.stderr < 1e-12);
        assert!((libm::exp(f.intercept) - 3.0).abs() < 1e-10);
    }

    #[test]
    fn noisy_line_has_interval() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [0.1, 0.9, 2.1, 2.9, 4.1];
        let f = fit_line(&x, &y).unwrap();
        assert!(f.contains(1.0));
        assert!(f.stderr > 0.0);
    }

    #[test]
    fn too_few_points() {
        assert!(fit_line(&[1.0], &[2.0]).is_err());
    }
}
