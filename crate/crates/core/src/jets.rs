//! Taylor jets of real functions on complex charts, in Wirtinger form.
//!
//! Fields are evaluated on real series in the interleaved coordinates
//! `[x_1, y_1, …, x_n, y_n]` with `z_k = x_k + i y_k`. A jet is then rewritten
//! in the independent variables `dz_1, …, dz_n, dz̄_1, …, dz̄_n`.

use alloc::boxed::Box;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use once_cell::race::OnceBox;

use crate::error::{invalid, Error, Result};
use crate::series::{compose_multi, layout, Layout, Series, MAX_ORDER};

/// A point of a complex chart.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartPoint {
    pub coords: Vec<Complex64>,
}

impl ChartPoint {
    pub fn new(coords: Vec<Complex64>) -> Self {
        ChartPoint { coords }
    }

    pub fn from_reals(re_im: &[(f64, f64)]) -> Self {
        ChartPoint { coords: re_im.iter().map(|&(a, b)| Complex64::new(a, b)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Interleaved real coordinates.
    pub fn reals(&self) -> Vec<f64> {
        self.coords.iter().flat_map(|z| [z.re, z.im]).collect()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.coords.iter().map(|z| z.norm_sqr()).sum::<f64>())
    }
}

/// A real function on an open subset of `C^n`.
pub trait ScalarField: Send + Sync {
    /// Complex dimension of the chart.
    fn dim(&self) -> usize;

    /// Whether the field is smooth at `p`.
    fn in_domain(&self, _p: &ChartPoint) -> bool {
        true
    }

    /// Evaluate on real series in the interleaved coordinate order.
    fn eval(&self, x: &[Series<f64>]) -> Result<Series<f64>>;

    fn value(&self, p: &ChartPoint) -> Result<f64> {
        check_point(self, p)?;
        let l = layout(2 * p.dim(), 0);
        let x: Vec<Series<f64>> = p.reals().into_iter().map(|v| Series::constant(l.clone(), v)).collect();
        let v = self.eval(&x)?.value();
        if !v.is_finite() {
            return Err(Error::OutOfDomain { point: p.reals() });
        }
        Ok(v)
    }
}

impl<F: ScalarField + ?Sized> ScalarField for Arc<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn in_domain(&self, p: &ChartPoint) -> bool {
        (**self).in_domain(p)
    }
    fn eval(&self, x: &[Series<f64>]) -> Result<Series<f64>> {
        (**self).eval(x)
    }
}

fn check_point<F: ScalarField + ?Sized>(f: &F, p: &ChartPoint) -> Result<()> {
    if p.dim() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: p.dim() });
    }
    if !f.in_domain(p) {
        return Err(Error::OutOfDomain { point: p.reals() });
    }
    Ok(())
}

type EvalFn = dyn Fn(&[Series<f64>]) -> Result<Series<f64>> + Send + Sync;
type DomainFn = dyn Fn(&ChartPoint) -> bool + Send + Sync;

/// A field given by closures.
pub struct FnField {
    dim: usize,
    domain: Option<Box<DomainFn>>,
    f: Box<EvalFn>,
}

impl FnField {
    pub fn new(dim: usize, f: impl Fn(&[Series<f64>]) -> Result<Series<f64>> + Send + Sync + 'static) -> Self {
        FnField { dim, domain: None, f: Box::new(f) }
    }

    pub fn with_domain(mut self, d: impl Fn(&ChartPoint) -> bool + Send + Sync + 'static) -> Self {
        self.domain = Some(Box::new(d));
        self
    }
}

impl ScalarField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn in_domain(&self, p: &ChartPoint) -> bool {
        self.domain.as_ref().is_none_or(|d| d(p))
    }
    fn eval(&self, x: &[Series<f64>]) -> Result<Series<f64>> {
        if x.len() != 2 * self.dim {
            return Err(Error::DimensionMismatch { expected: 2 * self.dim, got: x.len() });
        }
        (self.f)(x)
    }
}

/// A complex number whose real and imaginary parts are real series.
#[derive(Clone, Debug)]
pub struct CSeries {
    pub re: Series<f64>,
    pub im: Series<f64>,
}

impl CSeries {
    pub fn constant(l: Arc<Layout>, c: Complex64) -> Self {
        CSeries { re: Series::constant(l.clone(), c.re), im: Series::constant(l, c.im) }
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }

    pub fn add(&self, o: &Self) -> Self {
        CSeries { re: &self.re + &o.re, im: &self.im + &o.im }
    }

    pub fn sub(&self, o: &Self) -> Self {
        CSeries { re: &self.re - &o.re, im: &self.im - &o.im }
    }

    pub fn mul(&self, o: &Self) -> Self {
        CSeries {
            re: &(&self.re * &o.re) - &(&self.im * &o.im),
            im: &(&self.re * &o.im) + &(&self.im * &o.re),
        }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        CSeries {
            re: &self.re.scale(c.re) - &self.im.scale(c.im),
            im: &self.re.scale(c.im) + &self.im.scale(c.re),
        }
    }

    pub fn norm_sqr(&self) -> Series<f64> {
        &(&self.re * &self.re) + &(&self.im * &self.im)
    }

    pub fn recip(&self) -> Self {
        let d = self.norm_sqr().recip();
        CSeries { re: &self.re * &d, im: -(&self.im * &d) }
    }

    pub fn powi(&self, k: u32) -> Self {
        let mut r = CSeries::constant(self.re.layout().clone(), Complex64::new(1.0, 0.0));
        for _ in 0..k {
            r = r.mul(self);
        }
        r
    }
}

/// Complex coordinates `z_k` from interleaved real series.
pub fn complex_coords(x: &[Series<f64>]) -> Vec<CSeries> {
    x.chunks(2).map(|c| CSeries { re: c[0].clone(), im: c[1].clone() }).collect()
}

/// Taylor jet in Wirtinger variables. Variable `k < n` is `dz_k`, variable
/// `n + k` is `dz̄_k`.
#[derive(Clone, Debug)]
pub struct WirtingerJet {
    n: usize,
    series: Series<Complex64>,
}

fn fact(k: u8) -> f64 {
    (1..=k).map(f64::from).product()
}

impl WirtingerJet {
    pub fn from_series(n: usize, series: Series<Complex64>) -> Result<Self> {
        if series.nvars() != 2 * n {
            return Err(Error::DimensionMismatch { expected: 2 * n, got: series.nvars() });
        }
        Ok(WirtingerJet { n, series })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.series.order()
    }

    pub fn series(&self) -> &Series<Complex64> {
        &self.series
    }

    pub fn value(&self) -> f64 {
        self.series.value().re
    }

    /// `∂^a ∂̄^b f` at the base point.
    pub fn partial(&self, a: &[u8], b: &[u8]) -> Complex64 {
        assert!(a.len() == self.n && b.len() == self.n, "multi-index length must equal the dimension");
        let e: Vec<u8> = a.iter().chain(b.iter()).copied().collect();
        let w: f64 = e.iter().map(|&k| fact(k)).product();
        self.series.coeff(&e) * w
    }

    /// `∂_i ∂̄_j f` at the base point.
    pub fn mixed(&self, i: usize, j: usize) -> Complex64 {
        let mut a = vec![0u8; self.n];
        let mut b = vec![0u8; self.n];
        a[i] += 1;
        b[j] += 1;
        self.partial(&a, &b)
    }

    /// Largest `|∂^a∂̄^b f − conj(∂^b∂̄^a f)|` over all entries.
    pub fn conjugate_defect(&self) -> f64 {
        let l = self.series.layout();
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..l.len() {
            let e = l.exponents(i);
            let mut sw = vec![0u8; 2 * n];
            sw[..n].copy_from_slice(&e[n..]);
            sw[n..].copy_from_slice(&e[..n]);
            let d = self.series.coeffs()[i] - self.series.coeff(&sw).conj();
            worst = worst.max(d.norm());
        }
        worst
    }

    /// Largest entry modulus, in partial-derivative normalization.
    pub fn max_partial(&self) -> f64 {
        let l = self.series.layout();
        (0..l.len())
            .map(|i| {
                let w: f64 = l.exponents(i).iter().map(|&k| fact(k)).product();
                self.series.coeffs()[i].norm() * w
            })
            .fold(0.0, f64::max)
    }
}

struct WirtingerMap {
    terms: Vec<Vec<(u32, Complex64)>>,
}

fn build_map(n: usize, order: usize) -> WirtingerMap {
    let lr = layout(2 * n, order);
    let lc = layout(2 * n, order);
    let half = Complex64::new(0.5, 0.0);
    let mut axes = Vec::with_capacity(2 * n);
    for k in 0..n {
        let dz = Series::variable(lc.clone(), k, Complex64::new(0.0, 0.0));
        let dzb = Series::variable(lc.clone(), n + k, Complex64::new(0.0, 0.0));
        axes.push((&dz + &dzb).scale(half));
        axes.push((&dz - &dzb).scale(Complex64::new(0.0, -0.5)));
    }
    let mut powers: Vec<Series<Complex64>> = Vec::with_capacity(lr.len());
    powers.push(Series::constant(lc.clone(), Complex64::new(1.0, 0.0)));
    let mut e = vec![0u8; 2 * n];
    for i in 1..lr.len() {
        e.copy_from_slice(lr.exponents(i));
        let v = e.iter().position(|&x| x > 0).unwrap();
        e[v] -= 1;
        let prev = lr.find(&e).unwrap();
        let p = &powers[prev] * &axes[v];
        powers.push(p);
    }
    let terms = powers
        .iter()
        .map(|p| {
            p.coeffs()
                .iter()
                .enumerate()
                .filter(|(_, c)| c.norm() != 0.0)
                .map(|(j, &c)| (j as u32, c))
                .collect()
        })
        .collect();
    WirtingerMap { terms }
}

const CACHED_DIMS: usize = 4;

fn wirtinger_map(n: usize, order: usize) -> Arc<WirtingerMap> {
    static CACHE: [[OnceBox<Arc<WirtingerMap>>; MAX_ORDER + 1]; CACHED_DIMS] =
        [const { [const { OnceBox::new() }; MAX_ORDER + 1] }; CACHED_DIMS];
    if n <= CACHED_DIMS {
        CACHE[n - 1][order].get_or_init(|| Box::new(Arc::new(build_map(n, order)))).clone()
    } else {
        Arc::new(build_map(n, order))
    }
}

/// Rewrite a real series in interleaved coordinates as a Wirtinger jet.
pub fn real_to_wirtinger(n: usize, real: &Series<f64>) -> Result<WirtingerJet> {
    if real.nvars() != 2 * n {
        return Err(Error::DimensionMismatch { expected: 2 * n, got: real.nvars() });
    }
    let map = wirtinger_map(n, real.order());
    let lc = layout(2 * n, real.order());
    let mut c = vec![Complex64::new(0.0, 0.0); lc.len()];
    for (r, terms) in real.coeffs().iter().zip(&map.terms) {
        if *r == 0.0 {
            continue;
        }
        for &(j, w) in terms {
            c[j as usize] += w * *r;
        }
    }
    WirtingerJet::from_series(n, Series::from_coeffs(lc, c))
}

fn check_order(order: usize) -> Result<()> {
    if order > MAX_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    Ok(())
}

/// Real Taylor series of `field` at `p`.
pub fn real_jet<F: ScalarField + ?Sized>(field: &F, p: &ChartPoint, order: usize) -> Result<Series<f64>> {
    check_order(order)?;
    check_point(field, p)?;
    let l = layout(2 * p.dim(), order);
    let x: Vec<Series<f64>> =
        p.reals().into_iter().enumerate().map(|(k, v)| Series::variable(l.clone(), k, v)).collect();
    let r = field.eval(&x)?;
    if !r.is_finite() {
        return Err(Error::OutOfDomain { point: p.reals() });
    }
    Ok(r)
}

/// Exact jet by series arithmetic.
pub fn taylor_jet<F: ScalarField + ?Sized>(field: &F, p: &ChartPoint, order: usize) -> Result<WirtingerJet> {
    let r = real_jet(field, p, order)?;
    real_to_wirtinger(p.dim(), &r)
}

fn stencil(k: u8) -> &'static [(i32, f64)] {
    match k {
        0 => &[(0, 1.0)],
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        _ => &[(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)],
    }
}

fn fd_partial<F: ScalarField + ?Sized>(field: &F, p: &[f64], alpha: &[u8], h: f64) -> Result<f64> {
    let dims: Vec<&[(i32, f64)]> = alpha.iter().map(|&a| stencil(a)).collect();
    let mut idx = vec![0usize; p.len()];
    let mut sum = 0.0;
    let l0 = layout(p.len(), 0);
    loop {
        let mut w = 1.0;
        let mut q = p.to_vec();
        for (v, st) in dims.iter().enumerate() {
            let (o, c) = st[idx[v]];
            w *= c;
            q[v] += f64::from(o) * h;
        }
        let pt = ChartPoint::from_reals(&q.chunks(2).map(|c| (c[0], c[1])).collect::<Vec<_>>());
        if !field.in_domain(&pt) {
            return Err(Error::StencilOutOfDomain { point: q });
        }
        let xs: Vec<Series<f64>> = q.iter().map(|&v| Series::constant(l0.clone(), v)).collect();
        let f = field.eval(&xs)?.value();
        if !f.is_finite() {
            return Err(Error::StencilOutOfDomain { point: q });
        }
        sum += w * f;
        let mut v = 0;
        loop {
            if v == idx.len() {
                let d: i32 = alpha.iter().map(|&a| i32::from(a)).sum();
                return Ok(sum / libm::pow(h, f64::from(d)));
            }
            idx[v] += 1;
            if idx[v] < dims[v].len() {
                break;
            }
            idx[v] = 0;
            v += 1;
        }
    }
}

/// Jet by central finite differences with one Richardson step.
///
/// The step for derivatives of total degree `d` is `s · h^(5/(d+4))` with
/// `s = max(1, |p|)`, which balances truncation against rounding for each
/// degree.
pub fn fd_jet<F: ScalarField + ?Sized>(field: &F, p: &ChartPoint, order: usize, h: f64) -> Result<WirtingerJet> {
    check_order(order)?;
    check_point(field, p)?;
    if !(h.is_finite() && h > 0.0) {
        return Err(invalid("h", format!("step must be positive and finite, got {h}")));
    }
    let scale = p.norm().max(1.0);
    if h * scale < 1e-9 {
        return Err(Error::StepUnderflow(h));
    }
    let n = p.dim();
    let l = layout(2 * n, order);
    let base = p.reals();
    let mut c = vec![0.0; l.len()];
    for (i, ci) in c.iter_mut().enumerate() {
        let alpha = l.exponents(i);
        let d = l.degree(i);
        let hd = if h < 1.0 { scale * libm::pow(h, 5.0 / (d as f64 + 4.0)) } else { scale * h };
        let coarse = fd_partial(field, &base, alpha, hd)?;
        let fine = fd_partial(field, &base, alpha, hd / 2.0)?;
        let w: f64 = alpha.iter().map(|&a| fact(a)).product();
        *ci = if d == 0 { fine } else { (4.0 * fine - coarse) / 3.0 } / w;
    }
    real_to_wirtinger(n, &Series::from_coeffs(l, c))
}

/// Jet of `outer(inner_1, …, inner_p)` where `outer` is the real Taylor
/// series of a function of `p` real variables around the inner values.
pub fn compose_jet(outer: &Series<f64>, inner: &[WirtingerJet]) -> Result<WirtingerJet> {
    if inner.is_empty() || outer.nvars() != inner.len() {
        return Err(Error::DimensionMismatch { expected: outer.nvars(), got: inner.len() });
    }
    let n = inner[0].n;
    let order = inner[0].order();
    for j in inner {
        if j.n != n {
            return Err(Error::DimensionMismatch { expected: n, got: j.n });
        }
        if j.order() != order {
            return Err(invalid("inner", "jets must share one order"));
        }
    }
    if outer.order() < order {
        return Err(Error::UnsupportedOrder(outer.order()));
    }
    let outer = if outer.order() > order { outer.truncate(order) } else { outer.clone() };
    let s: Vec<Series<Complex64>> = inner.iter().map(|j| j.series.clone()).collect();
    WirtingerJet::from_series(n, compose_multi(&outer, &s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log1p_norm() -> FnField {
        FnField::new(1, |x| {
            let z = complex_coords(x);
            Ok(z[0].norm_sqr().add_const(1.0).ln())
        })
    }

    #[test]
    fn fubini_study_mixed_entry() {
        let j = taylor_jet(&log1p_norm(), &ChartPoint::from_reals(&[(1.0, 0.0)]), 4).unwrap();
        // 1 / (1 + |z|^2)^2 at |z| = 1
        assert!((j.mixed(0, 0).re - 0.25).abs() < 1e-15);
        assert!(j.mixed(0, 0).im.abs() < 1e-15);
        assert!(j.conjugate_defect() < 1e-14);
    }

    #[test]
    fn quartic_norm_entries() {
        let f = FnField::new(1, |x| {
            let r = complex_coords(x)[0].norm_sqr();
            Ok(&r * &r)
        });
        let j = taylor_jet(&f, &ChartPoint::from_reals(&[(0.0, 0.0)]), 4).unwrap();
        assert!((j.partial(&[2], &[2]).re - 4.0).abs() < 1e-14);
        assert!(j.partial(&[1], &[1]).norm() < 1e-14);
    }

    #[test]
    fn holomorphic_square_has_no_mixed_terms() {
        // Re z^2 = x^2 - y^2
        let f = FnField::new(1, |x| Ok(&(&x[0] * &x[0]) - &(&x[1] * &x[1])));
        let j = taylor_jet(&f, &ChartPoint::from_reals(&[(0.3, -0.2)]), 4).unwrap();
        assert!(j.mixed(0, 0).norm() < 1e-15);
        // ∂² Re z² = 1
        assert!((j.partial(&[2], &[0]).re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fd_agrees_with_taylor() {
        let f = log1p_norm();
        let p = ChartPoint::from_reals(&[(0.4, -0.7)]);
        let a = taylor_jet(&f, &p, 4).unwrap();
        let b = fd_jet(&f, &p, 4, 1e-3).unwrap();
        let scale = a.max_partial();
        for (x, y) in a.series().coeffs().iter().zip(b.series().coeffs()) {
            assert!((x - y).norm() <= 1e-5 * scale, "{x} vs {y}");
        }
    }

    #[test]
    fn fd_rejects_stencils_leaving_the_domain() {
        let f = log1p_norm().with_domain(|p| p.coords[0].re > 0.0);
        let p = ChartPoint::from_reals(&[(1e-3, 0.0)]);
        assert!(matches!(fd_jet(&f, &p, 2, 1e-3), Err(Error::StencilOutOfDomain { .. })));
        assert!(matches!(fd_jet(&f, &p, 2, 1e-14), Err(Error::StepUnderflow(_))));
    }

    #[test]
    fn out_of_domain_point() {
        let f = log1p_norm().with_domain(|p| p.coords[0].norm() < 1.0);
        let p = ChartPoint::from_reals(&[(2.0, 0.0)]);
        assert!(matches!(taylor_jet(&f, &p, 2), Err(Error::OutOfDomain { .. })));
        assert!(matches!(taylor_jet(&f, &p, 5), Err(Error::UnsupportedOrder(5))));
    }

    #[test]
    fn composition_with_exponential() {
        let f = log1p_norm();
        let p = ChartPoint::from_reals(&[(0.2, 0.5)]);
        let inner = taylor_jet(&f, &p, 4).unwrap();
        let x = Series::variable(layout(1, 4), 0, inner.value());
        let outer = x.exp();
        let composed = compose_jet(&outer, &[inner]).unwrap();
        // exp(log(1 + |z|^2)) = 1 + |z|^2
        let direct = FnField::new(1, |x| Ok(complex_coords(x)[0].norm_sqr().add_const(1.0)));
        let want = taylor_jet(&direct, &p, 4).unwrap();
        for (a, b) in composed.series().coeffs().iter().zip(want.series().coeffs()) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}
