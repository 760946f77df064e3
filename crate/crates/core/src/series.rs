//! Truncated multivariate power series in graded monomial order.
//!
//! A [`Series`] stores the Taylor coefficients `c_α` of a function around a
//! base point, so `f(p + h) ≈ Σ_α c_α h^α` for `|α| ≤ order`.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
use once_cell::race::OnceBox;

/// Highest supported truncation order.
pub const MAX_ORDER: usize = 4;
const MAX_VARS: usize = 16;
const CACHED_VARS: usize = 8;

/// Scalar types a series can carry.
pub trait Coeff:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + Send
    + Sync
    + 'static
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    fn finite(self) -> bool;
}

impl Coeff for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn finite(self) -> bool {
        self.is_finite()
    }
}

impl Coeff for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn finite(self) -> bool {
        self.is_finite()
    }
}

/// Monomial bookkeeping shared by every series with the same shape.
#[derive(Debug)]
pub struct Layout {
    nvars: usize,
    order: usize,
    exps: Vec<u8>,
    starts: Vec<usize>,
    index: BTreeMap<u64, usize>,
    products: Vec<(u32, u32, u32)>,
}

fn key(e: &[u8]) -> u64 {
    e.iter().enumerate().fold(0u64, |k, (i, &x)| k | (u64::from(x) << (3 * i)))
}

fn push_degree(nvars: usize, d: usize, cur: &mut Vec<u8>, out: &mut Vec<u8>) {
    if cur.len() + 1 == nvars {
        cur.push(d as u8);
        out.extend_from_slice(cur);
        cur.pop();
        return;
    }
    for e in (0..=d).rev() {
        cur.push(e as u8);
        push_degree(nvars, d - e, cur, out);
        cur.pop();
    }
}

impl Layout {
    fn build(nvars: usize, order: usize) -> Self {
        assert!((1..=MAX_VARS).contains(&nvars), "unsupported variable count {nvars}");
        assert!(order <= MAX_ORDER, "unsupported order {order}");
        let mut exps = Vec::new();
        let mut starts = Vec::with_capacity(order + 2);
        for d in 0..=order {
            starts.push(exps.len() / nvars);
            push_degree(nvars, d, &mut Vec::with_capacity(nvars), &mut exps);
        }
        let len = exps.len() / nvars;
        starts.push(len);
        let mut index = BTreeMap::new();
        for i in 0..len {
            index.insert(key(&exps[i * nvars..(i + 1) * nvars]), i);
        }
        let mut products = Vec::new();
        let mut sum = vec![0u8; nvars];
        for di in 0..=order {
            for i in starts[di]..starts[di + 1] {
                for j in starts[0]..starts[order - di + 1] {
                    for v in 0..nvars {
                        sum[v] = exps[i * nvars + v] + exps[j * nvars + v];
                    }
                    let k = index[&key(&sum)];
                    products.push((i as u32, j as u32, k as u32));
                }
            }
        }
        Layout { nvars, order, exps, starts, index, products }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of monomials.
    pub fn len(&self) -> usize {
        self.exps.len() / self.nvars
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Exponent vector of monomial `i`.
    pub fn exponents(&self, i: usize) -> &[u8] {
        &self.exps[i * self.nvars..(i + 1) * self.nvars]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.exponents(i).iter().map(|&e| e as usize).sum()
    }

    /// Index range of the monomials of total degree `d`.
    pub fn degree_range(&self, d: usize) -> core::ops::Range<usize> {
        self.starts[d]..self.starts[d + 1]
    }

    /// Position of a monomial, if it is within the truncation.
    pub fn find(&self, exps: &[u8]) -> Option<usize> {
        if exps.len() != self.nvars {
            return None;
        }
        self.index.get(&key(exps)).copied()
    }
}

/// Shared layout for `nvars` variables truncated at `order`.
pub fn layout(nvars: usize, order: usize) -> Arc<Layout> {
    static CACHE: [[OnceBox<Arc<Layout>>; MAX_ORDER + 1]; CACHED_VARS] =
        [const { [const { OnceBox::new() }; MAX_ORDER + 1] }; CACHED_VARS];
    if (1..=CACHED_VARS).contains(&nvars) && order <= MAX_ORDER {
        CACHE[nvars - 1][order]
            .get_or_init(|| Box::new(Arc::new(Layout::build(nvars, order))))
            .clone()
    } else {
        Arc::new(Layout::build(nvars, order))
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Truncated power series with coefficients of type `T`.
#[derive(Clone, Debug)]
pub struct Series<T> {
    layout: Arc<Layout>,
    c: Vec<T>,
}

impl<T: Coeff> Series<T> {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        let c = vec![T::zero(); layout.len()];
        Series { layout, c }
    }

    pub fn constant(layout: Arc<Layout>, v: T) -> Self {
        let mut s = Self::zeros(layout);
        s.c[0] = v;
        s
    }

    /// The coordinate function `x_var` around the value `v`.
    pub fn variable(layout: Arc<Layout>, var: usize, v: T) -> Self {
        assert!(var < layout.nvars, "variable index out of range");
        let mut s = Self::constant(layout, v);
        if s.layout.order >= 1 {
            let mut e = vec![0u8; s.layout.nvars];
            e[var] = 1;
            let i = s.layout.find(&e).expect("linear monomial");
            s.c[i] = T::one();
        }
        s
    }

    pub fn from_coeffs(layout: Arc<Layout>, c: Vec<T>) -> Self {
        assert_eq!(c.len(), layout.len(), "coefficient count does not match layout");
        Series { layout, c }
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn nvars(&self) -> usize {
        self.layout.nvars
    }

    pub fn order(&self) -> usize {
        self.layout.order
    }

    pub fn coeffs(&self) -> &[T] {
        &self.c
    }

    pub fn coeffs_mut(&mut self) -> &mut [T] {
        &mut self.c
    }

    pub fn value(&self) -> T {
        self.c[0]
    }

    /// Coefficient of `h^exps`, zero when truncated away.
    pub fn coeff(&self, exps: &[u8]) -> T {
        self.layout.find(exps).map_or(T::zero(), |i| self.c[i])
    }

    /// Partial derivative `∂^exps f` at the base point.
    pub fn derivative(&self, exps: &[u8]) -> T {
        let w: f64 = exps.iter().map(|&e| factorial(e as usize)).product();
        self.coeff(exps) * T::from_f64(w)
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|x| x.finite())
    }

    pub fn scale(&self, k: T) -> Self {
        Series { layout: self.layout.clone(), c: self.c.iter().map(|&x| x * k).collect() }
    }

    pub fn add_const(&self, k: T) -> Self {
        let mut s = self.clone();
        s.c[0] += k;
        s
    }

    pub fn map<U: Coeff>(&self, f: impl Fn(T) -> U) -> Series<U> {
        Series { layout: self.layout.clone(), c: self.c.iter().map(|&x| f(x)).collect() }
    }

    /// Same coefficients re-truncated at a lower order.
    pub fn truncate(&self, order: usize) -> Self {
        assert!(order <= self.layout.order);
        let l = layout(self.layout.nvars, order);
        let n = l.len();
        Series { layout: l, c: self.c[..n].to_vec() }
    }

    /// Series of `∂f/∂x_var`, one order lower.
    pub fn diff(&self, var: usize) -> Self {
        let nv = self.layout.nvars;
        let out_order = self.layout.order.saturating_sub(1);
        let out = layout(nv, out_order);
        if self.layout.order == 0 {
            return Self::zeros(out);
        }
        let mut c = vec![T::zero(); out.len()];
        let mut e = vec![0u8; nv];
        for (i, ci) in c.iter_mut().enumerate() {
            e.copy_from_slice(out.exponents(i));
            e[var] += 1;
            let j = self.layout.find(&e).expect("monomial in parent layout");
            *ci = self.c[j] * T::from_f64(f64::from(e[var]));
        }
        Series { layout: out, c }
    }

    fn check(&self, other: &Self) {
        assert!(
            Arc::ptr_eq(&self.layout, &other.layout)
                || (self.layout.nvars == other.layout.nvars && self.layout.order == other.layout.order),
            "series layouts differ"
        );
    }

    /// `f(self)` given the derivatives `f^(k)` at `self.value()`, `k = 0..=order`.
    pub fn compose(&self, derivs: &[T]) -> Self {
        let k = self.layout.order;
        assert!(derivs.len() > k, "need {} derivatives", k + 1);
        let mut delta = self.clone();
        delta.c[0] = T::zero();
        let mut r = Self::constant(self.layout.clone(), derivs[k] * T::from_f64(1.0 / factorial(k)));
        for j in (0..k).rev() {
            r = &r * &delta;
            r.c[0] += derivs[j] * T::from_f64(1.0 / factorial(j));
        }
        r
    }

    pub fn to_complex(&self) -> Series<Complex64>
    where
        T: Into<Complex64>,
    {
        self.map(|x| x.into())
    }
}

/// `outer(inner_1, …, inner_p)` where `outer` is expanded around the values
/// of the inner series.
pub fn compose_multi<T: Coeff>(outer: &Series<f64>, inner: &[Series<T>]) -> Series<T> {
    let lo = outer.layout();
    assert_eq!(lo.nvars(), inner.len(), "outer arity does not match inner count");
    assert!(!inner.is_empty());
    let li = inner[0].layout().clone();
    for s in inner {
        s.check(&inner[0]);
    }
    let deltas: Vec<Series<T>> = inner
        .iter()
        .map(|s| {
            let mut d = s.clone();
            d.c[0] = T::zero();
            d
        })
        .collect();
    let maxd = lo.order();
    let mut powers: Vec<Option<Series<T>>> = vec![None; lo.len()];
    powers[0] = Some(Series::constant(li.clone(), T::one()));
    let mut out = Series::constant(li.clone(), T::from_f64(outer.c[0]));
    let mut e = vec![0u8; lo.nvars()];
    for i in 1..lo.len() {
        if lo.degree(i) > maxd {
            break;
        }
        e.copy_from_slice(lo.exponents(i));
        let v = e.iter().position(|&x| x > 0).expect("nonconstant monomial");
        e[v] -= 1;
        let prev = lo.find(&e).expect("predecessor monomial");
        let p = powers[prev].as_ref().expect("predecessor computed") * &deltas[v];
        let w = outer.c[i];
        if w != 0.0 {
            for (o, &x) in out.c.iter_mut().zip(p.c.iter()) {
                *o += x * T::from_f64(w);
            }
        }
        powers[i] = Some(p);
    }
    out
}

impl<T: Coeff> Add for &Series<T> {
    type Output = Series<T>;
    fn add(self, o: Self) -> Series<T> {
        self.check(o);
        Series { layout: self.layout.clone(), c: self.c.iter().zip(&o.c).map(|(&a, &b)| a + b).collect() }
    }
}

impl<T: Coeff> Sub for &Series<T> {
    type Output = Series<T>;
    fn sub(self, o: Self) -> Series<T> {
        self.check(o);
        Series { layout: self.layout.clone(), c: self.c.iter().zip(&o.c).map(|(&a, &b)| a - b).collect() }
    }
}

impl<T: Coeff> Mul for &Series<T> {
    type Output = Series<T>;
    fn mul(self, o: Self) -> Series<T> {
        self.check(o);
        let mut c = vec![T::zero(); self.c.len()];
        for &(i, j, k) in &self.layout.products {
            let a = self.c[i as usize];
            c[k as usize] += a * o.c[j as usize];
        }
        Series { layout: self.layout.clone(), c }
    }
}

impl<T: Coeff> Neg for &Series<T> {
    type Output = Series<T>;
    fn neg(self) -> Series<T> {
        self.map(|x| -x)
    }
}

impl<T: Coeff> Neg for Series<T> {
    type Output = Series<T>;
    fn neg(self) -> Series<T> {
        -&self
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl<T: Coeff> $tr for Series<T> {
            type Output = Series<T>;
            fn $m(self, o: Series<T>) -> Series<T> {
                (&self).$m(&o)
            }
        }
        impl<'a, T: Coeff> $tr<&'a Series<T>> for Series<T> {
            type Output = Series<T>;
            fn $m(self, o: &'a Series<T>) -> Series<T> {
                (&self).$m(o)
            }
        }
        impl<'a, T: Coeff> $tr<Series<T>> for &'a Series<T> {
            type Output = Series<T>;
            fn $m(self, o: Series<T>) -> Series<T> {
                self.$m(&o)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Series<f64> {
    pub fn exp(&self) -> Self {
        let e = libm::exp(self.value());
        self.compose(&[e; MAX_ORDER + 1])
    }

    /// Natural logarithm; NaN coefficients when the value is not positive.
    pub fn ln(&self) -> Self {
        let a = self.value();
        let mut d = [libm::log(a), 0.0, 0.0, 0.0, 0.0];
        let mut p = 1.0 / a;
        for (k, dk) in d.iter_mut().enumerate().skip(1) {
            *dk = p;
            p *= -(k as f64) / a;
        }
        self.compose(&d)
    }

    /// `self^q` for real `q`; requires a positive value unless `q` is a
    /// nonnegative integer.
    pub fn powf(&self, q: f64) -> Self {
        let a = self.value();
        let mut d = [0.0; MAX_ORDER + 1];
        let mut coef = 1.0;
        for (k, dk) in d.iter_mut().enumerate() {
            *dk = coef * libm::pow(a, q - k as f64);
            coef *= q - k as f64;
        }
        self.compose(&d)
    }

    pub fn recip(&self) -> Self {
        self.powf(-1.0)
    }

    pub fn sqrt(&self) -> Self {
        self.powf(0.5)
    }

    pub fn sin(&self) -> Self {
        let (s, c) = (libm::sin(self.value()), libm::cos(self.value()));
        self.compose(&[s, c, -s, -c, s])
    }

    pub fn cos(&self) -> Self {
        let (s, c) = (libm::sin(self.value()), libm::cos(self.value()));
        self.compose(&[c, -s, -c, s, c])
    }

    pub fn div(&self, o: &Self) -> Self {
        self * &o.recip()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_counts() {
        // binomial(n + k, k)
        assert_eq!(layout(1, 4).len(), 5);
        assert_eq!(layout(2, 4).len(), 15);
        assert_eq!(layout(4, 4).len(), 70);
        assert_eq!(layout(8, 4).len(), 495);
        let l = layout(3, 2);
        for d in 0..=2 {
            for i in l.degree_range(d) {
                assert_eq!(l.degree(i), d);
            }
        }
    }

    #[test]
    fn product_of_polynomials() {
        let l = layout(2, 4);
        let x = Series::variable(l.clone(), 0, 2.0);
        let y = Series::variable(l.clone(), 1, -1.0);
        // (x y)^2 around (2, -1)
        let f = &(&x * &y) * &(&x * &y);
        assert_eq!(f.value(), 4.0);
        // ∂_x = 2 x y^2 = 4, ∂_y = 2 x^2 y = -8
        assert_eq!(f.coeff(&[1, 0]), 4.0);
        assert_eq!(f.coeff(&[0, 1]), -8.0);
        assert_eq!(f.derivative(&[2, 2]), 4.0);
        assert_eq!(f.coeff(&[1, 1]), -8.0);
    }

    #[test]
    fn exp_ln_roundtrip() {
        let l = layout(2, 4);
        let x = Series::variable(l.clone(), 0, 0.3);
        let y = Series::variable(l, 1, 0.7);
        let f = &(&x * &x) + &y.sin();
        let g = f.exp().ln();
        for (a, b) in f.coeffs().iter().zip(g.coeffs()) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn univariate_exp_coefficients() {
        let x = Series::variable(layout(1, 4), 0, 0.0);
        let e = x.exp();
        let want = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];
        for (a, b) in e.coeffs().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn diff_lowers_order() {
        let l = layout(2, 3);
        let x = Series::variable(l.clone(), 0, 1.0);
        let y = Series::variable(l, 1, 1.0);
        let f = &(&x * &x) * &y;
        let fx = f.diff(0);
        assert_eq!(fx.order(), 2);
        // 2 x y around (1, 1)
        assert_eq!(fx.value(), 2.0);
        assert_eq!(fx.coeff(&[1, 0]), 2.0);
        assert_eq!(fx.coeff(&[1, 1]), 2.0);
    }

    #[test]
    fn multivariate_composition_matches_direct() {
        let l = layout(2, 4);
        let x = Series::variable(l.clone(), 0, 0.4);
        let y = Series::variable(l, 1, -0.2);
        let u = &x + &(&y * &y);
        let v = x.exp();
        // outer(a, b) = a b expanded around (u0, v0)
        let lo = layout(2, 4);
        let a = Series::variable(lo.clone(), 0, u.value());
        let b = Series::variable(lo, 1, v.value());
        let outer = &a * &b;
        let got = compose_multi(&outer, &[u.clone(), v.clone()]);
        let want = &u * &v;
        for (p, q) in got.coeffs().iter().zip(want.coeffs()) {
            assert!((p - q).abs() < 1e-14);
        }
    }
}
