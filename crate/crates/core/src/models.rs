//! Toy geometries and the potentials built on them.
//!
//! Sections are polynomials per chart and hermitian metrics are weights
//! `e^{−φ}`, so `‖σ‖² = |σ|² e^{−φ}`. The potentials are
//! `t = φ_D − log|σ_D|²`, `b = φ_F − log|σ_F|²`, `Θ(t)`, `G_v^β(βb)` and
//! `G̃ = G_v^β(βb) + κΘ(t)`.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::jets::{complex_coords, CSeries, ChartPoint, FnField, ScalarField};
use crate::quad;
use crate::series::{layout, Series};

pub type Field = Arc<dyn ScalarField>;

/// Holomorphic polynomial `Σ c_e z^e` in chart coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    pub n: usize,
    pub terms: Vec<(Complex64, Vec<u8>)>,
}

impl Poly {
    pub fn new(n: usize, terms: Vec<(Complex64, Vec<u8>)>) -> Self {
        assert!(terms.iter().all(|t| t.1.len() == n), "exponent length must equal the dimension");
        Poly { n, terms }
    }

    /// The coordinate `z_k`.
    pub fn coordinate(n: usize, k: usize) -> Self {
        let mut e = vec![0u8; n];
        e[k] = 1;
        Poly::new(n, vec![(Complex64::new(1.0, 0.0), e)])
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        self.terms
            .iter()
            .map(|(c, e)| e.iter().zip(z).fold(*c, |acc, (&k, w)| acc * w.powu(u32::from(k))))
            .sum()
    }

    pub fn eval_series(&self, z: &[CSeries]) -> CSeries {
        let l = z[0].re.layout().clone();
        let mut acc = CSeries::constant(l.clone(), Complex64::new(0.0, 0.0));
        for (c, e) in &self.terms {
            let mut t = CSeries::constant(l.clone(), *c);
            for (k, &p) in e.iter().enumerate() {
                if p > 0 {
                    t = t.mul(&z[k].powi(u32::from(p)));
                }
            }
            acc = acc.add(&t);
        }
        acc
    }

    /// Holomorphic gradient `∂σ/∂z_k`.
    pub fn gradient(&self, z: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|k| {
                self.terms
                    .iter()
                    .filter(|(_, e)| e[k] > 0)
                    .map(|(c, e)| {
                        let mut d = e.clone();
                        d[k] -= 1;
                        let m = Poly::new(self.n, vec![(*c * f64::from(e[k]), d)]);
                        m.eval(z)
                    })
                    .sum()
            })
            .collect()
    }
}

/// Homogeneous polynomial on `C^{n+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct HomPoly {
    pub terms: Vec<(Complex64, Vec<u8>)>,
}

impl HomPoly {
    pub fn degree(&self) -> u32 {
        self.terms.first().map_or(0, |(_, e)| e.iter().map(|&k| u32::from(k)).sum())
    }

    /// Dehomogenize at `x_k = 1`.
    pub fn chart(&self, k: usize) -> Poly {
        let n = self.terms[0].1.len() - 1;
        Poly::new(
            n,
            self.terms
                .iter()
                .map(|(c, e)| (*c, e.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, &x)| x).collect()))
                .collect(),
        )
    }
}

/// Log-weight `φ` of a hermitian metric in a chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weight {
    /// `k log(1 + |z|²)`.
    FubiniStudy(f64),
    /// `c |z|²`.
    Gaussian(f64),
    Flat,
}

impl Weight {
    pub fn eval_series(&self, z: &[CSeries]) -> Series<f64> {
        let l = z[0].re.layout().clone();
        let mut r = Series::zeros(l.clone());
        for w in z {
            r = &r + &w.norm_sqr();
        }
        match *self {
            Weight::FubiniStudy(k) => r.add_const(1.0).ln().scale(k),
            Weight::Gaussian(c) => r.scale(c),
            Weight::Flat => Series::zeros(l),
        }
    }

    pub fn eval(&self, z: &[Complex64]) -> f64 {
        let r: f64 = z.iter().map(|w| w.norm_sqr()).sum();
        match *self {
            Weight::FubiniStudy(k) => k * libm::log1p(r),
            Weight::Gaussian(c) => c * r,
            Weight::Flat => 0.0,
        }
    }
}

/// A section with its metric.
#[derive(Clone, Debug, PartialEq)]
pub enum Section {
    /// Homogeneous polynomial on projective space with the Fubini-Study
    /// metric of matching degree.
    Projective(HomPoly),
    /// Single-chart polynomial with an explicit weight.
    Local(Poly, Weight),
}

impl Section {
    pub fn chart(&self, k: usize) -> (Poly, Weight) {
        match self {
            Section::Projective(h) => (h.chart(k), Weight::FubiniStudy(f64::from(h.degree()))),
            Section::Local(p, w) => (p.clone(), *w),
        }
    }
}

/// Degree data for the average scalar curvature of `D`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IntersectionData {
    pub n: i64,
    /// `c₁(K_D⁻¹) ∪ c₁(L_D)^{n−2}`.
    pub anticanonical: i64,
    /// `c₁(L_D)^{n−1}`.
    pub volume: i64,
}

/// `Ŝ_D = (n−1) c₁(K_D⁻¹)c₁(L_D)^{n−2} / c₁(L_D)^{n−1}`.
pub fn average_scalar(d: &IntersectionData) -> Result<Ratio<i64>> {
    if d.volume == 0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(Ratio::new((d.n - 1) * d.anticanonical, d.volume))
}

/// Chart and coordinate slots in which `D = {w_D = 0}` and `F = {w_F = 0}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DivisorFrame {
    pub chart: usize,
    pub w_f: usize,
    pub w_d: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChartKind {
    /// Affine charts `x_k ≠ 0` of `P^n`.
    Projective,
    /// One chart.
    Local,
}

/// A compact toy geometry together with `D`, `F` and the integers `l, m, β`.
#[derive(Clone, Debug)]
pub struct ModelGeometry {
    pub name: String,
    pub n: usize,
    pub l: u32,
    pub m: u32,
    pub beta: u32,
    /// Lower limit of the integral defining `G_v^β`.
    pub b0: f64,
    pub s_hat_d: Ratio<i64>,
    pub chart_kind: ChartKind,
    pub sigma_d: Section,
    pub sigma_f: Section,
    pub frame: Option<DivisorFrame>,
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

impl ModelGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.l as usize <= self.n {
            return Err(invalid("l", format!("need l > n, got l = {} with n = {}", self.l, self.n)));
        }
        if self.m == 0 {
            return Err(invalid("m", "must be positive"));
        }
        if self.beta < 3 {
            return Err(invalid("beta", format!("need β ≥ 3, got {}", self.beta)));
        }
        if *self.s_hat_d.numer() <= 0 || *self.s_hat_d.denom() <= 0 {
            return Err(invalid("s_hat_d", "average scalar curvature of D must be positive"));
        }
        if !self.b0.is_finite() {
            return Err(invalid("b0", "must be finite"));
        }
        Ok(())
    }

    /// `P²` with `L = O(2)`, `D` the conic `x₁² = 2x₀x₂` and `F` the line
    /// `x₁ = 0`.
    pub fn p2_conic(l: u32, m: u32, beta: u32) -> Result<Self> {
        let s = average_scalar(&IntersectionData { n: 2, anticanonical: 2, volume: 4 })?;
        let g = ModelGeometry {
            name: "p2-conic".into(),
            n: 2,
            l,
            m,
            beta,
            b0: 0.0,
            s_hat_d: s,
            chart_kind: ChartKind::Projective,
            sigma_d: Section::Projective(HomPoly {
                terms: vec![(c(1.0), vec![0, 2, 0]), (c(-2.0), vec![1, 0, 1])],
            }),
            sigma_f: Section::Projective(HomPoly { terms: vec![(c(1.0), vec![0, 1, 0])] }),
            frame: None,
        };
        g.validate()?;
        Ok(g)
    }

    /// `P²` with `L = O(1)`, `D` the line `x₂ = 0` and `F` the line `x₁ = 0`.
    pub fn p2_line(l: u32, m: u32, beta: u32) -> Result<Self> {
        let s = average_scalar(&IntersectionData { n: 2, anticanonical: 2, volume: 1 })?;
        let g = ModelGeometry {
            name: "p2-line".into(),
            n: 2,
            l,
            m,
            beta,
            b0: 0.0,
            s_hat_d: s,
            chart_kind: ChartKind::Projective,
            sigma_d: Section::Projective(HomPoly { terms: vec![(c(1.0), vec![0, 0, 1])] }),
            sigma_f: Section::Projective(HomPoly { terms: vec![(c(1.0), vec![0, 1, 0])] }),
            frame: None,
        };
        g.validate()?;
        Ok(g)
    }

    /// Local model on `C²` with `F = {w₁ = 0}`, `D = {w₂ = 0}` and Gaussian
    /// weights, so `t = |w|² − log|w₂|²` and `b = |w|² − log|w₁|²`.
    pub fn bidisc(l: u32, m: u32, beta: u32, s_hat_d: Ratio<i64>) -> Result<Self> {
        let g = ModelGeometry {
            name: "bidisc".into(),
            n: 2,
            l,
            m,
            beta,
            b0: 0.0,
            s_hat_d,
            chart_kind: ChartKind::Local,
            sigma_d: Section::Local(Poly::coordinate(2, 1), Weight::Gaussian(1.0)),
            sigma_f: Section::Local(Poly::coordinate(2, 0), Weight::Gaussian(1.0)),
            frame: Some(DivisorFrame { chart: 0, w_f: 0, w_d: 1 }),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_b0(mut self, b0: f64) -> Self {
        self.b0 = b0;
        self
    }

    pub fn charts(&self) -> usize {
        match self.chart_kind {
            ChartKind::Projective => self.n + 1,
            ChartKind::Local => 1,
        }
    }

    fn check_chart(&self, chart: usize) -> Result<()> {
        if chart >= self.charts() {
            return Err(invalid("chart", format!("chart {chart} does not exist")));
        }
        Ok(())
    }

    /// `Ŝ_D / n(n−1)`, the exponent rate of `Θ`.
    pub fn theta_rate(&self) -> Result<f64> {
        if self.n < 2 {
            return Err(invalid("n", "Θ needs n ≥ 2"));
        }
        let s = *self.s_hat_d.numer() as f64 / *self.s_hat_d.denom() as f64;
        Ok(s / (self.n * (self.n - 1)) as f64)
    }

    /// `|σ_D|` and `|σ_F|` at a chart point (without weights).
    pub fn section_moduli(&self, chart: usize, p: &ChartPoint) -> (f64, f64) {
        let (d, _) = self.sigma_d.chart(chart);
        let (f, _) = self.sigma_f.chart(chart);
        (d.eval(&p.coords).norm(), f.eval(&p.coords).norm())
    }

    /// `‖σ_D‖²` and `‖σ_F‖²`.
    pub fn section_norms_sqr(&self, chart: usize, p: &ChartPoint) -> (f64, f64) {
        let (d, wd) = self.sigma_d.chart(chart);
        let (f, wf) = self.sigma_f.chart(chart);
        (
            d.eval(&p.coords).norm_sqr() * libm::exp(-wd.eval(&p.coords)),
            f.eval(&p.coords).norm_sqr() * libm::exp(-wf.eval(&p.coords)),
        )
    }

    fn log_norm_field(&self, s: &Section, chart: usize) -> Result<Field> {
        self.check_chart(chart)?;
        let (poly, w) = s.chart(chart);
        let p2 = poly.clone();
        Ok(Arc::new(
            FnField::new(self.n, move |x| {
                let z = complex_coords(x);
                Ok(&w.eval_series(&z) - &poly.eval_series(&z).norm_sqr().ln())
            })
            .with_domain(move |p| p2.eval(&p.coords).norm_sqr() > 0.0),
        ))
    }

    /// `t = log ‖σ_D‖⁻²`.
    pub fn potential_t(&self, chart: usize) -> Result<Field> {
        self.log_norm_field(&self.sigma_d, chart)
    }

    /// `b = log ‖σ_F‖⁻²`.
    pub fn potential_b(&self, chart: usize) -> Result<Field> {
        self.log_norm_field(&self.sigma_f, chart)
    }

    /// The weight potential `a` of `θ_X = ∂∂̄a`, so that `t = a − log|σ_D|²`.
    pub fn potential_a(&self, chart: usize) -> Result<Field> {
        self.check_chart(chart)?;
        let (_, w) = self.sigma_d.chart(chart);
        Ok(Arc::new(FnField::new(self.n, move |x| Ok(w.eval_series(&complex_coords(x))))))
    }

    /// `Θ(t) = n(n−1)/Ŝ_D · exp(Ŝ_D t / n(n−1))`.
    pub fn potential_theta(&self, chart: usize) -> Result<Field> {
        let k = self.theta_rate()?;
        let t = self.potential_t(chart)?;
        let t2 = t.clone();
        Ok(Arc::new(
            FnField::new(self.n, move |x| Ok(t.eval(x)?.scale(k).exp().scale(1.0 / k)))
                .with_domain(move |p| t2.in_domain(p)),
        ))
    }

    /// `G_v^β(βb)`.
    pub fn potential_g(&self, chart: usize, v: f64) -> Result<Field> {
        check_v(v)?;
        let b = self.potential_b(chart)?;
        let (beta, b0) = (f64::from(self.beta), self.b0);
        let b2 = b.clone();
        Ok(Arc::new(
            FnField::new(self.n, move |x| {
                let bb = b.eval(x)?.scale(beta);
                Ok(bb.compose(&g_v_beta_derivatives(bb.value(), v, beta, b0)?))
            })
            .with_domain(move |p| b2.in_domain(p)),
        ))
    }

    /// `G̃ = G_v^β(βb) + κΘ(t)`.
    pub fn potential_g_tilde(&self, chart: usize, v: f64, kappa: f64) -> Result<Field> {
        if !(0.0..1.0).contains(&kappa) {
            return Err(invalid("kappa", format!("need κ ∈ [0, 1), got {kappa}")));
        }
        let g = self.potential_g(chart, v)?;
        if kappa == 0.0 {
            return Ok(g);
        }
        let th = self.potential_theta(chart)?;
        let (g2, th2) = (g.clone(), th.clone());
        Ok(Arc::new(
            FnField::new(self.n, move |x| Ok(&g.eval(x)? + &th.eval(x)?.scale(kappa)))
                .with_domain(move |p| g2.in_domain(p) && th2.in_domain(p)),
        ))
    }

    /// `f = ‖σ_F‖^{−2/l} ‖σ_D‖^{2m/l}`.
    pub fn rhs_density(&self, chart: usize) -> Result<Field> {
        let t = self.potential_t(chart)?;
        let b = self.potential_b(chart)?;
        let (l, m) = (f64::from(self.l), f64::from(self.m));
        let (t2, b2) = (t.clone(), b.clone());
        Ok(Arc::new(
            FnField::new(self.n, move |x| Ok((&b.eval(x)?.scale(1.0 / l) - &t.eval(x)?.scale(m / l)).exp()))
                .with_domain(move |p| t2.in_domain(p) && b2.in_domain(p)),
        ))
    }

    /// Coordinates of `p` (given in chart `from`) in chart `to`.
    pub fn transition(&self, from: usize, to: usize, p: &ChartPoint) -> Result<ChartPoint> {
        self.check_chart(from)?;
        self.check_chart(to)?;
        if self.chart_kind == ChartKind::Local || from == to {
            return Ok(p.clone());
        }
        let mut h = p.coords.clone();
        h.insert(from, c(1.0));
        let d = h[to];
        if d.norm() == 0.0 {
            return Err(Error::OutOfDomain { point: p.reals() });
        }
        Ok(ChartPoint::new(h.iter().enumerate().filter(|(i, _)| *i != to).map(|(_, z)| z / d).collect()))
    }

    /// `field ∘ (chart from → chart to)`, a field in chart `from`.
    pub fn pullback(&self, field: Field, from: usize, to: usize) -> Result<Field> {
        self.check_chart(from)?;
        self.check_chart(to)?;
        let n = self.n;
        let kind = self.chart_kind;
        let geom = self.clone();
        Ok(Arc::new(
            FnField::new(n, move |x| {
                if kind == ChartKind::Local || from == to {
                    return field.eval(x);
                }
                let z = complex_coords(x);
                let l = x[0].layout().clone();
                let mut h = z.clone();
                h.insert(from, CSeries::constant(l, c(1.0)));
                let inv = h[to].recip();
                let mut out = Vec::with_capacity(2 * n);
                for (i, w) in h.iter().enumerate() {
                    if i != to {
                        let q = w.mul(&inv);
                        out.push(q.re);
                        out.push(q.im);
                    }
                }
                field.eval(&out)
            })
            .with_domain(move |p| geom.transition(from, to, p).is_ok()),
        ))
    }

    /// Check the declared frame: the frame coordinates vanish exactly where
    /// the sections do, on random samples.
    pub fn verify_frame(&self, samples: usize, seed: u64) -> Result<()> {
        let fr = self.frame.ok_or_else(|| Error::BadFrame("no frame declared".into()))?;
        self.check_chart(fr.chart)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (s, slot) in [(&self.sigma_d, fr.w_d), (&self.sigma_f, fr.w_f)] {
            let (poly, _) = s.chart(fr.chart);
            for _ in 0..samples {
                let mut z: Vec<Complex64> =
                    (0..self.n).map(|_| Complex64::new(rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9))).collect();
                let r = libm::pow(10.0, rng.random_range(-12.0..-1.0));
                z[slot] = Complex64::from_polar(r, rng.random_range(0.0..core::f64::consts::TAU));
                let near = poly.eval(&z).norm();
                z[slot] = Complex64::from_polar(rng.random_range(0.5..0.9), rng.random_range(0.0..core::f64::consts::TAU));
                let far = poly.eval(&z).norm();
                if !(near <= 10.0 * r && far > 0.1) {
                    return Err(Error::BadFrame(format!("slot {slot}: |σ| = {near} at |w| = {r}, {far} away")));
                }
            }
        }
        Ok(())
    }
}

fn check_v(v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(invalid("v", format!("need v ≥ 0, got {v}")));
    }
    Ok(())
}

/// `G_v^β(B) = ∫_{b₀}^{B} (e^{−y} + v)^{−1/β} dy` by adaptive quadrature.
pub fn g_v_beta(big_b: f64, v: f64, beta: f64, b0: f64) -> Result<f64> {
    check_v(v)?;
    if !(beta > 0.0) || !big_b.is_finite() {
        return Err(invalid("beta", "need β > 0 and a finite argument"));
    }
    quad::integrate(|y| libm::pow(libm::exp(-y) + v, -1.0 / beta), b0, big_b, 1e-14, 1e-13)
}

/// `[G, G', G'', G''', G'''']` at `B`; only the value needs quadrature.
pub fn g_v_beta_derivatives(big_b: f64, v: f64, beta: f64, b0: f64) -> Result<[f64; 5]> {
    let g0 = g_v_beta(big_b, v, beta, b0)?;
    let y = Series::variable(layout(1, 3), 0, big_b);
    let g = y.scale(-1.0).exp().add_const(v).powf(-1.0 / beta);
    let k = g.coeffs();
    Ok([g0, k[0], k[1], 2.0 * k[2], 6.0 * k[3]])
}

/// Exact check of `a(n) m / 2l < Ŝ_D / n(n−1)`.
pub fn validate_condition(geom: &ModelGeometry, a_n: u32) -> bool {
    let lhs = Ratio::new(i128::from(a_n) * i128::from(geom.m), 2 * i128::from(geom.l));
    let rhs = Ratio::new(i128::from(*geom.s_hat_d.numer()), i128::from(*geom.s_hat_d.denom()) * (geom.n * (geom.n - 1)) as i128);
    lhs < rhs
}

/// The Fubini-Study potential `log(1 + |z|²)` on `C^n`.
pub fn fubini_study(n: usize) -> FnField {
    FnField::new(n, |x| Ok(Weight::FubiniStudy(1.0).eval_series(&complex_coords(x))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::metric_from_jet;
    use crate::fit::fit_loglog;
    use crate::jets::taylor_jet;

    fn pt(a: f64, b: f64, c: f64, d: f64) -> ChartPoint {
        ChartPoint::from_reals(&[(a, b), (c, d)])
    }

    #[test]
    fn p1_potential_value() {
        let g = ModelGeometry {
            name: "p1".into(),
            n: 1,
            l: 2,
            m: 1,
            beta: 3,
            b0: 0.0,
            s_hat_d: Ratio::new(1, 1),
            chart_kind: ChartKind::Local,
            sigma_d: Section::Local(Poly::coordinate(1, 0), Weight::FubiniStudy(1.0)),
            sigma_f: Section::Local(Poly::coordinate(1, 0), Weight::FubiniStudy(1.0)),
            frame: None,
        };
        let t = g.potential_t(0).unwrap();
        assert!((t.value(&ChartPoint::from_reals(&[(1.0, 0.0)])).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
        assert!(matches!(t.value(&ChartPoint::from_reals(&[(0.0, 0.0)])), Err(Error::OutOfDomain { .. })));
        let near = t.value(&ChartPoint::from_reals(&[(1e-3, 0.0)])).unwrap();
        let nearer = t.value(&ChartPoint::from_reals(&[(1e-6, 0.0)])).unwrap();
        assert!(nearer > near && near > 10.0);
        assert!(g.potential_theta(0).is_err());
    }

    #[test]
    fn average_scalar_examples() {
        assert_eq!(average_scalar(&IntersectionData { n: 2, anticanonical: 2, volume: 4 }).unwrap(), Ratio::new(1, 2));
        assert_eq!(average_scalar(&IntersectionData { n: 2, anticanonical: 2, volume: 1 }).unwrap(), Ratio::new(2, 1));
        for n in 2..6 {
            let s = average_scalar(&IntersectionData { n, anticanonical: n, volume: 1 }).unwrap();
            assert_eq!(s, Ratio::new(n * (n - 1), 1));
        }
        assert_eq!(average_scalar(&IntersectionData { n: 2, anticanonical: 2, volume: 0 }), Err(Error::ZeroDenominator));
    }

    #[test]
    fn theta_on_the_conic() {
        let g = ModelGeometry::p2_conic(3, 1, 3).unwrap();
        assert!((g.theta_rate().unwrap() - 0.25).abs() < 1e-15);
        // a point with t = 0: ‖σ_D‖ = 1
        let th = g.potential_theta(0).unwrap();
        let t = g.potential_t(0).unwrap();
        let p = pt(0.0, 0.0, -1.0, 0.0);
        assert!(t.value(&p).unwrap().abs() < 1e-15);
        assert!((th.value(&p).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn g_closed_form_and_bound() {
        let v = g_v_beta(3.0, 0.0, 3.0, 0.0).unwrap();
        assert!((v - 5.154845485377136).abs() < 1e-12);
        for &b in &[0.5, 1.0, 2.0, 4.0] {
            let g = g_v_beta(3.0 * b, 1e-6, 3.0, 0.0).unwrap();
            assert!(g < 3.0 * libm::exp(b));
            assert!(g_v_beta(3.0 * b + 0.1, 1e-6, 3.0, 0.0).unwrap() > g);
        }
        assert!(g_v_beta(1.0, -1.0, 3.0, 0.0).is_err());
        let d = g_v_beta_derivatives(2.0, 0.5, 3.0, 0.0).unwrap();
        let h = 1e-5;
        let fd = (g_v_beta(2.0 + h, 0.5, 3.0, 0.0).unwrap() - g_v_beta(2.0 - h, 0.5, 3.0, 0.0).unwrap()) / (2.0 * h);
        assert!((fd - d[1]).abs() < 1e-9);
        let fd2 = (g_v_beta_derivatives(2.0 + h, 0.5, 3.0, 0.0).unwrap()[3] - g_v_beta_derivatives(2.0 - h, 0.5, 3.0, 0.0).unwrap()[3]) / (2.0 * h);
        assert!((fd2 - d[4]).abs() < 1e-8);
    }

    #[test]
    fn g_tilde_at_t_zero() {
        let g = ModelGeometry::p2_conic(3, 1, 3).unwrap();
        let p = pt(0.0, 0.0, -1.0, 0.0);
        let gt = g.potential_g_tilde(0, 1e-3, 0.5).unwrap().value(&p);
        // F = {z_1 = 0} passes through p, so G̃ is undefined there
        assert!(gt.is_err());
        let p = pt(0.3, 0.0, (0.09 - 1.0) / 2.0, 0.0);
        let t = g.potential_t(0).unwrap().value(&p).unwrap();
        let gp = g.potential_g(0, 1e-3).unwrap().value(&p).unwrap();
        let gt = g.potential_g_tilde(0, 1e-3, 0.5).unwrap().value(&p).unwrap();
        assert!((gt - gp - 0.5 * 4.0 * libm::exp(t / 4.0)).abs() < 1e-12);
        let g0 = g.potential_g_tilde(0, 1e-3, 0.0).unwrap().value(&p).unwrap();
        assert_eq!(g0, gp);
    }

    #[test]
    fn potentials_are_kahler() {
        let g = ModelGeometry::p2_conic(3, 1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fields = [
            g.potential_t(0).unwrap(),
            g.potential_b(0).unwrap(),
            g.potential_theta(0).unwrap(),
            g.potential_g_tilde(0, 1e-2, 0.5).unwrap(),
        ];
        for _ in 0..20 {
            let p = pt(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            for f in &fields {
                let m = metric_from_jet(&taylor_jet(f, &p, 2).unwrap()).unwrap();
                assert!(m.eigen_range().0 > 0.0);
            }
        }
    }

    #[test]
    fn chart_overlap_consistency() {
        let g = ModelGeometry::p2_conic(3, 1, 3).unwrap();
        let p = pt(0.7, 0.2, -0.4, 0.3);
        for to in 1..3 {
            let t0 = g.potential_t(0).unwrap();
            let t1 = g.pullback(g.potential_t(to).unwrap(), 0, to).unwrap();
            let diff = FnField::new(2, move |x| Ok(&t0.eval(x)? - &t1.eval(x)?));
            let j = taylor_jet(&diff, &p, 4).unwrap();
            for i in 0..2 {
                for k in 0..2 {
                    assert!(j.mixed(i, k).norm() < 1e-8);
                }
            }
            assert!(j.partial(&[2, 0], &[1, 1]).norm() < 1e-8);
        }
    }

    #[test]
    fn density_rates() {
        let g = ModelGeometry::bidisc(3, 1, 3, Ratio::new(1, 2)).unwrap();
        let f = g.rhs_density(0).unwrap();
        assert!((f.value(&pt(1.0, 0.0, 1.0, 0.0)).unwrap() - 1.0).abs() < 1e-14);
        let r: Vec<f64> = (0..8).map(|k| libm::pow(10.0, -1.0 - 0.5 * k as f64)).collect();
        let fd: Vec<f64> = r.iter().map(|&x| f.value(&pt(0.5, 0.0, x, 0.0)).unwrap()).collect();
        let ff: Vec<f64> = r.iter().map(|&x| f.value(&pt(x, 0.0, 0.5, 0.0)).unwrap()).collect();
        assert!((fit_loglog(&r, &fd).unwrap().slope - 2.0 / 3.0).abs() < 0.01);
        assert!((fit_loglog(&r, &ff).unwrap().slope + 2.0 / 3.0).abs() < 0.01);
        g.verify_frame(50, 1).unwrap();
        assert!(ModelGeometry::p2_conic(3, 1, 3).unwrap().verify_frame(5, 1).is_err());
    }

    #[test]
    fn condition_is_strict() {
        let g = ModelGeometry::p2_conic(100, 1, 3).unwrap();
        assert!(validate_condition(&g, 4));
        let g = ModelGeometry::p2_conic(4, 1, 3).unwrap();
        // 4·1/8 = 1/2 > 1/4
        assert!(!validate_condition(&g, 4));
        let g = ModelGeometry::p2_conic(8, 1, 3).unwrap();
        // 4/16 = 1/4, equality
        assert!(!validate_condition(&g, 4));
    }

    #[test]
    fn invalid_geometry() {
        assert!(ModelGeometry::p2_conic(2, 1, 3).is_err());
        assert!(ModelGeometry::p2_conic(3, 1, 2).is_err());
        assert!(ModelGeometry::bidisc(3, 1, 3, Ratio::new(-1, 2)).is_err());
    }
}
