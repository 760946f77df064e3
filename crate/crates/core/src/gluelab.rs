//! The glued potential `M_η(Θ(t), G̃(b), t + φ + c)`, its region labels,
//! curvature and the decay experiments built on it.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;
use num_rational::Ratio;

use crate::curvature::{curvature_from_jet, metric_from_jet};
use crate::error::{invalid, Error, Result};
use crate::fit::{fit_loglog, SlopeFit};
use crate::jets::{taylor_jet, ChartPoint, ScalarField};
use crate::masolver::{SeparableSolution, TorusInterpolant};
use crate::models::{g_v_beta, Field, ModelGeometry};
use crate::regmax::RegMax;
use crate::series::{compose_multi, Series};

/// `|S|` below this is clipped and flagged.
pub const S_FLOOR: f64 = 1e-30;

fn ratio_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Parameters of the glued metric; `η = (a₁c, a₂c, η₃)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlueParams {
    pub c: f64,
    pub v: f64,
    pub kappa: Ratio<i64>,
    pub a1: Ratio<i64>,
    pub a2: Ratio<i64>,
    pub eta3: f64,
    pub constrained: bool,
}

impl GlueParams {
    /// `a₂ = 1 − κ + κa₁`, so that `(1 − κ + κa₁ − a₂)c = 0` exactly.
    pub fn constrained(c: f64, v: f64, kappa: Ratio<i64>, a1: Ratio<i64>, eta3: f64) -> Result<Self> {
        let one = Ratio::from_integer(1);
        let p = GlueParams { c, v, kappa, a1, a2: one - kappa + kappa * a1, eta3, constrained: true };
        p.validate()?;
        Ok(p)
    }

    pub fn free(c: f64, v: f64, kappa: Ratio<i64>, a1: Ratio<i64>, a2: Ratio<i64>, eta3: f64) -> Result<Self> {
        let p = GlueParams { c, v, kappa, a1, a2, eta3, constrained: false };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (zero, one) = (Ratio::from_integer(0), Ratio::from_integer(1));
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid("c", "need c > 0"));
        }
        if !(self.v > 0.0 && self.v.is_finite()) {
            return Err(invalid("v", "need v > 0"));
        }
        for (name, r) in [("kappa", self.kappa), ("a1", self.a1), ("a2", self.a2)] {
            if !(r > zero && r < one) {
                return Err(invalid(name, format!("need a value in (0, 1), got {r}")));
            }
        }
        if !(self.eta3 > 0.0 && self.eta3.is_finite()) {
            return Err(invalid("eta3", "need η₃ > 0"));
        }
        if self.constrained && self.constraint_defect() != Ratio::from_integer(0) {
            return Err(invalid("a2", "constraint 1 − κ + κa₁ − a₂ = 0 fails"));
        }
        Ok(())
    }

    /// `1 − κ + κa₁ − a₂` in exact arithmetic.
    pub fn constraint_defect(&self) -> Ratio<i64> {
        Ratio::from_integer(1) - self.kappa + self.kappa * self.a1 - self.a2
    }

    pub fn eta(&self) -> [f64; 3] {
        [ratio_f64(self.a1) * self.c, ratio_f64(self.a2) * self.c, self.eta3]
    }

    pub fn kappa_f64(&self) -> f64 {
        ratio_f64(self.kappa)
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }
}

/// Which of `Θ(t)`, `G̃(b)`, `t + φ + c` still influence `M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegionLabel {
    DPure,
    FPure,
    InteriorPure,
    Overlap12,
    Overlap13,
    Overlap23,
    Triple,
}

impl RegionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionLabel::DPure => "D_PURE",
            RegionLabel::FPure => "F_PURE",
            RegionLabel::InteriorPure => "INTERIOR_PURE",
            RegionLabel::Overlap12 => "OVERLAP_12",
            RegionLabel::Overlap13 => "OVERLAP_13",
            RegionLabel::Overlap23 => "OVERLAP_23",
            RegionLabel::Triple => "TRIPLE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ALL_LABELS.iter().copied().find(|l| l.as_str() == s)
    }

    pub fn is_pure(self) -> bool {
        matches!(self, RegionLabel::DPure | RegionLabel::FPure | RegionLabel::InteriorPure)
    }

    fn from_active(active: &[usize]) -> Self {
        match active {
            [0] => RegionLabel::DPure,
            [1] => RegionLabel::FPure,
            [2] => RegionLabel::InteriorPure,
            [0, 1] => RegionLabel::Overlap12,
            [0, 2] => RegionLabel::Overlap13,
            [1, 2] => RegionLabel::Overlap23,
            _ => RegionLabel::Triple,
        }
    }
}

pub const ALL_LABELS: [RegionLabel; 7] = [
    RegionLabel::DPure,
    RegionLabel::FPure,
    RegionLabel::InteriorPure,
    RegionLabel::Overlap12,
    RegionLabel::Overlap13,
    RegionLabel::Overlap23,
    RegionLabel::Triple,
];

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Label from the three values: `k` is dropped when
/// `t_k + η_k < max_{j≠k}(t_j − η_j)`.
pub fn label_for(values: &[f64; 3], eta: &[f64; 3]) -> RegionLabel {
    let active: Vec<usize> = (0..3)
        .filter(|&k| {
            let lo = (0..3).filter(|&j| j != k).map(|j| values[j] - eta[j]).fold(f64::NEG_INFINITY, f64::max);
            values[k] + eta[k] >= lo
        })
        .collect();
    RegionLabel::from_active(&active)
}

/// `t_k − η_k − max_{j≠k}(t_j + η_j)` for the largest `t_k`; positive in a
/// pure region.
pub fn dominance_margin(values: &[f64; 3], eta: &[f64; 3]) -> f64 {
    let k = (0..3).max_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    let rest = (0..3).filter(|&j| j != k).map(|j| values[j] + eta[j]).fold(f64::NEG_INFINITY, f64::max);
    values[k] - eta[k] - rest
}

/// Source of the potential `φ` in `t + φ + c`.
#[derive(Clone, Debug)]
pub enum PhiProvider {
    Zero,
    Separable(SeparableSolution),
    Torus(Arc<TorusInterpolant>),
}

impl PhiProvider {
    fn eval(&self, x: &[Series<f64>]) -> Result<Series<f64>> {
        match self {
            PhiProvider::Zero => Ok(Series::zeros(x[0].layout().clone())),
            PhiProvider::Separable(s) => s.eval(x),
            PhiProvider::Torus(t) => t.eval(x),
        }
    }

    fn in_domain(&self, p: &ChartPoint) -> bool {
        match self {
            PhiProvider::Zero => true,
            PhiProvider::Separable(s) => s.in_domain(p),
            PhiProvider::Torus(t) => t.dim() == p.dim(),
        }
    }
}

/// `M_{c,v,η} = M_η(Θ(t), G̃(b), t + φ + c)` on one chart.
#[derive(Clone)]
pub struct GluedPotential {
    n: usize,
    theta: Field,
    g_tilde: Field,
    t: Field,
    phi: PhiProvider,
    c: f64,
    eta: [f64; 3],
    rm: RegMax,
}

impl GluedPotential {
    pub fn new(geom: &ModelGeometry, chart: usize, params: &GlueParams, phi: PhiProvider) -> Result<Self> {
        params.validate()?;
        geom.validate()?;
        let eta = params.eta();
        Ok(GluedPotential {
            n: geom.n,
            theta: geom.potential_theta(chart)?,
            g_tilde: geom.potential_g_tilde(chart, params.v, params.kappa_f64())?,
            t: geom.potential_t(chart)?,
            phi,
            c: params.c,
            eta,
            rm: RegMax::polynomial(&eta)?,
        })
    }

    pub fn eta(&self) -> [f64; 3] {
        self.eta
    }

    pub fn components(&self) -> [Field; 3] {
        [self.theta.clone(), self.g_tilde.clone(), self.interior_field()]
    }

    fn interior_field(&self) -> Field {
        let (t, phi, c) = (self.t.clone(), self.phi.clone(), self.c);
        let (t2, phi2) = (t.clone(), phi.clone());
        Arc::new(
            crate::jets::FnField::new(self.n, move |x| Ok((&t.eval(x)? + &phi.eval(x)?).add_const(c)))
                .with_domain(move |p| t2.in_domain(p) && phi2.in_domain(p)),
        )
    }

    fn series(&self, x: &[Series<f64>]) -> Result<[Series<f64>; 3]> {
        let t = self.t.eval(x)?;
        let interior = (&t + &self.phi.eval(x)?).add_const(self.c);
        Ok([self.theta.eval(x)?, self.g_tilde.eval(x)?, interior])
    }

    /// `[Θ, G̃, t + φ + c]` at `p`.
    pub fn values(&self, p: &ChartPoint) -> Result<[f64; 3]> {
        if !self.in_domain(p) {
            return Err(Error::OutOfDomain { point: p.reals() });
        }
        let l = crate::series::layout(2 * p.dim(), 0);
        let x: Vec<Series<f64>> = p.reals().into_iter().map(|v| Series::constant(l.clone(), v)).collect();
        let s = self.series(&x)?;
        let v = [s[0].value(), s[1].value(), s[2].value()];
        if v.iter().any(|a| !a.is_finite()) {
            return Err(Error::OutOfDomain { point: p.reals() });
        }
        Ok(v)
    }

    pub fn classify(&self, p: &ChartPoint) -> Result<RegionLabel> {
        Ok(label_for(&self.values(p)?, &self.eta))
    }
}

impl ScalarField for GluedPotential {
    fn dim(&self) -> usize {
        self.n
    }

    fn in_domain(&self, p: &ChartPoint) -> bool {
        self.theta.in_domain(p) && self.g_tilde.in_domain(p) && self.t.in_domain(p) && self.phi.in_domain(p)
    }

    fn eval(&self, x: &[Series<f64>]) -> Result<Series<f64>> {
        let s = self.series(x)?;
        let vals = [s[0].value(), s[1].value(), s[2].value()];
        let outer = self.rm.jet(&vals, x[0].order())?;
        Ok(compose_multi(&outer, &s))
    }
}

pub fn classify_region(geom: &ModelGeometry, chart: usize, params: &GlueParams, phi: PhiProvider, p: &ChartPoint) -> Result<RegionLabel> {
    GluedPotential::new(geom, chart, params, phi)?.classify(p)
}

/// Curvature data of the glued metric at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct GluedCurvature {
    pub label: RegionLabel,
    pub values: [f64; 3],
    pub scalar: f64,
    /// Eigenvalue range of the metric relative to the chart identity.
    pub eigen_range: (f64, f64),
}

pub fn glued_scalar_curvature(glued: &GluedPotential, p: &ChartPoint) -> Result<GluedCurvature> {
    let values = glued.values(p)?;
    let jet = taylor_jet(glued, p, 4)?;
    let curv = curvature_from_jet(&jet)?;
    Ok(GluedCurvature {
        label: label_for(&values, &glued.eta),
        values,
        scalar: curv.scalar,
        eigen_range: curv.metric.eigen_range(),
    })
}

/// Smallest `c` in `[lo, hi]` for which every point of `ys` is
/// `INTERIOR_PURE`, by bisection.
pub fn c0_bisection(
    geom: &ModelGeometry,
    chart: usize,
    params: &GlueParams,
    phi: &PhiProvider,
    ys: &[ChartPoint],
    lo: f64,
    hi: f64,
) -> Result<f64> {
    let ok = |c: f64| -> Result<bool> {
        let g = GluedPotential::new(geom, chart, &params.with_c(c), phi.clone())?;
        for y in ys {
            if g.classify(y)? != RegionLabel::InteriorPure {
                return Ok(false);
            }
        }
        Ok(true)
    };
    if !ok(hi)? {
        return Err(Error::RegionNotFound(format!("INTERIOR_PURE for all of Y at c = {hi}")));
    }
    if ok(lo)? {
        return Ok(lo);
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > 1e-10 * b {
        let m = 0.5 * (a + b);
        if ok(m)? {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(b)
}

/// One sample of a decay experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayRow {
    pub point: Vec<f64>,
    pub label: String,
    pub driver: f64,
    pub scalar: f64,
    pub eigen_range: (f64, f64),
    /// `|S|` was below [`S_FLOOR`] and clipped.
    pub clipped: bool,
}

/// Slope of `log|S|` against `log(driver)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayReport {
    pub name: String,
    pub driver: String,
    pub rows: Vec<DecayRow>,
    pub fit: SlopeFit,
    pub predicted: f64,
    /// Admissible deviation in the bound direction.
    pub slack: f64,
    /// `true`: pass iff `slope ≥ predicted − slack`; `false`: `slope ≤ predicted + slack`.
    pub lower_bound: bool,
}

impl DecayReport {
    pub fn passed(&self) -> bool {
        if self.lower_bound {
            self.fit.slope >= self.predicted - self.slack
        } else {
            self.fit.slope <= self.predicted + self.slack
        }
    }

    fn build(name: &str, driver: &str, rows: Vec<DecayRow>, predicted: f64, slack: f64, lower: bool) -> Result<Self> {
        let x: Vec<f64> = rows.iter().map(|r| r.driver).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.scalar.abs().max(S_FLOOR)).collect();
        Ok(DecayReport {
            name: name.into(),
            driver: driver.into(),
            fit: fit_loglog(&x, &y)?,
            rows,
            predicted,
            slack,
            lower_bound: lower,
        })
    }
}

pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (libm::log10(lo), libm::log10(hi));
    if count < 2 {
        return vec![lo];
    }
    (0..count).map(|i| libm::pow(10.0, a + (b - a) * i as f64 / (count - 1) as f64)).collect()
}

/// Largest `s` with `f(s) ≤ target` for increasing `f` on `[0, ∞)`.
fn invert_increasing(f: impl Fn(f64) -> f64, target: f64) -> Result<f64> {
    let mut hi = 1e-8;
    while f(hi) < target {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(invalid("target", "driver range not reachable along the path"));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if f(m) < target {
            lo = m;
        } else {
            hi = m;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Divisor selector for normal paths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Divisor {
    D,
    F,
}

/// The straight path `q + s·n` leaving the divisor through `q` along the
/// conjugate gradient of its defining polynomial.
pub fn normal_path(geom: &ModelGeometry, chart: usize, which: Divisor, q: &ChartPoint) -> Result<impl Fn(f64) -> ChartPoint> {
    let sec = match which {
        Divisor::D => &geom.sigma_d,
        Divisor::F => &geom.sigma_f,
    };
    let (poly, _) = sec.chart(chart);
    let on = poly.eval(&q.coords).norm();
    if on > 1e-12 {
        return Err(invalid("q", format!("base point is not on the divisor (|σ| = {on:e})")));
    }
    let g = poly.gradient(&q.coords);
    let norm = libm::sqrt(g.iter().map(|z| z.norm_sqr()).sum::<f64>());
    if norm == 0.0 {
        return Err(invalid("q", "divisor is singular at the base point"));
    }
    let dir: Vec<Complex64> = g.iter().map(|z| z.conj() / norm).collect();
    let base = q.coords.clone();
    Ok(move |s: f64| ChartPoint::new(base.iter().zip(&dir).map(|(b, d)| b + d * s).collect()))
}

fn driver_of(geom: &ModelGeometry, chart: usize, which: Divisor, p: &ChartPoint) -> f64 {
    let (d, f) = geom.section_norms_sqr(chart, p);
    match which {
        Divisor::D => d,
        Divisor::F => f,
    }
}

/// `S(∂∂̄u)` along the normal path, sampled at log-spaced values of
/// `‖σ‖²` in `[lo, hi]`, and the slope of `log|S|` against `log‖σ‖²`.
#[allow(clippy::too_many_arguments)]
pub fn decay_experiment(
    name: &str,
    geom: &ModelGeometry,
    chart: usize,
    field: &dyn ScalarField,
    which: Divisor,
    q: &ChartPoint,
    lo: f64,
    hi: f64,
    count: usize,
    predicted: f64,
    slack: f64,
) -> Result<DecayReport> {
    let path = normal_path(geom, chart, which, q)?;
    let mut rows = Vec::with_capacity(count);
    for target in log_space(lo, hi, count) {
        let s = invert_increasing(|s| driver_of(geom, chart, which, &path(s)), target)?;
        let p = path(s);
        let jet = taylor_jet(field, &p, 4)?;
        let curv = curvature_from_jet(&jet)?;
        rows.push(DecayRow {
            point: p.reals(),
            label: String::from(match which {
                Divisor::D => "D_PURE",
                Divisor::F => "F_PURE",
            }),
            driver: driver_of(geom, chart, which, &p),
            scalar: curv.scalar,
            eigen_range: curv.metric.eigen_range(),
            clipped: curv.scalar.abs() < S_FLOOR,
        });
    }
    let driver = match which {
        Divisor::D => "|sigma_D|^2",
        Divisor::F => "|sigma_F|^2",
    };
    DecayReport::build(name, driver, rows, predicted, slack, true)
}

/// `S(ω₀)` toward `D`; the predicted slope is `Ŝ_D / n(n−1)`.
pub fn omega0_decay(geom: &ModelGeometry, chart: usize, q: &ChartPoint, lo: f64, hi: f64, count: usize, slack: f64) -> Result<DecayReport> {
    let theta = geom.potential_theta(chart)?;
    let k = geom.theta_rate()?;
    decay_experiment("omega0-decay", geom, chart, &theta, Divisor::D, q, lo, hi, count, k, slack)
}

/// `S(κω₀ + γ_v^β)` toward `F`, with the given predicted slope.
#[allow(clippy::too_many_arguments)]
pub fn gamma_decay(
    geom: &ModelGeometry,
    chart: usize,
    v: f64,
    kappa: f64,
    q: &ChartPoint,
    lo: f64,
    hi: f64,
    count: usize,
    predicted: f64,
    slack: f64,
) -> Result<DecayReport> {
    let g = geom.potential_g_tilde(chart, v, kappa)?;
    decay_experiment("gamma-decay", geom, chart, &g, Divisor::F, q, lo, hi, count, predicted, slack)
}

/// Point of the bidisc model with prescribed `t` and `b` on the real slice
/// `w_F, w_D > 0`, on the branch approaching `D ∩ F`.
pub fn bidisc_point(t: f64, b: f64) -> Result<ChartPoint> {
    // t − b = log(r_F²/r_D²); then u = r_D² solves u(1 + e^{t−b}) − log u = t
    let e = libm::exp(t - b);
    let k = 1.0 + e;
    let h = |lu: f64| k * libm::exp(lu) - lu;
    let top = -libm::log(k);
    if h(top) > t {
        return Err(Error::RegionNotFound(format!("no bidisc point with t = {t}, b = {b}")));
    }
    let (mut a, mut z) = (-800.0, top);
    for _ in 0..200 {
        let m = 0.5 * (a + z);
        if h(m) > t {
            a = m;
        } else {
            z = m;
        }
    }
    let u = libm::exp(0.5 * (a + z));
    Ok(ChartPoint::from_reals(&[(libm::sqrt(u * e), 0.0), (libm::sqrt(u), 0.0)]))
}

/// Solve `g(x) = target` for increasing `g` by bisection on `[lo, hi]`.
fn bisect(g: impl Fn(f64) -> Result<f64>, target: f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    if g(lo)? > target || g(hi)? < target {
        return Err(Error::RegionNotFound(format!("target {target} outside bracket [{lo}, {hi}]")));
    }
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if g(m)? < target {
            lo = m;
        } else {
            hi = m;
        }
        if hi - lo <= 1e-14 * hi.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Point of the given overlap region of the bidisc model at parameters `p`
/// (with `φ ≡ 0`), built from the band inequalities of the region.
pub fn overlap_point(geom: &ModelGeometry, params: &GlueParams, label: RegionLabel) -> Result<ChartPoint> {
    let k = geom.theta_rate()?;
    let beta = f64::from(geom.beta);
    let kappa = params.kappa_f64();
    let (c, eta) = (params.c, params.eta());
    let theta = |t: f64| libm::exp(k * t) / k;
    let t_of_theta = |th: f64| libm::log(k * th) / k;
    let g_of_b = |b: f64| g_v_beta(beta * b, params.v, beta, geom.b0);
    // b with G(βb) = target
    let solve_b = |target: f64| bisect(g_of_b, target, -50.0, 60.0);
    let (t, b) = match label {
        RegionLabel::Overlap12 => {
            // Θ = G̃ = (2 + a₁)c with t + c + η₃ well below Θ − η₁
            let th = (2.0 + eta[0] / c) * c;
            let t = t_of_theta(th);
            (t, solve_b((1.0 - kappa) * th)?)
        }
        RegionLabel::Overlap13 => {
            // G̃ below both, Θ at the lower edge of its band around t + c
            let b = geom.b0 / beta;
            let g = g_of_b(b)?;
            let find = |e_frac: f64| -> Result<f64> {
                bisect(|t| Ok(theta(t) - t), (1.0 - eta[0] / c) * c - eta[2] + e_frac, 0.0, 200.0)
            };
            let mut t = find(0.0)?;
            for _ in 0..50 {
                let bound = ((1.0 - kappa) * (t - eta[2]) - g) / kappa;
                if bound <= 0.0 {
                    return Err(Error::RegionNotFound(format!("OVERLAP_13 empty at c = {c}")));
                }
                let nt = find(0.5 * bound)?;
                if (nt - t).abs() < 1e-12 * nt.abs().max(1.0) {
                    t = nt;
                    break;
                }
                t = nt;
            }
            (t, b)
        }
        RegionLabel::Overlap23 => {
            // G̃ = t + c, Θ small: fix r_D and move toward F
            let t = 2.0;
            (t, solve_b(t + c - kappa * theta(t))?)
        }
        RegionLabel::Triple => {
            let t = bisect(|t| Ok(theta(t) - t), c, 0.0, 200.0)?;
            (t, solve_b((1.0 - kappa) * theta(t))?)
        }
        _ => return Err(invalid("label", "overlap_point builds overlap or triple points only")),
    };
    bidisc_point(t, b)
}

/// Side condition `(‖σ_F‖^{2β} + v)^{2/β} < ‖σ_F‖^{4am/l}` of the OVERLAP_23
/// estimate, at `p`.
pub fn overlap23_side_condition(geom: &ModelGeometry, chart: usize, v: f64, a_n: u32, p: &ChartPoint) -> bool {
    let (_, f2) = geom.section_norms_sqr(chart, p);
    let beta = f64::from(geom.beta);
    let lhs = libm::pow(libm::pow(f2, beta) + v, 2.0 / beta);
    let rhs = libm::pow(f2, 2.0 * f64::from(a_n) * f64::from(geom.m) / f64::from(geom.l));
    lhs < rhs
}

/// `S` at the `c`-dependent overlap points for every `c` in `cs`, fitted
/// against `c`.
pub fn c_sweep(geom: &ModelGeometry, base: &GlueParams, label: RegionLabel, cs: &[f64], slack: f64) -> Result<DecayReport> {
    let mut rows = Vec::with_capacity(cs.len());
    for &c in cs {
        let params = base.with_c(c);
        let p = overlap_point(geom, &params, label)?;
        let glued = GluedPotential::new(geom, 0, &params, PhiProvider::Zero)?;
        let g = glued_scalar_curvature(&glued, &p)?;
        if g.label != label {
            return Err(Error::RegionNotFound(format!("point built for {label} classified as {} at c = {c}", g.label)));
        }
        rows.push(DecayRow {
            point: p.reals(),
            label: String::from(g.label.as_str()),
            driver: c,
            scalar: g.scalar,
            eigen_range: g.eigen_range,
            clipped: g.scalar.abs() < S_FLOOR,
        });
    }
    DecayReport::build(&format!("c-sweep-{label}"), "c", rows, -2.0, slack, false)
}

/// A measured growth exponent of a quadratic-term coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthReport {
    pub name: String,
    pub fit: SlopeFit,
    /// Growth rate `−slope` allowed by the bound.
    pub bound: f64,
    pub slack: f64,
}

impl GrowthReport {
    pub fn growth(&self) -> f64 {
        -self.fit.slope
    }

    pub fn passed(&self) -> bool {
        self.growth() <= self.bound + self.slack
    }
}

/// Growth of `|∂Θ|²` and the mixed coefficient toward `D` over `|w_D|` in
/// `theta_window`, and of `|∂G|²` toward `F` over `|w_F|` in `g_window`,
/// on the slice through the frame point with the other coordinate at `other`.
/// The `|∂G|²` bound is `2 + 4` before the `v`-floor and `2` inside it.
pub fn quadratic_term_check(
    geom: &ModelGeometry,
    v: f64,
    other: f64,
    theta_window: (f64, f64),
    g_window: (f64, f64),
    count: usize,
) -> Result<Vec<GrowthReport>> {
    let fr = geom.frame.ok_or_else(|| Error::BadFrame("quadratic-term check needs a divisor frame".into()))?;
    let k = geom.theta_rate()?;
    let beta = f64::from(geom.beta);
    let theta = geom.potential_theta(fr.chart)?;
    let g = geom.potential_g(fr.chart, v)?;
    let at = |wf: f64, wd: f64| {
        let mut z = vec![(0.0, 0.0); geom.n];
        z[fr.w_f] = (wf, 0.0);
        z[fr.w_d] = (wd, 0.0);
        ChartPoint::from_reals(&z)
    };
    let grad = |field: &Field, p: &ChartPoint| -> Result<Vec<Complex64>> {
        let j = taylor_jet(field.as_ref(), p, 1)?;
        Ok((0..geom.n)
            .map(|i| {
                let mut a = vec![0u8; geom.n];
                a[i] = 1;
                j.partial(&a, &vec![0u8; geom.n])
            })
            .collect())
    };
    let rd = log_space(theta_window.0, theta_window.1, count);
    let rf = log_space(g_window.0, g_window.1, count);
    let (mut dd, mut mixed, mut ff) = (Vec::new(), Vec::new(), Vec::new());
    for &r in &rd {
        let gt = grad(&theta, &at(other, r))?;
        dd.push(gt[fr.w_d].norm_sqr());
        mixed.push((gt[fr.w_d] * gt[fr.w_f].conj()).norm());
    }
    for &r in &rf {
        ff.push(grad(&g, &at(r, other))?[fr.w_f].norm_sqr());
    }
    let floor = libm::pow(g_window.1, 2.0 * beta) < v;
    let rep = |name: &str, x: &[f64], y: &[f64], bound: f64| -> Result<GrowthReport> {
        Ok(GrowthReport { name: name.into(), fit: fit_loglog(x, y)?, bound, slack: 0.1 })
    };
    Ok(vec![
        rep("dTheta^dTheta_DD", &rd, &dd, 2.0 + 4.0 * k)?,
        rep("dTheta^dTheta_DF", &rd, &mixed, 1.0 + 4.0 * k)?,
        rep(if floor { "dG^dG_FF_floor" } else { "dG^dG_FF" }, &rf, &ff, if floor { 2.0 } else { 6.0 })?,
    ])
}

/// Smallest eigenvalue of the glued metric and the smallest eigenvalue over
/// the active components, at `p`.
pub fn positivity_check(glued: &GluedPotential, p: &ChartPoint) -> Result<(f64, f64)> {
    let values = glued.values(p)?;
    let active = glued.rm.active_set(&values);
    let comps = glued.components();
    let mut lo = f64::INFINITY;
    for j in active {
        lo = lo.min(metric_at(comps[j].as_ref(), p)?.eigen_range().0);
    }
    Ok((metric_at(glued, p)?.eigen_range().0, lo))
}

impl DecayReport {
    /// Largest relative spread of the metric eigenvalue bounds over the rows.
    pub fn eigen_spread(&self) -> f64 {
        let spread = |f: &dyn Fn(&DecayRow) -> f64| {
            let (lo, hi) = self.rows.iter().map(f).fold((f64::INFINITY, 0.0f64), |(a, b), x| (a.min(x), b.max(x)));
            (hi - lo) / hi
        };
        spread(&|r| r.eigen_range.0).max(spread(&|r| r.eigen_range.1))
    }
}

/// Hermitian metric `∂∂̄u` at `p`, for entrywise comparisons.
pub fn metric_at(u: &dyn ScalarField, p: &ChartPoint) -> Result<crate::curvature::HermitianForm> {
    metric_from_jet(&taylor_jet(u, p, 2)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::scalar_curvature;

    fn bidisc() -> ModelGeometry {
        ModelGeometry::bidisc(9, 1, 3, Ratio::new(1, 2)).unwrap()
    }

    fn params(c: f64) -> GlueParams {
        GlueParams::constrained(c, 1e-12, Ratio::new(1, 2), Ratio::new(1, 4), 1.0).unwrap()
    }

    #[test]
    fn constraint_is_exact() {
        let p = params(10.0);
        assert_eq!(p.a2, Ratio::new(5, 8));
        assert_eq!(p.constraint_defect(), Ratio::from_integer(0));
        let mut q = p;
        q.a2 = Ratio::new(1, 2);
        assert!(q.validate().is_err());
        assert!(GlueParams::free(10.0, 1e-12, Ratio::new(1, 2), Ratio::new(1, 4), Ratio::new(1, 2), 1.0).is_ok());
    }

    #[test]
    fn labels_from_bands() {
        let eta = [1.0, 1.0, 1.0];
        assert_eq!(label_for(&[10.0, 0.0, 0.0], &eta), RegionLabel::DPure);
        assert_eq!(label_for(&[0.0, 0.0, 10.0], &eta), RegionLabel::InteriorPure);
        assert_eq!(label_for(&[5.0, 4.0, 0.0], &eta), RegionLabel::Overlap12);
        assert_eq!(label_for(&[5.0, 0.0, 4.0], &eta), RegionLabel::Overlap13);
        assert_eq!(label_for(&[0.0, 5.0, 4.0], &eta), RegionLabel::Overlap23);
        assert_eq!(label_for(&[1.0, 0.0, 0.5], &eta), RegionLabel::Triple);
        assert!(dominance_margin(&[10.0, 0.0, 0.0], &eta) > 0.0);
        assert_eq!(RegionLabel::parse("OVERLAP_13"), Some(RegionLabel::Overlap13));
    }

    #[test]
    fn bidisc_point_hits_targets() {
        let g = bidisc();
        let p = bidisc_point(12.0, 7.0).unwrap();
        let t = g.potential_t(0).unwrap().value(&p).unwrap();
        let b = g.potential_b(0).unwrap().value(&p).unwrap();
        assert!((t - 12.0).abs() < 1e-9 && (b - 7.0).abs() < 1e-9);
    }

    #[test]
    fn pure_regions_reproduce_components() {
        let g = bidisc();
        let glued = GluedPotential::new(&g, 0, &params(60.0), PhiProvider::Zero).unwrap();
        // deep interior: both divisors far
        let p = ChartPoint::from_reals(&[(0.7, 0.1), (0.6, -0.2)]);
        let v = glued.values(&p).unwrap();
        assert_eq!(label_for(&v, &glued.eta()), RegionLabel::InteriorPure);
        assert!((glued.value(&p).unwrap() - v[2]).abs() < 1e-10);
        // close to D, away from F
        let p = ChartPoint::from_reals(&[(0.7, 0.1), (1e-4, 0.0)]);
        let v = glued.values(&p).unwrap();
        assert_eq!(label_for(&v, &glued.eta()), RegionLabel::DPure);
        let th = g.potential_theta(0).unwrap();
        let a = metric_at(&glued, &p).unwrap();
        let b = metric_at(th.as_ref(), &p).unwrap();
        assert!((a.matrix() - b.matrix()).camax() <= 1e-10 * b.matrix().camax());
        let s1 = glued_scalar_curvature(&glued, &p).unwrap().scalar;
        let s2 = scalar_curvature(th.as_ref(), &p).unwrap();
        assert!((s1 - s2).abs() <= 1e-8 * s2.abs().max(1.0));
    }

    #[test]
    fn interior_is_flat_with_zero_provider() {
        let g = bidisc();
        let glued = GluedPotential::new(&g, 0, &params(60.0), PhiProvider::Zero).unwrap();
        let p = ChartPoint::from_reals(&[(0.5, 0.3), (0.4, 0.2)]);
        let s = glued_scalar_curvature(&glued, &p).unwrap();
        assert_eq!(s.label, RegionLabel::InteriorPure);
        assert!(s.scalar.abs() < 1e-10);
    }

    #[test]
    fn overlap_points_have_their_labels() {
        let g = bidisc().with_b0(4.5);
        for label in [RegionLabel::Overlap12, RegionLabel::Overlap13, RegionLabel::Overlap23, RegionLabel::Triple] {
            let p = params(100.0);
            let pt = overlap_point(&g, &p, label).unwrap();
            let glued = GluedPotential::new(&g, 0, &p, PhiProvider::Zero).unwrap();
            assert_eq!(glued.classify(&pt).unwrap(), label);
        }
    }

    #[test]
    fn c0_is_smallest_interior_c() {
        let g = bidisc();
        let ys = [ChartPoint::from_reals(&[(0.5, 0.3), (0.4, 0.2)]), ChartPoint::from_reals(&[(0.3, 0.0), (0.2, 0.1)])];
        let c0 = c0_bisection(&g, 0, &params(1.0), &PhiProvider::Zero, &ys, 1.0, 1e4).unwrap();
        let at = |c: f64| {
            let gl = GluedPotential::new(&g, 0, &params(c), PhiProvider::Zero).unwrap();
            ys.iter().all(|y| gl.classify(y).unwrap() == RegionLabel::InteriorPure)
        };
        assert!(at(c0 * (1.0 + 1e-8)));
        assert!(!at(c0 * (1.0 - 1e-6)));
    }
}
