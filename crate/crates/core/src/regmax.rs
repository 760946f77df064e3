//! Regularized maximum `M_η(t) = ∫ max_j(t_j + h_j) Π_j ρ(h_j/η_j)/η_j dh`.
//!
//! The maximum of independent shifted variables has distribution function
//! `Π_j Φ((x − t_j)/η_j)` with `Φ` the primitive of `ρ`, so
//!
//! ```text
//! M = L + ∫_L^U (1 − Π_j Φ_j(x)) dx,     L = max(t_j − η_j), U = max(t_j + η_j)
//! ∂^α M = −∫_L^U Π_j (−1/η_j)^{α_j} Φ^{(α_j)}((x − t_j)/η_j) dx,   α ≠ 0
//! ```
//!
//! Boundary terms vanish because `ρ` and its first four derivatives vanish at
//! `±1`. With the polynomial mollifier every integrand is a polynomial
//! between consecutive breakpoints `t_j ± η_j`, and Gauss-Legendre on each
//! piece is exact.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use once_cell::race::OnceBox;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curvature::metric_from_jet;
use crate::error::{invalid, Error, Result};
use crate::fit::{fit_loglog, SlopeFit};
use crate::jets::{compose_jet, complex_coords, taylor_jet, ChartPoint, CSeries, FnField, WirtingerJet};
use crate::quad::{self, GaussLegendre};
use crate::series::{layout, Series, MAX_ORDER};

/// Dominance margin below which a coordinate is kept in the integral.
pub const DROP_MARGIN: f64 = 1e-9;

/// The even probability density `ρ` supported on `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mollifier {
    /// `ρ(h) = (693/512)(1 − h²)⁵`, of class `C⁴`.
    #[default]
    Polynomial,
    /// `ρ(h) = C exp(−1/(1 − h²))`, smooth.
    Bump,
}

// Φ(h) for the polynomial mollifier, ascending powers of h
const POLY_CDF: [f64; 12] = {
    let c = 693.0 / 512.0;
    let binom = [1.0, 5.0, 10.0, 10.0, 5.0, 1.0];
    let mut a = [0.0; 12];
    a[0] = 0.5;
    let mut k = 0;
    while k < 6 {
        let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
        a[2 * k + 1] = c * sgn * binom[k] / (2 * k + 1) as f64;
        k += 1;
    }
    a
};

fn bump_norm() -> f64 {
    static NORM: OnceBox<f64> = OnceBox::new();
    *NORM.get_or_init(|| {
        let z = quad::integrate(bump_raw, -1.0, 1.0, 1e-15, 1e-14).expect("bump normalization");
        Box::new(1.0 / z)
    })
}

fn bump_raw(h: f64) -> f64 {
    if h.abs() >= 1.0 {
        0.0
    } else {
        libm::exp(-1.0 / (1.0 - h * h))
    }
}

fn bump_rule() -> &'static GaussLegendre {
    static RULE: OnceBox<GaussLegendre> = OnceBox::new();
    RULE.get_or_init(|| Box::new(GaussLegendre::new(48)))
}

impl Mollifier {
    /// `ρ(h)`.
    pub fn density(self, h: f64) -> f64 {
        self.cdf_derivatives(h)[1]
    }

    /// `[Φ, Φ', Φ'', Φ''', Φ'''']` at `h`, where `Φ' = ρ`.
    pub fn cdf_derivatives(self, h: f64) -> [f64; 5] {
        if h <= -1.0 {
            return [0.0; 5];
        }
        if h >= 1.0 {
            return [1.0, 0.0, 0.0, 0.0, 0.0];
        }
        match self {
            Mollifier::Polynomial => {
                let mut out = [0.0; 5];
                for (d, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for k in (d..12).rev() {
                        let f: f64 = ((k - d + 1)..=k).map(|i| i as f64).product();
                        acc = acc * h + POLY_CDF[k] * f;
                    }
                    *o = acc;
                }
                out
            }
            Mollifier::Bump => {
                let c = bump_norm();
                let s = Series::variable(layout(1, 3), 0, h);
                let u = (&s * &s).scale(-1.0).add_const(1.0).recip().scale(-1.0).exp();
                let cdf = if h < 0.0 {
                    bump_rule().integrate(-1.0, h, bump_raw) * c
                } else {
                    1.0 - bump_rule().integrate(h, 1.0, bump_raw) * c
                };
                let k = u.coeffs();
                [cdf, c * k[0], c * k[1], 2.0 * c * k[2], 6.0 * c * k[3]]
            }
        }
    }

    /// `∫ ρ`, which is one up to rounding.
    pub fn mass(self) -> f64 {
        self.cdf_derivatives(1.0 - 1e-300)[0] - self.cdf_derivatives(-1.0)[0]
    }

    fn min_nodes(self, p: usize) -> usize {
        match self {
            Mollifier::Polynomial => (11 * p + 2) / 2,
            Mollifier::Bump => 24,
        }
    }
}

/// Regularized maximum of `p` real arguments.
#[derive(Clone, Debug)]
pub struct RegMax {
    eta: Vec<f64>,
    mollifier: Mollifier,
    rule: GaussLegendre,
}

impl RegMax {
    pub fn new(eta: Vec<f64>, mollifier: Mollifier) -> Result<Self> {
        if eta.is_empty() || eta.len() > 8 {
            return Err(invalid("eta", format!("need 1 to 8 widths, got {}", eta.len())));
        }
        if let Some(e) = eta.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(invalid("eta", format!("widths must be positive and finite, got {e}")));
        }
        let nodes = mollifier.min_nodes(eta.len()).max(24);
        Ok(RegMax { eta, mollifier, rule: GaussLegendre::new(nodes) })
    }

    pub fn polynomial(eta: &[f64]) -> Result<Self> {
        Self::new(eta.to_vec(), Mollifier::Polynomial)
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn arity(&self) -> usize {
        self.eta.len()
    }

    pub fn mollifier(&self) -> Mollifier {
        self.mollifier
    }

    fn check(&self, t: &[f64]) -> Result<()> {
        if t.len() != self.eta.len() {
            return Err(Error::DimensionMismatch { expected: self.eta.len(), got: t.len() });
        }
        if t.iter().any(|x| !x.is_finite()) {
            return Err(invalid("t", "arguments must be finite"));
        }
        Ok(())
    }

    /// Indices that still influence `M`: coordinate `k` is dropped when
    /// `t_k + η_k ≤ max_{j≠k}(t_j − η_j) − DROP_MARGIN`.
    pub fn active_set(&self, t: &[f64]) -> Vec<usize> {
        (0..t.len())
            .filter(|&k| {
                let lo = (0..t.len()).filter(|&j| j != k).map(|j| t[j] - self.eta[j]).fold(f64::NEG_INFINITY, f64::max);
                t[k] + self.eta[k] > lo - DROP_MARGIN
            })
            .collect()
    }

    pub fn value(&self, t: &[f64]) -> Result<f64> {
        Ok(self.jet(t, 0)?.value())
    }

    /// Real Taylor series of `M_η` at `t` in the `p` arguments.
    pub fn jet(&self, t: &[f64], order: usize) -> Result<Series<f64>> {
        self.check(t)?;
        if order > MAX_ORDER {
            return Err(Error::UnsupportedOrder(order));
        }
        let active = self.active_set(t);
        Ok(self.integrate(t, &active, order))
    }

    /// Same as [`RegMax::jet`] but integrating every coordinate.
    pub fn jet_without_drop(&self, t: &[f64], order: usize) -> Result<Series<f64>> {
        self.check(t)?;
        if order > MAX_ORDER {
            return Err(Error::UnsupportedOrder(order));
        }
        let all: Vec<usize> = (0..t.len()).collect();
        Ok(self.integrate(t, &all, order))
    }

    fn integrate(&self, t: &[f64], active: &[usize], order: usize) -> Series<f64> {
        let p = t.len();
        let l = layout(p, order);
        let mut c = vec![0.0; l.len()];
        if active.len() == 1 {
            let k = active[0];
            c[0] = t[k];
            if order >= 1 {
                let mut e = vec![0u8; p];
                e[k] = 1;
                c[l.find(&e).unwrap()] = 1.0;
            }
            return Series::from_coeffs(l, c);
        }
        let lo = active.iter().map(|&j| t[j] - self.eta[j]).fold(f64::NEG_INFINITY, f64::max);
        let hi = active.iter().map(|&j| t[j] + self.eta[j]).fold(f64::NEG_INFINITY, f64::max);
        let mut breaks: Vec<f64> = active
            .iter()
            .flat_map(|&j| [t[j] - self.eta[j], t[j] + self.eta[j]])
            .filter(|&x| x > lo && x < hi)
            .collect();
        breaks.push(lo);
        breaks.push(hi);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();

        // monomials supported on the active set, with their factorial weights
        let terms: Vec<(usize, f64)> = (0..l.len())
            .filter(|&i| l.exponents(i).iter().enumerate().all(|(j, &e)| e == 0 || active.contains(&j)))
            .map(|i| (i, l.exponents(i).iter().map(|&e| (1..=e).map(f64::from).product::<f64>()).product()))
            .collect();
        let mut vals = vec![[0.0f64; 5]; p];
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for (&x0, &wt) in self.rule.nodes.iter().zip(&self.rule.weights) {
                let x = mid + half * x0;
                let wt = wt * half;
                for &j in active {
                    let d = self.mollifier.cdf_derivatives((x - t[j]) / self.eta[j]);
                    let s = -1.0 / self.eta[j];
                    let mut f = 1.0;
                    for (k, v) in vals[j].iter_mut().enumerate().take(order + 1) {
                        *v = d[k] * f;
                        f *= s;
                    }
                }
                for &(i, fact) in &terms {
                    let e = l.exponents(i);
                    let prod: f64 = active.iter().map(|&j| vals[j][e[j] as usize]).product();
                    c[i] += if i == 0 { wt * (1.0 - prod) } else { -wt * prod / fact };
                }
            }
        }
        c[0] += lo;
        Series::from_coeffs(l, c)
    }

    /// Jet of `M_η(u_1, …, u_p)` from the jets of the `u_j`.
    pub fn compose(&self, inner: &[WirtingerJet]) -> Result<WirtingerJet> {
        let t: Vec<f64> = inner.iter().map(|j| j.value()).collect();
        let outer = self.jet(&t, inner.first().map_or(0, |j| j.order()))?;
        compose_jet(&outer, inner)
    }
}

/// Worst observed defect of each property over the samples.
#[derive(Clone, Debug, Default)]
pub struct PropertyReport {
    pub samples: usize,
    /// Most negative gradient entry, excess above one, and `|Σ∂M − 1|`.
    pub monotonicity: f64,
    /// Most negative Hessian eigenvalue.
    pub convexity: f64,
    /// Largest violation of `max t ≤ M ≤ max(t + η)`.
    pub bounds: f64,
    /// Largest `|M(t) − M(t without the dominated coordinate)|`.
    pub coordinate_drop: f64,
    /// Largest `|M(t + a) − M(t) − a|`.
    pub translation: f64,
    /// Largest `γ − λ_min` for the composed Hessian, with `γ` the smallest
    /// input eigenvalue.
    pub plurisubharmonicity: f64,
}

/// Tolerances for [`verify_properties`].
#[derive(Clone, Copy, Debug)]
pub struct PropertyTolerances {
    pub strict: f64,
    pub coordinate_drop: f64,
}

impl Default for PropertyTolerances {
    fn default() -> Self {
        PropertyTolerances { strict: 1e-8, coordinate_drop: 1e-6 }
    }
}

fn violation(property: &'static str, witness: &[f64], detail: alloc::string::String) -> Error {
    Error::PropertyViolation { property, witness: witness.to_vec(), detail }
}

fn sym_min_eig(h: &Series<f64>) -> f64 {
    hessian(h).symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

fn random_potential(rng: &mut ChaCha8Rng) -> FnField {
    // hermitian part G G* + μ I, a pluriharmonic part Re(b z_1 z_2) and ε|z_1|⁴
    let g: Vec<Complex64> = (0..4).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let gm = DMatrix::from_row_slice(2, 2, &g);
    let h = &gm * gm.adjoint() + DMatrix::identity(2, 2) * Complex64::new(rng.random_range(0.05..0.5), 0.0);
    let b = Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let eps = rng.random_range(0.0..1.0);
    let (h11, h22, h12) = (h[(0, 0)].re, h[(1, 1)].re, h[(0, 1)]);
    FnField::new(2, move |x| {
        let z = complex_coords(x);
        let z2c = CSeries { re: z[1].re.clone(), im: -&z[1].im };
        let cross = z[0].mul(&z2c).scale(h12);
        let hol = z[0].mul(&z[1]).scale(b);
        let r1 = z[0].norm_sqr();
        Ok(&(&(&r1.scale(h11) + &z[1].norm_sqr().scale(h22)) + &(&cross.re.scale(2.0) + &hol.re)) + &(&r1 * &r1).scale(eps))
    })
}

/// Sample the defining properties of `M_η` and fail on the first violation.
pub fn verify_properties(rm: &RegMax, samples: usize, seed: u64, tol: PropertyTolerances) -> Result<PropertyReport> {
    let p = rm.arity();
    let emax = rm.eta.iter().copied().fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = PropertyReport { samples, ..Default::default() };
    for _ in 0..samples {
        let t: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0 * emax..2.0 * emax)).collect();
        let jet = rm.jet(&t, 2)?;
        let m = jet.value();

        // monotone and convex
        let grad: Vec<f64> = (0..p)
            .map(|j| {
                let mut e = vec![0u8; p];
                e[j] = 1;
                jet.coeff(&e)
            })
            .collect();
        let gsum: f64 = grad.iter().sum();
        let mono = grad.iter().map(|&g| (-g).max(g - 1.0)).fold((gsum - 1.0).abs(), f64::max);
        rep.monotonicity = rep.monotonicity.max(mono);
        if mono > tol.strict {
            return Err(violation("monotonicity", &t, format!("gradient {grad:?}")));
        }
        if p > 1 {
            let conv = (-sym_min_eig(&jet)).max(0.0) * emax;
            rep.convexity = rep.convexity.max(conv);
            if conv > tol.strict {
                return Err(violation("convexity", &t, format!("scaled hessian eigenvalue {}", -conv)));
            }
        }

        // max t ≤ M ≤ max(t + η)
        let tmax = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let umax = t.iter().zip(&rm.eta).map(|(a, b)| a + b).fold(f64::NEG_INFINITY, f64::max);
        let b = (tmax - m).max(m - umax).max(0.0);
        rep.bounds = rep.bounds.max(b);
        if b > tol.strict {
            return Err(violation("bounds", &t, format!("M = {m}, max t = {tmax}, max(t+η) = {umax}")));
        }

        // translation
        let a = rng.random_range(-5.0..5.0);
        let shifted: Vec<f64> = t.iter().map(|x| x + a).collect();
        let tr = (rm.value(&shifted)? - m - a).abs();
        rep.translation = rep.translation.max(tr);
        if tr > tol.strict {
            return Err(violation("translation", &t, format!("shift {a} defect {tr}")));
        }

        // drop a dominated coordinate
        if p > 1 {
            let k = rng.random_range(0..p);
            let mut td = t.clone();
            let lo = (0..p).filter(|&j| j != k).map(|j| t[j] - rm.eta[j]).fold(f64::NEG_INFINITY, f64::max);
            td[k] = lo - rm.eta[k] - rng.random_range(0.0..emax);
            let full = rm.jet_without_drop(&td, 0)?.value();
            let keep: Vec<usize> = (0..p).filter(|&j| j != k).collect();
            let reduced = RegMax {
                eta: keep.iter().map(|&j| rm.eta[j]).collect(),
                mollifier: rm.mollifier,
                rule: rm.rule.clone(),
            };
            let red = reduced.jet_without_drop(&keep.iter().map(|&j| td[j]).collect::<Vec<_>>(), 0)?.value();
            let d = (full - red).abs();
            rep.coordinate_drop = rep.coordinate_drop.max(d);
            if d > tol.coordinate_drop {
                return Err(violation("coordinate drop", &td, format!("{full} vs {red}")));
            }
        }

        // composition with plurisubharmonic functions
        let pot: Vec<FnField> = (0..p).map(|_| random_potential(&mut rng)).collect();
        let z = ChartPoint::from_reals(&[
            (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        ]);
        let mut jets = Vec::with_capacity(p);
        let mut gamma = f64::INFINITY;
        for (j, u) in pot.iter().enumerate() {
            let mut jet = taylor_jet(u, &z, 2)?;
            let shift = t[j] - jet.value();
            let mut s = jet.series().clone();
            s.coeffs_mut()[0] += Complex64::new(shift, 0.0);
            jet = WirtingerJet::from_series(2, s)?;
            gamma = gamma.min(metric_from_jet(&jet)?.eigen_range().0);
            jets.push(jet);
        }
        let composed = rm.compose(&jets)?;
        let lam = metric_from_jet(&composed)?.eigen_range().0;
        let d = (gamma - lam).max(0.0);
        rep.plurisubharmonicity = rep.plurisubharmonicity.max(d);
        if d > tol.strict * gamma.max(1.0) {
            return Err(violation("plurisubharmonicity", &z.reals(), format!("λ_min = {lam} < γ = {gamma}")));
        }
    }
    Ok(rep)
}

/// Scaling of one derivative `∂^α M` with the widths.
#[derive(Clone, Debug)]
pub struct DerivativeScaling {
    pub alpha: Vec<u8>,
    /// Fit of `log sup|∂^α M|` against `log η` along `η = (η, …, η)`.
    pub fit: SlopeFit,
    /// `1 − |α|`.
    pub predicted: f64,
    /// Largest `sup|∂^α M| / (min_{α_j≠0} η_j Π η_j^{−α_j})` over the grid.
    pub constant: f64,
    /// Whether the ratio at the corners of the width grid exceeds twice its
    /// largest interior value.
    pub growth: bool,
}

fn sup_derivative(rm: &RegMax, alpha: &[u8], points: &[Vec<f64>]) -> Result<f64> {
    let order = alpha.iter().map(|&a| a as usize).sum();
    let mut sup: f64 = 0.0;
    for t in points {
        let j = rm.jet(t, order)?;
        sup = sup.max(j.derivative(alpha).abs());
    }
    Ok(sup)
}

/// Measure how every derivative of order 1 to 4 of the two-argument
/// `M_η` scales with `η` over the given widths.
pub fn derivative_scaling(mollifier: Mollifier, widths: &[f64], samples: usize, seed: u64) -> Result<Vec<DerivativeScaling>> {
    if widths.len() < 3 {
        return Err(Error::InsufficientData(widths.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit: Vec<Vec<f64>> = (0..samples).map(|_| (0..2).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let lay = layout(2, 4);
    let mut out = Vec::new();
    for i in lay.degree_range(1).start..lay.len() {
        let alpha = lay.exponents(i).to_vec();
        let k: i32 = alpha.iter().map(|&a| i32::from(a)).sum();
        let mut sups = Vec::with_capacity(widths.len());
        for &w in widths {
            let rm = RegMax::new(vec![w, w], mollifier)?;
            let pts: Vec<Vec<f64>> = unit.iter().map(|u| u.iter().map(|x| x * w).collect()).collect();
            sups.push(sup_derivative(&rm, &alpha, &pts)?);
        }
        let fit = fit_loglog(widths, &sups)?;
        let mut ratios = vec![vec![0.0; widths.len()]; widths.len()];
        for (a, &w1) in widths.iter().enumerate() {
            for (b, &w2) in widths.iter().enumerate() {
                let rm = RegMax::new(vec![w1, w2], mollifier)?;
                let s = w1 + w2;
                let pts: Vec<Vec<f64>> = unit.iter().map(|u| u.iter().map(|x| x * s).collect()).collect();
                let sup = sup_derivative(&rm, &alpha, &pts)?;
                let e = [w1, w2];
                let mn = (0..2).filter(|&j| alpha[j] != 0).map(|j| e[j]).fold(f64::INFINITY, f64::min);
                let bound = mn * libm::pow(w1, -f64::from(alpha[0])) * libm::pow(w2, -f64::from(alpha[1]));
                ratios[a][b] = sup / bound;
            }
        }
        let last = widths.len() - 1;
        let constant = ratios.iter().flatten().copied().fold(0.0, f64::max);
        let interior = ratios[1..last].iter().flat_map(|r| r[1..last].iter()).copied().fold(0.0, f64::max);
        let corners = [ratios[0][0], ratios[0][last], ratios[last][0], ratios[last][last]];
        let growth = corners.iter().any(|&c| c > 2.0 * interior);
        out.push(DerivativeScaling { alpha, fit, predicted: f64::from(1 - k), constant, growth });
    }
    Ok(out)
}

/// Hessian of a real series at its base point.
pub fn hessian(jet: &Series<f64>) -> DMatrix<f64> {
    let p = jet.nvars();
    DMatrix::from_fn(p, p, |i, j| {
        let mut e = vec![0u8; p];
        e[i] += 1;
        e[j] += 1;
        jet.derivative(&e)
    })
}

/// Gradient of `M_η` at `t`.
pub fn gradient(rm: &RegMax, t: &[f64]) -> Result<DVector<f64>> {
    let j = rm.jet(t, 1)?;
    let p = t.len();
    Ok(DVector::from_fn(p, |i, _| {
        let mut e = vec![0u8; p];
        e[i] = 1;
        j.coeff(&e)
    }))
}
