//! Complex Monge–Ampère solves on flat tori, the separable local model and
//! the estimates measured on both.
//!
//! Torus grids use real axes `[x1, y1, …, xn, yn]`, row-major with the last
//! axis fastest and nodes at `2πk/N`. The background form is flat, so the
//! equation reads `det(I + H φ) = f` with `H` the complex Hessian.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::fft::{wavenumber, FftNd};
use crate::fit::{fit_loglog, SlopeFit};
use crate::jets::{taylor_jet, ChartPoint, ScalarField};
use crate::series::Series;

pub const MAX_SIZE_N1: usize = 256;
pub const MAX_SIZE_N2: usize = 24;

/// Periodic grid on `(R/2πZ)^{2n}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TorusGrid {
    n: usize,
    size: usize,
}

impl TorusGrid {
    pub fn new(n: usize, size: usize) -> Result<Self> {
        let max = match n {
            1 => MAX_SIZE_N1,
            2 => MAX_SIZE_N2,
            _ => return Err(invalid("n", "torus solves support n = 1 or n = 2")),
        };
        if !(4..=max).contains(&size) {
            return Err(invalid("size", alloc::format!("grid size must lie in [4, {max}] for n = {n}")));
        }
        Ok(TorusGrid { n, size })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dims(&self) -> usize {
        2 * self.n
    }

    pub fn len(&self) -> usize {
        self.size.pow(self.dims() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.size as f64
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.size; self.dims()]
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut m = vec![0; self.dims()];
        for a in (0..self.dims()).rev() {
            m[a] = idx % self.size;
            idx /= self.size;
        }
        m
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &i| acc * self.size + i % self.size)
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let h = self.spacing();
        self.multi_index(idx).into_iter().map(|i| i as f64 * h).collect()
    }
}

/// Complex Hessian (or metric) at one node: `[[a, b], [b̄, d]]`.
/// For `n = 1` only `a` is meaningful.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeForm {
    pub a: f64,
    pub d: f64,
    pub b: Complex64,
}

impl NodeForm {
    fn shifted(&self) -> Self {
        NodeForm { a: self.a + 1.0, d: self.d + 1.0, b: self.b }
    }

    pub fn det(&self, n: usize) -> f64 {
        if n == 1 {
            self.a
        } else {
            self.a * self.d - self.b.norm_sqr()
        }
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_range(&self, n: usize) -> (f64, f64) {
        if n == 1 {
            return (self.a, self.a);
        }
        let m = 0.5 * (self.a + self.d);
        let r = libm::sqrt(0.25 * (self.a - self.d) * (self.a - self.d) + self.b.norm_sqr());
        (m - r, m + r)
    }

    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.d.abs()).max(self.b.norm())
    }
}

/// Spectral derivatives on a torus grid.
#[derive(Clone, Debug)]
pub struct Spectral {
    grid: TorusGrid,
    fft: FftNd,
    m11: Vec<f64>,
    m22: Vec<f64>,
    m12: Vec<Complex64>,
}

impl Spectral {
    pub fn new(grid: &TorusGrid) -> Self {
        let len = grid.len();
        let n = grid.n();
        let mut m11 = vec![0.0; len];
        let mut m22 = vec![0.0; if n == 2 { len } else { 0 }];
        let mut m12 = vec![Complex64::new(0.0, 0.0); if n == 2 { len } else { 0 }];
        for idx in 0..len {
            let (k, kt) = Self::waves(grid, idx);
            m11[idx] = -0.25 * (k[0] * k[0] + k[1] * k[1]);
            if n == 2 {
                m22[idx] = -0.25 * (k[2] * k[2] + k[3] * k[3]);
                // odd first derivatives vanish at the Nyquist frequency
                m12[idx] =
                    Complex64::new(-0.25 * (kt[0] * kt[2] + kt[1] * kt[3]), -0.25 * (kt[0] * kt[3] - kt[1] * kt[2]));
            }
        }
        Spectral { grid: grid.clone(), fft: FftNd::new(&grid.shape()), m11, m22, m12 }
    }

    fn waves(grid: &TorusGrid, idx: usize) -> ([f64; 4], [f64; 4]) {
        let mut k = [0.0; 4];
        let mut kt = [0.0; 4];
        let s = grid.size();
        for (a, i) in grid.multi_index(idx).into_iter().enumerate() {
            k[a] = wavenumber(i, s);
            kt[a] = if 2 * i == s { 0.0 } else { k[a] };
        }
        (k, kt)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn forward(&self, v: &[f64]) -> Vec<Complex64> {
        let mut d: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft.forward(&mut d);
        d
    }

    pub fn inverse_real(&self, mut d: Vec<Complex64>) -> Vec<f64> {
        self.fft.inverse(&mut d);
        d.into_iter().map(|z| z.re).collect()
    }

    /// Complex Hessian of `φ` at every node, from its transform.
    pub fn hessian_hat(&self, hat: &[Complex64]) -> Vec<NodeForm> {
        let i = Complex64::new(0.0, 1.0);
        if self.grid.n() == 1 {
            let h = self.inverse_real(hat.iter().zip(&self.m11).map(|(c, m)| c * m).collect());
            return h.into_iter().map(|a| NodeForm { a, d: 0.0, b: Complex64::new(0.0, 0.0) }).collect();
        }
        // both diagonal entries are real, so one transform carries the pair
        let mut diag: Vec<Complex64> =
            hat.iter().zip(self.m11.iter().zip(&self.m22)).map(|(c, (p, q))| c * (p + i * q)).collect();
        self.fft.inverse(&mut diag);
        let mut off: Vec<Complex64> = hat.iter().zip(&self.m12).map(|(c, m)| c * m).collect();
        self.fft.inverse(&mut off);
        diag.into_iter().zip(off).map(|(dg, b)| NodeForm { a: dg.re, d: dg.im, b }).collect()
    }

    pub fn hessian(&self, phi: &[f64]) -> Vec<NodeForm> {
        self.hessian_hat(&self.forward(phi))
    }

    /// `∂^a ∂̄^b φ` at every node (Nyquist modes dropped).
    pub fn wirtinger(&self, phi: &[f64], a: &[u8], b: &[u8]) -> Vec<Complex64> {
        let n = self.grid.n();
        assert!(a.len() == n && b.len() == n);
        let mut hat = self.forward(phi);
        for (idx, c) in hat.iter_mut().enumerate() {
            let (_, kt) = Self::waves(&self.grid, idx);
            let mut s = Complex64::new(1.0, 0.0);
            for j in 0..n {
                let dz = Complex64::new(0.5 * kt[2 * j + 1], 0.5 * kt[2 * j]);
                let dzb = Complex64::new(-0.5 * kt[2 * j + 1], 0.5 * kt[2 * j]);
                s *= dz.powu(a[j] as u32) * dzb.powu(b[j] as u32);
            }
            *c *= s;
        }
        self.fft.inverse(&mut hat);
        hat
    }

    /// `log det(I + H)` linearization coefficients and residual pieces.
    fn apply_linear(&self, coef: &[NodeForm], u: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        let mean = u.iter().sum::<f64>() / u.len() as f64;
        let h = self.hessian(u);
        h.iter()
            .zip(coef)
            .map(|(h, c)| {
                let tr = if n == 1 { c.a * h.a } else { c.a * h.a + c.d * h.d + 2.0 * (c.b * h.b).re };
                tr - mean
            })
            .collect()
    }

    fn precondition(&self, sym: &[f64], r: &[f64]) -> Vec<f64> {
        let mut hat = self.forward(r);
        hat[0] = -hat[0];
        for (c, s) in hat.iter_mut().zip(sym).skip(1) {
            *c /= s;
        }
        self.inverse_real(hat)
    }

    fn symbol(&self, c: &NodeForm) -> Vec<f64> {
        if self.grid.n() == 1 {
            return self.m11.iter().map(|m| c.a * m).collect();
        }
        (0..self.m11.len()).map(|k| c.a * self.m11[k] + c.d * self.m22[k] + 2.0 * (c.b * self.m12[k]).re).collect()
    }
}

/// Density data for a torus solve.
#[derive(Clone, Debug)]
pub struct MAProblem {
    pub grid: TorusGrid,
    /// Density normalized to unit mean.
    pub f: Vec<f64>,
    /// `e^{−ψ₋}` at the nodes (all ones without an F divisor).
    pub e_minus_psi_minus: Vec<f64>,
    /// `ψ₊` at the nodes.
    pub psi_plus: Vec<f64>,
    pub delta: f64,
    pub l: u32,
    pub m: u32,
    /// Integrability exponent for `e^{−ψ₋}`.
    pub p: f64,
    /// Divisor centers in torus coordinates, when present.
    pub f_center: Option<Vec<f64>>,
    pub d_center: Option<Vec<f64>>,
}

/// `|s|²` for a section vanishing at `(x0, y0)` on one complex factor.
pub fn torus_section_sqr(x: f64, y: f64, x0: f64, y0: f64) -> f64 {
    2.0 * (2.0 - libm::cos(x - x0) - libm::cos(y - y0))
}

impl MAProblem {
    fn normalized(grid: TorusGrid, mut f: Vec<f64>) -> Result<Self> {
        if let Some(bad) = f.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("f", alloc::format!("density must be positive and finite (node {bad})")));
        }
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        for v in &mut f {
            *v /= mean;
        }
        let len = f.len();
        Ok(MAProblem {
            grid,
            f,
            e_minus_psi_minus: vec![1.0; len],
            psi_plus: vec![0.0; len],
            delta: 0.0,
            l: 0,
            m: 0,
            p: 1.0,
            f_center: None,
            d_center: None,
        })
    }

    pub fn uniform(n: usize, size: usize) -> Result<Self> {
        let g = TorusGrid::new(n, size)?;
        let len = g.len();
        Self::normalized(g, vec![1.0; len])
    }

    pub fn from_density(n: usize, size: usize, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let g = TorusGrid::new(n, size)?;
        let vals = (0..g.len()).map(|i| f(&g.point(i))).collect();
        Self::normalized(g, vals)
    }

    /// Density `det(I + H φ*)` of a given potential on the grid.
    pub fn manufactured(n: usize, size: usize, phi: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let g = TorusGrid::new(n, size)?;
        let sp = Spectral::new(&g);
        let vals: Vec<f64> = (0..g.len()).map(|i| phi(&g.point(i))).collect();
        let f = sp.hessian(&vals).iter().map(|h| h.shifted().det(n)).collect();
        Self::normalized(g, f)
    }

    /// `f ∝ (|s_F|² + δ)^{−1/l} (|s_D|² + δ)^{m/l}`.
    ///
    /// For `n = 2`, F and D are the coordinate divisors through `(π, π)`
    /// in the first and second factor; for `n = 1` they are the points
    /// `(π/2, π)` and `(3π/2, π)`.
    pub fn smoothed_divisors(n: usize, size: usize, l: u32, m: u32, delta: f64) -> Result<Self> {
        if l as usize <= n {
            return Err(invalid("l", "need l > n"));
        }
        if m == 0 {
            return Err(invalid("m", "need m ≥ 1"));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(invalid("delta", "smoothing must be positive"));
        }
        let g = TorusGrid::new(n, size)?;
        let (fc, dc) = if n == 2 {
            (vec![PI, PI, 0.0, 0.0], vec![0.0, 0.0, PI, PI])
        } else {
            (vec![0.5 * PI, PI], vec![1.5 * PI, PI])
        };
        let (lf, mf) = (l as f64, m as f64);
        let mut f = Vec::with_capacity(g.len());
        let mut wm = Vec::with_capacity(g.len());
        let mut pp = Vec::with_capacity(g.len());
        for i in 0..g.len() {
            let x = g.point(i);
            let (sf, sd) = if n == 2 {
                (torus_section_sqr(x[0], x[1], PI, PI), torus_section_sqr(x[2], x[3], PI, PI))
            } else {
                (torus_section_sqr(x[0], x[1], fc[0], fc[1]), torus_section_sqr(x[0], x[1], dc[0], dc[1]))
            };
            let em = libm::pow(sf + delta, -1.0 / lf);
            let pl = mf / lf * libm::log(sd + delta);
            f.push(em * libm::exp(pl));
            wm.push(em);
            pp.push(pl);
        }
        let mut p = Self::normalized(g, f)?;
        p.e_minus_psi_minus = wm;
        p.psi_plus = pp;
        p.delta = delta;
        p.l = l;
        p.m = m;
        p.p = 0.5 * (1.0 + lf);
        p.f_center = Some(fc);
        p.d_center = Some(dc);
        Ok(p)
    }

    /// Set the integrability exponent; `e^{−ψ₋}` is in `L^p` iff `p < l`.
    pub fn with_lp_exponent(mut self, p: f64) -> Result<Self> {
        if !(p > 1.0) || (self.l > 0 && p >= self.l as f64) {
            return Err(invalid("p", "need 1 < p < l"));
        }
        self.p = p;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    /// `|mean(f) − 1|`.
    pub fn normalization_defect(&self) -> f64 {
        (self.f.iter().sum::<f64>() / self.f.len() as f64 - 1.0).abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    /// Residual below which a stalled iteration still counts as converged.
    pub accept_tol: f64,
    pub max_iter: usize,
    /// Initial step length of every line search.
    pub damping: f64,
    pub linear_tol: f64,
    pub linear_max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, accept_tol: 1e-8, max_iter: 100, damping: 1.0, linear_tol: 1e-10, linear_max_iter: 1000 }
    }
}

#[derive(Clone, Debug)]
pub struct MASolution {
    pub grid: TorusGrid,
    /// Mean-zero potential at the nodes.
    pub phi: Vec<f64>,
    /// Log of the normalizing constant absorbed by the equation.
    pub log_c: f64,
    /// Final residual sup-norm.
    pub residual: f64,
    /// Residual sup-norm before every Newton step and at the end.
    pub history: Vec<f64>,
    pub linear_iterations: Vec<usize>,
    pub step_sizes: Vec<f64>,
    pub eig_min: Vec<f64>,
    pub eig_max: Vec<f64>,
    pub osc: f64,
    /// `|mean det(I + H φ) − mean f|`.
    pub mass_defect: f64,
}

impl MASolution {
    /// Ratios `r_{k+1} / r_k²` over the tail where both residuals are in
    /// the asymptotic range.
    pub fn tail_ratios(&self) -> Vec<f64> {
        self.history
            .windows(2)
            .filter(|w| w[0] < 1e-1 && w[1] > 1e-14 && w[1] < w[0])
            .map(|w| w[1] / (w[0] * w[0]))
            .collect()
    }

    /// Whether the last steps contracted quadratically with ratio below `bound`.
    pub fn quadratic_tail(&self, bound: f64) -> bool {
        let r = self.tail_ratios();
        !r.is_empty() && r.iter().all(|&q| q < bound)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eig_min.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eig_max.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.phi.iter().sum::<f64>() / self.phi.len() as f64
    }

    /// Spectral interpolant of the potential, as a field on a chart
    /// centered at `center` (torus coordinates).
    pub fn interpolant(&self, center: Vec<f64>) -> Result<TorusInterpolant> {
        TorusInterpolant::new(&self.grid, &self.phi, center)
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn finish(sp: &Spectral, prob: &MAProblem, phi: Vec<f64>, log_c: f64, hist: Vec<f64>, lin: Vec<usize>, steps: Vec<f64>) -> MASolution {
    let n = prob.n();
    let forms: Vec<NodeForm> = sp.hessian(&phi).iter().map(|h| h.shifted()).collect();
    let res = forms
        .iter()
        .zip(&prob.f)
        .map(|(g, f)| (libm::log(g.det(n)) - libm::log(*f) - log_c).abs())
        .fold(0.0, f64::max);
    let (eig_min, eig_max): (Vec<f64>, Vec<f64>) = forms.iter().map(|g| g.eigen_range(n)).unzip();
    let len = phi.len() as f64;
    let mass = forms.iter().map(|g| g.det(n)).sum::<f64>() / len - prob.f.iter().sum::<f64>() / len;
    let hi = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = phi.iter().copied().fold(f64::INFINITY, f64::min);
    MASolution {
        grid: prob.grid.clone(),
        phi,
        log_c,
        residual: res,
        history: hist,
        linear_iterations: lin,
        step_sizes: steps,
        eig_min,
        eig_max,
        osc: hi - lo,
        mass_defect: mass.abs(),
    }
}

/// `n = 1`: `1 + ¼Δφ = f` inverted in Fourier space.
pub fn solve_poisson(prob: &MAProblem) -> Result<MASolution> {
    if prob.n() != 1 {
        return Err(invalid("n", "the spectral Poisson path is the n = 1 equation"));
    }
    let sp = Spectral::new(&prob.grid);
    let mut hat = sp.forward(&prob.f);
    hat[0] = Complex64::new(0.0, 0.0);
    for (c, m) in hat.iter_mut().zip(&sp.m11).skip(1) {
        *c /= m;
    }
    let phi = sp.inverse_real(hat);
    let sol = finish(&sp, prob, phi, 0.0, Vec::new(), Vec::new(), Vec::new());
    if sol.min_eigenvalue() <= 0.0 {
        return Err(Error::PositivityLost { iteration: 0 });
    }
    Ok(sol)
}

struct State {
    phi: Vec<f64>,
    c: f64,
    forms: Vec<NodeForm>,
    res: Vec<f64>,
    norm: f64,
}

fn evaluate(sp: &Spectral, prob: &MAProblem, phi: Vec<f64>, c: f64) -> Option<State> {
    let n = prob.n();
    let forms: Vec<NodeForm> = sp.hessian(&phi).iter().map(|h| h.shifted()).collect();
    let mut res = Vec::with_capacity(forms.len());
    for (g, f) in forms.iter().zip(&prob.f) {
        if g.eigen_range(n).0 <= 0.0 {
            return None;
        }
        res.push(libm::log(g.det(n)) - libm::log(*f) - c);
    }
    let norm = sup(&res);
    Some(State { phi, c, forms, res, norm })
}

/// Right-preconditioned BiCGSTAB for `A u = b`.
fn bicgstab(
    a: impl Fn(&[f64]) -> Vec<f64>,
    k_inv: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let len = b.len();
    let bn = libm::sqrt(dot(b, b));
    let mut x = vec![0.0; len];
    if bn == 0.0 {
        return Ok((x, 0));
    }
    let mut r = b.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; len];
    let mut p = vec![0.0; len];
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for i in 0..len {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let y = k_inv(&p);
        v = a(&y);
        alpha = rho_new / dot(&r0, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if libm::sqrt(dot(&s, &s)) <= tol * bn {
            for i in 0..len {
                x[i] += alpha * y[i];
            }
            return Ok((x, it));
        }
        let z = k_inv(&s);
        let t = a(&z);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..len {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        rho = rho_new;
        if libm::sqrt(dot(&r, &r)) <= tol * bn {
            return Ok((x, it));
        }
        if omega == 0.0 {
            break;
        }
    }
    let rn = libm::sqrt(dot(&r, &r)) / bn;
    Err(Error::LinearSolver { iterations: max_iter, residual: rn })
}

/// Damped Newton on `log det(I + H φ) − log f − c = 0` with `mean φ = 0`.
pub fn solve_newton(prob: &MAProblem, opts: &NewtonOptions) -> Result<MASolution> {
    let n = prob.n();
    let sp = Spectral::new(&prob.grid);
    let len = prob.grid.len();
    let mut st = evaluate(&sp, prob, vec![0.0; len], 0.0).ok_or(Error::PositivityLost { iteration: 0 })?;
    let mut hist = Vec::new();
    let mut lin = Vec::new();
    let mut steps = Vec::new();
    for it in 0..opts.max_iter {
        hist.push(st.norm);
        if st.norm <= opts.tol {
            return Ok(finish(&sp, prob, st.phi, st.c, hist, lin, steps));
        }
        // roundoff floor: accept once progress stops below the acceptance level
        if st.norm <= opts.accept_tol && hist.len() >= 2 && st.norm > 0.25 * hist[hist.len() - 2] {
            return Ok(finish(&sp, prob, st.phi, st.c, hist, lin, steps));
        }
        let coef: Vec<NodeForm> = st
            .forms
            .iter()
            .map(|g| {
                let det = g.det(n);
                if n == 1 {
                    NodeForm { a: 1.0 / g.a, d: 0.0, b: Complex64::new(0.0, 0.0) }
                } else {
                    NodeForm { a: g.d / det, d: g.a / det, b: -g.b.conj() / det }
                }
            })
            .collect();
        let lenf = len as f64;
        let avg = NodeForm {
            a: coef.iter().map(|c| c.a).sum::<f64>() / lenf,
            d: coef.iter().map(|c| c.d).sum::<f64>() / lenf,
            b: coef.iter().map(|c| c.b).sum::<Complex64>() / lenf,
        };
        let sym = sp.symbol(&avg);
        let rhs: Vec<f64> = st.res.iter().map(|r| -r).collect();
        let (u, its) = bicgstab(
            |v| sp.apply_linear(&coef, v),
            |v| sp.precondition(&sym, v),
            &rhs,
            opts.linear_tol,
            opts.linear_max_iter,
        )?;
        lin.push(its);
        let um = u.iter().sum::<f64>() / lenf;
        let mut s = opts.damping;
        let next = loop {
            let trial: Vec<f64> = st.phi.iter().zip(&u).map(|(p, d)| p + s * (d - um)).collect();
            let tm = trial.iter().sum::<f64>() / lenf;
            let trial: Vec<f64> = trial.into_iter().map(|p| p - tm).collect();
            if let Some(t) = evaluate(&sp, prob, trial, st.c + s * um) {
                if t.norm < st.norm {
                    break t;
                }
            }
            s *= 0.5;
            if s < 1e-12 {
                if st.norm <= opts.accept_tol {
                    return Ok(finish(&sp, prob, st.phi, st.c, hist, lin, steps));
                }
                return Err(Error::PositivityLost { iteration: it });
            }
        };
        steps.push(s);
        st = next;
    }
    hist.push(st.norm);
    if st.norm <= opts.accept_tol {
        return Ok(finish(&sp, prob, st.phi, st.c, hist, lin, steps));
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: st.norm, trace: hist })
}

/// Spectral path for `n = 1`, Newton for `n = 2`.
pub fn solve(prob: &MAProblem, opts: &NewtonOptions) -> Result<MASolution> {
    if prob.n() == 1 {
        solve_poisson(prob)
    } else {
        solve_newton(prob, opts)
    }
}

/// Trigonometric interpolant of grid values, evaluated on series.
#[derive(Clone, Debug)]
pub struct TorusInterpolant {
    grid: TorusGrid,
    hat: Vec<Complex64>,
    center: Vec<f64>,
}

impl TorusInterpolant {
    pub fn new(grid: &TorusGrid, values: &[f64], center: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        if center.len() != grid.dims() {
            return Err(Error::DimensionMismatch { expected: grid.dims(), got: center.len() });
        }
        let mut hat: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftNd::new(&grid.shape()).forward(&mut hat);
        let s = 1.0 / grid.len() as f64;
        for c in &mut hat {
            *c *= s;
        }
        Ok(TorusInterpolant { grid: grid.clone(), hat, center })
    }
}

impl ScalarField for TorusInterpolant {
    fn dim(&self) -> usize {
        self.grid.n()
    }

    fn eval(&self, x: &[Series<f64>]) -> Result<Series<f64>> {
        let dims = self.grid.dims();
        if x.len() != dims {
            return Err(Error::DimensionMismatch { expected: dims, got: x.len() });
        }
        let size = self.grid.size();
        let l = x[0].layout().clone();
        // e^{i k x_a} for every axis and wavenumber
        let waves: Vec<Vec<Series<Complex64>>> = (0..dims)
            .map(|a| {
                let xa = x[a].add_const(self.center[a]).to_complex();
                let x0 = xa.value().re;
                (0..size)
                    .map(|i| {
                        let k = wavenumber(i, size);
                        let ik = Complex64::new(0.0, k);
                        let e = Complex64::from_polar(1.0, k * x0);
                        let mut d = [Complex64::new(0.0, 0.0); crate::series::MAX_ORDER + 1];
                        let mut p = e;
                        for dk in d.iter_mut() {
                            *dk = p;
                            p *= ik;
                        }
                        xa.compose(&d)
                    })
                    .collect()
            })
            .collect();
        // contract the last axis first
        let mut level: Vec<Series<Complex64>> = self
            .hat
            .chunks(size)
            .map(|row| {
                let mut acc = Series::zeros(l.clone());
                for (c, w) in row.iter().zip(&waves[dims - 1]) {
                    acc = acc + w.scale(*c);
                }
                acc
            })
            .collect();
        for a in (0..dims - 1).rev() {
            level = level
                .chunks(size)
                .map(|row| {
                    let mut acc = Series::zeros(l.clone());
                    for (s, w) in row.iter().zip(&waves[a]) {
                        acc = acc + s * w;
                    }
                    acc
                })
                .collect();
        }
        Ok(level[0].map(|z| z.re))
    }
}

/// Closed-form local solution on the bidisc with flat background:
/// `u = (1−1/l)^{−2}|w_F|^{2(1−1/l)} + (1+m/l)^{−2}|w_D|^{2(1+m/l)}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeparableSolution {
    pub l: f64,
    pub m: f64,
}

impl SeparableSolution {
    pub fn new(l: u32, m: u32) -> Result<Self> {
        if l <= 1 {
            return Err(invalid("l", "need l > 1"));
        }
        if m == 0 {
            return Err(invalid("m", "need m ≥ 1"));
        }
        Ok(SeparableSolution { l: l as f64, m: m as f64 })
    }

    fn alphas(&self) -> (f64, f64) {
        (1.0 - 1.0 / self.l, 1.0 + self.m / self.l)
    }

    /// Exact complex Hessian `diag(|w_F|^{−2/l}, |w_D|^{2m/l})`.
    pub fn hessian(&self, wf: f64, wd: f64) -> [f64; 2] {
        [libm::pow(wf.abs(), -2.0 / self.l), libm::pow(wd.abs(), 2.0 * self.m / self.l)]
    }

    pub fn density(&self, wf: f64, wd: f64) -> f64 {
        let h = self.hessian(wf, wd);
        h[0] * h[1]
    }

    /// `|∂²∂̄² u|` in the F direction.
    pub fn fourth_f(&self, wf: f64) -> f64 {
        let (a, _) = self.alphas();
        (a - 1.0) * (a - 1.0) * libm::pow(wf.abs(), 2.0 * a - 4.0)
    }

    /// `|∂²∂̄² u|` in the D direction.
    pub fn fourth_d(&self, wd: f64) -> f64 {
        let (_, a) = self.alphas();
        (a - 1.0) * (a - 1.0) * libm::pow(wd.abs(), 2.0 * a - 4.0)
    }
}

impl ScalarField for SeparableSolution {
    fn dim(&self) -> usize {
        2
    }

    fn in_domain(&self, p: &ChartPoint) -> bool {
        p.coords.len() == 2 && p.coords[0].norm() > 0.0 && p.coords[1].norm() > 0.0
    }

    fn eval(&self, x: &[Series<f64>]) -> Result<Series<f64>> {
        if x.len() != 4 {
            return Err(Error::DimensionMismatch { expected: 4, got: x.len() });
        }
        let (af, ad) = self.alphas();
        let rf = &x[0] * &x[0] + &x[1] * &x[1];
        let rd = &x[2] * &x[2] + &x[3] * &x[3];
        let u = rf.powf(af).scale(1.0 / (af * af)) + rd.powf(ad).scale(1.0 / (ad * ad));
        if !u.is_finite() {
            return Err(Error::OutOfDomain { point: x.iter().map(|s| s.value()).collect() });
        }
        Ok(u)
    }
}

/// One measured growth exponent against a one-sided bound.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentReport {
    pub quantity: String,
    pub driver: String,
    pub fit: SlopeFit,
    /// Expected slope when exact, otherwise `None`.
    pub expected: Option<f64>,
    /// Smallest slope allowed by the bound (growth is `−slope`).
    pub bound: f64,
    pub slack: f64,
}

impl ExponentReport {
    pub fn within_bound(&self) -> bool {
        self.fit.slope >= self.bound - self.slack
    }

    pub fn matches_expected(&self, tol: f64) -> bool {
        self.expected.is_none_or(|e| (self.fit.slope - e).abs() <= tol)
    }
}

fn log_radii(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (libm::log10(lo), libm::log10(hi));
    (0..count).map(|i| libm::pow(10.0, a + (b - a) * i as f64 / (count - 1) as f64)).collect()
}

/// Exponents of the separable oracle measured from order-4 jets along
/// radial paths toward `w_F = 0` and `w_D = 0`, with the other coordinate
/// held at `0.5`. `a` is the integer in the fourth-order bounds. The
/// third-order rows use the normal-direction form `|w|^{−1−2a/l}`: with
/// `n = 2` there are no tangential directions to bound.
pub fn separable_estimates(sol: &SeparableSolution, a: u32, lo: f64, hi: f64, count: usize) -> Result<Vec<ExponentReport>> {
    let (l, m, af) = (sol.l, sol.m, a as f64);
    let radii = log_radii(lo, hi, count);
    let mut lam_big = Vec::new();
    let mut lam_inv = Vec::new();
    let mut f4 = Vec::new();
    let mut d4 = Vec::new();
    let mut f3 = Vec::new();
    let mut d3 = Vec::new();
    for &r in &radii {
        let jf = taylor_jet(sol, &ChartPoint::from_reals(&[(r * 0.6, r * 0.8), (0.5, 0.0)]), 4)?;
        let jd = taylor_jet(sol, &ChartPoint::from_reals(&[(0.5, 0.0), (r * 0.8, -r * 0.6)]), 4)?;
        let hf = crate::curvature::metric_from_jet(&jf)?;
        let hd = crate::curvature::metric_from_jet(&jd)?;
        lam_big.push(hf.eigen_range().1);
        lam_inv.push(1.0 / hd.eigen_range().0);
        f4.push(jf.partial(&[2, 0], &[2, 0]).norm());
        d4.push(jd.partial(&[0, 2], &[0, 2]).norm());
        f3.push(jf.partial(&[2, 0], &[1, 0]).norm());
        d3.push(jd.partial(&[0, 2], &[0, 1]).norm());
    }
    let rep = |q: &str, d: &str, y: &[f64], expected: f64, bound: f64, slack: f64| -> Result<ExponentReport> {
        Ok(ExponentReport {
            quantity: q.into(),
            driver: d.into(),
            fit: fit_loglog(&radii, y)?,
            expected: Some(expected),
            bound,
            slack,
        })
    };
    Ok(vec![
        rep("Lambda", "|w_F|", &lam_big, -2.0 / l, -2.0 / l, 0.02)?,
        rep("lambda^-1", "|w_D|", &lam_inv, -2.0 * m / l, -2.0 * m / l, 0.02)?,
        rep("d4_F", "|w_F|", &f4, -2.0 - 2.0 / l, -2.0 - 2.0 * af / l, 0.1)?,
        rep("d4_D", "|w_D|", &d4, 2.0 * m / l - 2.0, -2.0 - 2.0 * af * m / l, 0.1)?,
        rep("d3_F", "|w_F|", &f3, -1.0 - 2.0 / l, -1.0 - 2.0 * af / l, 0.1)?,
        rep("d3_D", "|w_D|", &d3, 2.0 * m / l - 1.0, -1.0 - 2.0 * af * m / l, 0.1)?,
    ])
}

/// Smallest `A` with `Λ ≤ A e^{−ψ₋}` at every node (flat background).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PaunReport {
    pub a_fit: f64,
    /// Node index attaining the ratio.
    pub argmax: usize,
    pub min_eigenvalue: f64,
    /// `max Λ/λ`.
    pub ellipticity: f64,
}

pub fn paun_bound_check(sol: &MASolution, prob: &MAProblem) -> Result<PaunReport> {
    if sol.grid != prob.grid {
        return Err(invalid("grid", "solution and problem grids differ"));
    }
    let mut best = (0.0, 0);
    let mut ell: f64 = 0.0;
    for (i, (lmax, w)) in sol.eig_max.iter().zip(&prob.e_minus_psi_minus).enumerate() {
        let r = lmax / w;
        if r > best.0 {
            best = (r, i);
        }
        ell = ell.max(lmax / sol.eig_min[i]);
    }
    let lmin = sol.min_eigenvalue();
    if lmin <= 0.0 {
        return Err(Error::SingularMetric { eigenvalues: vec![lmin] });
    }
    Ok(PaunReport { a_fit: best.0, argmax: best.1, min_eigenvalue: lmin, ellipticity: ell })
}

/// `A` on the separable oracle over sample points of the unit bidisc.
pub fn separable_paun_constant(sol: &SeparableSolution, radii: &[f64]) -> f64 {
    let mut a: f64 = 0.0;
    for &rf in radii {
        for &rd in radii {
            let h = sol.hessian(rf, rd);
            a = a.max(h[0].max(h[1]) * libm::pow(rf, 2.0 / sol.l));
        }
    }
    a
}

/// Largest spectral `|∂^a∂̄^b φ|` within `radius` of the F (or D) center,
/// used as the growth proxy along a δ-continuation.
pub fn local_derivative_max(sol: &MASolution, center: &[f64], radius: f64, a: &[u8], b: &[u8]) -> f64 {
    let sp = Spectral::new(&sol.grid);
    let d = sp.wirtinger(&sol.phi, a, b);
    let mut best: f64 = 0.0;
    for (i, v) in d.iter().enumerate() {
        let x = sol.grid.point(i);
        let dist2: f64 = x
            .iter()
            .zip(center)
            .map(|(p, c)| {
                let t = libm::remainder(p - c, 2.0 * PI);
                t * t
            })
            .sum();
        if dist2 <= radius * radius {
            best = best.max(v.norm());
        }
    }
    best
}

/// Largest `|H(x) − H(y)| / h^ε` over neighboring nodes.
pub fn holder_quotient(sol: &MASolution, eps: f64) -> f64 {
    let sp = Spectral::new(&sol.grid);
    let h = sp.hessian(&sol.phi);
    let g = &sol.grid;
    let denom = libm::pow(g.spacing(), eps);
    let mut best: f64 = 0.0;
    for i in 0..g.len() {
        let mi = g.multi_index(i);
        for a in 0..g.dims() {
            let mut mj = mi.clone();
            mj[a] = (mj[a] + 1) % g.size();
            let j = g.index(&mj);
            let d = NodeForm { a: h[i].a - h[j].a, d: h[i].d - h[j].d, b: h[i].b - h[j].b };
            best = best.max(d.max_abs() / denom);
        }
    }
    best
}

/// Relative drift `(max − min)/min` of a positive sequence.
pub fn relative_drift(v: &[f64]) -> f64 {
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    (hi - lo) / lo
}

/// Growth of derivative maxima along a δ-continuation, driver `√δ`.
pub fn continuation_exponent(deltas: &[f64], values: &[f64], quantity: &str, bound: f64, slack: f64) -> Result<ExponentReport> {
    let drivers: Vec<f64> = deltas.iter().map(|d| libm::sqrt(*d)).collect();
    Ok(ExponentReport {
        quantity: quantity.into(),
        driver: "sqrt(delta)".into(),
        fit: fit_loglog(&drivers, values)?,
        expected: None,
        bound,
        slack,
    })
}

const GRID_MAGIC: &[u8; 8] = b"KLGRID01";

/// Flat binary grid: magic, header (dims, n, δ, l, m) then row-major
/// little-endian doubles.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFile {
    pub dims: Vec<u32>,
    pub n: u32,
    pub delta: f64,
    pub l: u32,
    pub m: u32,
    pub data: Vec<f64>,
}

impl GridFile {
    pub fn from_solution(sol: &MASolution, prob: &MAProblem) -> Self {
        GridFile {
            dims: sol.grid.shape().into_iter().map(|d| d as u32).collect(),
            n: sol.grid.n() as u32,
            delta: prob.delta,
            l: prob.l,
            m: prob.m,
            data: sol.phi.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 8 * self.data.len());
        out.extend_from_slice(GRID_MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.delta.to_le_bytes());
        out.extend_from_slice(&self.l.to_le_bytes());
        out.extend_from_slice(&self.m.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        let bad = |r: &str| invalid("grid file", r);
        if b.len() < 12 || &b[..8] != GRID_MAGIC {
            return Err(bad("missing magic"));
        }
        let mut pos = 8;
        let mut take = |k: usize| -> Result<&[u8]> {
            let s = b.get(pos..pos + k).ok_or_else(|| bad("truncated header"))?;
            pos += k;
            Ok(s)
        };
        let u32_at = |s: &[u8]| u32::from_le_bytes([s[0], s[1], s[2], s[3]]);
        let nd = u32_at(take(4)?) as usize;
        if nd > 16 {
            return Err(bad("too many axes"));
        }
        let mut dims = Vec::with_capacity(nd);
        for _ in 0..nd {
            dims.push(u32_at(take(4)?));
        }
        let n = u32_at(take(4)?);
        let mut d8 = [0u8; 8];
        d8.copy_from_slice(take(8)?);
        let delta = f64::from_le_bytes(d8);
        let l = u32_at(take(4)?);
        let m = u32_at(take(4)?);
        let count: usize = dims.iter().map(|&d| d as usize).product();
        let payload = take(8 * count)?;
        let data = payload
            .chunks_exact(8)
            .map(|c| {
                let mut a = [0u8; 8];
                a.copy_from_slice(c);
                f64::from_le_bytes(a)
            })
            .collect();
        if pos != b.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(GridFile { dims, n, delta, l, m, data })
    }
}

/// Distance-free check that `e^{−ψ₋}` is integrable: the exponent `2p/l`
/// of `|w_F|^{−2p/l}` must stay below the real codimension 2.
pub fn lp_integrable(l: u32, p: f64) -> bool {
    p > 1.0 && 2.0 * p / (l as f64) < 2.0
}
