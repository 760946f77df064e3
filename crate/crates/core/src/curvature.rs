//! Metric, Ricci form and scalar curvature from potential jets, plus two
//! linear-algebra facts about positive hermitian forms.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::jets::{taylor_jet, ChartPoint, ScalarField, WirtingerJet};
use crate::series::Series;

const HERMITIAN_TOL: f64 = 1e-10;

/// A hermitian `n × n` matrix, typically `g_{i j̄}`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianForm {
    m: DMatrix<Complex64>,
}

impl HermitianForm {
    /// Accepts matrices hermitian to relative `1e-10`, then symmetrizes.
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let defect = (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !(defect <= HERMITIAN_TOL * scale) {
            return Err(Error::NotHermitian(defect / scale));
        }
        let m = (&m + m.adjoint()).map(|z| z * 0.5);
        Ok(HermitianForm { m })
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        HermitianForm { m: DMatrix::from_fn(n, n, |i, j| if i == j { Complex64::new(d[i], 0.0) } else { Complex64::new(0.0, 0.0) }) }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_real_diagonal(&vec![1.0; n])
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.m
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.m[(i, j)]
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.m.clone().symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_range(&self) -> (f64, f64) {
        let v = self.eigenvalues();
        (v[0], v[v.len() - 1])
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    pub fn det(&self) -> f64 {
        self.m.clone().determinant().re
    }

    pub fn is_positive_definite(&self) -> bool {
        self.eigen_range().0 > 0.0
    }

    pub fn scale(&self, c: f64) -> Self {
        HermitianForm { m: self.m.map(|z| z * c) }
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self.m.clone().try_inverse().ok_or(Error::SingularMetric { eigenvalues: self.eigenvalues() })?;
        HermitianForm::new(inv)
    }
}

/// Eigenvalues of `form` relative to a positive `reference`, i.e. of
/// `L⁻¹ form L⁻*` where `reference = L L*`.
pub fn eigen_range(form: &HermitianForm, reference: &HermitianForm) -> Result<(f64, f64)> {
    if form.dim() != reference.dim() {
        return Err(Error::DimensionMismatch { expected: reference.dim(), got: form.dim() });
    }
    let chol = nalgebra::Cholesky::new(reference.m.clone())
        .ok_or(Error::SingularMetric { eigenvalues: reference.eigenvalues() })?;
    let n = form.dim();
    let linv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(Error::SingularMetric { eigenvalues: reference.eigenvalues() })?;
    let rel = &linv * &form.m * linv.adjoint();
    Ok(HermitianForm::new(rel)?.eigen_range())
}

/// `g_{i j̄} = ∂_i ∂̄_j u` at the base point of an order ≥ 2 jet.
pub fn metric_from_jet(jet: &WirtingerJet) -> Result<HermitianForm> {
    if jet.order() < 2 {
        return Err(Error::UnsupportedOrder(jet.order()));
    }
    let n = jet.dim();
    HermitianForm::new(DMatrix::from_fn(n, n, |i, j| jet.mixed(i, j)))
}

fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    fn rec(k: usize, p: &mut Vec<usize>, sign: f64, out: &mut Vec<(Vec<usize>, f64)>) {
        if k == p.len() {
            out.push((p.clone(), sign));
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            rec(k + 1, p, if i == k { sign } else { -sign }, out);
            p.swap(k, i);
        }
    }
    rec(0, &mut p, 1.0, &mut out);
    out
}

/// Metric, Ricci form and scalar curvature at one point.
#[derive(Clone, Debug)]
pub struct Curvature {
    pub metric: HermitianForm,
    pub ricci: HermitianForm,
    pub scalar: f64,
}

/// Curvature from an order-4 jet of a potential. Ricci is
/// `−∂∂̄ log det g`, with the determinant expanded on the jet itself.
pub fn curvature_from_jet(jet: &WirtingerJet) -> Result<Curvature> {
    if jet.order() < 4 {
        return Err(Error::UnsupportedOrder(jet.order()));
    }
    let n = jet.dim();
    let s = jet.series();
    let g: Vec<Vec<Series<Complex64>>> = (0..n).map(|i| (0..n).map(|j| s.diff(i).diff(n + j)).collect()).collect();
    let metric = metric_from_jet(jet)?;
    let (lo, hi) = metric.eigen_range();
    if !(lo > 1e-14 * hi.abs()) || !(lo > 0.0) {
        return Err(Error::SingularMetric { eigenvalues: metric.eigenvalues() });
    }
    let mut det = Series::zeros(g[0][0].layout().clone());
    for (perm, sign) in permutations(n) {
        let mut term = g[0][perm[0]].clone();
        for (i, &pi) in perm.iter().enumerate().skip(1) {
            term = &term * &g[i][pi];
        }
        det = if sign > 0.0 { &det + &term } else { &det - &term };
    }
    let d0 = det.value();
    let r = Complex64::new(1.0, 0.0) / d0;
    let logdet = det.compose(&[d0.ln(), r, -r * r, r * r * r * 2.0, -r * r * r * r * 6.0]);
    let ricci = DMatrix::from_fn(n, n, |i, j| -logdet.diff(i).diff(n + j).value());
    // Ricci is a difference of terms of size |∂ log det|²; measure its defect there
    let grad = (0..n).map(|i| logdet.diff(i).value().norm_sqr()).fold(0.0, f64::max);
    let scale = ricci.iter().map(|z| z.norm()).fold(grad, f64::max).max(f64::MIN_POSITIVE);
    let defect = (&ricci - ricci.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !(defect <= HERMITIAN_TOL * scale) {
        return Err(Error::NotHermitian(defect / scale));
    }
    let ricci = HermitianForm { m: (&ricci + ricci.adjoint()).map(|z| z * 0.5) };
    let ginv = metric.inverse()?;
    let scalar = (ginv.m.transpose().component_mul(&ricci.m)).sum().re;
    Ok(Curvature { metric, ricci, scalar })
}

/// `S = g^{i j̄} R_{i j̄}` from an order-4 jet.
pub fn scalar_curvature_from_jet(jet: &WirtingerJet) -> Result<f64> {
    Ok(curvature_from_jet(jet)?.scalar)
}

/// Scalar curvature of the metric `∂∂̄u` at `p`.
pub fn scalar_curvature<F: ScalarField + ?Sized>(u: &F, p: &ChartPoint) -> Result<f64> {
    scalar_curvature_from_jet(&taylor_jet(u, p, 4)?)
}

/// Outcome of the determinant/trace comparison.
#[derive(Clone, Debug)]
pub struct DetRootReport {
    /// `(det A)^{1/n}`.
    pub det_root: f64,
    /// `tr(A B*)/n` at `B* = (det A)^{1/n} A⁻¹`.
    pub at_optimum: f64,
    /// Smallest `tr(AB)/n` over the random samples.
    pub sampled_min: f64,
    pub samples: usize,
}

fn random_unit_det(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<Complex64> {
    let g = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let b = &g * g.adjoint() + DMatrix::identity(n, n) * Complex64::new(0.05, 0.0);
    let d = b.clone().determinant().re;
    b.map(|z| z * libm::pow(d, -1.0 / n as f64))
}

/// Check `(det A)^{1/n} ≤ tr(AB)/n` for random `B > 0` with `det B = 1`,
/// with equality at `B*`.
pub fn det_root_infimum_check(a: &HermitianForm, samples: usize, seed: u64) -> Result<DetRootReport> {
    let n = a.dim();
    if !a.is_positive_definite() {
        return Err(Error::SingularMetric { eigenvalues: a.eigenvalues() });
    }
    let det_root = libm::pow(a.det(), 1.0 / n as f64);
    let bstar = a.inverse()?.scale(det_root);
    let at_optimum = (&a.m * &bstar.m).trace().re / n as f64;
    if (at_optimum - det_root).abs() > 1e-12 * det_root {
        return Err(Error::PropertyViolation {
            property: "det-trace equality",
            witness: bstar.m.iter().flat_map(|z| [z.re, z.im]).collect(),
            detail: format!("{at_optimum} != {det_root}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled_min = f64::INFINITY;
    for _ in 0..samples {
        let b = random_unit_det(&mut rng, n);
        let v = (&a.m * &b).trace().re / n as f64;
        if v < det_root * (1.0 - 1e-12) {
            return Err(Error::PropertyViolation {
                property: "det-trace inequality",
                witness: b.iter().flat_map(|z| [z.re, z.im]).collect(),
                detail: format!("tr(AB)/n = {v} < {det_root}"),
            });
        }
        sampled_min = sampled_min.min(v);
    }
    Ok(DetRootReport { det_root, at_optimum, sampled_min, samples })
}

/// `A = Σ β_k ζ_k ζ_k*` with unit vectors from a fixed family.
#[derive(Clone, Debug)]
pub struct RankOneDecomposition {
    pub vectors: Vec<Vec<Complex64>>,
    pub coefficients: Vec<f64>,
    /// Smallest coefficient.
    pub lambda_star: f64,
    /// Largest coefficient.
    pub capital_lambda_star: f64,
}

impl RankOneDecomposition {
    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let n = self.vectors[0].len();
        let mut m = DMatrix::zeros(n, n);
        for (v, &b) in self.vectors.iter().zip(&self.coefficients) {
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] += v[i] * v[j].conj() * b;
                }
            }
        }
        m
    }
}

/// The fixed family `e_i`, `(e_i ± e_j)/√2`, `(e_i ± i e_j)/√2` for `i < j`.
pub fn rank_one_family(n: usize) -> Vec<Vec<Complex64>> {
    let s = core::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(2 * n * n - n);
    for i in 0..n {
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        v[i] = Complex64::new(1.0, 0.0);
        out.push(v);
    }
    for i in 0..n {
        for j in i + 1..n {
            for w in [Complex64::new(s, 0.0), Complex64::new(-s, 0.0), Complex64::new(0.0, s), Complex64::new(0.0, -s)] {
                let mut v = vec![Complex64::new(0.0, 0.0); n];
                v[i] = Complex64::new(s, 0.0);
                v[j] = w;
                out.push(v);
            }
        }
    }
    out
}

/// Decompose `A ∈ S(λ, Λ)` over [`rank_one_family`] with positive weights.
///
/// Off-diagonal entries are split between the `±` pairs, and every pair
/// carries a common shift `ε` paid for by the diagonal. This is feasible
/// exactly when `A` is strictly diagonally dominant in the
/// `|Re a_ij| + |Im a_ij|` sense; `ε` is a fixed fraction of the smallest
/// margin, so the weights scale linearly with `A`.
pub fn rank_one_decompose(a: &HermitianForm, lambda: f64, capital_lambda: f64) -> Result<RankOneDecomposition> {
    if !(lambda > 0.0 && capital_lambda > lambda) {
        return Err(invalid("lambda", "need 0 < λ < Λ"));
    }
    let (lo, hi) = a.eigen_range();
    let slack = 1e-12 * capital_lambda;
    if lo < lambda - slack || hi > capital_lambda + slack {
        return Err(invalid("A", format!("eigenvalues [{lo}, {hi}] outside [{lambda}, {capital_lambda}]")));
    }
    let n = a.dim();
    let m = &a.m;
    let margins: Vec<f64> = (0..n)
        .map(|i| m[(i, i)].re - (0..n).filter(|&j| j != i).map(|j| m[(i, j)].re.abs() + m[(i, j)].im.abs()).sum::<f64>())
        .collect();
    let dmin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    if !(dmin > 0.0) {
        return Err(Error::Infeasible(dmin));
    }
    let eps = if n > 1 { dmin / (2.0 * (n as f64 - 1.0) + 1.0) } else { 0.0 };
    let mut coefficients: Vec<f64> = margins.iter().map(|d| d - 2.0 * eps * (n as f64 - 1.0)).collect();
    for i in 0..n {
        for j in i + 1..n {
            let (x, y) = (m[(i, j)].re, m[(i, j)].im);
            // order matches rank_one_family: +1, -1, +i, -i
            coefficients.push(eps + (2.0 * x).max(0.0));
            coefficients.push(eps + (-2.0 * x).max(0.0));
            coefficients.push(eps + (-2.0 * y).max(0.0));
            coefficients.push(eps + (2.0 * y).max(0.0));
        }
    }
    let lambda_star = coefficients.iter().copied().fold(f64::INFINITY, f64::min);
    let capital_lambda_star = coefficients.iter().copied().fold(0.0, f64::max);
    Ok(RankOneDecomposition { vectors: rank_one_family(n), coefficients, lambda_star, capital_lambda_star })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::{complex_coords, FnField};

    fn fs(n: usize) -> FnField {
        FnField::new(n, |x| {
            let z = complex_coords(x);
            let mut r = z[0].norm_sqr();
            for w in &z[1..] {
                r = &r + &w.norm_sqr();
            }
            Ok(r.add_const(1.0).ln())
        })
    }

    #[test]
    fn fubini_study_scalar_curvature() {
        let s1 = scalar_curvature(&fs(1), &ChartPoint::from_reals(&[(0.3, 0.4)])).unwrap();
        assert!((s1 - 2.0).abs() < 1e-12, "{s1}");
        let s2 = scalar_curvature(&fs(2), &ChartPoint::from_reals(&[(0.3, 0.4), (-0.7, 0.1)])).unwrap();
        assert!((s2 - 6.0).abs() < 1e-11, "{s2}");
    }

    #[test]
    fn scaled_potential_scales_curvature() {
        let p = ChartPoint::from_reals(&[(0.2, -0.1), (0.5, 0.5)]);
        let base = fs(2);
        let scaled = FnField::new(2, move |x| Ok(base.eval(x)?.scale(3.0)));
        let s = scalar_curvature(&scaled, &p).unwrap();
        assert!((s - 2.0).abs() < 1e-11);
    }

    #[test]
    fn flat_metric_has_zero_curvature() {
        let flat = FnField::new(2, |x| {
            let z = complex_coords(x);
            Ok(&z[0].norm_sqr() + &z[1].norm_sqr().scale(2.0))
        });
        let s = scalar_curvature(&flat, &ChartPoint::from_reals(&[(1.0, 2.0), (3.0, 4.0)])).unwrap();
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn degenerate_metric_reports_eigenvalues() {
        let f = FnField::new(2, |x| Ok(complex_coords(x)[0].norm_sqr()));
        let e = scalar_curvature(&f, &ChartPoint::from_reals(&[(0.0, 0.0), (0.0, 0.0)])).unwrap_err();
        assert!(matches!(e, Error::SingularMetric { .. }));
    }

    #[test]
    fn relative_eigenvalues() {
        let a = HermitianForm::from_real_diagonal(&[2.0, 8.0]);
        let b = HermitianForm::from_real_diagonal(&[1.0, 4.0]);
        let (lo, hi) = eigen_range(&a, &b).unwrap();
        assert!((lo - 2.0).abs() < 1e-14 && (hi - 2.0).abs() < 1e-14);
    }

    #[test]
    fn det_trace_diagonal_example() {
        let a = HermitianForm::from_real_diagonal(&[1.0, 4.0]);
        let r = det_root_infimum_check(&a, 200, 42).unwrap();
        assert!((r.det_root - 2.0).abs() < 1e-14);
        assert!((r.at_optimum - 2.0).abs() < 1e-14);
        assert!(r.sampled_min >= 2.0);
    }

    #[test]
    fn rank_one_two_by_two() {
        let m = DMatrix::from_row_slice(2, 2, &[
            Complex64::new(2.0, 0.0), Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0),
        ]);
        let a = HermitianForm::new(m.clone()).unwrap();
        let d = rank_one_decompose(&a, 1.0, 3.0).unwrap();
        assert_eq!(d.vectors.len(), 6);
        assert!(d.lambda_star > 0.0);
        let err = (d.reconstruct() - m).norm();
        assert!(err <= 1e-12, "{err}");
    }

    #[test]
    fn rank_one_complex_entries_and_scaling() {
        let m = DMatrix::from_row_slice(3, 3, &[
            Complex64::new(4.0, 0.0), Complex64::new(0.5, -0.7), Complex64::new(-0.2, 0.3),
            Complex64::new(0.5, 0.7), Complex64::new(3.0, 0.0), Complex64::new(0.1, 0.9),
            Complex64::new(-0.2, -0.3), Complex64::new(0.1, -0.9), Complex64::new(5.0, 0.0),
        ]);
        let a = HermitianForm::new(m.clone()).unwrap();
        let d = rank_one_decompose(&a, 1.0, 7.0).unwrap();
        assert_eq!(d.vectors.len(), 15);
        assert!((d.reconstruct() - &m).norm() <= 1e-12 * m.norm());
        let d3 = rank_one_decompose(&a.scale(3.0), 3.0, 21.0).unwrap();
        for (x, y) in d.coefficients.iter().zip(&d3.coefficients) {
            assert!((3.0 * x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn rank_one_rejects_weak_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[
            Complex64::new(1.0, 0.0), Complex64::new(0.6, 0.6),
            Complex64::new(0.6, -0.6), Complex64::new(1.0, 0.0),
        ]);
        let a = HermitianForm::new(m).unwrap();
        assert!(matches!(rank_one_decompose(&a, 0.1, 2.0), Err(Error::Infeasible(_))));
        assert!(matches!(rank_one_decompose(&a, 0.5, 2.0), Err(Error::InvalidParameter { .. })));
    }
}
