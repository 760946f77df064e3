//! Mixed-radix complex FFT and its tensor-product extension.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

/// One-dimensional transform of a fixed length.
#[derive(Clone, Debug)]
pub struct Fft {
    n: usize,
    factors: Vec<usize>,
    twiddles: Vec<Complex64>,
}

fn factorize(mut n: usize) -> Vec<usize> {
    let mut f = Vec::new();
    for p in [4, 2, 3, 5] {
        while n % p == 0 {
            f.push(p);
            n /= p;
        }
    }
    let mut p = 7;
    while n > 1 {
        while n % p == 0 {
            f.push(p);
            n /= p;
        }
        p += 2;
    }
    f
}

impl Fft {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let twiddles = (0..n).map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64)).collect();
        Fft { n, factors: factorize(n), twiddles }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `X_k = Σ_j x_j e^{−2πi jk/n}`, written to `out`.
    pub fn forward(&self, input: &[Complex64], out: &mut [Complex64]) {
        out.copy_from_slice(input);
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.n];
        self.blocks(out, &mut scratch, 1, false);
    }

    /// `x_j = (1/n) Σ_k X_k e^{2πi jk/n}`, written to `out`.
    pub fn inverse(&self, input: &[Complex64], out: &mut [Complex64]) {
        out.copy_from_slice(input);
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.n];
        self.blocks(out, &mut scratch, 1, true);
        let s = 1.0 / self.n as f64;
        for v in out.iter_mut() {
            *v *= s;
        }
    }

    fn tw(&self, k: usize, inv: bool) -> Complex64 {
        let t = self.twiddles[k % self.n];
        if inv {
            t.conj()
        } else {
            t
        }
    }

    /// Stockham autosort over `n` elements, each a contiguous block of
    /// `width` values; the result is left in `x`. Unnormalized.
    fn blocks(&self, x: &mut [Complex64], y: &mut [Complex64], width: usize, inv: bool) {
        let n = self.n;
        debug_assert_eq!(x.len(), n * width);
        let mut src_is_x = true;
        let mut s = 1;
        let mut len = n;
        let sign = if inv { 1.0 } else { -1.0 };
        let (c3, s3) = (-0.5, sign * libm::sqrt(0.75));
        for &r in &self.factors {
            let m = len / r;
            let (src, dst): (&[Complex64], &mut [Complex64]) = if src_is_x { (&*x, &mut *y) } else { (&*y, &mut *x) };
            let sw = s * width;
            let mut c = [Complex64::new(0.0, 0.0); 8];
            let mut generic = Vec::new();
            for p in 0..m {
                let w1 = self.tw(p * s, inv);
                for q in 0..sw {
                    let at = |k: usize| src[q + sw * (p + k * m)];
                    let out = |k: usize| q + sw * (r * p + k);
                    match r {
                        2 => {
                            let (a, b) = (at(0), at(1));
                            dst[out(0)] = a + b;
                            dst[out(1)] = (a - b) * w1;
                        }
                        3 => {
                            let (a, b, d) = (at(0), at(1), at(2));
                            let sum = b + d;
                            let dif = (b - d) * Complex64::new(0.0, s3);
                            let base = a + sum * c3;
                            dst[out(0)] = a + sum;
                            dst[out(1)] = (base + dif) * w1;
                            dst[out(2)] = (base - dif) * w1 * w1;
                        }
                        4 => {
                            let (a, b, cc, d) = (at(0), at(1), at(2), at(3));
                            let t0 = a + cc;
                            let t1 = a - cc;
                            let t2 = b + d;
                            let t3 = (b - d) * Complex64::new(0.0, sign);
                            let w2 = w1 * w1;
                            dst[out(0)] = t0 + t2;
                            dst[out(1)] = (t1 + t3) * w1;
                            dst[out(2)] = (t0 - t2) * w2;
                            dst[out(3)] = (t1 - t3) * w2 * w1;
                        }
                        _ => {
                            let buf: &mut [Complex64] = if r <= 8 {
                                &mut c[..r]
                            } else {
                                generic.resize(r, Complex64::new(0.0, 0.0));
                                &mut generic[..]
                            };
                            for (k, v) in buf.iter_mut().enumerate() {
                                *v = at(k);
                            }
                            let step = n / r;
                            for k in 0..r {
                                let mut acc = Complex64::new(0.0, 0.0);
                                for (j, v) in buf.iter().enumerate() {
                                    acc += v * self.tw(j * k * step, inv);
                                }
                                dst[out(k)] = acc * self.tw(p * s * k, inv);
                            }
                        }
                    }
                }
            }
            src_is_x = !src_is_x;
            s *= r;
            len = m;
        }
        if !src_is_x {
            x.copy_from_slice(y);
        }
    }
}

/// Transform over a row-major array, last axis fastest.
#[derive(Clone, Debug)]
pub struct FftNd {
    shape: Vec<usize>,
    plans: Vec<Fft>,
}

impl FftNd {
    pub fn new(shape: &[usize]) -> Self {
        FftNd { shape: shape.to_vec(), plans: shape.iter().map(|&n| Fft::new(n)).collect() }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(data, false);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(data, true);
    }

    fn apply(&self, data: &mut [Complex64], inv: bool) {
        assert_eq!(data.len(), self.len());
        let total = self.len();
        let mut scratch = vec![Complex64::new(0.0, 0.0); total];
        let mut width = total;
        for (axis, plan) in self.plans.iter().enumerate() {
            let n = self.shape[axis];
            width /= n;
            let block = n * width;
            for (x, y) in data.chunks_mut(block).zip(scratch.chunks_mut(block)) {
                plan.blocks(x, y, width, inv);
            }
        }
        if inv {
            let s = 1.0 / total as f64;
            for v in data.iter_mut() {
                *v *= s;
            }
        }
    }
}

/// Signed wavenumber of index `i` on a grid of `n` points.
pub fn wavenumber(i: usize, n: usize) -> f64 {
    if 2 * i <= n {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| v * Complex64::from_polar(1.0, -2.0 * PI * (j * k) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_direct_sum() {
        for n in [1, 2, 3, 4, 6, 8, 12, 16, 24, 30, 32, 7, 49] {
            let x: Vec<Complex64> = (0..n).map(|j| Complex64::new((j as f64).sin(), (3.0 * j as f64).cos())).collect();
            let f = Fft::new(n);
            let mut y = vec![Complex64::new(0.0, 0.0); n];
            f.forward(&x, &mut y);
            let want = naive(&x);
            for (a, b) in y.iter().zip(&want) {
                assert!((a - b).norm() < 1e-11 * n as f64, "n = {n}");
            }
            let mut back = vec![Complex64::new(0.0, 0.0); n];
            f.inverse(&y, &mut back);
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).norm() < 1e-13 * n as f64);
            }
        }
    }

    #[test]
    fn multidimensional_roundtrip_and_mode() {
        let shape = [4, 6, 8];
        let f = FftNd::new(&shape);
        let n = f.len();
        // a single plane wave lands in a single bin
        let mut d: Vec<Complex64> = (0..n)
            .map(|idx| {
                let (a, b, c) = (idx / 48, (idx / 8) % 6, idx % 8);
                let ph = 2.0 * PI * (a as f64 / 4.0 + 2.0 * b as f64 / 6.0 + 3.0 * c as f64 / 8.0);
                Complex64::from_polar(1.0, ph)
            })
            .collect();
        let orig = d.clone();
        f.forward(&mut d);
        let hit = 48 + 2 * 8 + 3;
        assert!((d[hit] - Complex64::new(n as f64, 0.0)).norm() < 1e-10);
        let other: f64 = d.iter().enumerate().filter(|(i, _)| *i != hit).map(|(_, v)| v.norm()).sum();
        assert!(other < 1e-9);
        f.inverse(&mut d);
        for (a, b) in d.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn wavenumbers() {
        assert_eq!(wavenumber(0, 8), 0.0);
        assert_eq!(wavenumber(4, 8), 4.0);
        assert_eq!(wavenumber(5, 8), -3.0);
    }
}
