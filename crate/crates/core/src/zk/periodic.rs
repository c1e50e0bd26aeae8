//! Periodic box, 3D FFTs, the 2/3 dealiasing mask and trigonometric
//! interpolation at arbitrary tensor points.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Box `[−L/2, L/2)` per axis with `n` equispaced nodes, x-fastest flattening.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicBox {
    pub n: [usize; 3],
    pub len: [f64; 3],
}

impl PeriodicBox {
    pub fn new(n: [usize; 3], len: [f64; 3]) -> Result<Self> {
        for d in 0..3 {
            if n[d] < 8 || n[d] % 2 != 0 {
                return Err(Error::InvalidArgument(format!("axis {d}: need an even node count >= 8, got {}", n[d])));
            }
            if !(len[d] > 0.0 && len[d].is_finite()) {
                return Err(Error::InvalidArgument(format!("axis {d}: box length must be positive")));
            }
        }
        Ok(Self { n, len })
    }

    pub fn cube(n: usize, len: f64) -> Result<Self> {
        Self::new([n; 3], [len; 3])
    }

    pub fn total(&self) -> usize {
        self.n.iter().product()
    }

    pub fn spacing(&self, d: usize) -> f64 {
        self.len[d] / self.n[d] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..3).map(|d| self.spacing(d)).product()
    }

    pub fn origin(&self, d: usize) -> f64 {
        -0.5 * self.len[d]
    }

    pub fn coords(&self, d: usize) -> Vec<f64> {
        (0..self.n[d]).map(|j| self.origin(d) + j as f64 * self.spacing(d)).collect()
    }

    /// Signed mode index of FFT slot `j`.
    pub fn mode(&self, d: usize, j: usize) -> i64 {
        let n = self.n[d] as i64;
        let j = j as i64;
        if j < n / 2 {
            j
        } else {
            j - n
        }
    }

    pub fn wavenumbers(&self, d: usize) -> Vec<f64> {
        let base = 2.0 * std::f64::consts::PI / self.len[d];
        (0..self.n[d]).map(|j| base * self.mode(d, j) as f64).collect()
    }

    /// Modes kept by the 2/3 rule: `3|m| < n`.
    pub fn retained(&self, d: usize, j: usize) -> bool {
        3 * self.mode(d, j).unsigned_abs() < self.n[d] as u64
    }

    pub fn flat(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n[0] * (j + self.n[1] * k)
    }

    pub fn tabulate(&self, mut f: impl FnMut(f64, f64, f64) -> f64) -> Vec<f64> {
        let (xs, ys, zs) = (self.coords(0), self.coords(1), self.coords(2));
        let mut out = Vec::with_capacity(self.total());
        for z in &zs {
            for y in &ys {
                for x in &xs {
                    out.push(f(*x, *y, *z));
                }
            }
        }
        out
    }
}

/// FFT plans and wavenumber tables for one box.
pub struct Spectral {
    pub domain: PeriodicBox,
    pub k: [Vec<f64>; 3],
    /// Flat dealiasing mask.
    pub mask: Vec<bool>,
    plans: [(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>); 3],
}

impl fmt::Debug for Spectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectral").field("domain", &self.domain).finish()
    }
}

impl Spectral {
    pub fn new(domain: PeriodicBox) -> Arc<Self> {
        let mut planner = FftPlanner::new();
        let plans = [0, 1, 2].map(|d| (planner.plan_fft_forward(domain.n[d]), planner.plan_fft_inverse(domain.n[d])));
        let k = [0, 1, 2].map(|d| domain.wavenumbers(d));
        let [nx, ny, nz] = domain.n;
        let mut mask = Vec::with_capacity(domain.total());
        for kz in 0..nz {
            for ky in 0..ny {
                for kx in 0..nx {
                    mask.push(domain.retained(0, kx) && domain.retained(1, ky) && domain.retained(2, kz));
                }
            }
        }
        Arc::new(Self { domain, k, mask, plans })
    }

    pub fn len(&self) -> usize {
        self.domain.total()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Calls `f(flat, kx, ky, kz)` for every slot.
    pub fn for_each_mode(&self, mut f: impl FnMut(usize, f64, f64, f64)) {
        let [nx, ny, nz] = self.domain.n;
        let mut idx = 0;
        for c in 0..nz {
            for b in 0..ny {
                for a in 0..nx {
                    f(idx, self.k[0][a], self.k[1][b], self.k[2][c]);
                    idx += 1;
                }
            }
        }
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.domain.n;
        for axis in 0..3 {
            let plan = if inverse { &self.plans[axis].1 } else { &self.plans[axis].0 };
            if axis == 0 {
                plan.process(buf);
                continue;
            }
            let len = n[axis];
            let stride: usize = n[..axis].iter().product();
            let outer: usize = n[axis + 1..].iter().product();
            let mut lines = vec![Complex64::new(0.0, 0.0); buf.len()];
            let mut line = 0;
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * stride * len + s;
                    for j in 0..len {
                        lines[line * len + j] = buf[base + j * stride];
                    }
                    line += 1;
                }
            }
            plan.process(&mut lines);
            line = 0;
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * stride * len + s;
                    for j in 0..len {
                        buf[base + j * stride] = lines[line * len + j];
                    }
                    line += 1;
                }
            }
        }
    }

    /// Unnormalized forward transform of a real field.
    pub fn forward(&self, u: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, false);
        buf
    }

    /// Inverse transform; returns the real part and the largest imaginary magnitude.
    pub fn inverse_with_leak(&self, spec: &[Complex64]) -> (Vec<f64>, f64) {
        let mut buf = spec.to_vec();
        self.transform(&mut buf, true);
        let scale = 1.0 / self.len() as f64;
        let leak = buf.iter().fold(0.0f64, |m, v| m.max(v.im.abs())) * scale;
        (buf.iter().map(|v| v.re * scale).collect(), leak)
    }

    pub fn inverse(&self, spec: &[Complex64]) -> Vec<f64> {
        self.inverse_with_leak(spec).0
    }

    pub fn apply_mask(&self, spec: &mut [Complex64]) {
        for (v, &keep) in spec.iter_mut().zip(&self.mask) {
            if !keep {
                *v = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Spectral partial derivative along `d`.
    pub fn derivative(&self, spec: &[Complex64], d: usize) -> Vec<Complex64> {
        let mut out = spec.to_vec();
        self.for_each_mode(|i, kx, ky, kz| {
            let k = [kx, ky, kz][d];
            out[i] *= Complex64::new(0.0, k);
        });
        out
    }

    /// `f(x − shift)` for a band-limited field given by its spectrum.
    pub fn translate(&self, spec: &[Complex64], shift: [f64; 3]) -> Vec<Complex64> {
        let mut out = spec.to_vec();
        self.for_each_mode(|i, kx, ky, kz| {
            let phase = -(kx * shift[0] + ky * shift[1] + kz * shift[2]);
            out[i] *= Complex64::from_polar(1.0, phase);
        });
        out
    }

    /// `∫ f g` by the rectangle rule (spectrally exact for periodic band-limited products).
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        crate::cheb::dot(f, g) * self.domain.cell_volume()
    }

    /// Trigonometric interpolant of `spec` on the tensor product `xs × ys × zs`.
    ///
    /// Only retained modes are summed, so the result is the dealiased field.
    pub fn eval_tensor(&self, spec: &[Complex64], pts: [&[f64]; 3]) -> Vec<f64> {
        let dom = &self.domain;
        let keep: [Vec<usize>; 3] = [0, 1, 2].map(|d| (0..dom.n[d]).filter(|&j| dom.retained(d, j)).collect());
        // per-axis phase tables e^{i k (p − x0)}
        let tables: [Vec<Complex64>; 3] = [0, 1, 2].map(|d| {
            let mut t = Vec::with_capacity(pts[d].len() * keep[d].len());
            for &p in pts[d] {
                for &j in &keep[d] {
                    t.push(Complex64::from_polar(1.0, self.k[d][j] * (p - dom.origin(d))));
                }
            }
            t
        });
        let [rx, ry, rz] = [keep[0].len(), keep[1].len(), keep[2].len()];
        let [px, py, pz] = [pts[0].len(), pts[1].len(), pts[2].len()];
        let zero = Complex64::new(0.0, 0.0);

        // compact retained block, x-fastest
        let mut block = vec![zero; rx * ry * rz];
        for (c, &kz) in keep[2].iter().enumerate() {
            for (b, &ky) in keep[1].iter().enumerate() {
                for (a, &kx) in keep[0].iter().enumerate() {
                    block[a + rx * (b + ry * c)] = spec[dom.flat(kx, ky, kz)];
                }
            }
        }
        // contract x
        let mut s1 = vec![zero; px * ry * rz];
        for line in 0..ry * rz {
            let src = &block[line * rx..(line + 1) * rx];
            for p in 0..px {
                let tab = &tables[0][p * rx..(p + 1) * rx];
                s1[p + px * line] = src.iter().zip(tab).map(|(a, b)| a * b).sum();
            }
        }
        // contract y
        let mut s2 = vec![zero; px * py * rz];
        for c in 0..rz {
            for q in 0..py {
                let tab = &tables[1][q * ry..(q + 1) * ry];
                for p in 0..px {
                    let mut acc = zero;
                    for (b, t) in tab.iter().enumerate() {
                        acc += s1[p + px * (b + ry * c)] * t;
                    }
                    s2[p + px * (q + py * c)] = acc;
                }
            }
        }
        // contract z
        let scale = 1.0 / self.len() as f64;
        let mut out = vec![0.0; px * py * pz];
        for r in 0..pz {
            let tab = &tables[2][r * rz..(r + 1) * rz];
            for q in 0..py {
                for p in 0..px {
                    let mut acc = zero;
                    for (c, t) in tab.iter().enumerate() {
                        acc += s2[p + px * (q + py * c)] * t;
                    }
                    out[p + px * (q + py * r)] = acc.re * scale;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Arc<Spectral> {
        Spectral::new(PeriodicBox::new([12, 10, 8], [6.0, 5.0, 4.0]).unwrap())
    }

    #[test]
    fn box_guards() {
        assert!(PeriodicBox::cube(7, 1.0).is_err());
        assert!(PeriodicBox::cube(4, 1.0).is_err());
        assert!(PeriodicBox::cube(8, 0.0).is_err());
    }

    #[test]
    fn round_trip_and_derivative() {
        let sp = small();
        let dom = sp.domain;
        let two_pi = 2.0 * std::f64::consts::PI;
        let u = dom.tabulate(|x, y, z| (two_pi * x / 6.0).sin() * (two_pi * y / 5.0).cos() + (two_pi * z / 4.0).cos());
        let (back, leak) = sp.inverse_with_leak(&sp.forward(&u));
        assert!(leak < 1e-14);
        for (a, b) in u.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
        let dx = sp.inverse(&sp.derivative(&sp.forward(&u), 0));
        let exact = dom.tabulate(|x, y, _| two_pi / 6.0 * (two_pi * x / 6.0).cos() * (two_pi * y / 5.0).cos());
        for (a, b) in dx.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn translation_and_off_grid_evaluation() {
        let sp = small();
        let dom = sp.domain;
        let two_pi = 2.0 * std::f64::consts::PI;
        let f = |x: f64, y: f64, z: f64| (two_pi * x / 6.0).cos() + 0.5 * (two_pi * 2.0 * y / 5.0).sin() * (two_pi * z / 4.0).cos();
        let spec = sp.forward(&dom.tabulate(f));
        let shifted = sp.inverse(&sp.translate(&spec, [0.37, -0.2, 0.11]));
        let exact = dom.tabulate(|x, y, z| f(x - 0.37, y + 0.2, z - 0.11));
        for (a, b) in shifted.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-12);
        }
        let (xs, ys, zs) = (vec![0.1, 1.7, -2.9], vec![0.33, 4.0], vec![-0.5, 0.25, 1.0, 9.0]);
        let got = sp.eval_tensor(&spec, [&xs, &ys, &zs]);
        let mut i = 0;
        for z in &zs {
            for y in &ys {
                for x in &xs {
                    assert!((got[i] - f(*x, *y, *z)).abs() < 1e-12);
                    i += 1;
                }
            }
        }
    }

    #[test]
    fn mask_follows_two_thirds_rule() {
        let dom = PeriodicBox::cube(48, 40.0).unwrap();
        let kept: Vec<i64> = (0..48).filter(|&j| dom.retained(0, j)).map(|j| dom.mode(0, j)).collect();
        assert_eq!(kept.len(), 31);
        assert!(kept.iter().all(|m| m.abs() <= 15));
    }
}
