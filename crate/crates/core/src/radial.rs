//! Radial ground state of `−ΔQ + Q − |Q|^{p−1}Q = 0` in three dimensions.
//!
//! The profile is computed for `u(r) = r R(r)`, which turns the radial
//! Laplacian into `u''` and removes the `2/r` singularity at the origin:
//! `−u'' + u = |u|^{p−1}u / r^{p−1}`, `u(0) = u(r_max) = 0`. The equation is
//! discretized with the fourth-order Numerov scheme on a uniform grid and
//! solved by Petviashvili's renormalized fixed-point iteration.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RadialProfile {
    pub p: u32,
    pub r_max: f64,
    /// Uniform radii `r_i = i r_max / n_r`, `i = 0..=n_r`.
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    /// Sup-norm residual of the discrete equation at exit.
    pub residual: f64,
    /// Petviashvili stabilizing factor at exit.
    pub stabilizer: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadialConfig {
    pub p: u32,
    pub r_max: f64,
    pub n_r: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RadialConfig {
    fn default() -> Self {
        Self { p: 2, r_max: 50.0, n_r: 4000, tol: 1e-10, max_iter: 500 }
    }
}

/// Symmetric tridiagonal Toeplitz system `sub·x_{i−1} + diag·x_i + sub·x_{i+1}`.
struct Tridiag {
    sub: f64,
    // Thomas-algorithm pivots; the matrix never changes between iterations
    pivots: Vec<f64>,
}

impl Tridiag {
    fn new(diag: f64, sub: f64, n: usize) -> Self {
        let mut pivots = Vec::with_capacity(n);
        let mut prev = 0.0;
        for i in 0..n {
            let p = if i == 0 { diag } else { diag - sub * sub / prev };
            pivots.push(p);
            prev = p;
        }
        Self { sub, pivots }
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        for i in 1..n {
            rhs[i] -= self.sub / self.pivots[i - 1] * rhs[i - 1];
        }
        rhs[n - 1] /= self.pivots[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.sub * rhs[i + 1]) / self.pivots[i];
        }
    }
}

fn toeplitz_apply(diag: f64, sub: f64, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { v[i - 1] } else { 0.0 };
            let right = if i + 1 < n { v[i + 1] } else { 0.0 };
            diag * v[i] + sub * (left + right)
        })
        .collect()
}

/// Solves for the radial ground state by Petviashvili iteration.
///
/// The iteration is `u ← S^γ A⁻¹ B N(u)` with `S = ⟨Au, u⟩ / ⟨B N(u), u⟩`
/// and `γ = p/(p−1)`, where `A` is the Numerov form of `−d²/dr² + 1` and
/// `B` the Numerov averaging stencil. Exit requires both the residual and
/// `|S − 1|` below `tol`.
pub fn solve_radial(cfg: &RadialConfig) -> Result<RadialProfile> {
    let RadialConfig { p, r_max, n_r, tol, max_iter } = *cfg;
    if p < 2 {
        return Err(Error::InvalidArgument(format!("exponent p must be >= 2, got {p}")));
    }
    if !(r_max > 10.0) {
        return Err(Error::InvalidArgument(format!("r_max must exceed 10, got {r_max}")));
    }
    if n_r < 200 {
        return Err(Error::InvalidArgument(format!("n_r must be >= 200, got {n_r}")));
    }
    let h = r_max / n_r as f64;
    let nodes: Vec<f64> = (0..=n_r).map(|i| i as f64 * h).collect();
    let inner = &nodes[1..n_r];

    let a_diag = 2.0 / (h * h) + 10.0 / 12.0;
    let a_sub = -1.0 / (h * h) + 1.0 / 12.0;
    let (b_diag, b_sub) = (10.0 / 12.0, 1.0 / 12.0);
    let solver = Tridiag::new(a_diag, a_sub, inner.len());
    let gamma = p as f64 / (p as f64 - 1.0);
    let nonlinear = |u: &[f64]| -> Vec<f64> {
        u.iter()
            .zip(inner)
            .map(|(&ui, &r)| ui.abs().powi(p as i32 - 1) * ui / r.powi(p as i32 - 1))
            .collect()
    };

    let mut u: Vec<f64> = inner.iter().map(|&r| r * (-r * r).exp()).collect();
    let mut residual = f64::INFINITY;
    let mut stabilizer = f64::NAN;
    for iter in 1..=max_iter {
        let bn = toeplitz_apply(b_diag, b_sub, &nonlinear(&u));
        let au = toeplitz_apply(a_diag, a_sub, &u);
        let num: f64 = au.iter().zip(&u).map(|(a, b)| a * b).sum();
        let den: f64 = bn.iter().zip(&u).map(|(a, b)| a * b).sum();
        stabilizer = num / den;
        residual = au.iter().zip(&bn).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if !stabilizer.is_finite() || u.iter().all(|v| v.abs() < 1e-12) {
            return Err(Error::Collapse);
        }
        if residual < tol && (stabilizer - 1.0).abs() < tol {
            return Ok(finish(p, r_max, nodes, &u, residual, stabilizer, iter - 1));
        }
        let scale = stabilizer.powf(gamma);
        let mut next = bn;
        solver.solve(&mut next);
        next.iter_mut().for_each(|v| *v *= scale);
        u = next;
    }
    Err(Error::NotConverged { iterations: max_iter, residual: residual.max((stabilizer - 1.0).abs()) })
}

fn finish(
    p: u32,
    r_max: f64,
    nodes: Vec<f64>,
    u: &[f64],
    residual: f64,
    stabilizer: f64,
    iterations: usize,
) -> RadialProfile {
    let h = nodes[1];
    let mut values = Vec::with_capacity(nodes.len());
    // u = R(0) r + c r³ + O(r⁵)
    values.push((8.0 * u[0] - u[1]) / (6.0 * h));
    values.extend(u.iter().zip(&nodes[1..]).map(|(ui, r)| ui / r));
    values.push(0.0);
    RadialProfile { p, r_max, nodes, values, residual, stabilizer, iterations }
}

impl RadialProfile {
    pub fn n_r(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn step(&self) -> f64 {
        self.nodes[1] - self.nodes[0]
    }

    /// `R'(r)` by fourth-order central differences, using the even extension at 0.
    pub fn derivative(&self) -> Vec<f64> {
        let n = self.nodes.len();
        let h = self.step();
        let v = |i: isize| -> f64 {
            let i = i.unsigned_abs();
            if i < n {
                self.values[i]
            } else {
                0.0
            }
        };
        (0..n as isize)
            .map(|i| {
                if i as usize >= n - 2 {
                    (v(i - 2) - 4.0 * v(i - 1) + 3.0 * v(i)) / (2.0 * h)
                } else {
                    (v(i - 2) - 8.0 * v(i - 1) + 8.0 * v(i + 1) - v(i + 2)) / (12.0 * h)
                }
            })
            .collect()
    }

    /// Trapezoid value of `4π ∫ f(r) r² dr` for nodal `f`.
    pub fn volume_integral(&self, f: &[f64]) -> f64 {
        let h = self.step();
        let g: Vec<f64> = f.iter().zip(&self.nodes).map(|(v, r)| v * r * r).collect();
        let n = g.len();
        4.0 * PI * h * (g[1..n - 1].iter().sum::<f64>() + 0.5 * (g[0] + g[n - 1]))
    }

    /// `(∫|∇Q|², ∫Q², ∫Q^{p+1})` over ℝ³.
    pub fn pohozaev_integrals(&self) -> (f64, f64, f64) {
        let d = self.derivative();
        let grad = self.volume_integral(&d.iter().map(|v| v * v).collect::<Vec<_>>());
        let mass = radial_mass(self);
        let pow = self.volume_integral(
            &self.values.iter().map(|v| v.abs().powi(self.p as i32 + 1)).collect::<Vec<_>>(),
        );
        (grad, mass, pow)
    }

    /// Checks the profile invariants, returning a description of the first failure.
    pub fn check_invariants(&self, tol: f64) -> std::result::Result<(), String> {
        let v = &self.values;
        let n = v.len();
        if !(v[0] > 0.0) {
            return Err(format!("R(0) = {} is not positive", v[0]));
        }
        if v[n - 1] != 0.0 {
            return Err("R(r_max) is not zero".into());
        }
        if let Some(i) = (1..n).find(|&i| v[i] >= v[i - 1]) {
            return Err(format!("R not strictly decreasing at r = {}", self.nodes[i]));
        }
        let h = self.step();
        let slope0 = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
        if slope0.abs() > 1e-6 * v[0] {
            return Err(format!("R'(0) = {slope0:e} does not vanish"));
        }
        if self.residual >= tol {
            return Err(format!("residual {} not below {tol}", self.residual));
        }
        // tail: R(r) <= R(r/2) e^{-r/4} on the outer half (even indices only)
        for i in (n / 2..n).filter(|i| i % 2 == 0) {
            let r = self.nodes[i];
            if v[i] > v[i / 2] * (-r / 4.0).exp() {
                return Err(format!("tail bound fails at r = {r}"));
            }
        }
        Ok(())
    }

    /// Plain-text form: one header line, then `r R` pairs with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# radial-profile p={} r_max={:.16e} n_r={} residual={:.16e} iterations={}\n",
            self.p,
            self.r_max,
            self.n_r(),
            self.residual,
            self.iterations
        );
        for (r, v) in self.nodes.iter().zip(&self.values) {
            let _ = writeln!(s, "{r:.16e} {v:.16e}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty profile file".into()))?;
        let header = header
            .strip_prefix("# radial-profile")
            .ok_or_else(|| Error::Parse("missing radial-profile header".into()))?;
        let mut p = None;
        let mut r_max = None;
        let mut n_r = None;
        let mut residual = None;
        let mut iterations = 0;
        for tok in header.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header token '{tok}'")))?;
            let bad = |_| Error::Parse(format!("bad value for {k}: '{v}'"));
            match k {
                "p" => p = Some(v.parse::<u32>().map_err(|e| bad(e.to_string()))?),
                "r_max" => r_max = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "n_r" => n_r = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "residual" => residual = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "iterations" => iterations = v.parse::<usize>().map_err(|e| bad(e.to_string()))?,
                _ => return Err(Error::Parse(format!("unknown header key '{k}'"))),
            }
        }
        let missing = |k: &str| Error::Parse(format!("header lacks {k}"));
        let (p, r_max, n_r) = (p.ok_or(missing("p"))?, r_max.ok_or(missing("r_max"))?, n_r.ok_or(missing("n_r"))?);
        let mut nodes = Vec::with_capacity(n_r + 1);
        let mut values = Vec::with_capacity(n_r + 1);
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| Error::Parse(format!("line {}: missing column", ln + 2)))?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 2)))
            };
            nodes.push(parse(it.next())?);
            values.push(parse(it.next())?);
        }
        if nodes.len() != n_r + 1 {
            return Err(Error::Parse(format!("expected {} rows, found {}", n_r + 1, nodes.len())));
        }
        Ok(Self {
            p,
            r_max,
            nodes,
            values,
            residual: residual.ok_or(missing("residual"))?,
            stabilizer: 1.0,
            iterations,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Composite-trapezoid mass `4π ∫₀^{r_max} R² r² dr`.
pub fn radial_mass(profile: &RadialProfile) -> f64 {
    let sq: Vec<f64> = profile.values.iter().map(|v| v * v).collect();
    profile.volume_integral(&sq)
}
