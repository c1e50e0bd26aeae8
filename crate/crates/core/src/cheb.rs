//! Chebyshev–Gauss–Lobatto collocation on a sinh-mapped interval.
//!
//! The reference variable `ξ ∈ [-1, 1]` is mapped onto `x ∈ [-L, L]` by
//! `x(ξ) = L sinh(aξ) / sinh(a)`, which clusters nodes near the origin where
//! the ground state lives. Derivatives follow the chain rule
//! `∂x = (1/x_ξ) ∂ξ` and
//! `∂xx = (1/x_ξ²) ∂ξξ + (∂ξ(1/x_ξ) / x_ξ) ∂ξ`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense square matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "matvec length mismatch");
        (0..self.n).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn matmul(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    /// Sub-matrix keeping rows and columns `lo..hi`.
    pub fn block(&self, lo: usize, hi: usize) -> SquareMatrix {
        SquareMatrix::from_fn(hi - lo, |i, j| self[(i + lo, j + lo)])
    }
}

impl std::ops::Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// CGL nodes `ξ_j = cos(jπ/N)`, `j = 0..=N`, in descending order.
///
/// Evaluated as `sin(π(N − 2j)/(2N))` so that `ξ_{N−j} = −ξ_j` holds bitwise.
pub fn cgl_nodes(n: usize) -> Vec<f64> {
    assert!(n >= 1, "CGL nodes need N >= 1");
    let nf = n as f64;
    (0..=n)
        .map(|j| {
            let m = n as i64 - 2 * j as i64;
            if m == 0 {
                0.0
            } else {
                (PI * m as f64 / (2.0 * nf)).sin()
            }
        })
        .collect()
}

/// Unmapped Chebyshev differentiation matrix on the CGL nodes.
///
/// Off-diagonal entries use the trigonometric form of `ξ_j − ξ_k`; the lower
/// half is filled from the centro-antisymmetry `D[N−j, N−k] = −D[j, k]` and
/// diagonals come from the negative-sum rule.
pub fn cheb_diff(n: usize) -> SquareMatrix {
    assert!(n >= 1, "differentiation matrix needs N >= 1");
    let nf = n as f64;
    let c = |j: usize| if j == 0 || j == n { 2.0 } else { 1.0 };
    let sign = |j: usize| if j % 2 == 0 { 1.0 } else { -1.0 };
    let mut d = SquareMatrix::zeros(n + 1);
    let half = n / 2;
    for j in 0..=half {
        for k in 0..=n {
            if j == k {
                continue;
            }
            // ξ_j − ξ_k = 2 sin((j+k)π/2N) sin((k−j)π/2N)
            let diff = 2.0
                * ((j + k) as f64 * PI / (2.0 * nf)).sin()
                * ((k as f64 - j as f64) * PI / (2.0 * nf)).sin();
            d[(j, k)] = c(j) / c(k) * sign(j + k) / diff;
        }
    }
    for j in half + 1..=n {
        for k in 0..=n {
            if j != k {
                d[(j, k)] = -d[(n - j, n - k)];
            }
        }
    }
    for j in 0..=n {
        let mut s = 0.0;
        for k in 0..=n {
            if k != j {
                s += d[(j, k)];
            }
        }
        d[(j, j)] = -s;
    }
    d
}

/// One mapped Chebyshev axis with its derivative matrices and quadrature.
#[derive(Clone, Debug)]
pub struct MappedAxis {
    pub n: usize,
    pub a: f64,
    pub half_width: f64,
    pub xi: Vec<f64>,
    pub x: Vec<f64>,
    pub jac: Vec<f64>,
    pub d1: SquareMatrix,
    pub d2: SquareMatrix,
    pub weights: Vec<f64>,
}

/// Serializable description of an axis, enough to rebuild it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub n: usize,
    pub a: f64,
    pub half_width: f64,
}

/// Builds the mapped axis for degree `n`, steepness `a` and half-width `half_width`.
pub fn map_axis(n: usize, a: f64, half_width: f64) -> Result<MappedAxis> {
    if n < 1 {
        return Err(Error::InvalidArgument("axis degree must be >= 1".into()));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidArgument(format!("mapping steepness must be positive, got {a}")));
    }
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::InvalidArgument(format!("half-width must be positive, got {half_width}")));
    }
    let xi = cgl_nodes(n);
    let sa = a.sinh();
    let x: Vec<f64> = xi.iter().map(|&s| half_width * ((a * s).sinh() / sa)).collect();
    let jac: Vec<f64> = xi.iter().map(|&s| half_width * a * (a * s).cosh() / sa).collect();
    let jac2: Vec<f64> = xi.iter().map(|&s| half_width * a * a * (a * s).sinh() / sa).collect();

    let dxi = cheb_diff(n);
    let dxi2 = dxi.matmul(&dxi);
    let d1 = SquareMatrix::from_fn(n + 1, |i, j| dxi[(i, j)] / jac[i]);
    // ∂ξ(1/x_ξ) · (1/x_ξ) = −x_ξξ / x_ξ³
    let d2 = SquareMatrix::from_fn(n + 1, |i, j| {
        dxi2[(i, j)] / (jac[i] * jac[i]) - jac2[i] / jac[i].powi(3) * dxi[(i, j)]
    });

    let nf = n as f64;
    let weights = xi
        .iter()
        .zip(&jac)
        .enumerate()
        .map(|(j, (&s, &jx))| {
            let factor = if j == 0 || j == n { PI / (2.0 * nf) } else { PI / nf };
            factor * (1.0 - s * s).max(0.0).sqrt() * jx
        })
        .collect();

    Ok(MappedAxis { n, a, half_width, xi, x, jac, d1, d2, weights })
}

impl MappedAxis {
    pub fn spec(&self) -> AxisSpec {
        AxisSpec { n: self.n, a: self.a, half_width: self.half_width }
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature of nodal values over `[-L, L]`.
    ///
    /// Mirror nodes are summed pairwise first, so integrands that are odd on
    /// the node set integrate to exactly zero.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.len(), "integrand length mismatch");
        let n = self.n;
        let mut s = 0.0;
        for j in 0..(n + 1) / 2 {
            s += self.weights[j] * f[j] + self.weights[n - j] * f[n - j];
        }
        if n % 2 == 0 {
            s += self.weights[n / 2] * f[n / 2];
        }
        s
    }
}

/// Quadrature weights of an axis (`Σ w_j f(x_j) ≈ ∫ f dx` on `[-L, L]`).
pub fn quad_weights(axis: &MappedAxis) -> Vec<f64> {
    axis.weights.clone()
}
