//! The doubled virial operator `M = 2(B + P)` on the interior collocation nodes.
//!
//! ```text
//! M v = −3 ∂xx v − ∂yy v − ∂zz v + V v + s Σ_k g_k ⟨f_k, v⟩_w
//! ```
//!
//! with homogeneous Dirichlet conditions (boundary rows and columns removed),
//! the pairs `(g, f) ∈ {(Q Q_x, x Q), (x Q, Q Q_x)}` and `s = factor / ⟨Q, Q⟩`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cheb::SquareMatrix;
use crate::error::{Error, Result};
use crate::grid::{apply_along_axis_into, weighted_inner, GridManifest, TensorGrid};
use crate::lift::GroundStateField;

pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Which diagonal potential to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialVariant {
    /// `V = 1 − 2Q − 2x Q_x`, the doubling of `1/2 − (xQ)_x`.
    Derived,
    /// `V = 1 − 3Q² − 6x Q Q_x`, the diagonal as printed in the matrix formula.
    PaperMatrix,
}

impl PotentialVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Derived => "derived",
            Self::PaperMatrix => "paper-matrix",
        }
    }
}

impl fmt::Display for PotentialVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PotentialVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "derived" => Ok(Self::Derived),
            "paper-matrix" => Ok(Self::PaperMatrix),
            other => Err(Error::Parse(format!("unknown potential variant '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProjectionPair {
    pub g: Vec<f64>,
    pub f: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct VirialOperator {
    pub grid: Arc<TensorGrid>,
    pub variant: PotentialVariant,
    /// Potential on the interior nodes.
    pub potential: Vec<f64>,
    /// Projection pairs restricted to the interior.
    pub pairs: Vec<ProjectionPair>,
    /// Overall factor in front of `P` (2 for the doubled operator).
    pub projection_factor: f64,
    /// `⟨Q, Q⟩` on the full grid.
    pub q_norm_sq: f64,
    /// Continuous-spectrum edge of the doubled operator.
    pub threshold: f64,
    /// Interpolation error of the lifted ground state the operator was built from.
    pub interp_error: f64,
    weights: Vec<f64>,
    d2: [SquareMatrix; 3],
    shape: [usize; 3],
}

/// Reproducibility stamp for reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorManifest {
    pub variant: PotentialVariant,
    pub grid: GridManifest,
    pub projection_factor: f64,
    pub projection_scale: f64,
    pub q_norm_sq: f64,
}

pub fn build(grid: Arc<TensorGrid>, q: &GroundStateField, variant: PotentialVariant) -> Result<VirialOperator> {
    build_with_factor(grid, q, variant, 2.0)
}

/// Builds the operator with an explicit projection factor (`2` doubles `P` along with `B`).
pub fn build_with_factor(
    grid: Arc<TensorGrid>,
    q: &GroundStateField,
    variant: PotentialVariant,
    projection_factor: f64,
) -> Result<VirialOperator> {
    if !grid.same_as(&q.grid) || q.values.len() != grid.len() || q.values_dx.len() != grid.len() {
        return Err(Error::GridMismatch("ground state was lifted on a different grid".into()));
    }
    let shape = grid.interior_shape();
    if shape.contains(&0) {
        return Err(Error::InvalidArgument("grid has no interior nodes".into()));
    }
    let xs = grid.tabulate(|x, _, _| x);
    let (qv, qx) = (&q.values, &q.values_dx);
    let full_potential: Vec<f64> = (0..grid.len())
        .map(|i| match variant {
            PotentialVariant::Derived => 1.0 - 2.0 * qv[i] - 2.0 * xs[i] * qx[i],
            PotentialVariant::PaperMatrix => 1.0 - 3.0 * qv[i] * qv[i] - 6.0 * xs[i] * qv[i] * qx[i],
        })
        .collect();
    let q_qx: Vec<f64> = qv.iter().zip(qx).map(|(a, b)| a * b).collect();
    let x_q: Vec<f64> = qv.iter().zip(&xs).map(|(a, b)| a * b).collect();
    let q_norm_sq = q.mass();

    let pairs = vec![
        ProjectionPair { g: grid.restrict(&q_qx), f: grid.restrict(&x_q) },
        ProjectionPair { g: grid.restrict(&x_q), f: grid.restrict(&q_qx) },
    ];
    let d2 = [0, 1, 2].map(|a| {
        let ax = &grid.axes[a];
        ax.d2.block(1, ax.n)
    });
    Ok(VirialOperator {
        potential: grid.restrict(&full_potential),
        weights: grid.interior_weights(),
        grid,
        variant,
        pairs,
        projection_factor,
        q_norm_sq,
        threshold: 1.0,
        interp_error: q.interp_error,
        d2,
        shape,
    })
}

impl VirialOperator {
    pub fn dim(&self) -> usize {
        self.potential.len()
    }

    pub fn interior_shape(&self) -> [usize; 3] {
        self.shape
    }

    /// Interior quadrature weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Interior second-derivative blocks per axis.
    pub fn d2_blocks(&self) -> &[SquareMatrix; 3] {
        &self.d2
    }

    /// Coefficient in front of each rank-one term (`factor / ⟨Q, Q⟩`, or 0 for `Q ≡ 0`).
    pub fn projection_scale(&self) -> f64 {
        if self.q_norm_sq > 0.0 {
            self.projection_factor / self.q_norm_sq
        } else {
            0.0
        }
    }

    pub fn manifest(&self) -> OperatorManifest {
        OperatorManifest {
            variant: self.variant,
            grid: self.grid.manifest(),
            projection_factor: self.projection_factor,
            projection_scale: self.projection_scale(),
            q_norm_sq: self.q_norm_sq,
        }
    }

    /// Weighted inner product over the interior nodes.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        weighted_inner(u, v, &self.weights).expect("interior-sized vectors")
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        self.inner(v, v).sqrt()
    }

    /// Matrix-free `M v` for an interior field `v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::ShapeMismatch { expected: self.dim(), got: v.len() });
        }
        let mut out: Vec<f64> = v.iter().zip(&self.potential).map(|(a, b)| a * b).collect();
        self.add_differential(v, &mut out);
        let s = self.projection_scale();
        if s != 0.0 {
            for pair in &self.pairs {
                let c = s * self.inner(&pair.f, v);
                for (o, g) in out.iter_mut().zip(&pair.g) {
                    *o += c * g;
                }
            }
        }
        Ok(out)
    }

    /// `out += (−3 D2x − D2y − D2z) v`.
    pub(crate) fn add_differential(&self, v: &[f64], out: &mut [f64]) {
        for (axis, coef) in [(0, -3.0), (1, -1.0), (2, -1.0)] {
            apply_along_axis_into(&self.d2[axis], coef, v, self.shape, axis, out);
        }
    }

    /// Explicit matrix of the operator (row-major `dim × dim`).
    pub fn to_dense(&self) -> Result<faer::Mat<f64>> {
        self.to_dense_capped(DEFAULT_DENSE_CAP)
    }

    pub fn to_dense_capped(&self, cap: usize) -> Result<faer::Mat<f64>> {
        let n = self.dim();
        if n > cap {
            return Err(Error::CapExceeded { dim: n, cap });
        }
        if self.shape.iter().any(|&m| m < 2) {
            return Err(Error::InvalidArgument(format!(
                "interior shape {:?} is degenerate; refusing to densify",
                self.shape
            )));
        }
        let [nx, ny, nz] = self.shape;
        let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
        let mut m = faer::Mat::<f64>::zeros(n, n);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let row = idx(i, j, k);
                    for l in 0..nx {
                        m[(row, idx(l, j, k))] += -3.0 * self.d2[0][(i, l)];
                    }
                    for l in 0..ny {
                        m[(row, idx(i, l, k))] += -self.d2[1][(j, l)];
                    }
                    for l in 0..nz {
                        m[(row, idx(i, j, l))] += -self.d2[2][(k, l)];
                    }
                    m[(row, row)] += self.potential[row];
                }
            }
        }
        // P = g (wᵀ .* fᵀ) per pair
        let s = self.projection_scale();
        if s != 0.0 {
            for pair in &self.pairs {
                for r in 0..n {
                    let gr = s * pair.g[r];
                    if gr == 0.0 {
                        continue;
                    }
                    for c in 0..n {
                        m[(r, c)] += gr * (self.weights[c] * pair.f[c]);
                    }
                }
            }
        }
        Ok(m)
    }

    /// Reverses x on an interior field.
    pub fn flip_x(&self, v: &[f64]) -> Vec<f64> {
        crate::grid::flip_x(v, self.shape)
    }

    /// `min(‖v − flip v‖, ‖v + flip v‖) / ‖v‖` and the sign (+1 even, −1 odd).
    pub fn parity(&self, v: &[f64]) -> (f64, i8) {
        let f = self.flip_x(v);
        let n = self.norm(v).max(f64::MIN_POSITIVE);
        let even: Vec<f64> = v.iter().zip(&f).map(|(a, b)| a - b).collect();
        let odd: Vec<f64> = v.iter().zip(&f).map(|(a, b)| a + b).collect();
        let (e, o) = (self.norm(&even) / n, self.norm(&odd) / n);
        if e <= o {
            (e, 1)
        } else {
            (o, -1)
        }
    }
}
