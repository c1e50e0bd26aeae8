//! Lifting the radial profile onto a tensor grid.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{tensor_inner, TensorGrid};
use crate::pchip::Pchip;
use crate::radial::{radial_mass, RadialProfile};

#[derive(Clone, Debug)]
pub struct GroundStateField {
    pub grid: Arc<TensorGrid>,
    /// `Q` at every grid node.
    pub values: Vec<f64>,
    /// `∂x Q` by mapped spectral differentiation of `values`.
    pub values_dx: Vec<f64>,
    /// `|M[Q] − M[R]|`: tensor-quadrature mass against the radial trapezoid mass.
    pub interp_error: f64,
}

/// Interpolates `R` at `r = |x|` with a monotone cubic and differentiates along x.
///
/// Fails if any grid node lies beyond the profile's `r_max`.
pub fn lift_to_tensor(profile: &RadialProfile, grid: Arc<TensorGrid>) -> Result<GroundStateField> {
    let interp = Pchip::new(profile.nodes.clone(), profile.values.clone())?;
    let corner = grid.axes.iter().map(|ax| ax.half_width * ax.half_width).sum::<f64>().sqrt();
    if corner > profile.r_max {
        return Err(Error::Extrapolation { radius: corner, r_max: profile.r_max });
    }
    let mut values = Vec::with_capacity(grid.len());
    for z in &grid.axes[2].x {
        for y in &grid.axes[1].x {
            for x in &grid.axes[0].x {
                let r = (x * x + y * y + z * z).sqrt().min(profile.r_max);
                values.push(interp.eval(r).expect("radius checked against r_max"));
            }
        }
    }
    let values_dx = grid.diff(&values, 0);
    let tensor_mass = tensor_inner(&values, &values, &grid)?;
    let interp_error = (tensor_mass - radial_mass(profile)).abs();
    Ok(GroundStateField { grid, values, values_dx, interp_error })
}

impl GroundStateField {
    /// The field `Q ≡ 0` on `grid`, used for free-operator checks.
    pub fn zero(grid: Arc<TensorGrid>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n], values_dx: vec![0.0; n], interp_error: 0.0 }
    }

    pub fn mass(&self) -> f64 {
        tensor_inner(&self.values, &self.values, &self.grid).expect("field matches its grid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::{solve_radial, RadialConfig};

    fn profile() -> RadialProfile {
        solve_radial(&RadialConfig { r_max: 20.0, n_r: 2000, ..Default::default() }).unwrap()
    }

    #[test]
    fn origin_node_and_symmetry() {
        let prof = profile();
        let grid = Arc::new(TensorGrid::cube(10, 4.0, 8.0).unwrap());
        let q = lift_to_tensor(&prof, grid.clone()).unwrap();
        assert_eq!(q.values[grid.flat(5, 5, 5)], prof.values[0]);
        for k in 0..11 {
            for j in 0..11 {
                for i in 0..11 {
                    let a = q.values[grid.flat(i, j, k)];
                    let b = q.values[grid.flat(k, j, i)];
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
        let (lo, hi) = (0.0, prof.values[0]);
        assert!(q.values.iter().all(|&v| v >= lo && v <= hi));
        // Q_x odd in x
        let flipped = grid.flip_x(&q.values_dx);
        for (a, b) in q.values_dx.iter().zip(&flipped) {
            assert!((a + b).abs() < 1e-10);
        }
    }

    #[test]
    fn extrapolation_is_rejected() {
        let prof = profile();
        let grid = Arc::new(TensorGrid::cube(6, 4.0, 12.0).unwrap());
        assert!(matches!(lift_to_tensor(&prof, grid), Err(Error::Extrapolation { .. })));
    }

    #[test]
    fn interpolation_error_shrinks_with_degree() {
        let prof = profile();
        let errs: Vec<f64> = [16, 21, 32]
            .iter()
            .map(|&n| {
                let g = Arc::new(TensorGrid::cube(n, 5.0, 10.0).unwrap());
                lift_to_tensor(&prof, g).unwrap().interp_error
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }
}
