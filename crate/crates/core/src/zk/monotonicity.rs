//! Weighted masses `I±` in the soliton frame.
//!
//! ```text
//! I±(t) = ∫ φ±( cos θ (x − r + λ(t − t0)) + sin θ √(1 + y² + z²) ) u²(x + a(t), t) dx
//! φ+(s) = (2/π) arctan(e^{s/K}),  φ−(s) = φ+(−s)
//! ```

use serde::{Deserialize, Serialize};

use super::SimState;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonotonicityParams {
    pub theta: f64,
    pub r: f64,
    pub t0: f64,
    pub lambda: f64,
    /// Weight width.
    pub k: f64,
}

impl Default for MonotonicityParams {
    fn default() -> Self {
        Self { theta: 0.0, r: 5.0, t0: 0.0, lambda: 0.5, k: 8.0 }
    }
}

impl MonotonicityParams {
    /// Smallest `δ` compatible with the width, `δ = 4/K`.
    pub fn delta(&self) -> f64 {
        4.0 / self.k
    }

    pub fn validate(&self) -> Result<()> {
        let delta = self.delta();
        if !(self.k > 0.0) {
            return Err(Error::InvalidArgument("weight width K must be positive".into()));
        }
        if !(0.0..=std::f64::consts::FRAC_PI_3 - delta).contains(&self.theta) {
            return Err(Error::InvalidArgument(format!(
                "angle {} outside [0, π/3 − δ] with δ = 4/K = {delta}",
                self.theta
            )));
        }
        if !(delta..=1.0 - delta).contains(&self.lambda) {
            return Err(Error::InvalidArgument(format!("speed {} outside [δ, 1 − δ] with δ = {delta}", self.lambda)));
        }
        Ok(())
    }
}

pub fn phi_plus(s: f64, k: f64) -> f64 {
    std::f64::consts::FRAC_2_PI * (s / k).exp().atan()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicitySample {
    pub t: f64,
    pub params: MonotonicityParams,
    pub i_plus: f64,
    pub i_minus: f64,
    /// False when the weighted density is not negligible on the box faces.
    pub valid: bool,
}

/// Face density threshold for the validity flag.
pub const FACE_TOL: f64 = 1e-8;

pub fn monotonicity(state: &SimState, center: [f64; 3], params: &MonotonicityParams) -> Result<MonotonicitySample> {
    params.validate()?;
    let grid = &state.grid;
    let dom = grid.domain;
    // u(x + a): translate by −a
    let shifted = grid.inverse(&grid.translate(&state.u_hat, [-center[0], -center[1], -center[2]]));
    let (ct, st) = (params.theta.cos(), params.theta.sin());
    let drift = params.lambda * (state.t - params.t0);
    let (xs, ys, zs) = (dom.coords(0), dom.coords(1), dom.coords(2));
    let [nx, ny, nz] = dom.n;
    let (mut ip, mut im, mut face) = (0.0, 0.0, 0.0f64);
    let mut idx = 0;
    for (k, z) in zs.iter().enumerate() {
        for (j, y) in ys.iter().enumerate() {
            let cone = st * (1.0 + y * y + z * z).sqrt();
            for (i, x) in xs.iter().enumerate() {
                let u2 = shifted[idx] * shifted[idx];
                let s = ct * (x - params.r + drift) + cone;
                let wp = phi_plus(s, params.k);
                let wm = phi_plus(-s, params.k);
                ip += wp * u2;
                im += wm * u2;
                if i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1 {
                    face = face.max(wp.max(wm) * u2);
                }
                idx += 1;
            }
        }
    }
    let dv = dom.cell_volume();
    Ok(MonotonicitySample { t: state.t, params: *params, i_plus: ip * dv, i_minus: im * dv, valid: face < FACE_TOL })
}
