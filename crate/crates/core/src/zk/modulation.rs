//! Modulation decomposition `ε(y) = c² u(c y + a) − Q(y)` and the
//! parameter-ODE diagnostics built on it.

use serde::{Deserialize, Serialize};

use super::{PeriodicGroundState, SimState};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ModulationState {
    pub t: f64,
    pub c: f64,
    pub a: [f64; 3],
    /// Remainder on the box nodes.
    pub eps: Vec<f64>,
    /// `‖ε‖_{L²}`.
    pub b: f64,
    pub newton_iters: usize,
    /// `(⟨ε, ∂xQ⟩, ⟨ε, ∂yQ⟩, ⟨ε, ∂zQ⟩, ⟨ε, Q²⟩)`.
    pub ortho_residuals: [f64; 4],
}

pub const DECOMPOSE_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 50;

/// Newton iteration for `(c, a)` enforcing `⟨ε, ∇Q⟩ = ⟨ε, Q²⟩ = 0`.
///
/// The conditions are solved in the physical frame, where they read
/// `c⁻¹⟨u − Q_{c,a}, w((x − a)/c)⟩ = 0` for each test function `w`, with the
/// dealiased template `Q_{c,a}` built exactly as [`init_soliton`](super::init_soliton)
/// builds it. Exact family members therefore decompose with `ε = 0`.
/// The returned `ε` is `c² w(c y + a)` for `w = u − Q_{c,a}`, interpolated.
pub fn decompose(state: &SimState, q: &PeriodicGroundState, guess: (f64, [f64; 3])) -> Result<ModulationState> {
    let grid = &state.grid;
    if grid.domain != q.grid.domain {
        return Err(Error::GridMismatch("state and ground state use different boxes".into()));
    }
    let dom = grid.domain;
    let grad_hat: [Vec<_>; 3] = [0, 1, 2].map(|d| grid.derivative(&q.q_hat, d));
    let u = state.field();

    let (mut c, mut a) = guess;
    for iter in 0..=MAX_NEWTON {
        if !(c > 0.0 && c.is_finite() && a.iter().all(|v| v.is_finite())) {
            return Err(Error::NotConverged { iterations: iter, residual: f64::NAN });
        }
        let s = super::scaled_points(dom, c, a);
        let pref = [&s[0][..], &s[1][..], &s[2][..]];
        let mut t_hat = grid.forward(&super::family_member(q, c, a));
        grid.apply_mask(&mut t_hat);
        let template = grid.inverse(&t_hat);
        let w: Vec<f64> = u.iter().zip(&template).map(|(x, y)| x - y).collect();
        let qs = q.eval_tensor(pref);
        let gs: [Vec<f64>; 3] = [0, 1, 2].map(|d| grid.eval_tensor(&grad_hat[d], pref));
        let q2: Vec<f64> = qs.iter().map(|v| v * v).collect();
        let tests: [&[f64]; 4] = [&gs[0], &gs[1], &gs[2], &q2];
        let g = tests.map(|t| grid.inner(&w, t) / c);
        let worst = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if worst < DECOMPOSE_TOL {
            let ys: [Vec<f64>; 3] = [0, 1, 2].map(|d| dom.coords(d).iter().map(|y| c * y + a[d]).collect());
            let w_hat = grid.forward(&w);
            let c2 = c * c;
            let eps: Vec<f64> = grid.eval_tensor(&w_hat, [&ys[0], &ys[1], &ys[2]]).iter().map(|v| c2 * v).collect();
            // ‖ε‖² = c ‖w‖² by the change of variables
            let b = (c * grid.inner(&w, &w)).sqrt();
            return Ok(ModulationState { t: state.t, c, a, eps, b, newton_iters: iter, ortho_residuals: g });
        }
        if iter == MAX_NEWTON {
            return Err(Error::NotConverged { iterations: iter, residual: worst });
        }
        // ∂c Q_{c,a} = −c⁻³ (ΛQ)(S), ∂a Q_{c,a} = −c⁻³ (∇Q)(S); the terms
        // ⟨w, ∂ test⟩ are dropped since they vanish with w
        let mut lam = vec![0.0; qs.len()];
        let mut idx = 0;
        for z in &s[2] {
            for y in &s[1] {
                for x in &s[0] {
                    lam[idx] = 2.0 * qs[idx] + x * gs[0][idx] + y * gs[1][idx] + z * gs[2][idx];
                    idx += 1;
                }
            }
        }
        let cols: [&[f64]; 4] = [&lam, &gs[0], &gs[1], &gs[2]];
        let scale = c.powi(-4);
        let mut jac = [[0.0; 4]; 4];
        for (r, t) in tests.iter().enumerate() {
            for (col, f) in cols.iter().enumerate() {
                jac[r][col] = scale * grid.inner(f, t);
            }
        }
        let step = solve4(jac, g)?;
        c -= step[0];
        for d in 0..3 {
            a[d] -= step[d + 1];
        }
    }
    unreachable!("loop returns on the last iteration")
}

/// Gaussian elimination with partial pivoting on a 4×4 system.
fn solve4(mut m: [[f64; 4]; 4], mut rhs: [f64; 4]) -> Result<[f64; 4]> {
    let scale = m.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        if m[piv][col].abs() <= 1e-14 * scale {
            return Err(Error::Linalg("singular modulation Jacobian".into()));
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..4 {
            let f = m[r][col] / m[col][col];
            for k in col..4 {
                m[r][k] -= f * m[col][k];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 4];
    for r in (0..4).rev() {
        let s: f64 = (r + 1..4).map(|k| m[r][k] * x[k]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    Ok(x)
}

/// Vectors appearing in the modulation equations, with `𝓛 = 1 − Δ − 2Q`.
#[derive(Clone, Debug)]
pub struct LinearizedVectors {
    /// `𝓛 ∂x(Q²)`.
    pub f_vec: Vec<f64>,
    /// `⟨ΛQ, Q²⟩ = ∫Q³`, the denominator the modulation equations produce.
    pub lambda_q_q2: f64,
    /// `⟨ΛQ, Q⟩ = ‖Q‖²/2`, the alternative normalization.
    pub lambda_q_q: f64,
    /// `𝓛 Q_xx, 𝓛 Q_xy, 𝓛 Q_xz`.
    pub g_vec: [Vec<f64>; 3],
    /// `‖Q_x‖², ‖Q_y‖², ‖Q_z‖²`.
    pub grad_norms_sq: [f64; 3],
}

pub fn linearized_vectors(q: &PeriodicGroundState) -> LinearizedVectors {
    let grid = &q.grid;
    let ell = |f: &[f64]| -> Vec<f64> {
        let f_hat = grid.forward(f);
        let mut lap = f_hat.clone();
        grid.for_each_mode(|i, kx, ky, kz| lap[i] *= -(kx * kx + ky * ky + kz * kz));
        let lap = grid.inverse(&lap);
        f.iter().zip(&lap).zip(&q.values).map(|((v, l), qv)| v - l - 2.0 * qv * v).collect()
    };
    let q2: Vec<f64> = q.values.iter().map(|v| v * v).collect();
    let dq2 = grid.inverse(&grid.derivative(&grid.forward(&q2), 0));
    let qx_hat = grid.derivative(&q.q_hat, 0);
    let g_vec = [0, 1, 2].map(|d| ell(&grid.inverse(&grid.derivative(&qx_hat, d))));
    let lambda_q = lambda_applied(q);
    LinearizedVectors {
        f_vec: ell(&dq2),
        lambda_q_q2: grid.inner(&lambda_q, &q2),
        lambda_q_q: grid.inner(&lambda_q, &q.values),
        g_vec,
        grad_norms_sq: [0, 1, 2].map(|d| grid.inner(&q.grad[d], &q.grad[d])),
    }
}

/// `ΛQ = 2Q + x·∇Q`.
pub fn lambda_applied(q: &PeriodicGroundState) -> Vec<f64> {
    let dom = q.grid.domain;
    let mut out = Vec::with_capacity(q.values.len());
    let mut idx = 0;
    for z in dom.coords(2) {
        for y in dom.coords(1) {
            for x in dom.coords(0) {
                out.push(2.0 * q.values[idx] + x * q.grad[0][idx] + y * q.grad[1][idx] + z * q.grad[2][idx]);
                idx += 1;
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeResidual {
    pub t: f64,
    pub c_prime: f64,
    pub a_prime: [f64; 3],
    /// `|c²c′ − ⟨ε, 𝓛∂x(Q²)⟩/⟨ΛQ, Q²⟩|`.
    pub r_c: f64,
    /// Same with `⟨ΛQ, Q⟩` in the denominator.
    pub r_c_alt: f64,
    /// `|c²(a′ − c⁻² e_x) − ⟨ε, 𝓛Q_{x·}⟩/‖Q_·‖²|` per axis.
    pub r_a: [f64; 3],
    pub b_sq: f64,
}

/// Centered differences of the sampled parameters against the projected equations.
pub fn parameter_ode_residual(traj: &[ModulationState], vecs: &LinearizedVectors, cell_volume: f64) -> Result<Vec<OdeResidual>> {
    if traj.len() < 3 {
        return Err(Error::InvalidArgument("need at least three samples to difference".into()));
    }
    let h = traj[1].t - traj[0].t;
    if !(h > 0.0) || traj.windows(2).any(|w| ((w[1].t - w[0].t) - h).abs() > 1e-9 * h.max(1.0)) {
        return Err(Error::InvalidArgument("trajectory must be uniformly sampled in time".into()));
    }
    let inner = |a: &[f64], b: &[f64]| crate::cheb::dot(a, b) * cell_volume;
    let mut out = Vec::with_capacity(traj.len() - 2);
    for w in traj.windows(3) {
        let (prev, m, next) = (&w[0], &w[1], &w[2]);
        let c_prime = (next.c - prev.c) / (2.0 * h);
        let a_prime = [0, 1, 2].map(|d| (next.a[d] - prev.a[d]) / (2.0 * h));
        let c2 = m.c * m.c;
        let proj_f = inner(&m.eps, &vecs.f_vec);
        let r_c = (c2 * c_prime - proj_f / vecs.lambda_q_q2).abs();
        let r_c_alt = (c2 * c_prime - proj_f / vecs.lambda_q_q).abs();
        let r_a = [0, 1, 2].map(|d| {
            let drift = if d == 0 { a_prime[0] - 1.0 / c2 } else { a_prime[d] };
            (c2 * drift - inner(&m.eps, &vecs.g_vec[d]) / vecs.grad_norms_sq[d]).abs()
        });
        out.push(OdeResidual { t: m.t, c_prime, a_prime, r_c, r_c_alt, r_a, b_sq: m.b * m.b });
    }
    Ok(out)
}
