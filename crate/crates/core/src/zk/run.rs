//! A complete simulation with all diagnostics sampled on a fixed time grid.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::modulation::{decompose, linearized_vectors, parameter_ode_residual, ModulationState, OdeResidual};
use super::monotonicity::{monotonicity, phi_plus, MonotonicityParams};
use super::{conserved, init_soliton, periodic_ground_state, PeriodicBox, Perturbation, SimState, Spectral, Stepper};
use crate::error::{Error, Result};
use crate::radial::RadialProfile;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub n: [usize; 3],
    pub len: [f64; 3],
    pub dt: f64,
    pub t_end: f64,
    /// Time between diagnostic samples; a multiple of `dt`.
    pub sample_every: f64,
    pub c0: f64,
    pub a0: [f64; 3],
    pub perturbation: Perturbation,
    /// `t0` is ignored for the running functional, which always uses `t0 = t`.
    pub monotonicity: MonotonicityParams,
    /// Blow-up threshold as a multiple of the initial sup norm.
    pub sup_factor: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            n: [48; 3],
            len: [40.0; 3],
            dt: 1e-3,
            t_end: 5.0,
            sample_every: 0.1,
            c0: 1.0,
            a0: [0.0; 3],
            perturbation: Perturbation::None,
            monotonicity: MonotonicityParams::default(),
            sup_factor: 10.0,
        }
    }
}

/// One line of the trajectory log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    #[serde(rename = "M")]
    pub mass: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    #[serde(rename = "I_x")]
    pub i_x: f64,
    pub c: f64,
    pub a_x: f64,
    pub a_y: f64,
    pub a_z: f64,
    pub b: f64,
    #[serde(rename = "I_plus")]
    pub i_plus: f64,
    #[serde(rename = "I_minus")]
    pub i_minus: f64,
    /// Solution tails below the face tolerance in the soliton frame.
    pub tail_valid: bool,
    /// Weighted density negligible on the faces.
    pub weight_valid: bool,
    /// `sup |u(t) − u(0)(x − t c0⁻² e_x)|`.
    pub shape_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSummary {
    pub steps: usize,
    pub t_final: f64,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub line_integral_drift: f64,
    pub max_imag_leak: f64,
    pub b0: f64,
    pub max_b: f64,
    pub final_c: f64,
    pub final_a: [f64; 3],
    pub max_shape_error: f64,
    pub max_ortho_residual: f64,
    /// Samples where the running `I+` rose more than `1e-3·M` above an earlier value.
    pub monotonicity_violations: usize,
    /// Largest rise of the running `I+` over any earlier sample, relative to `M`.
    pub max_i_plus_rise: f64,
    /// `max (I+(t0) − I+(t−1)) e^{δr}` over windows in the first half of the run.
    pub fitted_c_first_half: f64,
    /// The same over windows in the second half.
    pub fitted_c_second_half: f64,
    /// `max R/b²` over ODE samples (absent when `b` is at round-off level).
    pub ode_constant: Option<f64>,
    pub max_ode_residual: f64,
    pub all_valid: bool,
    pub halted: Option<String>,
}

pub struct EvolutionRun {
    pub rows: Vec<TrajectoryRow>,
    pub modulation: Vec<ModulationState>,
    pub ode: Vec<OdeResidual>,
    pub summary: EvolutionSummary,
    /// Last state that passed every check.
    pub final_state: SimState,
}

/// Runs the configured simulation. Setup problems are errors; failures during
/// stepping stop the run and are reported in `summary.halted`.
pub fn run_evolution(cfg: &EvolveConfig, profile: &RadialProfile) -> Result<EvolutionRun> {
    cfg.monotonicity.validate()?;
    let steps_per_sample = (cfg.sample_every / cfg.dt).round();
    if !(steps_per_sample >= 1.0) || (steps_per_sample * cfg.dt - cfg.sample_every).abs() > 1e-9 * cfg.sample_every {
        return Err(Error::InvalidArgument("sample_every must be a positive multiple of dt".into()));
    }
    if !(cfg.t_end > 0.0) {
        return Err(Error::InvalidArgument("t_end must be positive".into()));
    }
    let steps_per_sample = steps_per_sample as usize;
    let samples = (cfg.t_end / cfg.sample_every).round() as usize;

    let grid = Spectral::new(PeriodicBox::new(cfg.n, cfg.len)?);
    let q = periodic_ground_state(grid.clone(), profile)?;
    let vecs = linearized_vectors(&q);
    let mut state = init_soliton(&q, cfg.c0, cfg.a0, &cfg.perturbation)?;
    let init_hat = state.u_hat.clone();
    let sup0 = state.sup_norm();
    let stepper = Stepper::new(grid.clone(), cfg.dt, 1.5 * sup0, cfg.sup_factor * sup0)?;
    let c0 = conserved(&state);
    let mass0 = c0.mass;

    let mut rows = Vec::with_capacity(samples + 1);
    let mut modulation = Vec::with_capacity(samples + 1);
    let mut densities: Vec<(f64, Vec<f64>)> = Vec::with_capacity(samples + 1);
    let mut max_leak = 0.0f64;
    let mut line_drift = 0.0f64;
    let mut guess = (cfg.c0, cfg.a0);
    let mut halted = None;
    let mut steps = 0;

    for s in 0..=samples {
        if s > 0 {
            let mut failed = None;
            for _ in 0..steps_per_sample {
                if let Err(e) = stepper.step(&mut state) {
                    failed = Some(e);
                    break;
                }
                steps += 1;
            }
            if let Some(e) = failed {
                halted = Some(e.to_string());
                break;
            }
        }
        let m = match decompose(&state, &q, guess) {
            Ok(m) => m,
            Err(e) => {
                halted = Some(format!("modulation failed at t = {}: {e}", state.t));
                break;
            }
        };
        guess = (m.c, [m.a[0] + cfg.sample_every / (m.c * m.c), m.a[1], m.a[2]]);
        let cons = conserved(&state);
        for (a, b) in cons.line_integrals.iter().zip(&c0.line_integrals) {
            line_drift = line_drift.max((a - b).abs());
        }
        max_leak = max_leak.max(state.imag_leak());
        let running = MonotonicityParams { t0: state.t, ..cfg.monotonicity };
        let mono = monotonicity(&state, m.a, &running)?;
        let shift = state.t / (cfg.c0 * cfg.c0);
        let reference = grid.inverse(&grid.translate(&init_hat, [shift, 0.0, 0.0]));
        let u = state.field();
        let shape_error = u.iter().zip(&reference).fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
        let frame = grid.inverse(&grid.translate(&state.u_hat, [-m.a[0], -m.a[1], -m.a[2]]));
        let tail_valid = face_max(&frame, grid.domain) < super::monotonicity::FACE_TOL;
        rows.push(TrajectoryRow {
            t: state.t,
            mass: cons.mass,
            energy: cons.energy,
            i_x: cons.line_integral_total(&grid),
            c: m.c,
            a_x: m.a[0],
            a_y: m.a[1],
            a_z: m.a[2],
            b: m.b,
            i_plus: mono.i_plus,
            i_minus: mono.i_minus,
            tail_valid,
            weight_valid: mono.valid,
            shape_error,
        });
        densities.push((state.t, frame.iter().map(|v| v * v).collect()));
        modulation.push(m);
    }

    let ode = if modulation.len() >= 3 {
        parameter_ode_residual(&modulation, &vecs, grid.domain.cell_volume())?
    } else {
        Vec::new()
    };
    let summary = summarize(cfg, &rows, &modulation, &ode, &densities, &grid, mass0, c0.energy, line_drift, max_leak, steps, state.t, halted);
    Ok(EvolutionRun { rows, modulation, ode, summary, final_state: state })
}

fn face_max(field: &[f64], dom: PeriodicBox) -> f64 {
    let [nx, ny, nz] = dom.n;
    let mut m = 0.0f64;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1 {
                    m = m.max(field[dom.flat(i, j, k)].abs());
                }
            }
        }
    }
    m
}

/// `∫ φ+(...) ρ` with the weight of `params` at time `t` for a frame density `rho`.
fn weighted(rho: &[f64], t: f64, t0: f64, params: &MonotonicityParams, dom: PeriodicBox) -> f64 {
    let (ct, st) = (params.theta.cos(), params.theta.sin());
    let drift = params.lambda * (t - t0);
    let (xs, ys, zs) = (dom.coords(0), dom.coords(1), dom.coords(2));
    let mut acc = 0.0;
    let mut idx = 0;
    for z in &zs {
        for y in &ys {
            let cone = st * (1.0 + y * y + z * z).sqrt();
            for x in &xs {
                acc += phi_plus(ct * (x - params.r + drift) + cone, params.k) * rho[idx];
                idx += 1;
            }
        }
    }
    acc * dom.cell_volume()
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    cfg: &EvolveConfig,
    rows: &[TrajectoryRow],
    modulation: &[ModulationState],
    ode: &[OdeResidual],
    densities: &[(f64, Vec<f64>)],
    grid: &Arc<Spectral>,
    mass0: f64,
    energy0: f64,
    line_drift: f64,
    max_leak: f64,
    steps: usize,
    t_final: f64,
    halted: Option<String>,
) -> EvolutionSummary {
    let last = rows.last();
    let rel = |a: f64, b: f64| if b != 0.0 { (a - b).abs() / b.abs() } else { (a - b).abs() };
    let mass_drift = rows.iter().map(|r| rel(r.mass, mass0)).fold(0.0, f64::max);
    let energy_drift = rows.iter().map(|r| rel(r.energy, energy0)).fold(0.0, f64::max);

    let mut violations = 0;
    let mut max_rise = 0.0f64;
    let mut running_min = f64::INFINITY;
    for r in rows {
        let rise = (r.i_plus - running_min) / mass0;
        if rise > 1e-3 {
            violations += 1;
        }
        max_rise = max_rise.max(rise);
        running_min = running_min.min(r.i_plus);
    }

    let params = cfg.monotonicity;
    let scale = (params.delta() * params.r).exp();
    let half = 0.5 * t_final;
    let (mut c_first, mut c_second) = (0.0f64, 0.0f64);
    for (j, (t0, rho0)) in densities.iter().enumerate() {
        let at_t0 = weighted(rho0, *t0, *t0, &params, grid.domain);
        for (tm, rhom) in densities[..j].iter() {
            let same_half = (*t0 <= half) == (*tm <= half);
            if !same_half {
                continue;
            }
            let rise = at_t0 - weighted(rhom, *tm, *t0, &params, grid.domain);
            if *t0 <= half {
                c_first = c_first.max(rise * scale);
            } else {
                c_second = c_second.max(rise * scale);
            }
        }
    }

    let max_ode_residual = ode
        .iter()
        .map(|o| o.r_a.iter().fold(o.r_c, |m, v| m.max(*v)))
        .fold(0.0, f64::max);
    let b_floor = 1e-6;
    let ode_constant = if ode.iter().all(|o| o.b_sq.sqrt() > b_floor) && !ode.is_empty() {
        Some(ode.iter().map(|o| o.r_a.iter().fold(o.r_c, |m, v| m.max(*v)) / o.b_sq).fold(0.0, f64::max))
    } else {
        None
    };

    EvolutionSummary {
        steps,
        t_final,
        mass_drift,
        energy_drift,
        line_integral_drift: line_drift,
        max_imag_leak: max_leak,
        b0: modulation.first().map_or(f64::NAN, |m| m.b),
        max_b: modulation.iter().map(|m| m.b).fold(0.0, f64::max),
        final_c: last.map_or(f64::NAN, |r| r.c),
        final_a: last.map_or([f64::NAN; 3], |r| [r.a_x, r.a_y, r.a_z]),
        max_shape_error: rows.iter().map(|r| r.shape_error).fold(0.0, f64::max),
        max_ortho_residual: modulation
            .iter()
            .flat_map(|m| m.ortho_residuals.iter())
            .fold(0.0f64, |m, v| m.max(v.abs())),
        monotonicity_violations: violations,
        max_i_plus_rise: max_rise,
        fitted_c_first_half: c_first,
        fitted_c_second_half: c_second,
        ode_constant,
        max_ode_residual,
        all_valid: rows.iter().all(|r| r.tail_valid && r.weight_valid),
        halted,
    }
}
