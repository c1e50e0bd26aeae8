//! Pseudospectral integrator for `∂t u + ∂x Δu + ∂x u² = 0` on a periodic box.
//!
//! The state lives on the dealiased Fourier modes. Time stepping is ETDRK4
//! with the dispersive symbol `i kx |k|²` treated exactly. The ground state
//! used for initialization and diagnostics is the solution of the same
//! dealiased discrete problem, so `Q(x − t)` is a traveling wave of the
//! semi-discrete system and not merely an approximation of one.

pub mod modulation;
pub mod monotonicity;
pub mod periodic;
pub mod run;

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ORDERING_TAG;
use crate::pchip::Pchip;
use crate::radial::RadialProfile;
pub use periodic::{PeriodicBox, Spectral};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug)]
pub struct SimState {
    pub grid: Arc<Spectral>,
    /// Dealiased spectrum of `u` (unnormalized FFT convention).
    pub u_hat: Vec<Complex64>,
    pub t: f64,
}

impl SimState {
    /// Projects a real field onto the retained modes.
    pub fn from_field(grid: Arc<Spectral>, u: &[f64], t: f64) -> Result<Self> {
        if u.len() != grid.len() {
            return Err(Error::ShapeMismatch { expected: grid.len(), got: u.len() });
        }
        let mut u_hat = grid.forward(u);
        grid.apply_mask(&mut u_hat);
        Ok(Self { grid, u_hat, t })
    }

    pub fn field(&self) -> Vec<f64> {
        self.grid.inverse(&self.u_hat)
    }

    /// Largest imaginary part produced by the inverse transform.
    pub fn imag_leak(&self) -> f64 {
        self.grid.inverse_with_leak(&self.u_hat).1
    }

    pub fn sup_norm(&self) -> f64 {
        self.field().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Writes the nodal field as raw little-endian f64 plus a TOML manifest at `<path>.toml`.
    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        for v in self.field() {
            f.write_all(&v.to_le_bytes())?;
        }
        let manifest = SnapshotManifest { domain: self.grid.domain, t: self.t, ordering: ORDERING_TAG.into() };
        let text = toml::to_string(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
        let mut m = path.as_os_str().to_owned();
        m.push(".toml");
        std::fs::write(m, text)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotManifest {
    pub domain: PeriodicBox,
    pub t: f64,
    pub ordering: String,
}

/// Discrete ground state: `(1 + |k|²) Q̂ = P F(Q²)` on the retained modes.
#[derive(Clone, Debug)]
pub struct PeriodicGroundState {
    pub grid: Arc<Spectral>,
    pub q_hat: Vec<Complex64>,
    pub values: Vec<f64>,
    /// `∂x Q, ∂y Q, ∂z Q` on the nodes.
    pub grad: [Vec<f64>; 3],
    pub residual: f64,
    pub iterations: usize,
}

impl PeriodicGroundState {
    pub fn mass(&self) -> f64 {
        self.grid.inner(&self.values, &self.values)
    }

    /// `Q(y)` evaluated by trigonometric interpolation at the tensor points.
    pub fn eval_tensor(&self, pts: [&[f64]; 3]) -> Vec<f64> {
        self.grid.eval_tensor(&self.q_hat, pts)
    }
}

/// Petviashvili iteration in Fourier space, seeded with the interpolated radial profile.
pub fn periodic_ground_state(grid: Arc<Spectral>, profile: &RadialProfile) -> Result<PeriodicGroundState> {
    let dom = grid.domain;
    let corner = dom.len.iter().map(|l| 0.25 * l * l).sum::<f64>().sqrt();
    if corner > profile.r_max {
        return Err(Error::Extrapolation { radius: corner, r_max: profile.r_max });
    }
    let interp = Pchip::new(profile.nodes.clone(), profile.values.clone())?;
    let seed = dom.tabulate(|x, y, z| interp.eval((x * x + y * y + z * z).sqrt()).unwrap_or(0.0));
    let mut q_hat = grid.forward(&seed);
    grid.apply_mask(&mut q_hat);

    let mut symbol = vec![0.0; grid.len()];
    grid.for_each_mode(|i, kx, ky, kz| symbol[i] = 1.0 + kx * kx + ky * ky + kz * kz);

    let (tol, max_iter) = (1e-13, 500);
    for it in 1..=max_iter {
        let q = grid.inverse(&q_hat);
        let sq: Vec<f64> = q.iter().map(|v| v * v).collect();
        let mut n_hat = grid.forward(&sq);
        grid.apply_mask(&mut n_hat);
        let lhs: f64 = q_hat.iter().zip(&symbol).map(|(a, s)| s * a.norm_sqr()).sum();
        let rhs: f64 = q_hat.iter().zip(&n_hat).map(|(a, b)| (a.conj() * b).re).sum();
        if !(rhs > 0.0) {
            return Err(Error::Collapse);
        }
        let s = lhs / rhs;
        let res_num: f64 = q_hat.iter().zip(&n_hat).zip(&symbol).map(|((a, b), k)| (a * k - b).norm_sqr()).sum();
        let res = (res_num / lhs.max(f64::MIN_POSITIVE)).sqrt();
        if res < tol && (s - 1.0).abs() < tol {
            let values = grid.inverse(&q_hat);
            let grad = [0, 1, 2].map(|d| grid.inverse(&grid.derivative(&q_hat, d)));
            return Ok(PeriodicGroundState { grid, q_hat, values, grad, residual: res, iterations: it });
        }
        let s2 = s * s;
        for ((a, b), k) in q_hat.iter_mut().zip(&n_hat).zip(&symbol) {
            *a = b * (s2 / k);
        }
    }
    Err(Error::NotConverged { iterations: max_iter, residual: f64::NAN })
}

/// Initial perturbation added to the soliton.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Perturbation {
    #[default]
    None,
    /// `α Q(x − offset)`.
    Bump { amplitude: f64, offset: [f64; 3] },
    /// Smooth random field localized by the ground-state profile, scaled to `‖·‖ = α ‖Q‖`.
    Noise { amplitude: f64, seed: u64 },
}

impl Perturbation {
    fn amplitude(&self) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Bump { amplitude, .. } | Self::Noise { amplitude, .. } => *amplitude,
        }
    }
}

/// `u = c0⁻² Q((x − a0)/c0) + perturbation`.
pub fn init_soliton(q: &PeriodicGroundState, c0: f64, a0: [f64; 3], pert: &Perturbation) -> Result<SimState> {
    let grid = q.grid.clone();
    let dom = grid.domain;
    if !(c0 > 0.0) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {c0}")));
    }
    for d in 0..3 {
        if dom.len[d] < 40.0 / c0 - 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "box length {} on axis {d} is below 40/c0 = {}",
                dom.len[d],
                40.0 / c0
            )));
        }
    }
    let amp = pert.amplitude();
    if !(amp.abs() < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "perturbation amplitude {amp} is a second soliton, not a perturbation"
        )));
    }
    let mut u = family_member(q, c0, a0);

    match pert {
        Perturbation::None => {}
        Perturbation::Bump { amplitude, offset } => {
            let shifted = grid.inverse(&grid.translate(&q.q_hat, *offset));
            u.iter_mut().zip(&shifted).for_each(|(a, b)| *a += amplitude * b);
        }
        Perturbation::Noise { amplitude, seed } => {
            let noise = smooth_noise(q, *seed);
            u.iter_mut().zip(&noise).for_each(|(a, b)| *a += amplitude * b);
        }
    }
    SimState::from_field(grid, &u, 0.0)
}

/// Nodal samples of `Q_{c,a}(x) = c⁻² Q((x − a)/c)`, before dealiasing.
pub fn family_member(q: &PeriodicGroundState, c: f64, a: [f64; 3]) -> Vec<f64> {
    let pts = scaled_points(q.grid.domain, c, a);
    q.eval_tensor([&pts[0], &pts[1], &pts[2]]).iter().map(|v| v / (c * c)).collect()
}

/// Per-axis points `(x − a)/c`.
pub(crate) fn scaled_points(dom: PeriodicBox, c: f64, a: [f64; 3]) -> [Vec<f64>; 3] {
    [0, 1, 2].map(|d| dom.coords(d).iter().map(|x| (x - a[d]) / c).collect())
}

/// Random low-mode field times `Q/Q(0)`, dealiased and normalized to `‖Q‖`.
fn smooth_noise(q: &PeriodicGroundState, seed: u64) -> Vec<f64> {
    let grid = &q.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = vec![ZERO; grid.len()];
    grid.for_each_mode(|i, kx, ky, kz| {
        let k2 = kx * kx + ky * ky + kz * kz;
        if k2 <= 1.0 {
            spec[i] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * (-k2).exp();
        }
    });
    // the real part of the inverse is the field of the Hermitian-symmetrized spectrum
    let raw = grid.inverse(&spec);
    let q0 = q.values.iter().fold(0.0f64, |m, v| m.max(*v));
    let localized: Vec<f64> = raw.iter().zip(&q.values).map(|(r, v)| r * v / q0).collect();
    let mut hat = grid.forward(&localized);
    grid.apply_mask(&mut hat);
    let field = grid.inverse(&hat);
    let scale = (q.mass() / grid.inner(&field, &field)).sqrt();
    field.iter().map(|v| v * scale).collect()
}

/// Largest stable step for the explicit part: `2.5 / (2 kx_max ‖u‖∞)`.
pub fn stability_bound(grid: &Spectral, sup: f64) -> f64 {
    let dom = grid.domain;
    let kx_max = (0..dom.n[0])
        .filter(|&j| dom.retained(0, j))
        .map(|j| grid.k[0][j].abs())
        .fold(0.0, f64::max);
    2.5 / (2.0 * kx_max * sup.max(f64::MIN_POSITIVE))
}

/// ETDRK4 stepper for a fixed `dt`.
pub struct Stepper {
    grid: Arc<Spectral>,
    pub dt: f64,
    /// Halt when `‖u‖∞` exceeds this.
    pub sup_bound: f64,
    e: Vec<Complex64>,
    e2: Vec<Complex64>,
    qc: Vec<Complex64>,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
    f3: Vec<Complex64>,
    ikx: Vec<Complex64>,
}

impl Stepper {
    /// Refuses `dt` above the stability bound for fields up to `expected_sup`.
    pub fn new(grid: Arc<Spectral>, dt: f64, expected_sup: f64, sup_bound: f64) -> Result<Self> {
        let bound = stability_bound(&grid, expected_sup);
        if !(dt > 0.0) || dt > bound {
            return Err(Error::TimeStep { dt, bound });
        }
        let n = grid.len();
        let mut s = Self {
            grid: grid.clone(),
            dt,
            sup_bound,
            e: vec![ZERO; n],
            e2: vec![ZERO; n],
            qc: vec![ZERO; n],
            f1: vec![ZERO; n],
            f2: vec![ZERO; n],
            f3: vec![ZERO; n],
            ikx: vec![ZERO; n],
        };
        const M: usize = 32;
        let roots: Vec<Complex64> = (0..M)
            .map(|j| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / M as f64))
            .collect();
        let one = Complex64::new(1.0, 0.0);
        grid.for_each_mode(|i, kx, ky, kz| {
            if !grid.mask[i] {
                return;
            }
            let l = Complex64::new(0.0, kx * (kx * kx + ky * ky + kz * kz));
            let ldt = l * dt;
            s.e[i] = ldt.exp();
            s.e2[i] = (ldt * 0.5).exp();
            s.ikx[i] = Complex64::new(0.0, kx);
            let (mut q, mut a, mut b, mut c) = (ZERO, ZERO, ZERO, ZERO);
            for r in &roots {
                let z = ldt + r;
                let ez = z.exp();
                let z3 = z * z * z;
                q += ((z * 0.5).exp() - one) / z;
                a += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
                b += (2.0 + z + ez * (z - 2.0)) / z3;
                c += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
            }
            let w = dt / M as f64;
            s.qc[i] = q * w;
            s.f1[i] = a * w;
            s.f2[i] = b * w;
            s.f3[i] = c * w;
        });
        Ok(s)
    }

    /// `−i kx P F(u²)`.
    fn nonlinear(&self, u_hat: &[Complex64]) -> Vec<Complex64> {
        let u = self.grid.inverse(u_hat);
        let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
        let mut n = self.grid.forward(&sq);
        for ((v, ik), keep) in n.iter_mut().zip(&self.ikx).zip(&self.grid.mask) {
            *v = if *keep { -(ik * *v) } else { ZERO };
        }
        n
    }

    pub fn step(&self, state: &mut SimState) -> Result<()> {
        if !Arc::ptr_eq(&state.grid, &self.grid) && state.grid.domain != self.grid.domain {
            return Err(Error::GridMismatch("state and stepper use different boxes".into()));
        }
        let u = &state.u_hat;
        let nu = self.nonlinear(u);
        let a: Vec<Complex64> = (0..u.len()).map(|i| self.e2[i] * u[i] + self.qc[i] * nu[i]).collect();
        let na = self.nonlinear(&a);
        let b: Vec<Complex64> = (0..u.len()).map(|i| self.e2[i] * u[i] + self.qc[i] * na[i]).collect();
        let nb = self.nonlinear(&b);
        let c: Vec<Complex64> = (0..u.len()).map(|i| self.e2[i] * a[i] + self.qc[i] * (2.0 * nb[i] - nu[i])).collect();
        let nc = self.nonlinear(&c);
        let next: Vec<Complex64> = (0..u.len())
            .map(|i| self.e[i] * u[i] + self.f1[i] * nu[i] + 2.0 * self.f2[i] * (na[i] + nb[i]) + self.f3[i] * nc[i])
            .collect();
        let t = state.t + self.dt;
        let probe = SimState { grid: state.grid.clone(), u_hat: next, t };
        let sup = probe.sup_norm();
        if !(sup <= self.sup_bound) {
            return Err(Error::BlowUp { t, sup });
        }
        *state = probe;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservedQuantities {
    pub mass: f64,
    pub energy: f64,
    /// `∫ u dx` on every `(y, z)` line, y-fastest.
    pub line_integrals: Vec<f64>,
}

impl ConservedQuantities {
    /// `∫ u` over the whole box.
    pub fn line_integral_total(&self, grid: &Spectral) -> f64 {
        let dom = grid.domain;
        self.line_integrals.iter().sum::<f64>() * dom.spacing(1) * dom.spacing(2)
    }
}

/// Mass, energy and x-line integrals; cubic term as `⟨u, P(u²)⟩`.
pub fn conserved(state: &SimState) -> ConservedQuantities {
    let grid = &state.grid;
    let dom = grid.domain;
    let u = state.field();
    let mass = grid.inner(&u, &u);
    let mut grad2 = 0.0;
    grid.for_each_mode(|i, kx, ky, kz| grad2 += (kx * kx + ky * ky + kz * kz) * state.u_hat[i].norm_sqr());
    let grad2 = grad2 * dom.cell_volume() / grid.len() as f64;
    let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
    let mut sq_hat = grid.forward(&sq);
    grid.apply_mask(&mut sq_hat);
    let cubic = grid.inner(&u, &grid.inverse(&sq_hat));
    let nx = dom.n[0];
    let line_integrals = u.chunks(nx).map(|line| line.iter().sum::<f64>() * dom.spacing(0)).collect();
    ConservedQuantities { mass, energy: 0.5 * grad2 - cubic / 3.0, line_integrals }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::radial::{solve_radial, RadialConfig};
    use std::sync::OnceLock;

    pub(crate) fn profile() -> &'static RadialProfile {
        static P: OnceLock<RadialProfile> = OnceLock::new();
        P.get_or_init(|| solve_radial(&RadialConfig::default()).unwrap())
    }

    pub(crate) fn ground(n: usize) -> PeriodicGroundState {
        let grid = Spectral::new(PeriodicBox::cube(n, 40.0).unwrap());
        periodic_ground_state(grid, profile()).unwrap()
    }

    /// A box small enough for the spectral ground state to resolve the continuum one.
    pub(crate) fn resolved_ground() -> &'static PeriodicGroundState {
        static G: OnceLock<PeriodicGroundState> = OnceLock::new();
        G.get_or_init(|| periodic_ground_state(Spectral::new(PeriodicBox::cube(64, 24.0).unwrap()), profile()).unwrap())
    }

    #[test]
    fn discrete_ground_state_satisfies_its_own_equation() {
        let q = ground(32);
        assert!(q.residual < 1e-13);
        let grid = &q.grid;
        let grad_sq: f64 = (0..3).map(|d| grid.inner(&q.grad[d], &q.grad[d])).sum();
        let cube = grid.inner(&q.values, &q.values.iter().map(|v| v * v).collect::<Vec<_>>());
        // pairing (1 + |k|²) Q̂ = P F(Q²) with Q̂
        assert!((grad_sq + q.mass() - cube).abs() < 1e-10 * cube);
    }

    #[test]
    fn resolved_ground_state_matches_the_continuum() {
        let q = resolved_ground();
        let centre = q.values[q.grid.domain.flat(32, 32, 32)];
        let r0 = profile().values[0];
        assert!((centre - r0).abs() < 1e-3 * r0, "{centre} vs {r0}");
        let c = conserved(&SimState { grid: q.grid.clone(), u_hat: q.q_hat.clone(), t: 0.0 });
        assert!((c.energy / c.mass + 1.0 / 6.0).abs() < 1e-4, "E/M = {}", c.energy / c.mass);
        let cube = q.grid.inner(&q.values, &q.values.iter().map(|v| v * v).collect::<Vec<_>>());
        assert!((cube / c.mass - 2.0).abs() < 1e-4);
    }

    #[test]
    fn zero_field_has_zero_invariants() {
        let grid = Spectral::new(PeriodicBox::cube(16, 40.0).unwrap());
        let s = SimState::from_field(grid, &vec![0.0; 16 * 16 * 16], 0.0).unwrap();
        let c = conserved(&s);
        assert_eq!((c.mass, c.energy), (0.0, 0.0));
        assert!(c.line_integrals.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_regime_matches_exact_propagator() {
        let grid = Spectral::new(PeriodicBox::cube(32, 40.0).unwrap());
        let u0 = grid.domain.tabulate(|x, y, z| 1e-8 * (-(x * x + y * y + z * z) / 8.0).exp());
        let mut s = SimState::from_field(grid.clone(), &u0, 0.0).unwrap();
        let init = s.u_hat.clone();
        let stepper = Stepper::new(grid.clone(), 1e-2, 1.0, 1.0).unwrap();
        for _ in 0..50 {
            stepper.step(&mut s).unwrap();
        }
        let mut exact = init.clone();
        grid.for_each_mode(|i, kx, ky, kz| {
            exact[i] *= Complex64::from_polar(1.0, kx * (kx * kx + ky * ky + kz * kz) * s.t);
        });
        let a = grid.inverse(&exact);
        let b = s.field();
        let err = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        // what remains is the quadratic term, of relative size amplitude × t
        assert!(err < 1e-16, "{err}");
    }

    #[test]
    fn halving_the_step_is_fourth_order() {
        let q = ground(24);
        let u0 = init_soliton(&q, 1.0, [0.0; 3], &Perturbation::Noise { amplitude: 0.2, seed: 11 }).unwrap();
        let run = |dt: f64| {
            let mut s = u0.clone();
            let stepper = Stepper::new(q.grid.clone(), dt, 2.0 * s.sup_norm(), 10.0 * s.sup_norm()).unwrap();
            for _ in 0..(1.0 / dt).round() as usize {
                stepper.step(&mut s).unwrap();
            }
            s.field()
        };
        let fields: Vec<Vec<f64>> = [0.1, 0.05, 0.025].iter().map(|&dt| run(dt)).collect();
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let ratio = diff(&fields[0], &fields[1]) / diff(&fields[1], &fields[2]);
        assert!((10.0..24.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn step_guards() {
        let grid = Spectral::new(PeriodicBox::cube(16, 40.0).unwrap());
        assert!(matches!(Stepper::new(grid.clone(), 1.0, 5.0, 10.0), Err(Error::TimeStep { .. })));
        let u0 = grid.domain.tabulate(|x, y, z| 3.0 * (-(x * x + y * y + z * z) / 4.0).exp());
        let mut s = SimState::from_field(grid.clone(), &u0, 0.0).unwrap();
        let stepper = Stepper::new(grid, 1e-3, 3.0, 1.0).unwrap();
        assert!(matches!(stepper.step(&mut s), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn initializer_guards() {
        let q = ground(16);
        assert!(init_soliton(&q, 0.5, [0.0; 3], &Perturbation::None).is_err());
        assert!(init_soliton(&q, 1.0, [0.0; 3], &Perturbation::Bump { amplitude: 1.0, offset: [8.0, 0.0, 0.0] }).is_err());
        let s = init_soliton(&q, 1.0, [0.0; 3], &Perturbation::None).unwrap();
        for (a, b) in s.u_hat.iter().zip(&q.q_hat) {
            assert!((a - b).norm() < 1e-9 * q.q_hat[0].norm());
        }
    }
}
