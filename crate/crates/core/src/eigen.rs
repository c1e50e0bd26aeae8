//! Real eigenvalues of the virial operator below its continuous-spectrum edge.
//!
//! Two methods: a full dense eigendecomposition for small grids, and
//! explicitly restarted Arnoldi on `(M − σ)⁻¹` for a handful of real shifts.
//! The shifted solves use a dense LU when the interior fits under the dense
//! cap and preconditioned GMRES otherwise, with a fast-diagonalization
//! preconditioner built from the separable part of `M`.

use std::fmt;
use std::str::FromStr;

use faer::linalg::solvers::{DenseSolveCore, Eigen, PartialPivLu, Solve};
use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cheb::{dot, SquareMatrix};
use crate::error::{Error, Result};
use crate::grid::apply_along_axis;
use crate::virial::{OperatorManifest, VirialOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Dense,
    ShiftInvert,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Dense => "dense",
            Self::ShiftInvert => "shift-invert",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Self::Dense),
            "shift-invert" => Ok(Self::ShiftInvert),
            other => Err(Error::Parse(format!("unknown eigen method '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenOptions {
    pub method: Method,
    pub threshold: f64,
    /// Maximum number of pairs reported.
    pub max_count: usize,
    pub shifts: Vec<f64>,
    pub krylov_dim: usize,
    pub max_restarts: usize,
    /// Acceptance bound on `‖Mφ − λφ‖_w`.
    pub tol: f64,
    /// Largest interior dimension that is densified (dense method and LU solves).
    pub dense_cap: usize,
    /// Relative residual for the GMRES inner solves.
    pub inner_tol: f64,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            method: Method::ShiftInvert,
            threshold: 1.0,
            max_count: 8,
            shifts: vec![-0.2, 0.3, 0.8],
            krylov_dim: 30,
            max_restarts: 40,
            tol: 1e-8,
            dense_cap: crate::virial::DEFAULT_DENSE_CAP,
            inner_tol: 1e-12,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub lambda: f64,
    /// Interior field with `‖φ‖_w = 1`.
    pub phi: Vec<f64>,
    pub residual: f64,
    pub imag_part: f64,
    pub parity: Parity,
    /// `min(‖φ − φ∘flip‖, ‖φ + φ∘flip‖)`.
    pub parity_score: f64,
    /// Set when another pair shares the eigenvalue to within the dedup tolerance.
    pub multiple: bool,
}

#[derive(Clone, Debug)]
pub struct SpectrumReport {
    pub pairs: Vec<EigenPair>,
    pub method: Method,
    pub threshold: f64,
    pub interp_error: f64,
    pub operator: OperatorManifest,
    /// False when some Ritz value below the threshold failed to converge.
    pub complete: bool,
    pub warnings: Vec<String>,
}

/// One row of a spectrum table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub lambda: f64,
    pub residual: f64,
    pub imag_part: f64,
    pub parity: Parity,
    pub parity_score: f64,
    pub multiple: bool,
}

/// Serializable form of a report without the eigenfunctions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub method: Method,
    pub threshold: f64,
    pub interp_error: f64,
    pub complete: bool,
    pub warnings: Vec<String>,
    pub operator: OperatorManifest,
    pub pairs: Vec<PairRecord>,
}

impl SpectrumReport {
    pub fn lambdas(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.lambda).collect()
    }

    pub fn summary(&self) -> SpectrumSummary {
        SpectrumSummary {
            method: self.method,
            threshold: self.threshold,
            interp_error: self.interp_error,
            complete: self.complete,
            warnings: self.warnings.clone(),
            operator: self.operator.clone(),
            pairs: self
                .pairs
                .iter()
                .map(|p| PairRecord {
                    lambda: p.lambda,
                    residual: p.residual,
                    imag_part: p.imag_part,
                    parity: p.parity,
                    parity_score: p.parity_score,
                    multiple: p.multiple,
                })
                .collect(),
        }
    }
}

const DEDUP_TOL: f64 = 1e-8;

/// Every real eigenvalue of `op` below `opts.threshold` (up to `opts.max_count`).
pub fn eigs_below(op: &VirialOperator, opts: &EigenOptions) -> Result<SpectrumReport> {
    if opts.max_count == 0 {
        return Err(Error::InvalidArgument("max_count must be at least 1".into()));
    }
    let mut warnings = Vec::new();
    let mut complete = true;
    let candidates = match opts.method {
        Method::Dense => dense_candidates(op, opts, &mut warnings)?,
        Method::ShiftInvert => {
            if opts.shifts.is_empty() {
                return Err(Error::InvalidArgument("shift-invert needs at least one shift".into()));
            }
            let mut all = Vec::new();
            let mut pending = Vec::new();
            for &sigma in &opts.shifts {
                if sigma >= opts.threshold {
                    return Err(Error::InvalidArgument(format!(
                        "shift {sigma} is not below the threshold {}",
                        opts.threshold
                    )));
                }
                let run = shift_invert(op, sigma, opts, &mut warnings)?;
                all.extend(run.converged);
                pending.extend(run.unconverged);
            }
            // A Ritz value left unconverged at one shift is fine if another shift resolved it.
            for (lambda, residual, sigma) in pending {
                let resolved = all.iter().any(|p: &EigenPair| (p.lambda - lambda).abs() < 1e-4);
                if !resolved {
                    complete = false;
                    warnings.push(format!(
                        "Ritz value {lambda:.8} at shift {sigma} did not converge (residual {residual:.2e})"
                    ));
                }
            }
            all
        }
    };
    let pairs = dedup(op, candidates, opts.max_count);
    Ok(SpectrumReport {
        pairs,
        method: opts.method,
        threshold: opts.threshold,
        interp_error: op.interp_error,
        operator: op.manifest(),
        complete,
        warnings,
    })
}

/// Recomputes `‖Mφ − λφ‖_w` with the matrix-free apply.
pub fn verify_pair(op: &VirialOperator, pair: &EigenPair) -> Result<f64> {
    residual(op, pair.lambda, &pair.phi)
}

fn residual(op: &VirialOperator, lambda: f64, phi: &[f64]) -> Result<f64> {
    let mphi = op.apply(phi)?;
    let r: Vec<f64> = mphi.iter().zip(phi).map(|(m, p)| m - lambda * p).collect();
    Ok(op.norm(&r))
}

/// Normalizes, fixes the sign and measures residual and parity.
fn finish(op: &VirialOperator, lambda: f64, mut phi: Vec<f64>, imag_part: f64) -> Result<EigenPair> {
    let norm = op.norm(&phi);
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Linalg("eigenvector has zero or non-finite norm".into()));
    }
    let peak = phi.iter().fold(0.0f64, |m, v| if v.abs() > m.abs() { *v } else { m });
    let s = peak.signum() / norm;
    phi.iter_mut().for_each(|v| *v *= s);
    let residual = residual(op, lambda, &phi)?;
    let (parity_score, sign) = op.parity(&phi);
    let parity = if sign > 0 { Parity::Even } else { Parity::Odd };
    Ok(EigenPair { lambda, phi, residual, imag_part, parity, parity_score, multiple: false })
}

fn imag_ok(re: f64, im: f64) -> bool {
    im.abs() <= 1e-8 * (1.0 + re.abs())
}

/// Real part of `z` after rotating its largest entry onto the positive real axis.
fn align_phase(z: &[c64]) -> Vec<f64> {
    let (mut best, mut mag) = (c64::new(1.0, 0.0), 0.0);
    for v in z {
        let m = v.norm();
        if m > mag {
            mag = m;
            best = *v;
        }
    }
    let rot = best.conj() / mag.max(f64::MIN_POSITIVE);
    z.iter().map(|v| (v * rot).re).collect()
}

fn dense_candidates(op: &VirialOperator, opts: &EigenOptions, warnings: &mut Vec<String>) -> Result<Vec<EigenPair>> {
    let m = op.to_dense_capped(opts.dense_cap)?;
    let evd = Eigen::new_from_real(m.as_ref()).map_err(|e| Error::Linalg(format!("{e:?}")))?;
    let (s, u) = (evd.S().column_vector(), evd.U());
    let n = m.nrows();
    let mut out = Vec::new();
    for i in 0..n {
        let l = s[i];
        if l.re >= opts.threshold {
            continue;
        }
        if !imag_ok(l.re, l.im) {
            warnings.push(format!("discarded complex eigenvalue {:.8}{:+.3e}i", l.re, l.im));
            continue;
        }
        let col: Vec<c64> = (0..n).map(|r| u[(r, i)]).collect();
        out.push(finish(op, l.re, align_phase(&col), l.im.abs())?);
    }
    Ok(out)
}

/// Keeps the best representative of each eigenvalue, sorted ascending.
fn dedup(op: &VirialOperator, mut cands: Vec<EigenPair>, max_count: usize) -> Vec<EigenPair> {
    cands.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.residual.total_cmp(&b.residual)));
    let mut kept: Vec<EigenPair> = Vec::new();
    for c in cands {
        let mut duplicate = false;
        let mut shared = false;
        for k in kept.iter_mut() {
            if (k.lambda - c.lambda).abs() < DEDUP_TOL {
                if op.inner(&k.phi, &c.phi).abs() > 0.99 {
                    duplicate = true;
                    if c.residual < k.residual {
                        let multiple = k.multiple;
                        *k = c.clone();
                        k.multiple = multiple;
                    }
                    break;
                }
                shared = true;
                k.multiple = true;
            }
        }
        if !duplicate {
            kept.push(EigenPair { multiple: shared, ..c });
        }
    }
    kept.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    kept.truncate(max_count);
    kept
}

struct ShiftRun {
    converged: Vec<EigenPair>,
    /// `(lambda, residual, sigma)` of wanted Ritz values that never converged.
    unconverged: Vec<(f64, f64, f64)>,
}

enum ShiftedSolver {
    Lu(PartialPivLu<f64>),
    Gmres(FastDiag),
}

impl ShiftedSolver {
    fn new(op: &VirialOperator, sigma: f64, opts: &EigenOptions) -> Result<Self> {
        if op.dim() <= opts.dense_cap {
            let mut m = op.to_dense_capped(opts.dense_cap)?;
            for i in 0..m.nrows() {
                m[(i, i)] -= sigma;
            }
            let lu = m.partial_piv_lu();
            let probe = Mat::<f64>::from_fn(m.nrows(), 1, |i, _| 1.0 + (i % 7) as f64);
            let mut x = probe.clone();
            lu.solve_in_place(x.as_mut());
            if (0..x.nrows()).any(|i| !x[(i, 0)].is_finite()) {
                return Err(Error::Linalg(format!("shifted matrix is singular at σ = {sigma}")));
            }
            Ok(Self::Lu(lu))
        } else {
            Ok(Self::Gmres(FastDiag::new(op, sigma)?))
        }
    }

    fn solve(&self, op: &VirialOperator, sigma: f64, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
        match self {
            Self::Lu(lu) => {
                let mut x = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
                lu.solve_in_place(x.as_mut());
                let out: Vec<f64> = (0..rhs.len()).map(|i| x[(i, 0)]).collect();
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Linalg(format!("non-finite shifted solve at σ = {sigma}")));
                }
                Ok(out)
            }
            Self::Gmres(fd) => {
                let a = |v: &[f64]| {
                    let mut y = op.apply(v).expect("interior-sized vector");
                    y.iter_mut().zip(v).for_each(|(yi, vi)| *yi -= sigma * vi);
                    y
                };
                gmres(&a, &|v| fd.apply(v), rhs, tol, 80, 4000)
            }
        }
    }
}

/// Exact inverse of `−3 D2x ⊕ −D2y ⊕ −D2z + (1 − σ)` via per-axis eigendecompositions.
struct FastDiag {
    vecs: [SquareMatrix; 3],
    inv: [SquareMatrix; 3],
    denom: Vec<f64>,
    shape: [usize; 3],
}

impl FastDiag {
    fn new(op: &VirialOperator, sigma: f64) -> Result<Self> {
        let shape = op.interior_shape();
        let mut vecs = Vec::with_capacity(3);
        let mut inv = Vec::with_capacity(3);
        let mut mus = Vec::with_capacity(3);
        for d2 in op.d2_blocks() {
            let n = d2.dim();
            let m = Mat::<f64>::from_fn(n, n, |i, j| d2[(i, j)]);
            let evd = Eigen::new_from_real(m.as_ref()).map_err(|e| Error::Linalg(format!("{e:?}")))?;
            let (s, u) = (evd.S().column_vector(), evd.U());
            let scale = (0..n).fold(0.0f64, |acc, i| acc.max(s[i].norm()));
            if (0..n).any(|i| s[i].im.abs() > 1e-8 * scale) {
                return Err(Error::Linalg(
                    "1D second-derivative block has complex eigenvalues; preconditioner unavailable".into(),
                ));
            }
            let mut cols = Mat::<f64>::zeros(n, n);
            for j in 0..n {
                let col: Vec<c64> = (0..n).map(|r| u[(r, j)]).collect();
                for (r, v) in align_phase(&col).into_iter().enumerate() {
                    cols[(r, j)] = v;
                }
            }
            let cinv = cols.partial_piv_lu().inverse();
            vecs.push(SquareMatrix::from_fn(n, |i, j| cols[(i, j)]));
            inv.push(SquareMatrix::from_fn(n, |i, j| cinv[(i, j)]));
            mus.push((0..n).map(|i| s[i].re).collect::<Vec<f64>>());
        }
        let mut denom = Vec::with_capacity(op.dim());
        for k in 0..shape[2] {
            for j in 0..shape[1] {
                for i in 0..shape[0] {
                    let d = -3.0 * mus[0][i] - mus[1][j] - mus[2][k] + 1.0 - sigma;
                    if d.abs() < 1e-12 {
                        return Err(Error::Linalg(format!("separable part is singular at σ = {sigma}")));
                    }
                    denom.push(d);
                }
            }
        }
        let take = |mut v: Vec<SquareMatrix>| -> [SquareMatrix; 3] {
            let c = v.pop().unwrap();
            let b = v.pop().unwrap();
            let a = v.pop().unwrap();
            [a, b, c]
        };
        Ok(Self { vecs: take(vecs), inv: take(inv), denom, shape })
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut t = r.to_vec();
        for axis in 0..3 {
            t = apply_along_axis(&self.inv[axis], &t, self.shape, axis);
        }
        t.iter_mut().zip(&self.denom).for_each(|(v, d)| *v /= d);
        for axis in 0..3 {
            t = apply_along_axis(&self.vecs[axis], &t, self.shape, axis);
        }
        t
    }
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Right-preconditioned restarted GMRES with zero initial guess.
fn gmres(
    a: &dyn Fn(&[f64]) -> Vec<f64>,
    prec: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut total = 0;
    let mut prev = f64::INFINITY;
    loop {
        let beta = norm2(&r);
        if beta <= tol * bnorm {
            return Ok(x);
        }
        // a stalled cycle close to the target means we hit the rounding floor
        let stalled = beta > 0.5 * prev;
        if stalled && beta <= 1e3 * tol * bnorm {
            return Ok(x);
        }
        if total >= max_iter || stalled && prev.is_finite() && total > 4 * restart {
            return Err(Error::NotConverged { iterations: total, residual: beta / bnorm });
        }
        prev = beta;
        let mut v = vec![r.iter().map(|x| x / beta).collect::<Vec<f64>>()];
        let mut z: Vec<Vec<f64>> = Vec::new();
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k = 0;
        while k < restart && total < max_iter {
            let zk = prec(&v[k]);
            let mut w = a(&zk);
            z.push(zk);
            for _pass in 0..2 {
                for i in 0..=k {
                    let c = dot(&w, &v[i]);
                    h[i][k] += c;
                    w.iter_mut().zip(&v[i]).for_each(|(wj, vj)| *wj -= c * vj);
                }
            }
            let hk1 = norm2(&w);
            h[k + 1][k] = hk1;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let rho = h[k][k].hypot(h[k + 1][k]);
            let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (h[k][k] / rho, h[k + 1][k] / rho) };
            cs[k] = c;
            sn[k] = s;
            h[k][k] = rho;
            h[k + 1][k] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            total += 1;
            k += 1;
            if g[k].abs() <= tol * bnorm || hk1 == 0.0 {
                break;
            }
            v.push(w.iter().map(|x| x / hk1).collect());
        }
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (yi, zi) in y.iter().zip(&z) {
            x.iter_mut().zip(zi).for_each(|(xj, zj)| *xj += yi * zj);
        }
        let ax = a(&x);
        r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    }
}

fn shift_invert(op: &VirialOperator, sigma0: f64, opts: &EigenOptions, warnings: &mut Vec<String>) -> Result<ShiftRun> {
    // retry with a nudged shift if the factorization fails
    let mut attempt = 0;
    let (solver, sigma) = loop {
        let sigma = sigma0 - 1e-3 * attempt as f64;
        match ShiftedSolver::new(op, sigma, opts) {
            Ok(s) => break (s, sigma),
            Err(Error::Linalg(msg)) if attempt < 3 => {
                warnings.push(format!("{msg}; retrying with a perturbed shift"));
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    };
    let n = op.dim();
    let m = opts.krylov_dim.min(n).max(1);
    let radius = opts.threshold - sigma;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut last = ShiftRun { converged: Vec::new(), unconverged: Vec::new() };

    for _restart in 0..=opts.max_restarts {
        let (basis, h, k) = arnoldi(op, &solver, sigma, &start, m, opts.inner_tol)?;
        let hk = Mat::<f64>::from_fn(k, k, |i, j| h[i][j]);
        let evd = Eigen::new_from_real(hk.as_ref()).map_err(|e| Error::Linalg(format!("{e:?}")))?;
        let (s, u) = (evd.S().column_vector(), evd.U());

        let mut converged = Vec::new();
        let mut pending = Vec::new();
        let mut next = vec![0.0; n];
        for i in 0..k {
            let theta = s[i];
            if theta.norm() == 0.0 {
                continue;
            }
            let lam = c64::new(sigma, 0.0) + c64::new(1.0, 0.0) / theta;
            // only eigenvalues closer to σ than the continuum edge are this shift's business
            if lam.re >= opts.threshold || (lam - c64::new(sigma, 0.0)).norm() >= radius {
                continue;
            }
            let mut ritz = vec![c64::new(0.0, 0.0); n];
            for (j, bj) in basis.iter().enumerate().take(k) {
                let c = u[(j, i)];
                ritz.iter_mut().zip(bj).for_each(|(r, b)| *r += c * *b);
            }
            let pair = finish(op, lam.re, align_phase(&ritz), lam.im.abs())?;
            let weight = 1.0 / op.norm(&pair.phi).max(f64::MIN_POSITIVE);
            next.iter_mut().zip(&pair.phi).for_each(|(a, b)| *a += weight * b);
            if pair.residual < opts.tol {
                if imag_ok(lam.re, lam.im) {
                    converged.push(pair);
                } else {
                    warnings.push(format!("discarded complex eigenvalue {:.8}{:+.3e}i", lam.re, lam.im));
                }
            } else {
                pending.push((pair.lambda, pair.residual, sigma));
            }
        }
        if pending.is_empty() {
            return Ok(ShiftRun { converged, unconverged: Vec::new() });
        }
        last = ShiftRun { converged, unconverged: pending };
        // keep a little of the old start so the restart does not lose directions entirely
        let nn = norm2(&next);
        let ns = norm2(&start);
        start = next.iter().zip(&start).map(|(a, b)| a / nn + 1e-3 * b / ns).collect();
    }
    Ok(last)
}

/// `k` steps of Arnoldi on `(M − σ)⁻¹` with twice-applied Gram–Schmidt.
fn arnoldi(
    op: &VirialOperator,
    solver: &ShiftedSolver,
    sigma: f64,
    start: &[f64],
    m: usize,
    inner_tol: f64,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, usize)> {
    let s = norm2(start);
    let mut basis = vec![start.iter().map(|v| v / s).collect::<Vec<f64>>()];
    let mut h = vec![vec![0.0; m]; m + 1];
    for j in 0..m {
        let mut w = solver.solve(op, sigma, &basis[j], inner_tol)?;
        let wn = norm2(&w);
        for _pass in 0..2 {
            for i in 0..=j {
                let c = dot(&w, &basis[i]);
                h[i][j] += c;
                w.iter_mut().zip(&basis[i]).for_each(|(a, b)| *a -= c * b);
            }
        }
        let hn = norm2(&w);
        h[j + 1][j] = hn;
        if hn <= 1e-13 * wn {
            return Ok((basis, h, j + 1));
        }
        if j + 1 < m {
            basis.push(w.iter().map(|v| v / hn).collect());
        }
    }
    Ok((basis, h, m))
}
