use std::sync::Arc;

use serde::{Deserialize, Serialize};
use zk_virial::certificate::{angle_table, certify_angles, AngleEntry, AngleTable, Certificate};
use zk_virial::cheb::map_axis;
use zk_virial::eigen::{eigs_below, EigenOptions, Method, PairRecord, SpectrumReport};
use zk_virial::grid::TensorGrid;
use zk_virial::lift::{lift_to_tensor, GroundStateField};
use zk_virial::radial::{solve_radial, RadialProfile};
use zk_virial::virial::{build_with_factor, PotentialVariant};
use zk_virial::zk::run::{run_evolution, EvolutionSummary};

use crate::config::{sha256_hex, ExperimentConfig, InjectedEntry};
use crate::output::OutputDir;
use crate::Failure;

/// Largest relative error accepted for the two ground-state identities.
const IDENTITY_TOL: f64 = 1e-4;

/// Profile from file or solver, plus the hash of every input that produced it.
fn ground_state(cfg: &ExperimentConfig) -> Result<(RadialProfile, String), Failure> {
    let mut inputs = cfg.to_toml().into_bytes();
    let profile = match &cfg.groundstate.profile {
        Some(path) => {
            let bytes = std::fs::read(path)
                .map_err(|e| Failure::Config(format!("cannot read profile {}: {e}", path.display())))?;
            inputs.extend_from_slice(&bytes);
            RadialProfile::read(path)?
        }
        None => solve_radial(&cfg.groundstate.solver())?,
    };
    Ok((profile, sha256_hex(&inputs)))
}

#[derive(Serialize)]
struct GroundStateResult {
    r0: f64,
    mass: f64,
    grad_sq: f64,
    cube: f64,
    /// `|∫|∇Q|² − ∫Q²| / ∫Q²`.
    identity_grad_rel: f64,
    /// `|∫Q³ − 2∫Q²| / 2∫Q²`.
    identity_cube_rel: f64,
    residual: f64,
    iterations: usize,
    passed: bool,
    warnings: Vec<String>,
}

pub fn groundstate(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let (profile, inputs) = ground_state(cfg)?;
    let (grad_sq, mass, cube) = profile.pohozaev_integrals();
    let identity_grad_rel = (grad_sq - mass).abs() / mass;
    let identity_cube_rel = (cube - 2.0 * mass).abs() / (2.0 * mass);

    let mut warnings = Vec::new();
    let l_max = cfg.grid.l.get().into_iter().fold(0.0f64, f64::max);
    if profile.r_max < 3f64.sqrt() * l_max {
        warnings.push(format!(
            "r_max = {} is below √3·L = {:.3} of the configured grid; lifting will fail",
            profile.r_max,
            3f64.sqrt() * l_max
        ));
    }
    if let Err(msg) = profile.check_invariants(cfg.groundstate.tol) {
        warnings.push(format!("profile invariant: {msg}"));
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let passed = identity_grad_rel < IDENTITY_TOL && identity_cube_rel < IDENTITY_TOL;
    let result = GroundStateResult {
        r0: profile.values[0],
        mass,
        grad_sq,
        cube,
        identity_grad_rel,
        identity_cube_rel,
        residual: profile.residual,
        iterations: profile.iterations,
        passed,
        warnings,
    };

    let mut out = OutputDir::create(&cfg.output.dir)?;
    out.write_text("profile.txt", &profile.to_text())?;
    let path = out.write_report("groundstate", cfg, &inputs, &result)?;
    println!(
        "R(0) = {:.12}  identities: {:.3e} {:.3e}  report: {}",
        result.r0,
        identity_grad_rel,
        identity_cube_rel,
        path.display()
    );
    if !passed {
        return Err(Failure::Invariant(format!(
            "ground-state identities fail: {identity_grad_rel:.3e}, {identity_cube_rel:.3e} (tolerance {IDENTITY_TOL:e})"
        )));
    }
    Ok(())
}

/// One spectrum computation, as stored in `spectrum.toml`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub variant: PotentialVariant,
    pub zero_ground_state: bool,
    pub n: [usize; 3],
    pub a: [f64; 3],
    pub l: [f64; 3],
    pub method: Method,
    pub threshold: f64,
    pub interp_error: f64,
    pub complete: bool,
    pub lambdas: Vec<f64>,
    pub error: Option<String>,
    pub warnings: Vec<String>,
    pub pairs: Vec<PairRecord>,
    pub angles: Option<AngleTable>,
}

#[derive(Serialize, Deserialize)]
struct SpectrumResult {
    rows: Vec<SpectrumRow>,
}

/// Only the part of a stored report that `certify` reads.
#[derive(Deserialize)]
struct StoredSpectrum {
    result: SpectrumResult,
}

struct Computed {
    report: SpectrumReport,
    q: GroundStateField,
}

fn tensor_grid(n: [usize; 3], a: [f64; 3], l: [f64; 3]) -> Result<Arc<TensorGrid>, Failure> {
    let axes = [map_axis(n[0], a[0], l[0])?, map_axis(n[1], a[1], l[1])?, map_axis(n[2], a[2], l[2])?];
    Ok(Arc::new(TensorGrid::new(axes)))
}

fn compute_spectrum(
    cfg: &ExperimentConfig,
    profile: &RadialProfile,
    variant: PotentialVariant,
    n: [usize; 3],
    zero: bool,
    opts: &EigenOptions,
) -> Result<Computed, Failure> {
    let grid = tensor_grid(n, cfg.grid.a.get(), cfg.grid.l.get())?;
    let q = if zero { GroundStateField::zero(grid.clone()) } else { lift_to_tensor(profile, grid.clone())? };
    let op = build_with_factor(grid, &q, variant, cfg.spectrum.projection_factor)?;
    let report = eigs_below(&op, opts)?;
    Ok(Computed { report, q })
}

fn row_from(cfg: &ExperimentConfig, variant: PotentialVariant, n: [usize; 3], zero: bool, opts: &EigenOptions) -> SpectrumRow {
    SpectrumRow {
        variant,
        zero_ground_state: zero,
        n,
        a: cfg.grid.a.get(),
        l: cfg.grid.l.get(),
        method: opts.method,
        threshold: opts.threshold,
        interp_error: f64::NAN,
        complete: false,
        lambdas: Vec::new(),
        error: None,
        warnings: Vec::new(),
        pairs: Vec::new(),
        angles: None,
    }
}

fn fill_row(row: &mut SpectrumRow, computed: &Computed) -> Result<(), Failure> {
    let s = computed.report.summary();
    row.interp_error = s.interp_error;
    row.complete = s.complete;
    row.lambdas = computed.report.lambdas();
    row.warnings = s.warnings;
    row.pairs = s.pairs;
    if !row.zero_ground_state {
        row.angles = Some(angle_table(&computed.report, &computed.q)?);
    }
    Ok(())
}

pub fn spectrum(cfg: &ExperimentConfig, sweep: bool) -> Result<(), Failure> {
    let sp = &cfg.spectrum;
    if sp.variants.is_empty() {
        return Err(Failure::Config("spectrum.variants is empty".into()));
    }
    let (profile, inputs) = ground_state(cfg)?;
    let sizes: Vec<[usize; 3]> = if sweep { sp.sweep_sizes.iter().map(|&n| [n; 3]).collect() } else { vec![cfg.grid.n.get()] };

    let mut rows = Vec::new();
    let mut worst: Option<Failure> = None;
    for &variant in &sp.variants {
        for &n in &sizes {
            let mut row = row_from(cfg, variant, n, sp.zero_ground_state, &sp.eigen);
            let outcome = compute_spectrum(cfg, &profile, variant, n, sp.zero_ground_state, &sp.eigen)
                .and_then(|c| fill_row(&mut row, &c));
            if let Err(f) = outcome {
                eprintln!("{variant} N={n:?}: {}", f.message());
                row.error = Some(f.message().to_string());
                worst.get_or_insert(f);
            } else if !row.complete {
                worst.get_or_insert(Failure::Solver(format!("{variant} N={n:?}: spectrum incomplete")));
            }
            println!("{variant} N={:?} 𝓔={:.4e} λ = {:?}", n, row.interp_error, row.lambdas);
            rows.push(row);
        }
    }

    let mut out = OutputDir::create(&cfg.output.dir)?;
    let fmt = |v: f64| format!("{v:e}");
    let mut pair_lines = Vec::new();
    let mut table_lines = Vec::new();
    for r in &rows {
        let angles = r.angles.as_ref().map(|t| &t.entries[..]).unwrap_or(&[]);
        for (i, p) in r.pairs.iter().enumerate() {
            let angle = angles.get(i);
            pair_lines.push(vec![
                r.variant.to_string(),
                r.n[0].to_string(),
                (i + 1).to_string(),
                fmt(p.lambda),
                fmt(p.residual),
                fmt(p.imag_part),
                format!("{:?}", p.parity).to_lowercase(),
                fmt(p.parity_score),
                p.multiple.to_string(),
                angle.map_or(String::new(), |e| fmt(e.with_q)),
                angle.map_or(String::new(), |e| fmt(e.with_qx)),
            ]);
        }
        let lam = |i: usize| r.lambdas.get(i).map_or(String::new(), |v| fmt(*v));
        table_lines.push(vec![
            r.variant.to_string(),
            r.n[0].to_string(),
            r.lambdas.len().to_string(),
            lam(0),
            lam(1),
            fmt(r.interp_error),
            r.complete.to_string(),
            r.error.clone().unwrap_or_default(),
        ]);
    }
    out.write_records(
        "spectrum.csv",
        &["variant", "n", "index", "lambda", "residual", "imag_part", "parity", "parity_score", "multiple", "cos_q", "cos_qx"],
        &pair_lines,
    )?;
    out.write_records(
        "spectrum_table.csv",
        &["variant", "n", "count", "lambda_1", "lambda_2", "interp_error", "complete", "error"],
        &table_lines,
    )?;
    out.write_report("spectrum", cfg, &inputs, &SpectrumResult { rows })?;
    worst.map_or(Ok(()), Err)
}

fn inject(angles: &mut AngleTable, entry: &InjectedEntry, lambda_perp: f64) {
    angles.entries.retain(|e| !(e.parity == entry.parity && 0.5 * e.lambda < lambda_perp));
    let (with_q, with_qx) = match entry.parity {
        zk_virial::eigen::Parity::Even => (entry.cos_beta, 0.0),
        zk_virial::eigen::Parity::Odd => (0.0, entry.cos_beta),
    };
    angles.entries.push(AngleEntry { lambda: entry.lambda, parity: entry.parity, parity_score: 0.0, with_q, with_qx });
}

pub fn certify(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let c = &cfg.certify;
    if !(c.lambda_perp > 0.0) {
        return Err(Failure::Config(format!("certify.lambda_perp must be positive, got {}", c.lambda_perp)));
    }
    let threshold = 2.0 * c.lambda_perp;
    let (mut angles, provenance, inputs) = match &c.spectrum {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Failure::Config(format!(
                    "spectrum report {} is not readable ({e}); run `zkvirial spectrum` with the same config first, \
                     or remove certify.spectrum to compute the spectrum inline",
                    path.display()
                ))
            })?;
            let stored: StoredSpectrum = toml::from_str(&text)
                .map_err(|e| Failure::Config(format!("{} is not a spectrum report: {e}", path.display())))?;
            let row = pick_row(stored.result.rows, cfg)?;
            if (row.threshold - threshold).abs() > 1e-12 {
                return Err(Failure::Config(format!(
                    "stored spectrum used threshold {} but λ_⊥ = {} needs {threshold}",
                    row.threshold, c.lambda_perp
                )));
            }
            let angles = row.angles.clone().ok_or_else(|| {
                Failure::Config("stored spectrum has no angle table (zero ground state?)".into())
            })?;
            let mut bytes = cfg.to_toml().into_bytes();
            bytes.extend_from_slice(text.as_bytes());
            (angles, None, sha256_hex(&bytes))
        }
        None => {
            let (profile, inputs) = ground_state(cfg)?;
            let variant = *cfg.spectrum.variants.first().ok_or_else(|| Failure::Config("spectrum.variants is empty".into()))?;
            let opts = EigenOptions { threshold, ..cfg.spectrum.eigen.clone() };
            let computed = compute_spectrum(cfg, &profile, variant, cfg.grid.n.get(), false, &opts)?;
            if !computed.report.complete {
                return Err(Failure::Solver("spectrum incomplete; refusing to certify".into()));
            }
            let angles = angle_table(&computed.report, &computed.q)?;
            (angles, Some(computed.report.summary()), inputs)
        }
    };
    if let Some(entry) = &c.inject {
        inject(&mut angles, entry, c.lambda_perp);
    }
    let mut cert: Certificate = certify_angles(&angles, threshold)?;
    cert.provenance = provenance;

    let mut out = OutputDir::create(&cfg.output.dir)?;
    let path = out.write_report("certify", cfg, &inputs, &cert)?;
    for s in &cert.sectors {
        println!("{:?} sector ({}): bound {:.6}", s.parity, s.constraint, s.bound);
    }
    println!("verdict: {}  report: {}", if cert.positive { "positive" } else { "not positive" }, path.display());
    if !cert.positive {
        return Err(Failure::Invariant(format!("certificate is not positive (min bound {:.6})", cert.min_bound)));
    }
    Ok(())
}

fn pick_row(rows: Vec<SpectrumRow>, cfg: &ExperimentConfig) -> Result<SpectrumRow, Failure> {
    if rows.len() == 1 {
        return Ok(rows.into_iter().next().expect("one row"));
    }
    let want_n = cfg.grid.n.get();
    let want_v = cfg.spectrum.variants.first().copied();
    let listing: Vec<String> = rows.iter().map(|r| format!("{} N={:?}", r.variant, r.n)).collect();
    rows.into_iter()
        .find(|r| r.n == want_n && Some(r.variant) == want_v && !r.zero_ground_state)
        .ok_or_else(|| {
            Failure::Config(format!(
                "no stored spectrum row matches grid.n = {want_n:?} and the first variant; available: {}",
                listing.join(", ")
            ))
        })
}

#[derive(Serialize)]
struct EvolveResult<'a> {
    summary: &'a EvolutionSummary,
}

pub fn evolve(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let (profile, inputs) = ground_state(cfg)?;
    let run = run_evolution(&cfg.evolve, &profile)?;
    let mut out = OutputDir::create(&cfg.output.dir)?;
    out.write_csv("trajectory.csv", &run.rows)?;
    let fmt = |v: f64| format!("{v:e}");
    let ode: Vec<Vec<String>> = run
        .ode
        .iter()
        .map(|o| {
            vec![
                fmt(o.t),
                fmt(o.c_prime),
                fmt(o.a_prime[0]),
                fmt(o.a_prime[1]),
                fmt(o.a_prime[2]),
                fmt(o.r_c),
                fmt(o.r_c_alt),
                fmt(o.r_a[0]),
                fmt(o.r_a[1]),
                fmt(o.r_a[2]),
                fmt(o.b_sq),
            ]
        })
        .collect();
    out.write_records(
        "ode.csv",
        &["t", "c_prime", "ax_prime", "ay_prime", "az_prime", "R_c", "R_c_alt", "R_ax", "R_ay", "R_az", "b_sq"],
        &ode,
    )?;
    let s = &run.summary;
    if s.halted.is_some() {
        run.final_state.write_snapshot(&out.path("last_good.f64"))?;
        out.register("last_good.f64")?;
        out.register("last_good.f64.toml")?;
    }
    let path = out.write_report("evolve", cfg, &inputs, &EvolveResult { summary: s })?;
    println!(
        "t = {:.3}  mass drift {:.3e}  energy drift {:.3e}  max b {:.3e}  a = {:?}  violations {}  report: {}",
        s.t_final,
        s.mass_drift,
        s.energy_drift,
        s.max_b,
        s.final_a,
        s.monotonicity_violations,
        path.display()
    );
    if let Some(why) = &s.halted {
        return Err(Failure::Invariant(format!("run halted: {why}; last good state in last_good.f64")));
    }
    Ok(())
}
