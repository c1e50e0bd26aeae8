//! Experiment configuration: one TOML document, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use zk_virial::eigen::EigenOptions;
use zk_virial::radial::RadialConfig;
use zk_virial::virial::PotentialVariant;
use zk_virial::zk::run::EvolveConfig;
use zk_virial::zk::Perturbation;

use crate::Failure;

/// Sizes used by `spectrum --sweep`.
pub const SWEEP_SIZES: [usize; 4] = [16, 21, 32, 36];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Free-form label copied into every report.
    pub stamp: Option<String>,
    pub output: OutputConfig,
    pub groundstate: GroundStateConfig,
    pub grid: GridConfig,
    pub spectrum: SpectrumConfig,
    pub certify: CertifyConfig,
    pub evolve: EvolveConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundStateConfig {
    pub p: u32,
    pub r_max: f64,
    pub n_r: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Read the profile from a file written by `groundstate` instead of solving.
    pub profile: Option<PathBuf>,
}

impl Default for GroundStateConfig {
    fn default() -> Self {
        let d = RadialConfig::default();
        Self { p: d.p, r_max: d.r_max, n_r: d.n_r, tol: d.tol, max_iter: d.max_iter, profile: None }
    }
}

impl GroundStateConfig {
    pub fn solver(&self) -> RadialConfig {
        RadialConfig { p: self.p, r_max: self.r_max, n_r: self.n_r, tol: self.tol, max_iter: self.max_iter }
    }
}

/// A value given once for all axes or once per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAxis<T> {
    All(T),
    Each([T; 3]),
}

impl<T: Copy> PerAxis<T> {
    pub fn get(&self) -> [T; 3] {
        match *self {
            Self::All(v) => [v; 3],
            Self::Each(v) => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Polynomial degree.
    pub n: PerAxis<usize>,
    /// Map steepness.
    pub a: PerAxis<f64>,
    /// Half-width of the box.
    pub l: PerAxis<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n: PerAxis::All(32), a: PerAxis::All(5.0), l: PerAxis::All(10.0) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub variants: Vec<PotentialVariant>,
    pub projection_factor: f64,
    /// Replace the ground state by zero (free-operator smoke run).
    pub zero_ground_state: bool,
    pub sweep_sizes: Vec<usize>,
    pub eigen: EigenOptions,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            variants: vec![PotentialVariant::Derived],
            projection_factor: 2.0,
            zero_ground_state: false,
            sweep_sizes: SWEEP_SIZES.to_vec(),
            eigen: EigenOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyConfig {
    pub lambda_perp: f64,
    /// Spectrum report written by `spectrum`; computed inline when absent.
    pub spectrum: Option<PathBuf>,
    /// Replace one sector's entry by a synthetic one before certifying.
    pub inject: Option<InjectedEntry>,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self { lambda_perp: 0.5, spectrum: None, inject: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectedEntry {
    /// Eigenvalue of the doubled operator.
    pub lambda: f64,
    pub parity: zk_virial::eigen::Parity,
    pub cos_beta: f64,
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub variant: Option<PotentialVariant>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| Failure::Config(format!("invalid configuration: {e}")))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text).map_err(|f| Failure::Config(format!("{}: {}", p.display(), f.message())))
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        if let Some(seed) = o.seed {
            self.spectrum.eigen.seed = seed;
            if let Perturbation::Noise { seed: s, .. } = &mut self.evolve.perturbation {
                *s = seed;
            }
        }
        if let Some(v) = o.variant {
            self.spectrum.variants = vec![v];
        }
    }

    /// Canonical TOML of the resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}
