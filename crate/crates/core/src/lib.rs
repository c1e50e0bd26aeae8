//! Numerical toolkit for the 3D Zakharov–Kuznetsov soliton: radial ground
//! state, mapped Chebyshev collocation, the linearized virial operator and
//! its low spectrum, angle-lemma positivity certificates, and a periodic
//! pseudospectral integrator with modulation and monotonicity diagnostics.

pub mod certificate;
pub mod cheb;
pub mod eigen;
pub mod error;
pub mod grid;
pub mod lift;
pub mod pchip;
pub mod radial;
pub mod virial;
pub mod zk;

pub use error::{Error, Result};
