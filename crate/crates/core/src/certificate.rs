//! Angle tables and angle-lemma positivity certificates for `B + P`.
//!
//! The doubled operator's eigenvalues are halved, split by x-parity and each
//! sector's lowest eigenvalue is paired with the constraint of the same
//! parity (`Q` is even, `Q_x` is odd).

use serde::{Deserialize, Serialize};

use crate::eigen::{Parity, SpectrumReport, SpectrumSummary};
use crate::error::{Error, Result};
use crate::lift::GroundStateField;

/// Bottom of the continuous spectrum of `B + P`.
pub const LAMBDA_PERP: f64 = 0.5;

/// Largest parity score accepted before certification aborts.
pub const PARITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleEntry {
    /// Eigenvalue of the doubled operator.
    pub lambda: f64,
    pub parity: Parity,
    pub parity_score: f64,
    /// `⟨Q/‖Q‖, φ⟩_w`.
    pub with_q: f64,
    /// `⟨Q_x/‖Q_x‖, φ⟩_w`.
    pub with_qx: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleTable {
    pub entries: Vec<AngleEntry>,
}

/// `λ_⊥ − (λ_⊥ − λ₁)(1 − cos²β)`.
pub fn angle_bound(lambda1: f64, lambda_perp: f64, cos_beta: f64) -> Result<f64> {
    if !(lambda_perp > lambda1) {
        return Err(Error::InvalidArgument(format!("need λ_⊥ > λ₁, got λ_⊥ = {lambda_perp}, λ₁ = {lambda1}")));
    }
    if !(cos_beta.abs() <= 1.0) {
        return Err(Error::InvalidArgument(format!("|cos β| must be at most 1, got {cos_beta}")));
    }
    Ok(lambda_perp - (lambda_perp - lambda1) * (1.0 - cos_beta * cos_beta))
}

/// Inner products of each eigenfunction with the normalized constraint vectors.
pub fn angle_table(report: &SpectrumReport, q: &GroundStateField) -> Result<AngleTable> {
    let grid = &q.grid;
    let manifest = grid.manifest();
    if manifest != report.operator.grid {
        return Err(Error::GridMismatch("spectrum and ground state live on different grids".into()));
    }
    let w = grid.interior_weights();
    let inner = |a: &[f64], b: &[f64]| crate::grid::weighted_inner(a, b, &w);
    let qi = grid.restrict(&q.values);
    let qxi = grid.restrict(&q.values_dx);
    let (nq, nqx) = (inner(&qi, &qi)?.sqrt(), inner(&qxi, &qxi)?.sqrt());
    if nq == 0.0 || nqx == 0.0 {
        return Err(Error::InvalidArgument("constraint vectors vanish on the interior".into()));
    }
    let entries = report
        .pairs
        .iter()
        .map(|p| {
            Ok(AngleEntry {
                lambda: p.lambda,
                parity: p.parity,
                parity_score: p.parity_score,
                with_q: inner(&qi, &p.phi)? / nq,
                with_qx: inner(&qxi, &p.phi)? / nqx,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AngleTable { entries })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorBound {
    pub parity: Parity,
    /// `"Q"` or `"Q_x"`.
    pub constraint: String,
    /// Halved eigenvalue below `λ_⊥` in this sector, if any.
    pub lambda: Option<f64>,
    pub cos_beta: Option<f64>,
    pub bound: f64,
    /// The bound obtained if the sign of `lambda` is flipped.
    pub negated_lambda_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub lambda_perp: f64,
    pub sectors: Vec<SectorBound>,
    pub min_bound: f64,
    pub positive: bool,
    pub angles: AngleTable,
    pub provenance: Option<SpectrumSummary>,
}

pub fn certify(report: &SpectrumReport, q: &GroundStateField) -> Result<Certificate> {
    let angles = angle_table(report, q)?;
    let mut cert = certify_angles(&angles, report.threshold)?;
    cert.provenance = Some(report.summary());
    Ok(cert)
}

/// Certification from a precomputed angle table; `threshold` is the doubled operator's edge.
pub fn certify_angles(angles: &AngleTable, threshold: f64) -> Result<Certificate> {
    for e in &angles.entries {
        if !(e.parity_score <= PARITY_TOL) {
            return Err(Error::AmbiguousParity { lambda: e.lambda, score: e.parity_score });
        }
    }
    let lambda_perp = 0.5 * threshold;
    let mut sectors = Vec::with_capacity(2);
    for (parity, constraint) in [(Parity::Even, "Q"), (Parity::Odd, "Q_x")] {
        let below: Vec<&AngleEntry> = angles
            .entries
            .iter()
            .filter(|e| e.parity == parity && 0.5 * e.lambda < lambda_perp)
            .collect();
        let sector = match below.as_slice() {
            [] => SectorBound {
                parity,
                constraint: constraint.into(),
                lambda: None,
                cos_beta: None,
                bound: lambda_perp,
                negated_lambda_bound: None,
            },
            [e] => {
                let lambda = 0.5 * e.lambda;
                let cos_beta = match parity {
                    Parity::Even => e.with_q,
                    Parity::Odd => e.with_qx,
                };
                let cos_beta = cos_beta.clamp(-1.0, 1.0);
                SectorBound {
                    parity,
                    constraint: constraint.into(),
                    lambda: Some(lambda),
                    cos_beta: Some(cos_beta),
                    bound: angle_bound(lambda, lambda_perp, cos_beta)?,
                    negated_lambda_bound: angle_bound(-lambda, lambda_perp, cos_beta).ok(),
                }
            }
            many => {
                return Err(Error::InvalidArgument(format!(
                    "{} eigenvalues below λ_⊥ in the {parity:?} sector; a single constraint cannot control them",
                    many.len()
                )))
            }
        };
        sectors.push(sector);
    }
    let min_bound = sectors.iter().map(|s| s.bound).fold(f64::INFINITY, f64::min);
    Ok(Certificate { lambda_perp, sectors, min_bound, positive: min_bound > 0.0, angles: angles.clone(), provenance: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(lambda: f64, parity: Parity, with_q: f64, with_qx: f64) -> AngleEntry {
        AngleEntry { lambda, parity, parity_score: 0.0, with_q, with_qx }
    }

    #[test]
    fn worked_examples() {
        assert!((angle_bound(-0.0294, 0.5, 0.9946).unwrap() - 0.4943).abs() < 1e-4);
        assert!((angle_bound(0.4688, 0.5, 0.7922).unwrap() - 0.4884).abs() < 1e-4);
        assert_eq!(angle_bound(-3.0, 0.5, 1.0).unwrap(), 0.5);
        assert!(angle_bound(0.6, 0.5, 0.3).is_err());
        assert!(angle_bound(0.1, 0.5, 1.2).is_err());
    }

    #[test]
    fn orthogonal_constraint_gives_raw_eigenvalue() {
        let table = AngleTable { entries: vec![entry(0.8, Parity::Even, 0.0, 0.0)] };
        let c = certify_angles(&table, 1.0).unwrap();
        assert!((c.sectors[0].bound - 0.4).abs() < 1e-15);
        assert_eq!(c.sectors[1].bound, 0.5);
        assert!(c.positive);

        let table = AngleTable { entries: vec![entry(-0.2, Parity::Odd, 0.0, 0.0)] };
        let c = certify_angles(&table, 1.0).unwrap();
        assert!((c.min_bound + 0.1).abs() < 1e-15);
        assert!(!c.positive);
    }

    #[test]
    fn ambiguous_parity_and_crowded_sectors_abort() {
        let mut e = entry(-0.1, Parity::Even, 0.9, 0.0);
        e.parity_score = 1e-3;
        assert!(matches!(certify_angles(&AngleTable { entries: vec![e] }, 1.0), Err(Error::AmbiguousParity { .. })));
        let crowded = AngleTable { entries: vec![entry(-0.1, Parity::Even, 0.9, 0.0), entry(0.2, Parity::Even, 0.1, 0.0)] };
        assert!(certify_angles(&crowded, 1.0).is_err());
    }

    #[test]
    fn negated_reading_is_reported() {
        let table = AngleTable { entries: vec![entry(0.9376, Parity::Odd, 0.0, 0.7922)] };
        let c = certify_angles(&table, 1.0).unwrap();
        let odd = &c.sectors[1];
        assert!((odd.bound - 0.4884).abs() < 1e-4);
        let alt = odd.negated_lambda_bound.unwrap();
        assert!((alt - (0.5 - (0.5 + 0.4688) * (1.0 - 0.7922f64.powi(2)))).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn bound_is_monotone(l in -2.0f64..0.49, dl in 0.0f64..0.5, c in 0.0f64..1.0, dc in 0.0f64..1.0) {
            let l2 = (l + dl).min(0.4999);
            let c2 = (c + dc).min(1.0);
            let b = angle_bound(l, 0.5, c).unwrap();
            prop_assert!(angle_bound(l2, 0.5, c).unwrap() >= b);
            prop_assert!(angle_bound(l, 0.5, c2).unwrap() >= b);
            prop_assert!(b <= 0.5);
        }

        #[test]
        fn certify_ignores_signs_and_order(
            l1 in -0.5f64..0.99, l2 in -0.5f64..0.99,
            c1 in -1.0f64..1.0, c2 in -1.0f64..1.0,
            s1 in prop::bool::ANY, s2 in prop::bool::ANY,
        ) {
            let a = entry(l1, Parity::Even, c1, 0.0);
            let b = entry(l2, Parity::Odd, 0.0, c2);
            let flip = |e: &AngleEntry, s: bool| if s { AngleEntry { with_q: -e.with_q, with_qx: -e.with_qx, ..e.clone() } } else { e.clone() };
            let base = certify_angles(&AngleTable { entries: vec![a.clone(), b.clone()] }, 1.0).unwrap();
            let other = certify_angles(&AngleTable { entries: vec![flip(&b, s2), flip(&a, s1)] }, 1.0).unwrap();
            prop_assert_eq!(base.min_bound, other.min_bound);
            prop_assert_eq!(base.positive, other.positive);
            for (x, y) in base.sectors.iter().zip(&other.sectors) {
                prop_assert_eq!(x.bound, y.bound);
            }
        }
    }
}
