//! Quadratic contractive norms `‖x‖_P` with `AᵢᵀPAᵢ ⪯ ρ̃²P` for every mode.
//!
//! This is the best ellipsoidal norm, which can exceed the joint spectral
//! radius when no quadratic norm is extremal.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::certificate::matrix_rows;
use crate::error::{Error, Result};
use crate::linalg::{lambda_max, spectral_norm, spectral_radius};
use crate::lmi::{FeasibilityOutcome, LyapunovConstraints};

/// Upper bound on `λ_max(P)` during the feasibility search.
pub const NORM_KAPPA_CAP: f64 = 1e6;
/// Slack allowed on each contraction LMI.
pub const NORM_LMI_TOL: f64 = 1e-10;
/// Frobenius weight of the tie-break that selects `P`.
pub const NORM_TIE_BREAK_C: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractiveNorm {
    #[serde(rename = "P", with = "matrix_rows")]
    pub p: DMatrix<f64>,
    pub rho_tilde: f64,
}

impl ContractiveNorm {
    /// Largest `λ_max(AᵢᵀPAᵢ − ρ̃²P)` over the modes.
    pub fn worst_residual(&self, mats: &[DMatrix<f64>]) -> f64 {
        let r2 = self.rho_tilde * self.rho_tilde;
        mats.iter()
            .map(|a| lambda_max(&(a.transpose() * &self.p * a - &self.p * r2)))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn contraction_constraints(mats: &[DMatrix<f64>], rho: f64, tol: f64) -> LyapunovConstraints {
    let mut lc = LyapunovConstraints::new(mats[0].nrows());
    for a in mats {
        lc.push_contraction(a, rho * rho, tol);
    }
    lc
}

fn feasible_at(mats: &[DMatrix<f64>], rho: f64) -> Result<Option<DMatrix<f64>>> {
    match contraction_constraints(mats, rho, 0.0).find_feasible(NORM_KAPPA_CAP, NORM_LMI_TOL) {
        FeasibilityOutcome::Feasible { p, .. } => Ok(Some(p)),
        FeasibilityOutcome::Infeasible { .. } => Ok(None),
        FeasibilityOutcome::NumericalFailure(msg) => Err(Error::Numerical(msg)),
    }
}

/// Smallest `ρ̃ ≤ 1` (within `tol`) admitting a common quadratic norm, and
/// that norm. `None` when even `ρ̃ = 1` is infeasible.
///
/// The returned `P` minimizes `α + c‖P‖²_F` over `I ⪯ P ⪯ αI` at the
/// reported `ρ̃`, so `P = I` whenever the identity is optimal.
pub fn common_lyapunov_norm(mats: &[DMatrix<f64>], tol: f64) -> Result<Option<ContractiveNorm>> {
    if !(tol > 0.0) {
        return Err(Error::Invalid("tolerance must be positive".into()));
    }
    if mats.is_empty() {
        return Err(Error::Invalid("need at least one matrix".into()));
    }
    let lower = mats.iter().map(spectral_radius).fold(0.0, f64::max);
    let norm_hi = mats.iter().map(spectral_norm).fold(0.0, f64::max);
    // P = I works for any ρ̃ above the largest spectral norm.
    let mut hi = (norm_hi * (1.0 + 1e-9) + 1e-12).min(1.0);
    let mut lo = lower * (1.0 - 1e-12);
    if feasible_at(mats, hi)?.is_none() {
        if hi < 1.0 && feasible_at(mats, 1.0)?.is_some() {
            hi = 1.0;
        } else {
            return Ok(None);
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if feasible_at(mats, mid)?.is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let rho = hi;
    let start = feasible_at(mats, rho)?
        .ok_or_else(|| Error::Numerical(format!("feasibility lost at rho={rho}")))?;
    let (p, _) = contraction_constraints(mats, rho, NORM_LMI_TOL)
        .tie_break(NORM_TIE_BREAK_C, &start)
        .map_err(|e| Error::Numerical(format!("norm tie-break at rho={rho}: {e:?}")))?;
    Ok(Some(ContractiveNorm { p, rho_tilde: rho }))
}
