//! Brute-force joint spectral radius bounds over all products up to a
//! fixed length.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, spectral_radius, sqrt_and_inv_sqrt};
use crate::whitebox::norm::ContractiveNorm;

/// Cumulative number of products enumerated over all lengths.
pub const DEFAULT_PRODUCT_CAP: u128 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JsrBounds {
    pub lower: f64,
    pub upper: f64,
    /// Longest product length used.
    pub depth: usize,
    /// Products enumerated across all lengths.
    pub products: u128,
}

/// Per-length maxima of `ρ(Π)` and `‖Π‖_P`.
#[derive(Default, Clone, Copy)]
struct LevelMax {
    radius: f64,
    norm: f64,
}

impl LevelMax {
    fn merge(self, o: Self) -> Self {
        Self {
            radius: self.radius.max(o.radius),
            norm: self.norm.max(o.norm),
        }
    }
}

fn descend(
    prod: &DMatrix<f64>,
    len: usize,
    l_max: usize,
    mats: &[DMatrix<f64>],
    half: &DMatrix<f64>,
    inv_half: &DMatrix<f64>,
    acc: &mut [LevelMax],
) {
    let level = &mut acc[len - 1];
    level.radius = level.radius.max(spectral_radius(prod));
    level.norm = level.norm.max(spectral_norm(&(half * prod * inv_half)));
    if len == l_max {
        return;
    }
    for a in mats {
        // The newest factor multiplies on the left.
        let next = a * prod;
        descend(&next, len + 1, l_max, mats, half, inv_half, acc);
    }
}

/// Bounds on the joint spectral radius from all products of length
/// `1..=l_max`.
///
/// `lower = max_l max_Π ρ(Π)^{1/l}` and `upper = min_l max_Π ‖Π‖_P^{1/l}`
/// with the operator norm induced by `norm.P` (identity by default).
pub fn jsr_bruteforce(
    mats: &[DMatrix<f64>],
    l_max: usize,
    norm: Option<&ContractiveNorm>,
    cap: u128,
) -> Result<JsrBounds> {
    if l_max == 0 {
        return Err(Error::Invalid("l_max must be at least 1".into()));
    }
    if mats.is_empty() {
        return Err(Error::Invalid("need at least one matrix".into()));
    }
    let n = mats[0].nrows();
    if mats.iter().any(|a| a.nrows() != n || a.ncols() != n) {
        return Err(Error::Dimension {
            what: "matrix set",
            expected: n,
            found: mats.iter().map(|a| a.nrows()).find(|&r| r != n).unwrap_or(n),
        });
    }
    let m = mats.len() as u128;
    let mut total: u128 = 0;
    let mut level_count: u128 = 1;
    for _ in 0..l_max {
        level_count = level_count.saturating_mul(m);
        total = total.saturating_add(level_count);
    }
    if total > cap {
        return Err(Error::Size {
            what: "product enumeration",
            requested: total,
            cap,
        });
    }
    let (half, inv_half) = match norm {
        None => (DMatrix::identity(n, n), DMatrix::identity(n, n)),
        Some(c) => sqrt_and_inv_sqrt(&c.p)
            .ok_or_else(|| Error::Domain("norm matrix is not positive definite".into()))?,
    };
    let acc = mats
        .par_iter()
        .map(|a| {
            let mut acc = vec![LevelMax::default(); l_max];
            descend(a, 1, l_max, mats, &half, &inv_half, &mut acc);
            acc
        })
        .reduce(
            || vec![LevelMax::default(); l_max],
            |x, y| x.iter().zip(&y).map(|(a, b)| a.merge(*b)).collect(),
        );
    let mut lower = 0.0f64;
    let mut upper = f64::INFINITY;
    for (i, lv) in acc.iter().enumerate() {
        let inv_l = 1.0 / (i + 1) as f64;
        lower = lower.max(lv.radius.powf(inv_l));
        upper = upper.min(lv.norm.powf(inv_l));
    }
    Ok(JsrBounds {
        lower,
        upper,
        depth: l_max,
        products: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::fixtures;

    fn rot(t: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()])
    }

    #[test]
    fn half_identity() {
        let b = jsr_bruteforce(&[DMatrix::identity(2, 2) * 0.5], 1, None, DEFAULT_PRODUCT_CAP).unwrap();
        assert!((b.lower - 0.5).abs() < 1e-12 && (b.upper - 0.5).abs() < 1e-12);
    }

    #[test]
    fn scaled_rotation() {
        let a = rot(std::f64::consts::FRAC_PI_4) * 0.9;
        let b = jsr_bruteforce(&[a], 4, None, DEFAULT_PRODUCT_CAP).unwrap();
        assert!((b.lower - 0.9).abs() < 1e-12 && (b.upper - 0.9).abs() < 1e-12, "{b:?}");
    }

    #[test]
    fn f1_lower_bound_from_first_mode() {
        let mats = fixtures::f1().matrices();
        let b = jsr_bruteforce(&mats, 1, None, DEFAULT_PRODUCT_CAP).unwrap();
        // Eigenvalues of A₁ are (0.9 ± √0.61)/2.
        let rho_a1 = (0.9 + 0.61f64.sqrt()) / 2.0;
        assert!(b.lower >= rho_a1 - 1e-12);
        assert!(b.lower >= 0.8405);
        assert!(b.lower <= b.upper + 1e-9);
    }

    #[test]
    fn gelfand_sandwich_tightens() {
        for sys in [fixtures::f1(), fixtures::f2()] {
            let mats = sys.matrices();
            let mut prev: Option<JsrBounds> = None;
            for l in 1..=10 {
                let b = jsr_bruteforce(&mats, l, None, DEFAULT_PRODUCT_CAP).unwrap();
                assert!(b.lower <= b.upper + 1e-9);
                if let Some(p) = prev {
                    assert!(b.lower >= p.lower);
                    assert!(b.upper <= p.upper);
                }
                prev = Some(b);
            }
        }
    }

    #[test]
    fn cap_is_enforced() {
        let mats = fixtures::f1().matrices();
        // Length 20 needs 2 + 4 + ... + 2^20 = 2^21 − 2 > 2·10⁶ products.
        let e = jsr_bruteforce(&mats, 20, None, DEFAULT_PRODUCT_CAP).unwrap_err();
        assert!(matches!(e, Error::Size { .. }));
        assert!(jsr_bruteforce(&mats, 19, None, DEFAULT_PRODUCT_CAP).is_ok());
    }

    #[test]
    fn json_roundtrip() {
        let b = jsr_bruteforce(&fixtures::f2().matrices(), 3, None, DEFAULT_PRODUCT_CAP).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        let back: JsrBounds = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
    }
}
