//! Exact check that an ellipsoid `{x : xᵀPx ≤ L²}` is mapped into itself
//! by every mode.
//!
//! With `y = P^{1/2}x` the image norm is `‖My + m‖` where
//! `M = P^{1/2}AP^{−1/2}` and `m = P^{1/2}b`. A convex function on a ball
//! peaks on the sphere `‖y‖ = L`, where the maximizer solves
//! `(λI − MᵀM)y = Mᵀm` with `λ ≥ λ_max(MᵀM)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::certificate::InvariantEllipsoid;
use crate::error::{Error, Result};
use crate::linalg::{sqrt_and_inv_sqrt, sym_eigen};
use crate::system::{Mode, SwitchedAffineSystem};

/// Maximum of `‖My + m‖` on `‖y‖ = r`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMax {
    pub value: f64,
    pub y: DVector<f64>,
}

/// Maximizes `‖My + m‖` over the sphere `‖y‖ = r`.
pub fn boundary_maximum(mm: &DMatrix<f64>, m: &DVector<f64>, r: f64) -> BoundaryMax {
    let n = mm.ncols();
    let h = mm.transpose() * mm;
    let g = mm.transpose() * m;
    let (vals, vecs) = sym_eigen(&h);
    let top = vals[n - 1];
    let gt = vecs.transpose() * &g;
    let scale = g.norm().max(top.abs() * r).max(f64::MIN_POSITIVE);
    let eig_tol = 1e-12 * top.abs().max(1.0);
    let in_top: Vec<bool> = vals.iter().map(|v| top - v <= eig_tol).collect();
    let top_weight: f64 = (0..n).filter(|&k| in_top[k]).map(|k| gt[k] * gt[k]).sum::<f64>().sqrt();

    let y_at = |lambda: f64| -> DVector<f64> {
        let mut c = DVector::zeros(n);
        for k in 0..n {
            c[k] = gt[k] / (lambda - vals[k]);
        }
        &vecs * c
    };
    let value_of = |y: &DVector<f64>| (mm * y + m).norm();

    let mut candidates: Vec<DVector<f64>> = Vec::new();
    if top_weight <= 1e-12 * scale {
        // Hard case: g has no component in the top eigenspace.
        let mut c = DVector::zeros(n);
        for k in 0..n {
            if !in_top[k] {
                c[k] = gt[k] / (top - vals[k]);
            }
        }
        let rest = c.norm_squared();
        if rest <= r * r {
            let first = (0..n).find(|&k| in_top[k]).expect("top eigenvalue present");
            let tau = (r * r - rest).sqrt();
            for sign in [1.0, -1.0] {
                let mut cc = c.clone();
                cc[first] = sign * tau;
                candidates.push(&vecs * cc);
            }
        }
    }
    if candidates.is_empty() {
        // ‖y(λ)‖ decreases on (λ_max, ∞) and is at most ‖g‖/(λ−λ_max).
        let phi = |t: f64| y_at(top + t).norm();
        let mut lo = 0.0;
        let mut hi = (g.norm() / r).max(f64::MIN_POSITIVE);
        while phi(hi) > r {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if phi(mid) > r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let y = y_at(top + hi);
        let norm = y.norm();
        candidates.push(if norm > 0.0 { y * (r / norm) } else { y });
    }
    let mut best = BoundaryMax {
        value: f64::NEG_INFINITY,
        y: DVector::zeros(n),
    };
    for y in candidates {
        let v = value_of(&y);
        if v > best.value {
            best = BoundaryMax { value: v, y };
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum InvarianceVerdict {
    Invariant {
        /// Largest image level `max ‖Aᵢx + bᵢ‖_P` over the boundary.
        worst_image: f64,
    },
    Violated {
        /// 1-based mode index.
        mode: usize,
        witness: Vec<f64>,
        image_level: f64,
    },
}

impl InvarianceVerdict {
    pub fn is_invariant(&self) -> bool {
        matches!(self, InvarianceVerdict::Invariant { .. })
    }
}

/// Checks `max_{xᵀPx = L²} ‖Aᵢx + bᵢ‖_P ≤ L + tol` for every mode.
pub fn verify_ellipsoid_invariance(
    sys: &SwitchedAffineSystem,
    ell: &InvariantEllipsoid,
    tol: f64,
) -> Result<InvarianceVerdict> {
    if !(ell.level > 0.0) {
        return Err(Error::Domain(format!("ellipsoid level must be positive, got {}", ell.level)));
    }
    if ell.p.nrows() != sys.dim() || ell.p.ncols() != sys.dim() {
        return Err(Error::Dimension {
            what: "ellipsoid matrix",
            expected: sys.dim(),
            found: ell.p.nrows(),
        });
    }
    let (half, inv_half) = sqrt_and_inv_sqrt(&ell.p)
        .ok_or_else(|| Error::Domain("ellipsoid matrix is not positive definite".into()))?;
    let mut worst = f64::NEG_INFINITY;
    for (i, mode) in sys.modes().iter().enumerate() {
        let mm = &half * &mode.a * &inv_half;
        let m = &half * &mode.b;
        let best = boundary_maximum(&mm, &m, ell.level);
        if best.value > ell.level + tol {
            let x = &inv_half * &best.y;
            return Ok(InvarianceVerdict::Violated {
                mode: Mode::from_zero_based(i).one_based(),
                witness: x.iter().copied().collect(),
                image_level: best.value,
            });
        }
        worst = worst.max(best.value);
    }
    Ok(InvarianceVerdict::Invariant { worst_image: worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::p_norm;
    use crate::system::AffineMode;
    use proptest::prelude::*;

    fn system(a: DMatrix<f64>, b: Vec<f64>) -> SwitchedAffineSystem {
        SwitchedAffineSystem::new(vec![AffineMode {
            a,
            b: DVector::from_vec(b),
        }])
        .unwrap()
    }

    fn ball(n: usize, level: f64) -> InvariantEllipsoid {
        InvariantEllipsoid {
            p: DMatrix::identity(n, n),
            level,
            outer_level: level,
        }
    }

    fn grid_max(mm: &DMatrix<f64>, m: &DVector<f64>, r: f64, k: usize) -> f64 {
        (0..k)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
                let y = DVector::from_vec(vec![r * t.cos(), r * t.sin()]);
                (mm * y + m).norm()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn half_identity_with_offset() {
        let sys = system(DMatrix::identity(2, 2) * 0.5, vec![0.1, 0.0]);
        let v = verify_ellipsoid_invariance(&sys, &ball(2, 1.0), 1e-12).unwrap();
        match v {
            InvarianceVerdict::Invariant { worst_image } => assert!((worst_image - 0.6).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn translation_escapes() {
        let sys = system(DMatrix::identity(2, 2), vec![0.1, 0.0]);
        for level in [0.5, 1.0, 10.0] {
            match verify_ellipsoid_invariance(&sys, &ball(2, level), 1e-9).unwrap() {
                InvarianceVerdict::Violated { mode, witness, image_level } => {
                    assert_eq!(mode, 1);
                    assert!((image_level - (level + 0.1)).abs() < 1e-9);
                    assert!((witness[0] - level).abs() < 1e-9 && witness[1].abs() < 1e-9);
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn hard_case_with_zero_offset() {
        // g = 0: every top eigenvector is a maximizer.
        let mm = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let best = boundary_maximum(&mm, &DVector::zeros(2), 3.0);
        assert!((best.value - 6.0).abs() < 1e-12);
        // Offset orthogonal to the top direction.
        let m = DVector::from_vec(vec![0.0, 0.5]);
        let best = boundary_maximum(&mm, &m, 3.0);
        assert!(best.value >= grid_max(&mm, &m, 3.0, 20_000) - 1e-12);
        assert!((best.y.norm() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let sys = system(DMatrix::identity(2, 2) * 0.5, vec![0.0, 0.0]);
        let ell = InvariantEllipsoid {
            p: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            level: 1.0,
            outer_level: 1.0,
        };
        assert!(matches!(verify_ellipsoid_invariance(&sys, &ell, 1e-9), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn matches_dense_grid(
            a in prop::array::uniform4(-2.0f64..2.0),
            b in prop::array::uniform2(-2.0f64..2.0),
            r in 0.1f64..5.0,
        ) {
            let mm = DMatrix::from_row_slice(2, 2, &a);
            let m = DVector::from_row_slice(&b);
            let exact = boundary_maximum(&mm, &m, r).value;
            let grid = grid_max(&mm, &m, r, 10_000);
            prop_assert!(exact >= grid - 1e-12 * grid.max(1.0), "exact {exact} grid {grid}");
            prop_assert!(exact <= grid * (1.0 + 1e-3) + 1e-12, "exact {exact} grid {grid}");
        }

        /// A centred ellipsoid whose boundary maps inside `ρ` times itself
        /// gives `‖Ax‖_P ≤ ρ‖x‖_P` everywhere.
        #[test]
        fn centred_boundary_check_gives_global_contraction(
            a in prop::array::uniform4(-1.0f64..1.0),
            q in prop::array::uniform3(-0.5f64..0.5),
            xs in prop::collection::vec(prop::array::uniform2(-10.0f64..10.0), 20),
        ) {
            let am = DMatrix::from_row_slice(2, 2, &a);
            let l = DMatrix::from_row_slice(2, 2, &[1.0 + q[0].abs(), 0.0, q[1], 1.0 + q[2].abs()]);
            let p = &l * l.transpose();
            let (half, inv_half) = sqrt_and_inv_sqrt(&p).unwrap();
            let mm = &half * &am * &inv_half;
            let level = 2.0;
            let rho = boundary_maximum(&mm, &DVector::zeros(2), level).value / level;
            for x in xs {
                let x = DVector::from_row_slice(&x);
                prop_assert!(p_norm(&p, &(&am * &x)) <= rho * p_norm(&p, &x) * (1.0 + 1e-9) + 1e-12);
            }
        }
    }
}
