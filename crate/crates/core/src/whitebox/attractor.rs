//! Point-set iteration `K₀ = {0}`, `K_j = {Aᵢx + bᵢ : i, x ∈ K_{j−1}}`
//! approximating the attractor, and the ball that contains it.

use std::io::Write;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::p_norm;
use crate::system::SwitchedAffineSystem;
use crate::whitebox::hull::{convex_hull_2d, hausdorff_convex_2d, hausdorff_points};
use crate::whitebox::norm::ContractiveNorm;

/// Hard cap on stored points per level.
pub const DEFAULT_POINT_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct AttractorApprox {
    /// `K₀, …, K_k`.
    pub iterates: Vec<Vec<DVector<f64>>>,
    pub hull_pruned: bool,
    /// Hausdorff distance between the hulls of `K_{j−1}` and `K_j` for
    /// `j ≥ 1` (point-set distance when `n ≠ 2`). Diagnostic only.
    pub hausdorff_gaps: Vec<f64>,
}

impl AttractorApprox {
    pub fn last(&self) -> &[DVector<f64>] {
        self.iterates.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Rows `level,index,x1,…,xn` with an optional `#` comment header.
    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            for line in c.lines() {
                writeln!(out, "# {line}")?;
            }
        }
        let n = self.iterates.first().and_then(|k| k.first()).map_or(0, |p| p.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["level".to_string(), "index".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for (level, pts) in self.iterates.iter().enumerate() {
            for (i, p) in pts.iter().enumerate() {
                let mut row = vec![level.to_string(), i.to_string()];
                row.extend(p.iter().map(|v| format!("{v:.17e}")));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn dedupe(points: Vec<DVector<f64>>) -> Vec<DVector<f64>> {
    let mut keyed: Vec<(Vec<u64>, DVector<f64>)> = points
        .into_iter()
        .map(|p| (p.iter().map(|v| (v + 0.0).to_bits()).collect(), p))
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.dedup_by(|a, b| a.0 == b.0);
    keyed.into_iter().map(|(_, p)| p).collect()
}

/// Iterates `k_max` levels. With `prune`, every level is reduced to its
/// convex-hull vertices in the plane, or to distinct points otherwise;
/// both keep the hull of every later level unchanged.
pub fn attractor_iterate(
    sys: &SwitchedAffineSystem,
    k_max: usize,
    prune: bool,
    cap: usize,
) -> Result<AttractorApprox> {
    let n = sys.dim();
    let mut iterates = vec![vec![DVector::zeros(n)]];
    let mut gaps = Vec::with_capacity(k_max);
    for _ in 0..k_max {
        let prev = iterates.last().expect("K₀ is present");
        let requested = prev.len() as u128 * sys.mode_count() as u128;
        if !prune && requested > cap as u128 {
            return Err(Error::Size {
                what: "attractor level (enable hull pruning)",
                requested,
                cap: cap as u128,
            });
        }
        let mut next = Vec::with_capacity(requested.min(cap as u128) as usize);
        for m in sys.modes() {
            for x in prev {
                next.push(&m.a * x + &m.b);
            }
        }
        if prune {
            next = if n == 2 { convex_hull_2d(&next) } else { dedupe(next) };
            if next.len() > cap {
                return Err(Error::Size {
                    what: "pruned attractor level",
                    requested: next.len() as u128,
                    cap: cap as u128,
                });
            }
        }
        let gap = if n == 2 {
            hausdorff_convex_2d(&convex_hull_2d(prev), &convex_hull_2d(&next))
        } else {
            hausdorff_points(prev, &next)
        };
        gaps.push(gap);
        iterates.push(next);
    }
    Ok(AttractorApprox {
        iterates,
        hull_pruned: prune,
        hausdorff_gaps: gaps,
    })
}

/// `max_i ‖bᵢ‖_P / (1 − ρ̃)`: every iterate lies in this `P`-ball.
pub fn attractor_bound(norm: &ContractiveNorm, offsets: &[DVector<f64>]) -> Result<f64> {
    if !(norm.rho_tilde < 1.0) {
        return Err(Error::Domain(format!(
            "contraction factor must be below 1, got {}",
            norm.rho_tilde
        )));
    }
    let b = offsets.iter().map(|b| p_norm(&norm.p, b)).fold(0.0, f64::max);
    Ok(b / (1.0 - norm.rho_tilde))
}
