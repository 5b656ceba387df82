//! Smallest sampling radius that yields an invariant-ellipsoid certificate.
//!
//! Larger radii dilute the offsets but enlarge the certified set; the search
//! is a geometric bisection with a fresh data set at every probe.

use serde::{Deserialize, Serialize};

use crate::certificate::{certify, ConfidenceParams};
use crate::error::{Error, Result};
use crate::harness::experiment::ExperimentConfig;
use crate::sampling::draw_samples;

/// Relative width at which the bisection stops.
pub const RADIUS_REL_TOL: f64 = 0.05;
/// Probes use streams from here upwards, disjoint from repetition streams.
pub const PROBE_STREAM_BASE: u64 = 1 << 32;
/// The lower bracket is `r_max / RADIUS_RANGE`.
pub const RADIUS_RANGE: f64 = 1024.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusProbe {
    pub radius: f64,
    pub stream: u64,
    pub solved: bool,
    pub rho2: Option<f64>,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusSearch {
    pub radius: Option<f64>,
    pub probes: Vec<RadiusProbe>,
}

fn probe(cfg: &ExperimentConfig, radius: f64, index: u64) -> Result<RadiusProbe> {
    let base = cfg.system.load()?;
    let stream = PROBE_STREAM_BASE + index;
    let omega = draw_samples(&base, &cfg.sample_config(stream, radius))?;
    let conf = ConfidenceParams::for_samples(&omega, cfg.beta, cfg.epsilon_variant);
    let report = certify(&omega, &cfg.scenario, &conf, None, cfg.support_method)?;
    let rho2 = report.rho2_value();
    Ok(RadiusProbe {
        radius,
        stream,
        solved: report.status == crate::scenario::ScenarioStatus::Solved,
        rho2,
        certified: report.ellipsoid.is_some(),
    })
}

/// Smallest `R ≤ r_max` (within 5 % relative) at which the scenario program
/// is feasible and `ρ̄₂ < 1`; `None` when `r_max` itself fails.
pub fn find_min_radius(cfg: &ExperimentConfig, r_max: f64) -> Result<RadiusSearch> {
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(Error::Invalid(format!("r_max must be positive, got {r_max}")));
    }
    cfg.validate()?;
    let mut probes = Vec::new();
    let mut next = 0u64;
    let mut run = |r: f64, probes: &mut Vec<RadiusProbe>| -> Result<bool> {
        let p = probe(cfg, r, next)?;
        next += 1;
        probes.push(p);
        Ok(p.certified)
    };
    if !run(r_max, &mut probes)? {
        return Ok(RadiusSearch { radius: None, probes });
    }
    let mut hi = r_max;
    let mut lo = r_max / RADIUS_RANGE;
    if run(lo, &mut probes)? {
        return Ok(RadiusSearch { radius: Some(lo), probes });
    }
    while hi / lo > 1.0 + RADIUS_REL_TOL {
        let mid = (lo * hi).sqrt();
        if run(mid, &mut probes)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(RadiusSearch { radius: Some(hi), probes })
}
