//! The benchmark study on the two planar fixtures: summaries, state-space
//! plots, and a comparison against fixed reference values.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::experiment::{
    run_experiment_named, run_repetition, ExperimentConfig, ExperimentSummary, SystemSource,
};
use crate::harness::plot::plot_state_space;

/// Reference mean and standard deviation, and the accepted interval for
/// the measured mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValue {
    pub system: &'static str,
    pub bound: &'static str,
    pub mean: f64,
    pub std: f64,
    pub interval: (f64, f64),
}

pub const REFERENCE_VALUES: [ReferenceValue; 4] = [
    ReferenceValue { system: "f1", bound: "rho1", mean: 0.9547, std: 0.0065, interval: (0.93, 0.98) },
    ReferenceValue { system: "f1", bound: "rho2", mean: 1.0061, std: 0.0070, interval: (0.98, 1.03) },
    ReferenceValue { system: "f2", bound: "rho1", mean: 1.0273, std: 0.0003, interval: (1.01, 1.05) },
    ReferenceValue { system: "f2", bound: "rho2", mean: 0.9876, std: 0.0010, interval: (0.97, 1.00) },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub system: String,
    pub bound: String,
    pub reference_mean: f64,
    pub reference_std: f64,
    pub measured_mean: Option<f64>,
    pub measured_std: Option<f64>,
    pub measured_count: usize,
    pub interval_lo: f64,
    pub interval_hi: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reproduction {
    pub f1: ExperimentSummary,
    pub f2: ExperimentSummary,
    pub comparison: Vec<ComparisonRow>,
}

impl Reproduction {
    /// Fixed-width text table of the comparison.
    pub fn table(&self) -> String {
        let mut s = String::from(
            "system bound  reference         measured              interval       within\n",
        );
        for r in &self.comparison {
            let measured = match (r.measured_mean, r.measured_std) {
                (Some(m), Some(sd)) => format!("{m:.4} ± {sd:.4}"),
                (Some(m), None) => format!("{m:.4}"),
                _ => "n/a".to_string(),
            };
            s.push_str(&format!(
                "{:<6} {:<6} {:.4} ± {:.4}   {:<20}  [{:.2}, {:.2}]   {}\n",
                r.system,
                r.bound,
                r.reference_mean,
                r.reference_std,
                measured,
                r.interval_lo,
                r.interval_hi,
                if r.within { "yes" } else { "no" }
            ));
        }
        s
    }
}

fn comparison(f1: &ExperimentSummary, f2: &ExperimentSummary) -> Vec<ComparisonRow> {
    REFERENCE_VALUES
        .iter()
        .map(|r| {
            let summary = if r.system == "f1" { f1 } else { f2 };
            let stats = if r.bound == "rho1" { summary.rho1 } else { summary.rho2 };
            ComparisonRow {
                system: r.system.to_string(),
                bound: r.bound.to_string(),
                reference_mean: r.mean,
                reference_std: r.std,
                measured_mean: stats.mean,
                measured_std: stats.std,
                measured_count: stats.count,
                interval_lo: r.interval.0,
                interval_hi: r.interval.1,
                within: stats.mean.is_some_and(|m| m >= r.interval.0 && m <= r.interval.1),
            }
        })
        .collect()
}

/// Runs the benchmark protocol on both fixtures and writes
/// `f1_summary.csv`, `f2_summary.csv`, `f1_state.svg`, `f2_state.svg` and
/// `comparison.csv` into `out_dir`. The plots show repetition 0.
pub fn reproduce_benchmark(out_dir: &Path, seed: u64, repetitions: usize) -> Result<Reproduction> {
    std::fs::create_dir_all(out_dir)?;
    let mut summaries = Vec::new();
    let mut provenance = String::new();
    for name in ["f1", "f2"] {
        let mut cfg = ExperimentConfig::benchmark(SystemSource::Fixture(name.into()), seed);
        cfg.repetitions = repetitions;
        cfg.out_dir = Some(out_dir.to_path_buf());
        let summary = run_experiment_named(&cfg, &format!("{name}_summary"))?;
        let base = cfg.system.load()?;
        let observed = cfg.observed_system()?;
        let first = run_repetition(&cfg, &observed, &base, 0)?;
        let ell = first.report.as_ref().and_then(|r| r.ellipsoid.as_ref());
        plot_state_space(&base, &first.omega, ell, &out_dir.join(format!("{name}_state.svg")))?;
        if provenance.is_empty() {
            provenance = cfg.provenance();
        }
        summaries.push(summary);
    }
    let f2 = summaries.pop().expect("two summaries");
    let f1 = summaries.pop().expect("two summaries");
    let rows = comparison(&f1, &f2);
    let mut buf = Vec::new();
    for line in provenance.lines().filter(|l| !l.starts_with("config_sha256")) {
        writeln!(buf, "# {line}")?;
    }
    writeln!(buf, "# repetitions={repetitions}")?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    std::fs::write(out_dir.join("comparison.csv"), buf)?;
    Ok(Reproduction { f1, f2, comparison: rows })
}
