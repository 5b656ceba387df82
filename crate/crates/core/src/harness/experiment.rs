//! Seeded repetition studies: every repetition draws a fresh data set from
//! its own substream, certifies it, and optionally checks the emitted
//! ellipsoid against the true system.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::certificate::{certify, AffinePrior, CertificateReport, ConfidenceParams, EpsilonVariant};
use crate::error::{Error, Result};
use crate::sampling::{draw_samples, SampleConfig, SampleSet, GENERATOR_NAME};
use crate::scenario::{ScenarioConfig, ScenarioStatus, SupportMethod};
use crate::system::{fixtures, SwitchedAffineSystem, SystemSpec, DEFAULT_LIFT_CAP};
use crate::whitebox::verify_ellipsoid_invariance;

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Slack used when checking emitted ellipsoids against the true system.
pub const WHITEBOX_TOL: f64 = 1e-9;

/// Where the system matrices come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemSource {
    /// `"f1"` or `"f2"`.
    Fixture(String),
    File(PathBuf),
    Inline(SystemSpec),
}

impl SystemSource {
    pub fn load(&self) -> Result<SwitchedAffineSystem> {
        match self {
            SystemSource::Fixture(name) => fixture(name),
            SystemSource::File(path) => SwitchedAffineSystem::from_json(&std::fs::read_to_string(path)?),
            SystemSource::Inline(spec) => spec.build(),
        }
    }

    /// `f1`, `f2`, or a path to a JSON system file.
    pub fn parse(arg: &str) -> Self {
        match arg {
            "f1" | "F1" | "f2" | "F2" => SystemSource::Fixture(arg.to_ascii_lowercase()),
            path => SystemSource::File(PathBuf::from(path)),
        }
    }
}

pub fn fixture(name: &str) -> Result<SwitchedAffineSystem> {
    match name.to_ascii_lowercase().as_str() {
        "f1" => Ok(fixtures::f1()),
        "f2" => Ok(fixtures::f2()),
        other => Err(Error::Invalid(format!("unknown fixture `{other}` (expected f1 or f2)"))),
    }
}

/// Source of the offset bound `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PriorSource {
    /// No bound; only the ellipsoid certificate is computed.
    None,
    /// `max_i ‖bᵢ‖` of the (lifted) true system.
    #[default]
    FromSystem,
    Value(f64),
}

fn default_lift() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemSource,
    #[serde(rename = "N")]
    pub n_samples: usize,
    #[serde(rename = "R")]
    pub radius: f64,
    pub beta: f64,
    pub repetitions: usize,
    pub seed: u64,
    #[serde(default)]
    pub epsilon_variant: EpsilonVariant,
    #[serde(default)]
    pub prior: PriorSource,
    /// Trajectory length of each observation.
    #[serde(default = "default_lift")]
    pub lift: usize,
    #[serde(default = "default_support")]
    pub support_method: SupportMethod,
    #[serde(default = "default_true")]
    pub whitebox_check: bool,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    /// Not part of the configuration hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn default_support() -> SupportMethod {
    SupportMethod::DBound
}

impl ExperimentConfig {
    /// The benchmark protocol: `N = 200`, `R = 3`, `β = 0.05`, 100
    /// repetitions, offset bound taken from the system.
    pub fn benchmark(system: SystemSource, seed: u64) -> Self {
        Self {
            system,
            n_samples: 200,
            radius: 3.0,
            beta: 0.05,
            repetitions: 100,
            seed,
            epsilon_variant: EpsilonVariant::Dimension,
            prior: PriorSource::FromSystem,
            lift: 1,
            support_method: SupportMethod::DBound,
            whitebox_check: true,
            scenario: ScenarioConfig::default(),
            out_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Invalid("repetitions must be at least 1".into()));
        }
        if self.n_samples == 0 || self.lift == 0 {
            return Err(Error::Invalid("N and the trajectory length must be positive".into()));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::Invalid(format!("R must be positive, got {}", self.radius)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Invalid(format!("beta must lie in (0,1), got {}", self.beta)));
        }
        if let PriorSource::Value(b) = self.prior {
            AffinePrior::new(b)?;
        }
        self.scenario.validate()
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn sample_config(&self, stream: u64, radius: f64) -> SampleConfig {
        SampleConfig {
            radius,
            n_samples: self.n_samples,
            seed: self.seed,
            stream,
            lift: self.lift,
        }
    }

    /// The system as seen by the data: lifted when `lift > 1`.
    pub fn observed_system(&self) -> Result<SwitchedAffineSystem> {
        let sys = self.system.load()?;
        if self.lift > 1 {
            sys.lifted_system(self.lift, DEFAULT_LIFT_CAP)
        } else {
            Ok(sys)
        }
    }

    pub fn prior_for(&self, observed: &SwitchedAffineSystem) -> Result<Option<AffinePrior>> {
        match self.prior {
            PriorSource::None => Ok(None),
            PriorSource::FromSystem => Ok(Some(AffinePrior::new(observed.max_offset_norm())?)),
            PriorSource::Value(b) => Ok(Some(AffinePrior::new(b)?)),
        }
    }

    /// Header comment lines shared by every output file.
    pub fn provenance(&self) -> String {
        format!(
            "tool={TOOL_VERSION}\nmaster_seed={}\nconfig_sha256={}\ngenerator={GENERATOR_NAME}",
            self.seed,
            self.hash()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowStatus {
    Ok,
    Infeasible,
    Failed,
}

impl RowStatus {
    fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Infeasible => "infeasible",
            RowStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRow {
    pub repetition: usize,
    pub seed: u64,
    pub stream: u64,
    pub status: RowStatus,
    pub gamma: Option<f64>,
    /// `λ_max(P) / λ_min(P)`.
    pub kappa: Option<f64>,
    pub s: Option<usize>,
    pub epsilon: Option<f64>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub rho1: Option<f64>,
    pub rho2: Option<f64>,
    pub ellipsoid_level: Option<f64>,
    pub whitebox_verified: Option<bool>,
    pub error: Option<String>,
}

impl RepetitionRow {
    fn empty(repetition: usize, seed: u64, stream: u64, status: RowStatus) -> Self {
        Self {
            repetition,
            seed,
            stream,
            status,
            gamma: None,
            kappa: None,
            s: None,
            epsilon: None,
            delta1: None,
            delta2: None,
            rho1: None,
            rho2: None,
            ellipsoid_level: None,
            whitebox_verified: None,
            error: None,
        }
    }

    const HEADER: [&'static str; 15] = [
        "repetition",
        "seed",
        "stream",
        "status",
        "gamma",
        "kappa",
        "s",
        "epsilon",
        "delta1",
        "delta2",
        "rho1",
        "rho2",
        "ellipsoid_level",
        "whitebox_verified",
        "error",
    ];

    fn record(&self) -> Vec<String> {
        fn f(v: Option<f64>) -> String {
            v.map(|x| format!("{x}")).unwrap_or_default()
        }
        vec![
            self.repetition.to_string(),
            self.seed.to_string(),
            self.stream.to_string(),
            self.status.as_str().to_string(),
            f(self.gamma),
            f(self.kappa),
            self.s.map(|s| s.to_string()).unwrap_or_default(),
            f(self.epsilon),
            f(self.delta1),
            f(self.delta2),
            f(self.rho1),
            f(self.rho2),
            f(self.ellipsoid_level),
            self.whitebox_verified.map(|b| b.to_string()).unwrap_or_default(),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

/// Mean and unbiased standard deviation over the finite values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundStats {
    pub count: usize,
    pub mean: Option<f64>,
    /// Absent for fewer than two values.
    pub std: Option<f64>,
}

impl BoundStats {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self { count, mean: None, std: None };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let std = (count > 1).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (count - 1) as f64).sqrt()
        });
        Self {
            count,
            mean: Some(mean),
            std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub rows: Vec<RepetitionRow>,
    pub rho1: BoundStats,
    pub rho2: BoundStats,
    pub failures: usize,
    pub infeasible: usize,
    pub ellipsoids: usize,
    /// Emitted ellipsoids confirmed invariant for the true system.
    pub whitebox_confirmed: usize,
}

impl ExperimentSummary {
    pub fn from_rows(rows: Vec<RepetitionRow>) -> Self {
        let ok: Vec<&RepetitionRow> = rows.iter().filter(|r| r.status == RowStatus::Ok).collect();
        let rho1: Vec<f64> = ok.iter().filter_map(|r| r.rho1).collect();
        let rho2: Vec<f64> = ok.iter().filter_map(|r| r.rho2).collect();
        Self {
            rho1: BoundStats::of(&rho1),
            rho2: BoundStats::of(&rho2),
            failures: rows.iter().filter(|r| r.status == RowStatus::Failed).count(),
            infeasible: rows.iter().filter(|r| r.status == RowStatus::Infeasible).count(),
            ellipsoids: ok.iter().filter(|r| r.ellipsoid_level.is_some()).count(),
            whitebox_confirmed: ok.iter().filter(|r| r.whitebox_verified == Some(true)).count(),
            rows,
        }
    }

    /// Rows, then `# aggregate,...` comment lines.
    pub fn write_csv<W: Write>(&self, mut out: W, provenance: &str) -> Result<()> {
        for line in provenance.lines() {
            writeln!(out, "# {line}")?;
        }
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(RepetitionRow::HEADER)?;
            for r in &self.rows {
                w.write_record(r.record())?;
            }
            w.flush()?;
        }
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for (name, s) in [("rho1", &self.rho1), ("rho2", &self.rho2)] {
            writeln!(
                out,
                "# aggregate,bound={name},count={},mean={},std={}",
                s.count,
                opt(s.mean),
                opt(s.std)
            )?;
        }
        writeln!(
            out,
            "# aggregate,failures={},infeasible={},ellipsoids={},whitebox_confirmed={}",
            self.failures, self.infeasible, self.ellipsoids, self.whitebox_confirmed
        )?;
        Ok(())
    }
}

/// One repetition: data, certificate and white-box row.
pub struct Repetition {
    pub omega: SampleSet,
    pub report: Option<CertificateReport>,
    pub row: RepetitionRow,
}

pub fn run_repetition(
    cfg: &ExperimentConfig,
    observed: &SwitchedAffineSystem,
    base: &SwitchedAffineSystem,
    repetition: usize,
) -> Result<Repetition> {
    let stream = repetition as u64;
    let omega = draw_samples(base, &cfg.sample_config(stream, cfg.radius))?;
    let conf = ConfidenceParams::for_samples(&omega, cfg.beta, cfg.epsilon_variant);
    let prior = cfg.prior_for(observed)?;
    let report = match certify(&omega, &cfg.scenario, &conf, prior.as_ref(), cfg.support_method) {
        Ok(r) => r,
        Err(e @ (Error::Numerical(_) | Error::Infeasible(_))) => {
            let mut row = RepetitionRow::empty(repetition, cfg.seed, stream, RowStatus::Failed);
            row.error = Some(e.to_string());
            return Ok(Repetition {
                omega,
                report: None,
                row,
            });
        }
        Err(e) => return Err(e),
    };
    let status = match report.status {
        ScenarioStatus::Solved => RowStatus::Ok,
        ScenarioStatus::Infeasible => RowStatus::Infeasible,
    };
    let mut row = RepetitionRow::empty(repetition, cfg.seed, stream, status);
    if status == RowStatus::Ok {
        row.gamma = Some(report.gamma);
        row.kappa = Some(report.kappa);
        row.s = Some(report.s);
        row.epsilon = Some(report.epsilon);
        row.delta1 = Some(report.delta1);
        row.delta2 = Some(report.delta2);
        row.rho1 = report.rho1_value();
        row.rho2 = report.rho2_value();
        if let Some(ell) = &report.ellipsoid {
            row.ellipsoid_level = Some(ell.level);
            if cfg.whitebox_check {
                row.whitebox_verified =
                    Some(verify_ellipsoid_invariance(observed, ell, WHITEBOX_TOL)?.is_invariant());
            }
        }
    }
    Ok(Repetition {
        omega,
        report: Some(report),
        row,
    })
}

/// Runs every repetition (in parallel) and writes `<stem>.csv` into the
/// configured output directory when one is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    run_experiment_named(cfg, "summary")
}

pub fn run_experiment_named(cfg: &ExperimentConfig, stem: &str) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let base = cfg.system.load()?;
    let observed = cfg.observed_system()?;
    let rows = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| run_repetition(cfg, &observed, &base, r).map(|rep| rep.row))
        .collect::<Result<Vec<_>>>()?;
    let summary = ExperimentSummary::from_rows(rows);
    if let Some(dir) = &cfg.out_dir {
        write_summary(&summary, cfg, &dir.join(format!("{stem}.csv")))?;
    }
    Ok(summary)
}

pub fn write_summary(summary: &ExperimentSummary, cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut buf = Vec::new();
    summary.write_csv(&mut buf, &cfg.provenance())?;
    std::fs::write(path, buf)?;
    Ok(())
}
