//! The sampled Lyapunov program: the smallest `γ` such that some `P ⪰ I`
//! satisfies `‖x₁‖_P ≤ γ‖x₀‖_P` on every observation, the tie-breaking
//! program that selects a unique `P`, support subsamples, and (white-box)
//! Monte Carlo estimation of the violation probability.
//!
//! For fixed `γ` every sample constraint is a scalar inequality linear in
//! the entries of `P`, so feasibility is a small semidefinite problem solved
//! by [`crate::lmi`]. Feasibility is monotone in `γ`, which makes bisection
//! exact up to `gamma_tol`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lambda_max, lambda_min, p_norm};
use crate::lmi::{FeasibilityOutcome, LyapunovConstraints};
use crate::sampling::{uniform_mode, uniform_sphere, SampleSet};
use crate::system::SwitchedAffineSystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub gamma_tol: f64,
    /// Initial upper bracket, doubled until feasible.
    pub gamma_hi: f64,
    /// Largest bracket tried before declaring the data infeasible.
    pub gamma_cap: f64,
    /// Frobenius weight of the tie-breaking objective.
    pub c: f64,
    /// Constraint slack, relative to the squared norm of each `x₀`.
    pub feas_tol: f64,
    /// Relative inflation of `γ` before the tie-break.
    pub gamma_inflate: f64,
    /// Feasibility search is restricted to `P ⪯ kappa_cap·I`.
    pub kappa_cap: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            gamma_tol: 1e-4,
            gamma_hi: 10.0,
            gamma_cap: 1e6,
            c: 1e-3,
            feas_tol: 1e-8,
            gamma_inflate: 1e-6,
            kappa_cap: 1e6,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.gamma_tol,
            self.gamma_hi,
            self.gamma_cap,
            self.c,
            self.feas_tol,
            self.gamma_inflate,
            self.kappa_cap,
        ];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Invalid("scenario tolerances must be positive and finite".into()));
        }
        if self.kappa_cap <= 2.0 {
            return Err(Error::Invalid("kappa_cap must exceed 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioStatus {
    Solved,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSolution {
    /// `γ(ω_N)`: smallest feasible value found by bisection.
    pub gamma: f64,
    /// The tie-broken `P`, computed at `gamma * (1 + gamma_inflate)`.
    pub p: DMatrix<f64>,
    pub alpha: f64,
    pub status: ScenarioStatus,
    /// The `γ` at which the tie-break was solved.
    pub tie_break_gamma: f64,
}

impl ScenarioSolution {
    fn infeasible(n: usize) -> Self {
        Self {
            gamma: f64::INFINITY,
            p: DMatrix::identity(n, n),
            alpha: f64::INFINITY,
            status: ScenarioStatus::Infeasible,
            tie_break_gamma: f64::INFINITY,
        }
    }

    pub fn is_solved(&self) -> bool {
        self.status == ScenarioStatus::Solved
    }

    /// `λ_max(P) / λ_min(P)`.
    pub fn condition_ratio(&self) -> f64 {
        lambda_max(&self.p) / lambda_min(&self.p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(DMatrix<f64>),
    Infeasible,
    NumericalFailure(String),
}

/// Each constraint is divided by `‖x₀‖²`, so `tol` is relative to the
/// squared sample norm and the program is invariant to the radius.
fn ratio_constraints(omega: &SampleSet, gamma: f64, tol: f64) -> LyapunovConstraints {
    let mut lc = LyapunovConstraints::new(omega.dim);
    let g2 = gamma * gamma;
    for s in &omega.samples {
        let scale = s.x0.norm();
        lc.push_ratio(&(&s.x1 / scale), &(&s.x0 / scale), g2, tol);
    }
    lc
}

fn check_data(omega: &SampleSet) -> Result<()> {
    if omega.is_empty() {
        return Err(Error::Invalid("scenario program needs at least one sample".into()));
    }
    for (i, s) in omega.samples.iter().enumerate() {
        if s.x0.len() != omega.dim || s.x1.len() != omega.dim {
            return Err(Error::Dimension {
                what: "sample",
                expected: omega.dim,
                found: s.x0.len(),
            });
        }
        if s.x0.norm() == 0.0 {
            return Err(Error::Invalid(format!("sample {} has x0 = 0", i + 1)));
        }
    }
    Ok(())
}

/// Is there `P ⪰ I` with `x₁ᵀPx₁ ≤ γ²x₀ᵀPx₀ + feas_tol·‖x₀‖²` for every
/// sample?
pub fn feasibility_lmi(omega: &SampleSet, gamma: f64, cfg: &ScenarioConfig) -> Feasibility {
    if !(gamma >= 0.0) {
        return Feasibility::NumericalFailure(format!("gamma must be non-negative, got {gamma}"));
    }
    let lc = ratio_constraints(omega, gamma, 0.0);
    match lc.find_feasible(cfg.kappa_cap, cfg.feas_tol) {
        FeasibilityOutcome::Feasible { p, .. } => Feasibility::Feasible(p),
        FeasibilityOutcome::Infeasible { .. } => Feasibility::Infeasible,
        FeasibilityOutcome::NumericalFailure(msg) => Feasibility::NumericalFailure(msg),
    }
}

fn feasible_at(omega: &SampleSet, gamma: f64, cfg: &ScenarioConfig) -> Result<bool> {
    match feasibility_lmi(omega, gamma, cfg) {
        Feasibility::Feasible(_) => Ok(true),
        Feasibility::Infeasible => Ok(false),
        Feasibility::NumericalFailure(msg) => Err(Error::Numerical(format!("feasibility at gamma={gamma}: {msg}"))),
    }
}

/// Bisection on `γ` only; returns the feasible upper end of the final
/// bracket, or `None` if the data are infeasible up to `gamma_cap`.
pub fn bisect_gamma(omega: &SampleSet, cfg: &ScenarioConfig) -> Result<Option<f64>> {
    cfg.validate()?;
    check_data(omega)?;
    let mut lo = 0.0;
    let mut hi = cfg.gamma_hi;
    while !feasible_at(omega, hi, cfg)? {
        lo = hi;
        hi *= 2.0;
        if hi > cfg.gamma_cap {
            return Ok(None);
        }
    }
    while hi - lo > cfg.gamma_tol {
        let mid = 0.5 * (lo + hi);
        if feasible_at(omega, mid, cfg)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// `γ(ω_N)` by bisection, then the tie-broken `P` at `γ(1 + gamma_inflate)`.
pub fn solve_gevp(omega: &SampleSet, cfg: &ScenarioConfig) -> Result<ScenarioSolution> {
    match bisect_gamma(omega, cfg)? {
        None => Ok(ScenarioSolution::infeasible(omega.dim)),
        Some(gamma) => {
            let inflated = gamma * (1.0 + cfg.gamma_inflate);
            let mut sol = tie_break(omega, inflated, cfg)?;
            sol.gamma = gamma;
            Ok(sol)
        }
    }
}

/// Minimizes `α + c‖P‖²_F` subject to the sample constraints at `gamma`
/// (up to `feas_tol`) and `I ⪯ P ⪯ αI`.
pub fn tie_break(omega: &SampleSet, gamma: f64, cfg: &ScenarioConfig) -> Result<ScenarioSolution> {
    cfg.validate()?;
    check_data(omega)?;
    let start = match feasibility_lmi(omega, gamma, cfg) {
        Feasibility::Feasible(p) => p,
        Feasibility::Infeasible => {
            return Err(Error::Infeasible(format!("no P ⪰ I satisfies the samples at gamma={gamma}")))
        }
        Feasibility::NumericalFailure(msg) => return Err(Error::Numerical(msg)),
    };
    let lc = ratio_constraints(omega, gamma, cfg.feas_tol);
    let (p, alpha) = lc
        .tie_break(cfg.c, &start)
        .map_err(|e| Error::Numerical(format!("tie-break at gamma={gamma}: {e:?}")))?;
    Ok(ScenarioSolution {
        gamma,
        p,
        alpha,
        status: ScenarioStatus::Solved,
        tie_break_gamma: gamma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportMethod {
    Greedy,
    DBound,
}

impl std::str::FromStr for SupportMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "d-bound" | "dbound" => Ok(Self::DBound),
            other => Err(Error::Invalid(format!("unknown support method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportInfo {
    /// Upper bound on the minimal support-subsample cardinality.
    pub s: usize,
    /// Retained sample indices (0-based); empty for the d-bound.
    pub indices: Vec<usize>,
    pub method: SupportMethod,
}

/// `n(n+1)/2`.
pub fn d_bound(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Upper bound on `s(ω_N)`.
///
/// `Greedy` removes samples one at a time in index order and keeps a
/// removal whenever the re-solved `(γ, P)` stays within
/// (`gamma_tol`, `1e-6` Frobenius). `DBound` returns `n(n+1)/2`.
pub fn support_subsample(
    omega: &SampleSet,
    solution: &ScenarioSolution,
    cfg: &ScenarioConfig,
    method: SupportMethod,
) -> Result<SupportInfo> {
    match method {
        SupportMethod::DBound => Ok(SupportInfo {
            s: d_bound(omega.dim),
            indices: Vec::new(),
            method,
        }),
        SupportMethod::Greedy => {
            let mut removed = vec![false; omega.len()];
            for i in 0..omega.len() {
                removed[i] = true;
                let keep_removed = if removed.iter().all(|&r| r) {
                    false
                } else {
                    let sub = omega.without(&removed);
                    let alt = solve_gevp(&sub, cfg)?;
                    alt.is_solved()
                        && (alt.gamma - solution.gamma).abs() <= cfg.gamma_tol
                        && (&alt.p - &solution.p).norm() <= 1e-6
                };
                if !keep_removed {
                    removed[i] = false;
                }
            }
            let indices: Vec<usize> = removed
                .iter()
                .enumerate()
                .filter(|(_, &r)| !r)
                .map(|(i, _)| i)
                .collect();
            Ok(SupportInfo {
                s: indices.len(),
                indices,
                method,
            })
        }
    }
}

/// Monte Carlo estimate of the measure of the violation set
/// `{(x, σ) : ‖A_σx + b_σ‖_P > γ‖x‖_P}` over fresh uniform draws on the
/// sphere of radius `radius`. Needs the true system.
pub fn violation_estimate<R: Rng + ?Sized>(
    sys: &SwitchedAffineSystem,
    solution: &ScenarioSolution,
    radius: f64,
    n_mc: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_mc == 0 {
        return Err(Error::Invalid("n_mc must be at least 1".into()));
    }
    if !solution.is_solved() {
        return Ok(1.0);
    }
    let n = sys.dim();
    let mut violations = 0usize;
    for _ in 0..n_mc {
        let x = uniform_sphere(n, radius, rng);
        let mode = uniform_mode(sys.mode_count(), rng);
        let y = sys.step(&x, mode)?;
        let lhs = p_norm(&solution.p, &y);
        let rhs = solution.gamma * p_norm(&solution.p, &x);
        if lhs > rhs * (1.0 + 1e-12) {
            violations += 1;
        }
    }
    Ok(violations as f64 / n_mc as f64)
}

/// JSON export of a solved scenario instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionExport {
    pub gamma: f64,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub alpha: f64,
    pub s: usize,
    pub method: SupportMethod,
    pub config: ScenarioConfig,
    pub seed: u64,
    pub status: ScenarioStatus,
}

impl SolutionExport {
    pub fn new(sol: &ScenarioSolution, support: &SupportInfo, cfg: &ScenarioConfig, seed: u64) -> Self {
        let n = sol.p.nrows();
        Self {
            gamma: sol.gamma,
            p: (0..n).map(|i| (0..n).map(|j| sol.p[(i, j)]).collect()).collect(),
            alpha: sol.alpha,
            s: support.s,
            method: support.method,
            config: *cfg,
            seed,
            status: sol.status,
        }
    }
}
