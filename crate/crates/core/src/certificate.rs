//! Probabilistic certificates built on a solved scenario program.
//!
//! `ε(k)` bounds the measure of the violating set once a support subsample
//! of size `k` is known. `δ(ε)` is the radius of the largest origin-centred
//! ball inside the convex hull of the unit sphere with a cap of measure `ε`
//! removed. The two bounds combine these with the sampled contraction
//! factor `γ` and the shape of `P`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::linalg::sym_eigen;
use crate::sampling::SampleSet;
use crate::scenario::{
    d_bound, solve_gevp, support_subsample, ScenarioConfig, ScenarioSolution, ScenarioStatus,
    SupportInfo, SupportMethod,
};

/// Quadrature tolerance for the cap-measure integral.
pub const CAP_QUAD_TOL: f64 = 1e-12;
/// Bisection tolerance on the cap half-angle.
pub const CAP_ANGLE_TOL: f64 = 1e-12;

/// Which confidence formula turns a support size into `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonVariant {
    /// `1 − (β / (N·C(N,k)))^{1/(N−k)}`; valid for any `k`.
    SampleCount,
    /// `1 − (β / ((d+1)·C(N,k)))^{1/(N−k)}` with `d = n(n+1)/2`; equals 1
    /// once `k > d`.
    #[default]
    Dimension,
}

impl std::str::FromStr for EpsilonVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample-count" => Ok(Self::SampleCount),
            "dimension" => Ok(Self::Dimension),
            other => Err(Error::Invalid(format!("unknown epsilon variant `{other}`"))),
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!("beta must lie in (0,1), got {beta}")));
    }
    Ok(())
}

fn check_k(k: usize, n_samples: usize) -> Result<()> {
    if k > n_samples {
        return Err(Error::Domain(format!("support size {k} exceeds sample count {n_samples}")));
    }
    Ok(())
}

/// `1 − exp((ln β − ln c − ln C(N,k)) / (N−k))`, clamped to `[0,1]`.
fn epsilon_from_log_constant(k: usize, n_samples: usize, beta: f64, ln_c: f64) -> f64 {
    let ln_ratio = beta.ln() - ln_c - ln_binomial(n_samples as u64, k as u64);
    // -expm1 keeps precision when the root is close to 1.
    (-(ln_ratio / (n_samples - k) as f64).exp_m1()).clamp(0.0, 1.0)
}

/// `ε(k)` for `N` samples at confidence `β`, using the sample-count constant.
pub fn epsilon_fn(k: usize, n_samples: usize, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    check_k(k, n_samples)?;
    if k == n_samples {
        return Ok(1.0);
    }
    Ok(epsilon_from_log_constant(k, n_samples, beta, (n_samples as f64).ln()))
}

/// `ε(k)` using the dimension constant `d + 1`.
pub fn epsilon_fn_d(k: usize, n_samples: usize, beta: f64, d: usize) -> Result<f64> {
    check_beta(beta)?;
    check_k(k, n_samples)?;
    if k > d || k == n_samples {
        return Ok(1.0);
    }
    Ok(epsilon_from_log_constant(k, n_samples, beta, ((d + 1) as f64).ln()))
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(a, b, fa, fm, fb);
    adaptive(&f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Normalized surface measure of the cap `{x ∈ S^{n−1} : angle(x, e) ≤ θ}`
/// for `θ ∈ [0, π/2]`.
pub fn cap_measure(theta: f64, n: usize) -> f64 {
    let p = (n - 2) as i32;
    let f = |t: f64| t.sin().powi(p);
    let half = integrate(f, 0.0, std::f64::consts::FRAC_PI_2, CAP_QUAD_TOL);
    integrate(f, 0.0, theta, CAP_QUAD_TOL * half) / (2.0 * half)
}

/// `δ(ε)` for the unit sphere in `ℝⁿ`.
///
/// Worst case is a single removed cap of measure `ε`; the inscribed radius
/// is then `cos θ` where the cap has half-angle `θ`. Zero for `ε ≥ 1/2`.
pub fn delta_fn(eps: f64, n: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Domain(format!("epsilon must lie in [0,1], got {eps}")));
    }
    if n < 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    if eps >= 0.5 {
        return Ok(0.0);
    }
    if eps == 0.0 {
        return Ok(1.0);
    }
    match n {
        2 => Ok((std::f64::consts::PI * eps).cos()),
        3 => Ok(1.0 - 2.0 * eps),
        _ => {
            let mut lo = 0.0;
            let mut hi = std::f64::consts::FRAC_PI_2;
            while hi - lo > CAP_ANGLE_TOL {
                let mid = 0.5 * (lo + hi);
                if cap_measure(mid, n) < eps {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok((0.5 * (lo + hi)).cos())
        }
    }
}

/// Inputs that turn a support size into a confidence statement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    pub beta: f64,
    #[serde(rename = "N")]
    pub n_samples: usize,
    #[serde(rename = "M")]
    pub modes: usize,
    pub n: usize,
    pub epsilon_variant: EpsilonVariant,
}

impl ConfidenceParams {
    pub fn for_samples(omega: &SampleSet, beta: f64, variant: EpsilonVariant) -> Self {
        Self {
            beta,
            n_samples: omega.len(),
            modes: omega.mode_count,
            n: omega.dim,
            epsilon_variant: variant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if self.n_samples == 0 || self.modes == 0 {
            return Err(Error::Invalid("sample and mode counts must be positive".into()));
        }
        if self.n < 2 {
            return Err(Error::UnsupportedDimension(self.n));
        }
        Ok(())
    }

    /// `ε(k)` under the configured variant.
    pub fn epsilon(&self, k: usize) -> Result<f64> {
        match self.epsilon_variant {
            EpsilonVariant::SampleCount => epsilon_fn(k, self.n_samples, self.beta),
            EpsilonVariant::Dimension => epsilon_fn_d(k, self.n_samples, self.beta, d_bound(self.n)),
        }
    }
}

/// Upper bound on the Euclidean norm of every offset vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinePrior {
    #[serde(rename = "B")]
    pub b: f64,
}

impl AffinePrior {
    pub fn new(b: f64) -> Result<Self> {
        if !(b >= 0.0) || !b.is_finite() {
            return Err(Error::Domain(format!("offset bound must be finite and non-negative, got {b}")));
        }
        Ok(Self { b })
    }
}

/// `{x : xᵀ P x ≤ level²}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantEllipsoid {
    #[serde(rename = "P", with = "matrix_rows")]
    pub p: DMatrix<f64>,
    pub level: f64,
    /// `√λ_max(P)·R`, the level before shrinking by `δ`.
    pub outer_level: f64,
}

impl InvariantEllipsoid {
    pub fn contains(&self, x: &nalgebra::DVector<f64>) -> bool {
        crate::linalg::quad_form(&self.p, x) <= self.level * self.level
    }
}

/// A bound value or the reason no certificate exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Bound {
    Certified { value: f64 },
    NoCertificate { reason: String },
}

impl Bound {
    pub fn value(&self) -> Option<f64> {
        match self {
            Bound::Certified { value } => Some(*value),
            Bound::NoCertificate { .. } => None,
        }
    }
}

/// Outcome of the ellipsoid rule: emitted only when `ρ̄₂ < 1` strictly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EllipsoidDecision {
    /// `ρ̄₂ < 1`.
    Emitted,
    /// `ρ̄₂ = 1` exactly; withheld by the strict rule.
    WithheldBoundary,
    /// `ρ̄₂ > 1`.
    WithheldAboveOne,
    /// No finite `ρ̄₂`.
    WithheldNoCertificate,
}

/// Spectral quantities of `P` used by both bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeFactors {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `λ_max / λ_min`.
    pub kappa: f64,
    /// `√(det P / λ_minⁿ)`.
    pub kappa_bar: f64,
}

impl ShapeFactors {
    pub fn of(p: &DMatrix<f64>) -> Self {
        let (vals, _) = sym_eigen(p);
        let n = vals.len();
        let lmin = vals[0];
        let lmax = vals[n - 1];
        // det P / λ_minⁿ = Π (λ_i / λ_min), formed as a product of ratios.
        let ratio_prod: f64 = vals.iter().map(|v| v / lmin).product();
        Self {
            lambda_min: lmin,
            lambda_max: lmax,
            kappa: lmax / lmin,
            kappa_bar: ratio_prod.sqrt(),
        }
    }
}

fn no_certificate(reason: impl Into<String>) -> Bound {
    Bound::NoCertificate { reason: reason.into() }
}

/// `(γ + (B/R)√κ) / √δ(M·κ̄·ε(s))`.
pub fn rho1_bound(
    solution: &ScenarioSolution,
    support: &SupportInfo,
    prior: &AffinePrior,
    cfg: &ConfidenceParams,
    radius: f64,
) -> Result<Bound> {
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {radius}")));
    }
    if !solution.is_solved() {
        return Ok(no_certificate("scenario program infeasible"));
    }
    let eps = cfg.epsilon(support.s)?;
    let shape = ShapeFactors::of(&solution.p);
    let arg = cfg.modes as f64 * shape.kappa_bar * eps;
    if arg >= 0.5 {
        return Ok(no_certificate(format!("delta argument {arg} is at least 1/2")));
    }
    let delta = delta_fn(arg, cfg.n)?;
    let value = (solution.gamma + prior.b / radius * shape.kappa.sqrt()) / delta.sqrt();
    Ok(Bound::Certified { value })
}

/// `γ·√κ / δ(M·ε(s))`, and the invariant ellipsoid when that is below 1.
pub fn rho2_bound(
    solution: &ScenarioSolution,
    support: &SupportInfo,
    cfg: &ConfidenceParams,
    radius: f64,
) -> Result<(Bound, Option<InvariantEllipsoid>, EllipsoidDecision)> {
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {radius}")));
    }
    if !solution.is_solved() {
        return Ok((
            no_certificate("scenario program infeasible"),
            None,
            EllipsoidDecision::WithheldNoCertificate,
        ));
    }
    let eps = cfg.epsilon(support.s)?;
    let arg = cfg.modes as f64 * eps;
    if arg >= 0.5 {
        return Ok((
            no_certificate(format!("delta argument {arg} is at least 1/2")),
            None,
            EllipsoidDecision::WithheldNoCertificate,
        ));
    }
    let delta = delta_fn(arg, cfg.n)?;
    let shape = ShapeFactors::of(&solution.p);
    let value = solution.gamma * shape.kappa.sqrt() / delta;
    let bound = Bound::Certified { value };
    if value < 1.0 {
        let outer = shape.lambda_max.sqrt() * radius;
        let ellipsoid = InvariantEllipsoid {
            p: solution.p.clone(),
            level: outer * delta,
            outer_level: outer,
        };
        Ok((bound, Some(ellipsoid), EllipsoidDecision::Emitted))
    } else if value == 1.0 {
        Ok((bound, None, EllipsoidDecision::WithheldBoundary))
    } else {
        Ok((bound, None, EllipsoidDecision::WithheldAboveOne))
    }
}

/// Everything computed by [`certify`], with its inputs echoed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub status: ScenarioStatus,
    pub gamma: f64,
    #[serde(rename = "P", with = "matrix_rows")]
    pub p: DMatrix<f64>,
    pub s: usize,
    pub support_method: SupportMethod,
    pub epsilon: f64,
    pub kappa: f64,
    pub kappa_bar: f64,
    /// `δ(M·κ̄·ε)`.
    pub delta1: f64,
    /// `δ(M·ε)`.
    pub delta2: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rho1: Option<Bound>,
    pub rho2: Bound,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ellipsoid: Option<InvariantEllipsoid>,
    pub ellipsoid_decision: EllipsoidDecision,
    pub beta: f64,
    #[serde(rename = "N")]
    pub n_samples: usize,
    #[serde(rename = "M")]
    pub modes: usize,
    pub n: usize,
    #[serde(rename = "R")]
    pub radius: f64,
    #[serde(rename = "B", skip_serializing_if = "Option::is_none", default)]
    pub b: Option<f64>,
    pub seed: u64,
    pub epsilon_variant: EpsilonVariant,
    pub scenario_config: ScenarioConfig,
}

impl CertificateReport {
    pub fn rho1_value(&self) -> Option<f64> {
        self.rho1.as_ref().and_then(Bound::value)
    }

    pub fn rho2_value(&self) -> Option<f64> {
        self.rho2.value()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Assembles a report from an already solved instance.
pub fn report_for_solution(
    omega: &SampleSet,
    solution: &ScenarioSolution,
    support: &SupportInfo,
    scenario_cfg: &ScenarioConfig,
    conf: &ConfidenceParams,
    prior: Option<&AffinePrior>,
) -> Result<CertificateReport> {
    conf.validate()?;
    if conf.n_samples != omega.len() || conf.n != omega.dim || conf.modes != omega.mode_count {
        return Err(Error::Invalid(
            "confidence parameters disagree with the sample set (N, n or M)".into(),
        ));
    }
    let radius = omega.config.radius;
    let eps = conf.epsilon(support.s)?;
    let (kappa, kappa_bar, delta1, delta2) = if solution.is_solved() {
        let shape = ShapeFactors::of(&solution.p);
        let m = conf.modes as f64;
        let d1 = delta_fn((m * shape.kappa_bar * eps).min(1.0), conf.n)?;
        let d2 = delta_fn((m * eps).min(1.0), conf.n)?;
        (shape.kappa, shape.kappa_bar, d1, d2)
    } else {
        (f64::INFINITY, f64::INFINITY, 0.0, 0.0)
    };
    let rho1 = prior
        .map(|pr| rho1_bound(solution, support, pr, conf, radius))
        .transpose()?;
    let (rho2, ellipsoid, decision) = rho2_bound(solution, support, conf, radius)?;
    Ok(CertificateReport {
        status: solution.status,
        gamma: solution.gamma,
        p: solution.p.clone(),
        s: support.s,
        support_method: support.method,
        epsilon: eps,
        kappa,
        kappa_bar,
        delta1,
        delta2,
        rho1,
        rho2,
        ellipsoid,
        ellipsoid_decision: decision,
        beta: conf.beta,
        n_samples: conf.n_samples,
        modes: conf.modes,
        n: conf.n,
        radius,
        b: prior.map(|p| p.b),
        seed: omega.config.seed,
        epsilon_variant: conf.epsilon_variant,
        scenario_config: *scenario_cfg,
    })
}

/// Full pipeline: solve, tie-break, bound the support, then both bounds.
pub fn certify(
    omega: &SampleSet,
    scenario_cfg: &ScenarioConfig,
    conf: &ConfidenceParams,
    prior: Option<&AffinePrior>,
    support_method: SupportMethod,
) -> Result<CertificateReport> {
    let solution = solve_gevp(omega, scenario_cfg)?;
    let support = if solution.is_solved() {
        support_subsample(omega, &solution, scenario_cfg, support_method)?
    } else {
        SupportInfo {
            s: omega.len(),
            indices: (0..omega.len()).collect(),
            method: support_method,
        }
    };
    report_for_solution(omega, &solution, &support, scenario_cfg, conf, prior)
}

/// Serializes a square matrix as a list of rows.
pub mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_row_iterator(n, m, rows.into_iter().flatten()))
    }
}
