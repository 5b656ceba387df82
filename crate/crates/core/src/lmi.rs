//! A small dense log-barrier interior-point solver for problems of the form
//!
//! ```text
//! minimize    cᵀz + ½ Σ qᵢ zᵢ²
//! subject to  gⱼᵀz ≤ hⱼ                  (scalar constraints)
//!             F₀ + Σ zᵢ Fᵢ ≻ 0           (linear matrix inequalities)
//! ```
//!
//! plus the Lyapunov-specific layer used by the scenario program and the
//! white-box norm synthesis: every constraint is linear in the entries of a
//! symmetric matrix `P`, and the only conic constraints are LMIs on `P`.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{lambda_max, SymBasis};

#[derive(Debug, Clone)]
pub struct ScalarConstraint {
    pub g: Vec<f64>,
    pub h: f64,
}

/// `F₀ + Σ zᵢ Fᵢ ≻ 0`; `coeffs[i]` is `Fᵢ`.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub constant: DMatrix<f64>,
    pub coeffs: Vec<DMatrix<f64>>,
}

impl LmiBlock {
    fn size(&self) -> usize {
        self.constant.nrows()
    }

    fn eval(&self, z: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (f, &zi) in self.coeffs.iter().zip(z) {
            if zi != 0.0 {
                m += f * zi;
            }
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct BarrierProblem {
    pub n_vars: usize,
    pub linear: Vec<f64>,
    /// Diagonal of the quadratic objective term.
    pub quadratic: Vec<f64>,
    pub scalars: Vec<ScalarConstraint>,
    pub blocks: Vec<LmiBlock>,
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierSettings {
    pub t0: f64,
    pub mu: f64,
    pub gap_tol: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_outer: usize,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        Self {
            t0: 1.0,
            mu: 20.0,
            gap_tol: 1e-10,
            newton_tol: 1e-9,
            max_newton: 200,
            max_outer: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Centered {
    pub z: Vec<f64>,
    pub objective: f64,
    /// Bound on `objective − optimum` at this centering.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BarrierFailure {
    /// The starting point is not strictly feasible.
    InfeasibleStart,
    /// Newton's method made no progress.
    Stalled(String),
}

pub enum Control {
    Continue,
    Stop,
}

struct Eval {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl BarrierProblem {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            linear: vec![0.0; n_vars],
            quadratic: vec![0.0; n_vars],
            scalars: Vec::new(),
            blocks: Vec::new(),
        }
    }

    /// Barrier parameter count `m` (so the central-path gap is `m/t`).
    fn barrier_degree(&self) -> f64 {
        (self.scalars.len() + self.blocks.iter().map(LmiBlock::size).sum::<usize>()) as f64
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        z.iter()
            .zip(&self.linear)
            .zip(&self.quadratic)
            .map(|((zi, c), q)| c * zi + 0.5 * q * zi * zi)
            .sum()
    }

    pub fn strictly_feasible(&self, z: &[f64]) -> bool {
        self.scalars.iter().all(|s| s.h - dot(&s.g, z) > 0.0)
            && self.blocks.iter().all(|b| b.eval(z).cholesky().is_some())
    }

    /// Barrier value only, `None` outside the domain.
    fn barrier_value(&self, z: &[f64], t: f64) -> Option<f64> {
        let mut v = t * self.objective(z);
        for s in &self.scalars {
            let slack = s.h - dot(&s.g, z);
            if !(slack > 0.0) {
                return None;
            }
            v -= slack.ln();
        }
        for b in &self.blocks {
            let chol = b.eval(z).cholesky()?;
            v -= 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        }
        Some(v)
    }

    fn evaluate(&self, z: &[f64], t: f64) -> Option<Eval> {
        let nv = self.n_vars;
        let mut grad = DVector::zeros(nv);
        let mut hess = DMatrix::zeros(nv, nv);
        let mut value = t * self.objective(z);
        for i in 0..nv {
            grad[i] = t * (self.linear[i] + self.quadratic[i] * z[i]);
            hess[(i, i)] = t * self.quadratic[i];
        }
        for s in &self.scalars {
            let slack = s.h - dot(&s.g, z);
            if !(slack > 0.0) {
                return None;
            }
            value -= slack.ln();
            let inv = 1.0 / slack;
            for i in 0..nv {
                if s.g[i] == 0.0 {
                    continue;
                }
                grad[i] += s.g[i] * inv;
                for j in i..nv {
                    let h = s.g[i] * s.g[j] * inv * inv;
                    hess[(i, j)] += h;
                }
            }
        }
        for b in &self.blocks {
            let chol = b.eval(z).cholesky()?;
            value -= 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let inv = chol.inverse();
            let w: Vec<DMatrix<f64>> = b.coeffs.iter().map(|f| &inv * f).collect();
            for i in 0..nv {
                grad[i] -= w[i].trace();
                for j in i..nv {
                    // tr(S⁻¹Fᵢ S⁻¹Fⱼ)
                    hess[(i, j)] += w[i].component_mul(&w[j].transpose()).sum();
                }
            }
        }
        for i in 0..nv {
            for j in 0..i {
                hess[(i, j)] = hess[(j, i)];
            }
        }
        Some(Eval { value, grad, hess })
    }

    /// Newton centering at barrier weight `t`. Returns `Ok(true)` when
    /// `early` accepted an intermediate iterate.
    fn center<E>(&self, z: &mut Vec<f64>, t: f64, settings: &BarrierSettings, early: &E) -> Result<bool, BarrierFailure>
    where
        E: Fn(&[f64]) -> bool,
    {
        for _ in 0..settings.max_newton {
            let ev = self.evaluate(z, t).ok_or(BarrierFailure::InfeasibleStart)?;
            let step = solve_spd(&ev.hess, &(-&ev.grad))
                .ok_or_else(|| BarrierFailure::Stalled("singular Newton system".into()))?;
            let decrement = -ev.grad.dot(&step);
            if !decrement.is_finite() {
                return Err(BarrierFailure::Stalled("non-finite Newton decrement".into()));
            }
            if decrement / 2.0 <= settings.newton_tol {
                return Ok(false);
            }
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..80 {
                let trial: Vec<f64> = z.iter().zip(step.iter()).map(|(a, d)| a + alpha * d).collect();
                if let Some(v) = self.barrier_value(&trial, t) {
                    if v <= ev.value - 0.25 * alpha * decrement {
                        if v >= ev.value {
                            // No representable decrease left at this scale.
                            return Ok(false);
                        }
                        *z = trial;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                // Line search exhausted: the iterate is centred to working precision.
                return if decrement < 1e-6 {
                    Ok(false)
                } else {
                    Err(BarrierFailure::Stalled(format!(
                        "line search failed with Newton decrement {decrement:e}"
                    )))
                };
            }
            if early(z) {
                return Ok(true);
            }
        }
        Err(BarrierFailure::Stalled("Newton iteration limit".into()))
    }

    /// Follows the central path from a strictly feasible `z0`. `control` is
    /// consulted after every centering and may stop the path early.
    pub fn solve<F>(&self, z0: Vec<f64>, settings: &BarrierSettings, control: F) -> Result<Centered, BarrierFailure>
    where
        F: FnMut(&Centered) -> Control,
    {
        self.solve_with_exit(z0, settings, |_| false, control)
    }

    /// As [`Self::solve`], but `early` is checked after every Newton step;
    /// when it accepts an iterate the path stops there with `gap = ∞`.
    pub fn solve_with_exit<E, F>(
        &self,
        z0: Vec<f64>,
        settings: &BarrierSettings,
        early: E,
        mut control: F,
    ) -> Result<Centered, BarrierFailure>
    where
        E: Fn(&[f64]) -> bool,
        F: FnMut(&Centered) -> Control,
    {
        if !self.strictly_feasible(&z0) {
            return Err(BarrierFailure::InfeasibleStart);
        }
        let m = self.barrier_degree().max(1.0);
        let mut z = z0;
        let mut t = settings.t0;
        for _ in 0..settings.max_outer {
            if self.center(&mut z, t, settings, &early)? {
                return Ok(Centered {
                    objective: self.objective(&z),
                    gap: f64::INFINITY,
                    z,
                });
            }
            let state = Centered {
                objective: self.objective(&z),
                gap: m / t,
                z: z.clone(),
            };
            let done = state.gap <= settings.gap_tol * state.objective.abs().max(1.0);
            if matches!(control(&state), Control::Stop) || done {
                return Ok(state);
            }
            t *= settings.mu;
        }
        Ok(Centered {
            objective: self.objective(&z),
            gap: m / t,
            z,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn solve_spd(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    let scale = h.diagonal().iter().fold(0.0f64, |a, &d| a.max(d.abs())).max(1e-300);
    let mut reg = h.clone();
    for i in 0..reg.nrows() {
        reg[(i, i)] += 1e-12 * scale;
    }
    reg.lu().solve(rhs)
}

// ---------------------------------------------------------------------------
// Lyapunov layer
// ---------------------------------------------------------------------------

/// Constraints linear in a symmetric matrix `P`: scalar rows `gᵀp ≤ h` and
/// LMIs `F₀ + Σ pᵢ Fᵢ ⪰ 0` over the coordinates `p` of [`SymBasis`].
#[derive(Debug, Clone)]
pub struct LyapunovConstraints {
    basis: SymBasis,
    scalars: Vec<ScalarConstraint>,
    blocks: Vec<LmiBlock>,
}

#[derive(Debug, Clone)]
pub enum FeasibilityOutcome {
    /// `P ⪰ I` with every constraint violated by at most `slack` (≤ tolerance).
    Feasible { p: DMatrix<f64>, slack: f64 },
    /// The smallest achievable violation is provably above the tolerance.
    Infeasible { lower_bound: f64 },
    NumericalFailure(String),
}

impl LyapunovConstraints {
    pub fn new(n: usize) -> Self {
        Self {
            basis: SymBasis::new(n),
            scalars: Vec::new(),
            blocks: Vec::new(),
        }
    }

    pub fn basis(&self) -> &SymBasis {
        &self.basis
    }

    /// `xᵀ P x − yᵀ P y · scale ≤ tol`, i.e. `‖x‖²_P ≤ scale·‖y‖²_P + tol`.
    pub fn push_ratio(&mut self, x: &DVector<f64>, y: &DVector<f64>, scale: f64, tol: f64) {
        let gx = self.basis.quad_form_coeffs(x);
        let gy = self.basis.quad_form_coeffs(y);
        let g = gx.iter().zip(&gy).map(|(a, b)| a - scale * b).collect();
        self.scalars.push(ScalarConstraint { g, h: tol });
    }

    /// `scale·P − AᵀPA + tol·I ⪰ 0`.
    pub fn push_contraction(&mut self, a: &DMatrix<f64>, scale: f64, tol: f64) {
        let n = self.basis.n();
        let coeffs = (0..self.basis.dim())
            .map(|k| {
                let e = self.basis.element(k);
                &e * scale - a.transpose() * &e * a
            })
            .collect();
        self.blocks.push(LmiBlock {
            constant: DMatrix::identity(n, n) * tol,
            coeffs,
        });
    }

    /// Worst violation of the scalar and LMI constraints at `p`.
    pub fn max_violation(&self, p: &DMatrix<f64>) -> f64 {
        let z = self.basis.from_matrix(p);
        let mut worst = f64::NEG_INFINITY;
        for s in &self.scalars {
            worst = worst.max(dot(&s.g, &z) - s.h);
        }
        for b in &self.blocks {
            worst = worst.max(-crate::linalg::lambda_min(&b.eval(&z)));
        }
        worst
    }

    fn bound_blocks(&self, lower: f64, upper: Option<usize>) -> Vec<LmiBlock> {
        let n = self.basis.n();
        let d = self.basis.dim();
        let elems: Vec<DMatrix<f64>> = (0..d).map(|k| self.basis.element(k)).collect();
        // P − lower·I ≻ 0
        let mut lo_coeffs = elems.clone();
        if upper.is_some() {
            lo_coeffs.push(DMatrix::zeros(n, n));
        }
        let mut out = vec![LmiBlock {
            constant: -DMatrix::identity(n, n) * lower,
            coeffs: lo_coeffs,
        }];
        if let Some(alpha_index) = upper {
            // α·I − P ≻ 0 with α the variable at `alpha_index`.
            let mut coeffs: Vec<DMatrix<f64>> = elems.iter().map(|e| -e).collect();
            debug_assert_eq!(alpha_index, d);
            coeffs.push(DMatrix::identity(n, n));
            out.push(LmiBlock {
                constant: DMatrix::zeros(n, n),
                coeffs,
            });
        }
        out
    }

    /// Searches for `I ⪯ P ⪯ kappa_cap·I` satisfying every constraint up
    /// to `tol`, by minimizing the worst violation `s` (phase I).
    pub fn find_feasible(&self, kappa_cap: f64, tol: f64) -> FeasibilityOutcome {
        let n = self.basis.n();
        let d = self.basis.dim();
        let s_idx = d;
        let mut prob = BarrierProblem::new(d + 1);
        prob.linear[s_idx] = 1.0;
        for s in &self.scalars {
            let mut g = s.g.clone();
            g.push(-1.0);
            prob.scalars.push(ScalarConstraint { g, h: s.h });
        }
        for b in &self.blocks {
            let mut coeffs = b.coeffs.clone();
            coeffs.push(DMatrix::identity(n, n));
            prob.blocks.push(LmiBlock {
                constant: b.constant.clone(),
                coeffs,
            });
        }
        let elems: Vec<DMatrix<f64>> = (0..d).map(|k| self.basis.element(k)).collect();
        let mut lo = elems.clone();
        lo.push(DMatrix::zeros(n, n));
        prob.blocks.push(LmiBlock {
            constant: -DMatrix::identity(n, n),
            coeffs: lo,
        });
        let mut hi: Vec<DMatrix<f64>> = elems.iter().map(|e| -e).collect();
        hi.push(DMatrix::zeros(n, n));
        prob.blocks.push(LmiBlock {
            constant: DMatrix::identity(n, n) * kappa_cap,
            coeffs: hi,
        });

        let start_scale = 2.0f64.min(0.5 * (1.0 + kappa_cap));
        let mut z0: Vec<f64> = self.basis.identity_coords().iter().map(|v| v * start_scale).collect();
        let p0 = self.basis.to_matrix(&z0);
        let s0 = self.max_violation_with(&p0) + 1.0;
        z0.push(s0.max(1.0));

        // The first centering may travel from the start towards the κ cap
        // in damped steps of bounded decrease, hence the larger budget.
        let settings = BarrierSettings {
            gap_tol: 1e-11,
            max_outer: 80,
            max_newton: 5000,
            ..BarrierSettings::default()
        };
        let mut verdict: Option<bool> = None;
        let result = prob.solve_with_exit(z0, &settings, |z| z[s_idx] < 0.0, |c| {
            let s = c.z[s_idx];
            if s <= 0.0 {
                verdict = Some(true);
                Control::Stop
            } else if s - c.gap > tol {
                verdict = Some(false);
                Control::Stop
            } else {
                Control::Continue
            }
        });
        match result {
            Err(e) => FeasibilityOutcome::NumericalFailure(format!("{e:?}")),
            Ok(c) => {
                let s = c.z[s_idx];
                let p = self.basis.to_matrix(&c.z[..d]);
                if c.gap.is_infinite() {
                    return FeasibilityOutcome::Feasible { p, slack: 0.0 };
                }
                match verdict {
                    Some(false) => FeasibilityOutcome::Infeasible { lower_bound: s - c.gap },
                    _ if s <= tol => FeasibilityOutcome::Feasible { p, slack: s.max(0.0) },
                    _ => FeasibilityOutcome::Infeasible { lower_bound: s - c.gap },
                }
            }
        }
    }

    fn max_violation_with(&self, p: &DMatrix<f64>) -> f64 {
        let v = self.max_violation(p);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    }

    /// Minimizes `α + c‖P‖²_F` over `I ⪯ P ⪯ αI` and the constraints,
    /// starting from a strictly feasible `start`.
    pub fn tie_break(&self, c: f64, start: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64), BarrierFailure> {
        let d = self.basis.dim();
        let mut prob = BarrierProblem::new(d + 1);
        prob.linear[d] = 1.0;
        for (k, w) in self.basis.frobenius_weights().iter().enumerate() {
            prob.quadratic[k] = 2.0 * c * w;
        }
        for s in &self.scalars {
            let mut g = s.g.clone();
            g.push(0.0);
            prob.scalars.push(ScalarConstraint { g, h: s.h });
        }
        for b in &self.blocks {
            let mut coeffs = b.coeffs.clone();
            coeffs.push(DMatrix::zeros(b.size(), b.size()));
            prob.blocks.push(LmiBlock {
                constant: b.constant.clone(),
                coeffs,
            });
        }
        prob.blocks.extend(self.bound_blocks(1.0, Some(d)));

        let mut z0 = self.basis.from_matrix(start);
        z0.push(lambda_max(start) * 1.5 + 1.0);
        let settings = BarrierSettings {
            gap_tol: 1e-10,
            ..BarrierSettings::default()
        };
        let c = prob.solve(z0, &settings, |_| Control::Continue)?;
        Ok((self.basis.to_matrix(&c.z[..d]), c.z[d]))
    }
}
