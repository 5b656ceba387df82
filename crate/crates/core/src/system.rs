//! Switched affine systems `x⁺ = A_σ x + b_σ`, their exact trajectories,
//! per-mode fixed points and lifted (length-`l`) systems.
//!
//! Mode indices are 1-based wherever they cross the API boundary (JSON,
//! CSV, CLI, [`Mode::one_based`]); internally a [`Mode`] holds the 0-based
//! slot.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of modes of a lifted system.
pub const DEFAULT_LIFT_CAP: usize = 4096;

/// Relative singular-value threshold below which `I − A_i` is singular.
pub const FIXED_POINT_SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mode(usize);

impl Mode {
    /// Validates a 1-based index against the mode count.
    pub fn new(one_based: usize, count: usize) -> Result<Self> {
        if one_based == 0 || one_based > count {
            return Err(Error::ModeIndex {
                index: one_based,
                count,
            });
        }
        Ok(Self(one_based - 1))
    }

    pub fn from_zero_based(index: usize) -> Self {
        Self(index)
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn one_based(self) -> usize {
        self.0 + 1
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ModeSequence(Vec<Mode>);

impl ModeSequence {
    pub fn new(modes: Vec<Mode>) -> Self {
        Self(modes)
    }

    pub fn from_one_based(entries: &[usize], count: usize) -> Result<Self> {
        entries
            .iter()
            .map(|&e| Mode::new(e, count))
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn constant(mode: Mode, len: usize) -> Self {
        Self(vec![mode; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.0
    }

    pub fn concat(&self, other: &ModeSequence) -> ModeSequence {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Self(v)
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub modes: ModeSequence,
}

impl Trajectory {
    pub fn last(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory holds at least x0")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineMode {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FixedPoint {
    Point(DVector<f64>),
    /// `I − A_i` is singular to working tolerance.
    Singular,
}

/// A finite family of affine maps sharing the state dimension `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedAffineSystem {
    n: usize,
    modes: Vec<AffineMode>,
}

impl SwitchedAffineSystem {
    pub fn new(modes: Vec<AffineMode>) -> Result<Self> {
        let first = modes
            .first()
            .ok_or_else(|| Error::Invalid("a system needs at least one mode".into()))?;
        let n = first.a.nrows();
        if n == 0 {
            return Err(Error::Invalid("state dimension must be at least 1".into()));
        }
        for m in &modes {
            if m.a.nrows() != n || m.a.ncols() != n {
                return Err(Error::Dimension {
                    what: "mode matrix",
                    expected: n,
                    found: if m.a.nrows() != n { m.a.nrows() } else { m.a.ncols() },
                });
            }
            if m.b.len() != n {
                return Err(Error::Dimension {
                    what: "mode offset",
                    expected: n,
                    found: m.b.len(),
                });
            }
            if m.a.iter().chain(m.b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Invalid("system data must be finite".into()));
            }
        }
        Ok(Self { n, modes })
    }

    /// Builds a system from row-major matrices and offsets.
    pub fn from_rows(data: &[(Vec<Vec<f64>>, Vec<f64>)]) -> Result<Self> {
        let modes = data
            .iter()
            .map(|(rows, b)| {
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Invalid("mode matrix must be square".into()));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                Ok(AffineMode {
                    a: DMatrix::from_row_slice(n, n, &flat),
                    b: DVector::from_column_slice(b),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(modes)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[AffineMode] {
        &self.modes
    }

    pub fn mode(&self, mode: Mode) -> Result<&AffineMode> {
        self.modes.get(mode.index()).ok_or(Error::ModeIndex {
            index: mode.one_based(),
            count: self.modes.len(),
        })
    }

    pub fn matrices(&self) -> Vec<DMatrix<f64>> {
        self.modes.iter().map(|m| m.a.clone()).collect()
    }

    pub fn offsets(&self) -> Vec<DVector<f64>> {
        self.modes.iter().map(|m| m.b.clone()).collect()
    }

    /// `max_i ‖b_i‖` in the Euclidean norm.
    pub fn max_offset_norm(&self) -> f64 {
        self.modes.iter().map(|m| m.b.norm()).fold(0.0, f64::max)
    }

    fn check_state(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                what: "state vector",
                expected: self.n,
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn step(&self, x: &DVector<f64>, mode: Mode) -> Result<DVector<f64>> {
        self.check_state(x)?;
        let m = self.mode(mode)?;
        Ok(&m.a * x + &m.b)
    }

    pub fn simulate(&self, x0: &DVector<f64>, modes: &ModeSequence) -> Result<Trajectory> {
        self.check_state(x0)?;
        let mut states = Vec::with_capacity(modes.len() + 1);
        states.push(x0.clone());
        for &mode in modes.modes() {
            let next = self.step(states.last().unwrap(), mode)?;
            states.push(next);
        }
        Ok(Trajectory {
            states,
            modes: modes.clone(),
        })
    }

    /// `c_i = (I − A_i)^{-1} b_i`, or [`FixedPoint::Singular`].
    pub fn mode_fixed_point(&self, mode: Mode) -> Result<FixedPoint> {
        let m = self.mode(mode)?;
        let lhs = DMatrix::identity(self.n, self.n) - &m.a;
        let sv = lhs.singular_values();
        let smax = sv.iter().copied().fold(0.0, f64::max);
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if smax == 0.0 || smin / smax < FIXED_POINT_SINGULAR_TOL {
            return Ok(FixedPoint::Singular);
        }
        match lhs.lu().solve(&m.b) {
            Some(c) => Ok(FixedPoint::Point(c)),
            None => Ok(FixedPoint::Singular),
        }
    }

    /// System whose modes are all words of length `l`, in lexicographic
    /// order over `(j₁,…,j_l)` with `j₁` applied first and most significant.
    ///
    /// The word `(j₁,…,j_l)` maps to `A_{j_l}⋯A_{j₁}` and the offset reached
    /// from the origin after applying the word.
    pub fn lifted_system(&self, l: usize, cap: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::Invalid("lift length must be at least 1".into()));
        }
        let count = lifted_count(self.mode_count(), l);
        if count > cap as u128 {
            return Err(Error::Size {
                what: "lifted system",
                requested: count,
                cap: cap as u128,
            });
        }
        let mut words: Vec<AffineMode> = vec![AffineMode {
            a: DMatrix::identity(self.n, self.n),
            b: DVector::zeros(self.n),
        }];
        for _ in 0..l {
            let mut next = Vec::with_capacity(words.len() * self.mode_count());
            for w in &words {
                for m in &self.modes {
                    next.push(AffineMode {
                        a: &m.a * &w.a,
                        b: &m.a * &w.b + &m.b,
                    });
                }
            }
            words = next;
        }
        Self::new(words)
    }

    pub fn to_spec(&self) -> SystemSpec {
        SystemSpec {
            n: self.n,
            modes: self
                .modes
                .iter()
                .map(|m| ModeSpec {
                    a: (0..self.n)
                        .map(|i| (0..self.n).map(|j| m.a[(i, j)]).collect())
                        .collect(),
                    b: m.b.iter().copied().collect(),
                })
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SystemSpec = serde_json::from_str(text)?;
        spec.build()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_spec())?)
    }
}

/// `M^l`, saturating.
pub fn lifted_count(m: usize, l: usize) -> u128 {
    let mut c: u128 = 1;
    for _ in 0..l {
        c = c.saturating_mul(m as u128);
    }
    c
}

/// Decomposes a lifted mode into its word, first-applied letter first.
pub fn word_of(lifted: Mode, m: usize, l: usize) -> ModeSequence {
    let mut idx = lifted.index();
    let mut letters = vec![Mode(0); l];
    for slot in letters.iter_mut().rev() {
        *slot = Mode(idx % m);
        idx /= m;
    }
    ModeSequence(letters)
}

/// Lifted mode index of a word (inverse of [`word_of`]).
pub fn index_of_word(word: &ModeSequence, m: usize) -> Mode {
    Mode(word.modes().iter().fold(0, |acc, w| acc * m + w.index()))
}

/// JSON wire form: `{"n": 2, "modes": [{"A": [[..],[..]], "b": [..]}]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SystemSpec {
    pub n: usize,
    pub modes: Vec<ModeSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModeSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl SystemSpec {
    pub fn build(&self) -> Result<SwitchedAffineSystem> {
        for m in &self.modes {
            if m.a.len() != self.n || m.a.iter().any(|r| r.len() != self.n) {
                return Err(Error::Dimension {
                    what: "mode matrix",
                    expected: self.n,
                    found: m.a.len(),
                });
            }
            if m.b.len() != self.n {
                return Err(Error::Dimension {
                    what: "mode offset",
                    expected: self.n,
                    found: m.b.len(),
                });
            }
        }
        let data: Vec<_> = self.modes.iter().map(|m| (m.a.clone(), m.b.clone())).collect();
        SwitchedAffineSystem::from_rows(&data)
    }
}

/// The two planar benchmark systems used for the reproduction study.
pub mod fixtures {
    use super::SwitchedAffineSystem;

    pub fn f1() -> SwitchedAffineSystem {
        SwitchedAffineSystem::from_rows(&[
            (vec![vec![0.4, -0.3], vec![-0.5, 0.5]], vec![0.1, 0.2]),
            (vec![vec![-0.3, -0.1], vec![-0.2, -0.6]], vec![-0.2, -0.1]),
        ])
        .expect("F1 fixture is well formed")
    }

    pub fn f2() -> SwitchedAffineSystem {
        SwitchedAffineSystem::from_rows(&[
            (vec![vec![0.6, 0.1], vec![-0.2, -0.5]], vec![-0.7, -0.7]),
            (vec![vec![-0.6, -0.1], vec![0.2, 0.5]], vec![0.2, -0.8]),
        ])
        .expect("F2 fixture is well formed")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn single(a: DMatrix<f64>, b: &[f64]) -> SwitchedAffineSystem {
        SwitchedAffineSystem::new(vec![AffineMode { a, b: v(b) }]).unwrap()
    }

    #[test]
    fn step_examples() {
        let f1 = fixtures::f1();
        let m1 = Mode::new(1, 2).unwrap();
        assert_eq!(f1.step(&v(&[0.0, 0.0]), m1).unwrap(), v(&[0.1, 0.2]));
        let y = f1.step(&v(&[1.0, 0.0]), m1).unwrap();
        assert!((y - v(&[0.5, -0.3])).norm() < 1e-15);

        let zero = SwitchedAffineSystem::from_rows(&[
            (vec![vec![0.0, 0.0], vec![0.0, 0.0]], vec![1.0, 2.0]),
            (vec![vec![0.0, 0.0], vec![0.0, 0.0]], vec![-3.0, 0.5]),
        ])
        .unwrap();
        let out = zero.step(&v(&[7.0, -4.0]), Mode::new(2, 2).unwrap()).unwrap();
        assert_eq!(out, v(&[-3.0, 0.5]));
    }

    #[test]
    fn step_errors() {
        let f1 = fixtures::f1();
        assert!(matches!(Mode::new(3, 2), Err(Error::ModeIndex { .. })));
        assert!(matches!(Mode::new(0, 2), Err(Error::ModeIndex { .. })));
        assert!(matches!(
            f1.step(&v(&[0.0, 0.0]), Mode::from_zero_based(5)),
            Err(Error::ModeIndex { .. })
        ));
        assert!(matches!(
            f1.step(&v(&[0.0, 0.0, 0.0]), Mode::from_zero_based(0)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn construction_rejects_bad_data() {
        assert!(SwitchedAffineSystem::new(vec![]).is_err());
        assert!(SwitchedAffineSystem::from_rows(&[(vec![vec![f64::NAN]], vec![0.0])]).is_err());
        assert!(SwitchedAffineSystem::from_rows(&[
            (vec![vec![1.0]], vec![0.0]),
            (vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]),
        ])
        .is_err());
    }

    #[test]
    fn simulate_geometric_series() {
        let sys = single(DMatrix::identity(2, 2) * 0.5, &[1.0, 0.0]);
        let modes = ModeSequence::constant(Mode::from_zero_based(0), 3);
        let traj = sys.simulate(&v(&[0.0, 0.0]), &modes).unwrap();
        let expected = [0.0, 1.0, 1.5, 1.75];
        assert_eq!(traj.states.len(), 4);
        for (s, e) in traj.states.iter().zip(expected) {
            assert!((s - v(&[e, 0.0])).norm() < 1e-15);
        }
        let empty = sys.simulate(&v(&[3.0, 4.0]), &ModeSequence::default()).unwrap();
        assert_eq!(empty.states, vec![v(&[3.0, 4.0])]);
    }

    #[test]
    fn f1_constant_mode_converges_to_fixed_point() {
        let f1 = fixtures::f1();
        let m1 = Mode::from_zero_based(0);
        let traj = f1.simulate(&v(&[2.0, -1.0]), &ModeSequence::constant(m1, 400)).unwrap();
        let expect = v(&[-1.0 / 15.0, 7.0 / 15.0]);
        assert!((traj.last() - &expect).norm() < 1e-12);
        match f1.mode_fixed_point(m1).unwrap() {
            FixedPoint::Point(c) => assert!((c - expect).norm() < 1e-14),
            FixedPoint::Singular => panic!("mode 1 of F1 has a fixed point"),
        }
    }

    #[test]
    fn fixed_point_edge_cases() {
        let zero_a = single(DMatrix::zeros(2, 2), &[0.3, -0.7]);
        assert_eq!(
            zero_a.mode_fixed_point(Mode::from_zero_based(0)).unwrap(),
            FixedPoint::Point(v(&[0.3, -0.7]))
        );
        let ident = single(DMatrix::identity(2, 2), &[0.3, -0.7]);
        assert_eq!(
            ident.mode_fixed_point(Mode::from_zero_based(0)).unwrap(),
            FixedPoint::Singular
        );
    }

    #[test]
    fn lifted_examples() {
        let f1 = fixtures::f1();
        assert_eq!(f1.lifted_system(1, DEFAULT_LIFT_CAP).unwrap(), f1);
        assert_eq!(f1.lifted_system(2, DEFAULT_LIFT_CAP).unwrap().mode_count(), 4);

        let a = DMatrix::from_row_slice(2, 2, &[0.3, 0.2, -0.1, 0.7]);
        let sys = single(a.clone(), &[1.0, -2.0]);
        let lifted = sys.lifted_system(2, DEFAULT_LIFT_CAP).unwrap();
        let b = v(&[1.0, -2.0]);
        assert!((&lifted.modes()[0].a - &a * &a).norm() < 1e-15);
        assert!((&lifted.modes()[0].b - (&a * &b + &b)).norm() < 1e-15);

        assert!(matches!(f1.lifted_system(13, DEFAULT_LIFT_CAP), Err(Error::Size { .. })));
        assert!(f1.lifted_system(0, DEFAULT_LIFT_CAP).is_err());
    }

    #[test]
    fn word_indexing_is_lexicographic() {
        let w = word_of(Mode::from_zero_based(5), 2, 3);
        let letters: Vec<usize> = w.modes().iter().map(|m| m.one_based()).collect();
        assert_eq!(letters, vec![2, 1, 2]);
        assert_eq!(index_of_word(&w, 2).index(), 5);
    }

    #[test]
    fn json_roundtrip() {
        let f2 = fixtures::f2();
        let text = f2.to_json().unwrap();
        assert_eq!(SwitchedAffineSystem::from_json(&text).unwrap(), f2);
        let bad = r#"{"n": 2, "modes": [{"A": [[1.0, 0.0]], "b": [0.0, 0.0]}]}"#;
        assert!(SwitchedAffineSystem::from_json(bad).is_err());
    }

    fn arb_system() -> impl Strategy<Value = (SwitchedAffineSystem, Vec<f64>)> {
        (1usize..4, 1usize..4).prop_flat_map(|(n, m)| {
            (
                proptest::collection::vec(-1.0f64..1.0, m * (n * n + n)),
                proptest::collection::vec(-3.0f64..3.0, n),
            )
                .prop_map(move |(data, x)| {
                    let modes = data
                        .chunks(n * n + n)
                        .map(|c| AffineMode {
                            a: DMatrix::from_row_slice(n, n, &c[..n * n]),
                            b: DVector::from_column_slice(&c[n * n..]),
                        })
                        .collect();
                    (SwitchedAffineSystem::new(modes).unwrap(), x)
                })
        })
    }

    proptest! {
        #[test]
        fn lifted_step_matches_simulation((sys, x) in arb_system(), l in 1usize..4, pick in 0usize..1000) {
            let m = sys.mode_count();
            let lifted = sys.lifted_system(l, DEFAULT_LIFT_CAP).unwrap();
            let idx = Mode::from_zero_based(pick % lifted.mode_count());
            let x0 = DVector::from_vec(x);
            let word = word_of(idx, m, l);
            let direct = sys.simulate(&x0, &word).unwrap();
            let one = lifted.step(&x0, idx).unwrap();
            let scale = direct.last().norm().max(1.0);
            prop_assert!((one - direct.last()).norm() <= 1e-12 * scale);
        }

        #[test]
        fn simulate_is_a_semigroup((sys, x) in arb_system(), a in proptest::collection::vec(0usize..8, 0..6), b in proptest::collection::vec(0usize..8, 0..6)) {
            let m = sys.mode_count();
            let s1 = ModeSequence::new(a.iter().map(|&i| Mode::from_zero_based(i % m)).collect());
            let s2 = ModeSequence::new(b.iter().map(|&i| Mode::from_zero_based(i % m)).collect());
            let x0 = DVector::from_vec(x);
            let whole = sys.simulate(&x0, &s1.concat(&s2)).unwrap();
            let first = sys.simulate(&x0, &s1).unwrap();
            let second = sys.simulate(first.last(), &s2).unwrap();
            let mut joined = first.states.clone();
            joined.extend(second.states.into_iter().skip(1));
            prop_assert_eq!(whole.states, joined);
        }

        #[test]
        fn step_is_affine((sys, x) in arb_system(), y_seed in proptest::collection::vec(-3.0f64..3.0, 3), lam in 0.0f64..=1.0, pick in 0usize..8) {
            let n = sys.dim();
            let mode = Mode::from_zero_based(pick % sys.mode_count());
            let x = DVector::from_vec(x);
            let y = DVector::from_column_slice(&y_seed[..n]);
            let mix = &x * lam + &y * (1.0 - lam);
            let lhs = sys.step(&mix, mode).unwrap();
            let rhs = sys.step(&x, mode).unwrap() * lam + sys.step(&y, mode).unwrap() * (1.0 - lam);
            prop_assert!((&lhs - &rhs).norm() <= 1e-12 * lhs.norm().max(1.0));
        }
    }
}
