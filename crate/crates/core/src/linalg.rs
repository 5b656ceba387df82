//! Small dense linear-algebra helpers shared by the solvers and oracles.

use nalgebra::{DMatrix, DVector};

/// Relative eigenvalue floor used when forming matrix square roots.
pub const SQRT_EIG_FLOOR: f64 = 1e-14;

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = symmetrize(m);
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).0[0]
}

pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    let (v, _) = sym_eigen(m);
    v[v.len() - 1]
}

/// `P^{1/2}` and `P^{-1/2}` of a symmetric positive-definite matrix.
///
/// Eigenvalues below `SQRT_EIG_FLOOR * λ_max` are clamped to that floor.
/// Returns `None` when the matrix is not positive definite (λ_min ≤ 0).
pub fn sqrt_and_inv_sqrt(p: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let (vals, vecs) = sym_eigen(p);
    let top = vals[vals.len() - 1];
    if !(vals[0] > 0.0) || !top.is_finite() {
        return None;
    }
    let floor = SQRT_EIG_FLOOR * top;
    let n = vals.len();
    let mut half = DMatrix::zeros(n, n);
    let mut inv_half = DMatrix::zeros(n, n);
    for k in 0..n {
        let lam = vals[k].max(floor);
        let q = vecs.column(k);
        let outer = q * q.transpose();
        half += &outer * lam.sqrt();
        inv_half += &outer / lam.sqrt();
    }
    Some((half, inv_half))
}

/// Largest modulus among the (complex) eigenvalues of a square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 1 {
        return a[(0, 0)].abs();
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.singular_values().iter().copied().fold(0.0, f64::max)
}

/// `‖x‖_P = sqrt(xᵀ P x)`.
pub fn p_norm(p: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    quad_form(p, x).max(0.0).sqrt()
}

pub fn quad_form(p: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(p * x))
}

/// Coordinates for the space of symmetric `n×n` matrices.
///
/// Coordinate `k` corresponds to the pair `(i, j)` with `i ≤ j`, ordered
/// row-major over the upper triangle. Off-diagonal coordinates set both
/// `(i, j)` and `(j, i)`, so `P[i][j] = p[k]`.
#[derive(Debug, Clone)]
pub struct SymBasis {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl SymBasis {
    pub fn new(n: usize) -> Self {
        let mut pairs = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                pairs.push((i, j));
            }
        }
        Self { n, pairs }
    }

    pub fn dim(&self) -> usize {
        self.pairs.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn to_matrix(&self, coords: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            m[(i, j)] = coords[k];
            m[(j, i)] = coords[k];
        }
        m
    }

    pub fn from_matrix(&self, m: &DMatrix<f64>) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|&(i, j)| 0.5 * (m[(i, j)] + m[(j, i)]))
            .collect()
    }

    /// The basis matrix `E_k`.
    pub fn element(&self, k: usize) -> DMatrix<f64> {
        let (i, j) = self.pairs[k];
        let mut m = DMatrix::zeros(self.n, self.n);
        m[(i, j)] = 1.0;
        m[(j, i)] = 1.0;
        m
    }

    /// Gradient of `p ↦ xᵀ P(p) x`, which is linear in `p`.
    pub fn quad_form_coeffs(&self, x: &DVector<f64>) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|&(i, j)| if i == j { x[i] * x[i] } else { 2.0 * x[i] * x[j] })
            .collect()
    }

    /// Multiplicity of each coordinate in `‖P‖²_F`.
    pub fn frobenius_weights(&self) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|&(i, j)| if i == j { 1.0 } else { 2.0 })
            .collect()
    }

    pub fn identity_coords(&self) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|&(i, j)| if i == j { 1.0 } else { 0.0 })
            .collect()
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
