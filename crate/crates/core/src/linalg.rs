//! Dense symmetric linear algebra for the small matrices used by the
//! metric learner: a cyclic Jacobi eigensolver, SPD inverse, shifted
//! pseudo-inverse and projection onto the (floored) PSD cone.
//!
//! Matrices are stored row-major in a flat `Vec<f64>`. Dimensions are
//! expected to stay in the tens, where Jacobi is both accurate and fast.

use crate::error::{Error, Result};

/// Default eigenvalue floor keeping a projected metric strictly positive definite.
pub const DEFAULT_EIG_FLOOR: f64 = 1e-8;

/// Relative gap below which two eigenvalues are treated as equal.
pub const DEFAULT_GAP_RTOL: f64 = 1e-9;

const MAX_SWEEPS: usize = 100;

/// A real symmetric matrix. Construction always symmetrizes the input.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds `(G + Gᵀ) / 2` from a row-major `dim × dim` buffer.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("matrix dimension must be positive".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(Self::symmetrized(dim, data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(dim, data)
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self::symmetrized(dim, data)
    }

    pub(crate) fn symmetrized(dim: usize, mut data: Vec<f64>) -> Self {
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = 0.5 * (data[i * dim + j] + data[j * dim + i]);
                data[i * dim + j] = avg;
                data[j * dim + i] = avg;
            }
        }
        Self { dim, data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * dim + i] = v;
        }
        m
    }

    /// `v vᵀ`
    pub fn outer(v: &[f64]) -> Self {
        let mut m = Self::zeros(v.len());
        m.add_outer(v, 1.0);
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += c · v vᵀ`
    pub fn add_outer(&mut self, v: &[f64], c: f64) {
        let n = self.dim;
        for i in 0..n {
            let ci = c * v[i];
            for j in 0..n {
                self.data[i * n + j] += ci * v[j];
            }
        }
    }

    /// `self += (e_i e_jᵀ + e_j e_iᵀ) / 2`
    pub fn add_outer_pair(&mut self, i: usize, j: usize) {
        let n = self.dim;
        self.data[i * n + j] += 0.5;
        self.data[j * n + i] += 0.5;
    }

    /// `self += c · other`
    pub fn add_scaled(&mut self, other: &SymMatrix, c: f64) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn scaled(&self, c: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        let mut out = self.clone();
        out.add_scaled(other, -1.0);
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Frobenius inner product, equal to `trace(self · other)` for symmetric operands.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|i| {
                self.data[i * n..(i + 1) * n]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `xᵀ S x`
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let n = self.dim;
        let mut acc = 0.0;
        for i in 0..n {
            let row: f64 = self.data[i * n..(i + 1) * n]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum();
            acc += x[i] * row;
        }
        acc
    }

    /// `self · inner · self`, symmetric whenever both factors are.
    pub fn sandwich(&self, inner: &SymMatrix) -> SymMatrix {
        let n = self.dim;
        let tmp = matmul(&self.data, &inner.data, n);
        SymMatrix::symmetrized(n, matmul(&tmp, &self.data, n))
    }

    /// Plain matrix product as a row-major buffer (generally not symmetric).
    pub fn matmul(&self, other: &SymMatrix) -> Vec<f64> {
        matmul(&self.data, &other.data, self.dim)
    }
}

/// Relative Frobenius asymmetry `‖G − Gᵀ‖ / ‖G‖` of a row-major square buffer.
pub fn relative_asymmetry(data: &[f64], dim: usize) -> f64 {
    let mut diff = 0.0;
    let mut norm = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let a = data[i * dim + j];
            let d = a - data[j * dim + i];
            diff += d * d;
            norm += a * a;
        }
    }
    if norm == 0.0 {
        0.0
    } else {
        (diff / norm).sqrt()
    }
}

pub(crate) fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

/// Eigen-decomposition `S = U Λ Uᵀ` with eigenvalues ascending.
///
/// Column `j` of `U` pairs with eigenvalue `j`, and the first component of
/// each eigenvector larger than `1e-12` in magnitude is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    values: Vec<f64>,
    vectors: Vec<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    /// Row-major `U`; column `j` is the eigenvector of eigenvalue `j`.
    pub fn vectors_row_major(&self) -> &[f64] {
        &self.vectors
    }

    pub fn eigenvector(&self, j: usize) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|i| self.vectors[i * n + j]).collect()
    }

    /// Same eigenvectors with every eigenvalue replaced by `f(λ)`.
    pub fn with_values(&self, f: impl Fn(f64) -> f64) -> EigenDecomposition {
        EigenDecomposition {
            values: self.values.iter().map(|&l| f(l)).collect(),
            vectors: self.vectors.clone(),
        }
    }

    /// `U · diag(f(j, λ_j)) · Uᵀ`
    pub fn map_indexed(&self, f: impl Fn(usize, f64) -> f64) -> SymMatrix {
        let n = self.dim();
        let weights: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(j, &l)| f(j, l))
            .collect();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for k in i..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += self.vectors[i * n + j] * weights[j] * self.vectors[k * n + j];
                }
                data[i * n + k] = acc;
                data[k * n + i] = acc;
            }
        }
        SymMatrix { dim: n, data }
    }

    /// Spectral matrix function `U · diag(f(λ)) · Uᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        self.map_indexed(|_, l| f(l))
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.map(|l| l)
    }

    /// Coordinates `Uᵀ x`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|j| (0..n).map(|i| self.vectors[i * n + j] * x[i]).sum())
            .collect()
    }

    /// `Uᵀ S U`, row-major.
    pub fn to_eigenbasis(&self, s: &SymMatrix) -> Vec<f64> {
        let n = self.dim();
        let ut = transpose(&self.vectors, n);
        let tmp = matmul(&ut, s.as_slice(), n);
        matmul(&tmp, &self.vectors, n)
    }

    /// `U C Uᵀ` for a general row-major `C`.
    pub fn from_eigenbasis(&self, c: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let tmp = matmul(&self.vectors, c, n);
        matmul(&tmp, &transpose(&self.vectors, n), n)
    }

    /// Smallest distance between two eigenvalues (infinite for `d = 1`).
    pub fn min_gap(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Gap tolerance `δ = 1e-9 · max|λ|`.
    pub fn default_gap_tol(&self) -> f64 {
        DEFAULT_GAP_RTOL * self.max_abs()
    }
}

pub(crate) fn transpose(a: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = a[i * n + j];
        }
    }
    out
}

/// Symmetric eigen-decomposition by cyclic Jacobi rotations.
pub fn sym_eigen(s: &SymMatrix) -> Result<EigenDecomposition> {
    if !s.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let n = s.dim();
    let mut a = s.data.clone();
    let mut v = SymMatrix::identity(n).data;
    let scale = s.frobenius_norm();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if off.sqrt() <= f64::EPSILON * scale || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let tau = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if tau.abs() > 1e150 {
                    0.5 / tau
                } else {
                    let sign = if tau >= 0.0 { 1.0 } else { -1.0 };
                    sign / (tau.abs() + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - sn * akq;
                    a[k * n + q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - sn * aqk;
                    a[q * n + k] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - sn * vkq;
                    v[k * n + q] = sn * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        let flip = (0..n)
            .map(|i| v[i * n + src])
            .find(|c| c.abs() > 1e-12)
            .is_some_and(|c| c < 0.0);
        let sign = if flip { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[i * n + col] = sign * v[i * n + src];
        }
    }
    Ok(EigenDecomposition { values, vectors })
}

/// `U · diag(1/λ) · Uᵀ`, refusing any eigenvalue below `floor`.
pub fn spd_inverse(e: &EigenDecomposition, floor: f64) -> Result<SymMatrix> {
    if let Some(&low) = e.values.iter().find(|&&l| l < floor || l <= 0.0) {
        return Err(Error::NotPositiveDefinite {
            eigenvalue: low,
            floor,
        });
    }
    Ok(e.map(|l| 1.0 / l))
}

/// Moore–Penrose pseudo-inverse of `λ_j I − M`, treating gaps `≤ gap_tol` as zero.
pub fn shifted_pseudoinverse(e: &EigenDecomposition, j: usize, gap_tol: f64) -> Result<SymMatrix> {
    let n = e.dim();
    if j >= n {
        return Err(Error::InvalidInput(format!(
            "eigen index {j} out of range for dimension {n}"
        )));
    }
    let lj = e.values[j];
    Ok(e.map_indexed(|_, lk| {
        let gap = lj - lk;
        if gap.abs() > gap_tol {
            1.0 / gap
        } else {
            0.0
        }
    }))
}

/// Result of a cone projection, keeping the decomposition of the output.
#[derive(Debug, Clone)]
pub struct Projection {
    pub matrix: SymMatrix,
    pub eigen: EigenDecomposition,
    /// Number of eigenvalues raised to the floor.
    pub raised: usize,
}

/// Projects onto `{S : λ(S) ≥ floor}` by clamping eigenvalues.
pub fn project_psd_eigen(s: &SymMatrix, floor: f64) -> Result<Projection> {
    let e = sym_eigen(s)?;
    let raised = e.values.iter().filter(|&&l| l < floor).count();
    let eigen = e.with_values(|l| l.max(floor));
    let matrix = if raised == 0 {
        s.clone()
    } else {
        eigen.reconstruct()
    };
    Ok(Projection {
        matrix,
        eigen,
        raised,
    })
}

pub fn project_psd(s: &SymMatrix, floor: f64) -> Result<SymMatrix> {
    project_psd_eigen(s, floor).map(|p| p.matrix)
}
