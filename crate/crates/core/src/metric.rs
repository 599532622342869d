//! Mahalanobis metric, labeled pair sets and the distance primitives.
//!
//! All distances are the squared form `(x − x')ᵀ M (x − x')`.

use crate::adversarial::AdversarialPairSet;
use crate::error::{Error, Result};
use crate::linalg::{self, EigenDecomposition, SymMatrix, DEFAULT_EIG_FLOOR};

/// Similarity label of a pair: `+1` similar, `−1` dissimilar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PairLabel {
    Similar,
    Dissimilar,
}

impl PairLabel {
    pub fn sign(self) -> f64 {
        match self {
            PairLabel::Similar => 1.0,
            PairLabel::Dissimilar => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            PairLabel::Similar => PairLabel::Dissimilar,
            PairLabel::Dissimilar => PairLabel::Similar,
        }
    }

    pub fn from_sign(y: i64) -> Result<Self> {
        match y {
            1 => Ok(PairLabel::Similar),
            -1 => Ok(PairLabel::Dissimilar),
            other => Err(Error::InvalidInput(format!("pair label must be ±1, got {other}"))),
        }
    }
}

/// An SPD Mahalanobis matrix with its eigen-decomposition and inverse cached.
#[derive(Debug, Clone)]
pub struct MetricMatrix {
    base: SymMatrix,
    eigen: EigenDecomposition,
    inverse: SymMatrix,
    floor: f64,
}

impl MetricMatrix {
    pub fn new(m: SymMatrix, floor: f64) -> Result<Self> {
        let eigen = linalg::sym_eigen(&m)?;
        Self::from_parts(m, eigen, floor)
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(SymMatrix::identity(dim), DEFAULT_EIG_FLOOR).expect("identity is SPD")
    }

    pub(crate) fn from_parts(base: SymMatrix, eigen: EigenDecomposition, floor: f64) -> Result<Self> {
        let inverse = linalg::spd_inverse(&eigen, floor)?;
        Ok(Self {
            base,
            eigen,
            inverse,
            floor,
        })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.base
    }

    pub fn eigen(&self) -> &EigenDecomposition {
        &self.eigen
    }

    pub fn inverse(&self) -> &SymMatrix {
        &self.inverse
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// `M^(−y)`: the inverse for similar pairs, `M` itself for dissimilar ones.
    pub fn power_neg(&self, label: PairLabel) -> &SymMatrix {
        match label {
            PairLabel::Similar => &self.inverse,
            PairLabel::Dissimilar => &self.base,
        }
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.base.scaled(c), self.floor)
    }

    /// `M^(1/2)`, mapping the metric to Euclidean coordinates.
    pub fn sqrt(&self) -> SymMatrix {
        self.eigen.map(|l| l.sqrt())
    }
}

/// Read access shared by training pairs and generated adversarial pairs.
pub trait PairData {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn left(&self, i: usize) -> &[f64];
    fn right(&self, i: usize) -> &[f64];
    fn label(&self, i: usize) -> PairLabel;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `x̂_i = x_i − x'_i`
    fn diff(&self, i: usize) -> Vec<f64> {
        self.left(i)
            .iter()
            .zip(self.right(i))
            .map(|(a, b)| a - b)
            .collect()
    }

    /// `x̄_i = x_i + x'_i`
    fn sum(&self, i: usize) -> Vec<f64> {
        self.left(i)
            .iter()
            .zip(self.right(i))
            .map(|(a, b)| a + b)
            .collect()
    }

    fn count(&self, label: PairLabel) -> usize {
        (0..self.len()).filter(|&i| self.label(i) == label).count()
    }
}

/// Training pairs `X` with labels `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPairSet {
    dim: usize,
    left: Vec<Vec<f64>>,
    right: Vec<Vec<f64>>,
    labels: Vec<PairLabel>,
}

impl LabeledPairSet {
    pub fn new(left: Vec<Vec<f64>>, right: Vec<Vec<f64>>, labels: Vec<PairLabel>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::InsufficientData("pair set is empty".into()));
        }
        if left.len() != n || right.len() != n {
            return Err(Error::Misaligned(format!(
                "{} left, {} right examples for {} labels",
                left.len(),
                right.len(),
                n
            )));
        }
        let dim = left[0].len();
        if dim == 0 {
            return Err(Error::InvalidInput("examples must have at least one feature".into()));
        }
        for v in left.iter().chain(&right) {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput("pair features must be finite".into()));
            }
        }
        Ok(Self {
            dim,
            left,
            right,
            labels,
        })
    }

    pub fn labels(&self) -> &[PairLabel] {
        &self.labels
    }

    /// Errors unless both similar and dissimilar pairs are present.
    pub fn require_both_labels(&self) -> Result<()> {
        let similar = self.count(PairLabel::Similar);
        if similar == 0 || similar == self.len() {
            return Err(Error::InsufficientData(
                "need at least one similar and one dissimilar pair".into(),
            ));
        }
        Ok(())
    }

    /// Copy of the pairs with every label negated.
    pub fn with_flipped_labels(&self) -> Self {
        Self {
            labels: self.labels.iter().map(|l| l.flipped()).collect(),
            ..self.clone()
        }
    }
}

impl PairData for LabeledPairSet {
    fn dim(&self) -> usize {
        self.dim
    }
    fn len(&self) -> usize {
        self.labels.len()
    }
    fn left(&self, i: usize) -> &[f64] {
        &self.left[i]
    }
    fn right(&self, i: usize) -> &[f64] {
        &self.right[i]
    }
    fn label(&self, i: usize) -> PairLabel {
        self.labels[i]
    }
}

fn check_dims(m: &SymMatrix, x: &[f64], y: &[f64]) -> Result<()> {
    for v in [x, y] {
        if v.len() != m.dim() {
            return Err(Error::DimensionMismatch {
                expected: m.dim(),
                found: v.len(),
            });
        }
    }
    Ok(())
}

/// `(x − y)ᵀ S (x − y)` without dimension checks.
pub(crate) fn quad_diff(s: &SymMatrix, x: &[f64], y: &[f64]) -> f64 {
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    s.quad_form(&d)
}

pub fn mahalanobis(m: &MetricMatrix, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    check_dims(m.matrix(), x, x_prime)?;
    Ok(quad_diff(m.matrix(), x, x_prime))
}

/// Distance under `M⁻¹`, used for dissimilar pairs in the geometric-mean loss.
pub fn inverse_mahalanobis(m: &MetricMatrix, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    check_dims(m.inverse(), x, x_prime)?;
    Ok(quad_diff(m.inverse(), x, x_prime))
}

/// `Σ_i Dist_M(x_i, π_i) + Dist_M(x'_i, π'_i)`, accumulated in pair order.
pub fn pairset_distance(m: &MetricMatrix, x: &LabeledPairSet, pi: &AdversarialPairSet) -> Result<f64> {
    pi.check_aligned(x)?;
    if x.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: x.dim(),
        });
    }
    let mut total = 0.0;
    for i in 0..x.len() {
        total += quad_diff(m.matrix(), x.left(i), pi.left(i));
        total += quad_diff(m.matrix(), x.right(i), pi.right(i));
    }
    Ok(total)
}
