//! Closed-form adversarial pairs and the confusion objective they minimize.

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::loss::{check_beta, flipped_loss};
use crate::metric::{pairset_distance, LabeledPairSet, MetricMatrix, PairData, PairLabel};

/// Generated pairs `Π`, index-aligned with the training pairs they came from.
///
/// Each adversarial pair keeps the label of its source pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialPairSet {
    dim: usize,
    left: Vec<Vec<f64>>,
    right: Vec<Vec<f64>>,
    labels: Vec<PairLabel>,
}

impl AdversarialPairSet {
    pub fn new(left: Vec<Vec<f64>>, right: Vec<Vec<f64>>, labels: Vec<PairLabel>) -> Result<Self> {
        // same shape rules as training pairs
        let checked = LabeledPairSet::new(left, right, labels)?;
        Ok(Self::copy_of(&checked))
    }

    /// `Π = X`, the starting point of no perturbation at all.
    pub fn copy_of(x: &LabeledPairSet) -> Self {
        Self {
            dim: x.dim(),
            left: (0..x.len()).map(|i| x.left(i).to_vec()).collect(),
            right: (0..x.len()).map(|i| x.right(i).to_vec()).collect(),
            labels: x.labels().to_vec(),
        }
    }

    pub fn check_aligned(&self, x: &LabeledPairSet) -> Result<()> {
        if self.len() != x.len() || self.dim != x.dim() {
            return Err(Error::Misaligned(format!(
                "adversarial set is {}×{}, training set is {}×{}",
                self.len(),
                self.dim,
                x.len(),
                x.dim()
            )));
        }
        if self.labels != x.labels() {
            return Err(Error::Misaligned("labels differ from the source pairs".into()));
        }
        Ok(())
    }

    /// All coordinates as `[π_0, π'_0, π_1, π'_1, …]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.left
            .iter()
            .zip(&self.right)
            .flat_map(|(a, b)| a.iter().chain(b).copied())
            .collect()
    }

    /// Same labels and shape, coordinates replaced from a `to_flat` layout.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        let d = self.dim;
        if flat.len() != 2 * d * self.len() {
            return Err(Error::DimensionMismatch {
                expected: 2 * d * self.len(),
                found: flat.len(),
            });
        }
        let chunks: Vec<&[f64]> = flat.chunks(d).collect();
        Ok(Self {
            dim: d,
            left: chunks.iter().step_by(2).map(|c| c.to_vec()).collect(),
            right: chunks.iter().skip(1).step_by(2).map(|c| c.to_vec()).collect(),
            labels: self.labels.clone(),
        })
    }
}

impl PairData for AdversarialPairSet {
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

/// Per-direction coefficient `a = λ^(−y)` of the adversarial solve.
fn neg_power(lambda: f64, label: PairLabel) -> f64 {
    match label {
        PairLabel::Similar => 1.0 / lambda,
        PairLabel::Dissimilar => lambda,
    }
}

/// Minimizer of the confusion objective:
/// `π = (2M^(−y) + βM)⁻¹ (M^(−y) x̄ + βM x)`, and the same with `x'` for `π'`.
///
/// Solved in the eigenbasis of `M`, where every direction is a scalar equation.
pub fn generate_adversarial(m: &MetricMatrix, x: &LabeledPairSet, beta: f64) -> Result<AdversarialPairSet> {
    check_beta(beta)?;
    if x.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: x.dim(),
        });
    }
    let e = m.eigen();
    let n = e.dim();
    let u = e.vectors_row_major();
    let back = |c: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| u[i * n + j] * c[j]).sum())
            .collect()
    };
    let mut left = Vec::with_capacity(x.len());
    let mut right = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let label = x.label(i);
        let cx = e.project(x.left(i));
        let cxp = e.project(x.right(i));
        let mut cp = vec![0.0; n];
        let mut cpp = vec![0.0; n];
        for (j, &l) in e.eigenvalues().iter().enumerate() {
            let a = neg_power(l, label);
            let b = beta * l;
            let den = 2.0 * a + b;
            debug_assert!(den > 0.0);
            let bar = cx[j] + cxp[j];
            cp[j] = (a * bar + b * cx[j]) / den;
            cpp[j] = (a * bar + b * cxp[j]) / den;
        }
        left.push(back(&cp));
        right.push(back(&cpp));
    }
    Ok(AdversarialPairSet {
        dim: n,
        left,
        right,
        labels: x.labels().to_vec(),
    })
}

/// `C_M(Π) = L(M, Π, −y) + β · Dist_M(X, Π)`.
pub fn confusion_objective(
    m: &MetricMatrix,
    pi: &AdversarialPairSet,
    x: &LabeledPairSet,
    beta: f64,
) -> Result<f64> {
    check_beta(beta)?;
    pi.check_aligned(x)?;
    Ok(flipped_loss(m, pi, true)? + beta * pairset_distance(m, x, pi)?)
}

/// Gradient of the confusion objective with respect to every coordinate of `Π`,
/// in the `to_flat` layout.
pub fn confusion_gradient(
    m: &MetricMatrix,
    pi: &AdversarialPairSet,
    x: &LabeledPairSet,
    beta: f64,
) -> Result<Vec<f64>> {
    check_beta(beta)?;
    pi.check_aligned(x)?;
    if x.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: x.dim(),
        });
    }
    let mut out = Vec::with_capacity(2 * x.dim() * x.len());
    let sub = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p - q).collect() };
    for i in 0..x.len() {
        let w: &SymMatrix = m.power_neg(x.label(i));
        let pull = w.mul_vec(&sub(pi.left(i), pi.right(i)));
        let to_x = m.matrix().mul_vec(&sub(pi.left(i), x.left(i)));
        let to_xp = m.matrix().mul_vec(&sub(pi.right(i), x.right(i)));
        out.extend(pull.iter().zip(&to_x).map(|(p, q)| 2.0 * (p + beta * q)));
        out.extend(pull.iter().zip(&to_xp).map(|(p, q)| 2.0 * (-p + beta * q)));
    }
    Ok(out)
}

/// Euclidean norm of the confusion gradient.
pub fn stationarity_residual(
    m: &MetricMatrix,
    pi: &AdversarialPairSet,
    x: &LabeledPairSet,
    beta: f64,
) -> Result<f64> {
    let g = confusion_gradient(m, pi, x, beta)?;
    Ok(g.iter().map(|v| v * v).sum::<f64>().sqrt())
}
