//! Geometric-mean loss, scatter statistics and the spectral adversarial loss.

use crate::error::{Error, Result};
use crate::linalg::{EigenDecomposition, SymMatrix};
use crate::metric::{quad_diff, MetricMatrix, PairData, PairLabel};

/// Scatter matrices of pair differences: `A` over similar pairs, `B` over dissimilar ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterStats {
    pub similar: SymMatrix,
    pub dissimilar: SymMatrix,
}

impl ScatterStats {
    pub fn dim(&self) -> usize {
        self.similar.dim()
    }

    pub fn for_label(&self, label: PairLabel) -> &SymMatrix {
        match label {
            PairLabel::Similar => &self.similar,
            PairLabel::Dissimilar => &self.dissimilar,
        }
    }
}

pub fn scatter_stats<P: PairData>(pairs: &P) -> ScatterStats {
    let d = pairs.dim();
    let mut similar = SymMatrix::zeros(d);
    let mut dissimilar = SymMatrix::zeros(d);
    for i in 0..pairs.len() {
        let diff = pairs.diff(i);
        match pairs.label(i) {
            PairLabel::Similar => similar.add_outer(&diff, 1.0),
            PairLabel::Dissimilar => dissimilar.add_outer(&diff, 1.0),
        }
    }
    ScatterStats {
        similar,
        dissimilar,
    }
}

fn check_dim<P: PairData>(m: &MetricMatrix, pairs: &P) -> Result<()> {
    if pairs.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: pairs.dim(),
        });
    }
    Ok(())
}

/// `Σ_{y=+1} Dist_M + Σ_{y=−1} Dist_{M⁻¹}` over the pairs, in pair order.
pub fn geometric_mean_loss<P: PairData>(m: &MetricMatrix, pairs: &P) -> Result<f64> {
    flipped_loss(m, pairs, false)
}

/// Geometric-mean loss with every label negated when `flip` is set.
pub fn flipped_loss<P: PairData>(m: &MetricMatrix, pairs: &P, flip: bool) -> Result<f64> {
    check_dim(m, pairs)?;
    let mut total = 0.0;
    for i in 0..pairs.len() {
        let label = if flip {
            pairs.label(i).flipped()
        } else {
            pairs.label(i)
        };
        let s = match label {
            PairLabel::Similar => m.matrix(),
            PairLabel::Dissimilar => m.inverse(),
        };
        total += quad_diff(s, pairs.left(i), pairs.right(i));
    }
    Ok(total)
}

/// `tr(M A) + tr(M⁻¹ B)`.
pub fn geometric_mean_loss_scatter(m: &MetricMatrix, stats: &ScatterStats) -> Result<f64> {
    if stats.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: stats.dim(),
        });
    }
    Ok(m.matrix().dot(&stats.similar) + m.inverse().dot(&stats.dissimilar))
}

/// Per-eigenvalue weight of the adversarial loss.
///
/// `Substituted` is the form obtained by plugging the closed-form adversarial
/// pairs into the geometric-mean loss. `Printed` keeps the exponent pattern
/// `β²λ^(3+2y) / (2 + β²λ^(1+y))²`, which only agrees with it at `β = 1, y = +1`;
/// it exists so the gradient checker can demonstrate that the substitution
/// identity catches it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpectralForm {
    #[default]
    Substituted,
    Printed,
}

impl SpectralForm {
    /// `h_y(λ)`
    pub fn weight(self, lambda: f64, label: PairLabel, beta: f64) -> f64 {
        let y = label.sign() as i32;
        match self {
            SpectralForm::Substituted => {
                let u = lambda.powi(1 + y);
                beta * beta * lambda.powi(2 + 3 * y) / (2.0 + beta * u).powi(2)
            }
            SpectralForm::Printed => {
                let u = lambda.powi(1 + y);
                beta * beta * lambda.powi(3 + 2 * y) / (2.0 + beta * beta * u).powi(2)
            }
        }
    }

    /// `h'_y(λ)`
    pub fn derivative(self, lambda: f64, label: PairLabel, beta: f64) -> f64 {
        let y = label.sign() as i32;
        let yf = y as f64;
        match self {
            SpectralForm::Substituted => {
                let u = lambda.powi(1 + y);
                let den = 2.0 + beta * u;
                beta * beta
                    * lambda.powi(1 + 3 * y)
                    * ((2.0 + 3.0 * yf) * den - 2.0 * beta * (1.0 + yf) * u)
                    / den.powi(3)
            }
            SpectralForm::Printed => {
                let b2 = beta * beta;
                let u = lambda.powi(1 + y);
                let den = 2.0 + b2 * u;
                b2 * lambda.powi(2 + 2 * y)
                    * ((3.0 + 2.0 * yf) * den - 2.0 * b2 * (1.0 + yf) * u)
                    / den.powi(3)
            }
        }
    }
}

/// Substitution-consistent weight `β²λ^(2+3y) / (2 + βλ^(1+y))²`.
pub fn spectral_weight(lambda: f64, label: PairLabel, beta: f64) -> f64 {
    SpectralForm::Substituted.weight(lambda, label, beta)
}

pub fn spectral_weight_derivative(lambda: f64, label: PairLabel, beta: f64) -> f64 {
    SpectralForm::Substituted.derivative(lambda, label, beta)
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidConfig(format!("beta must be positive, got {beta}")));
    }
    Ok(())
}

/// Loss on the adversarial pairs, `Σ_i x̂_iᵀ U h_i(Λ) Uᵀ x̂_i`, evaluated pair by pair.
pub fn adversarial_spectral_loss<P: PairData>(m: &MetricMatrix, pairs: &P, beta: f64) -> Result<f64> {
    adversarial_spectral_loss_with(SpectralForm::Substituted, m, pairs, beta)
}

pub fn adversarial_spectral_loss_with<P: PairData>(
    form: SpectralForm,
    m: &MetricMatrix,
    pairs: &P,
    beta: f64,
) -> Result<f64> {
    check_beta(beta)?;
    check_dim(m, pairs)?;
    let e = m.eigen();
    let mut total = 0.0;
    for i in 0..pairs.len() {
        let label = pairs.label(i);
        let c = e.project(&pairs.diff(i));
        total += e
            .eigenvalues()
            .iter()
            .zip(&c)
            .map(|(&l, &cj)| form.weight(l, label, beta) * cj * cj)
            .sum::<f64>();
    }
    Ok(total)
}

/// Same quantity through the scatter matrices: `tr(h₊(M) A) + tr(h₋(M) B)`.
pub fn adversarial_spectral_loss_scatter(
    eigen: &EigenDecomposition,
    stats: &ScatterStats,
    beta: f64,
    form: SpectralForm,
) -> f64 {
    let n = eigen.dim();
    let mut total = 0.0;
    for label in [PairLabel::Similar, PairLabel::Dissimilar] {
        let c = eigen.to_eigenbasis(stats.for_label(label));
        for (j, &l) in eigen.eigenvalues().iter().enumerate() {
            total += form.weight(l, label, beta) * c[j * n + j];
        }
    }
    total
}
