//! Self-checks on seeded random instances: analytic gradient against finite
//! differences, the adversarial substitution identity, and the scalar weight
//! derivative.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::adversarial::generate_adversarial;
use crate::error::Result;
use crate::linalg::{SymMatrix, DEFAULT_EIG_FLOOR};
use crate::loss::{adversarial_spectral_loss_with, geometric_mean_loss, scatter_stats, SpectralForm};
use crate::metric::{LabeledPairSet, MetricMatrix, PairLabel};
use crate::solver::{adversarial_gradient_unsymmetrized, finite_diff_gradient};

pub const BETAS: [f64; 5] = [0.1, 0.8, 1.0, 2.0, 10.0];

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub seed: u64,
    /// Random instances for the gradient check.
    pub gradient_instances: usize,
    /// Random instances for the substitution identity.
    pub substitution_instances: usize,
    pub max_dim: usize,
    pub max_pairs: usize,
    pub form: SpectralForm,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            gradient_instances: 50,
            substitution_instances: 100,
            max_dim: 6,
            max_pairs: 20,
            form: SpectralForm::Substituted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub instances: usize,
    /// Largest relative error seen.
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn new(name: &str, errors: &[f64], tolerance: f64) -> Self {
        let max_error = errors.iter().fold(0.0f64, |m, &e| if e.is_nan() { f64::NAN } else { m.max(e) });
        Self {
            name: name.to_string(),
            instances: errors.len(),
            max_error,
            tolerance,
            passed: max_error <= tolerance,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// `G Gᵀ / d + 0.2 I`, redrawn until every eigen gap exceeds `min_gap`.
pub fn random_metric(rng: &mut ChaCha8Rng, d: usize, min_gap: f64) -> Result<MetricMatrix> {
    loop {
        let g = normal(rng, d * d);
        let s = SymMatrix::from_fn(d, |i, j| {
            let dot: f64 = (0..d).map(|k| g[i * d + k] * g[j * d + k]).sum();
            dot / d as f64 + if i == j { 0.2 } else { 0.0 }
        });
        let m = MetricMatrix::new(s, DEFAULT_EIG_FLOOR)?;
        if m.eigen().min_gap() > min_gap {
            return Ok(m);
        }
    }
}

/// `n` Gaussian pairs alternating similar/dissimilar labels, starting similar.
pub fn random_pairs(rng: &mut ChaCha8Rng, d: usize, n: usize) -> Result<LabeledPairSet> {
    let labels = (0..n)
        .map(|i| if i % 2 == 0 { PairLabel::Similar } else { PairLabel::Dissimilar })
        .collect();
    let left = (0..n).map(|_| normal(rng, d)).collect();
    let right = (0..n).map(|_| normal(rng, d)).collect();
    LabeledPairSet::new(left, right, labels)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn objective_with(form: SpectralForm, m: &MetricMatrix, x: &LabeledPairSet, alpha: f64, beta: f64) -> Result<f64> {
    Ok(geometric_mean_loss(m, x)? + alpha * adversarial_spectral_loss_with(form, m, x, beta)?)
}

fn analytic_gradient(form: SpectralForm, m: &MetricMatrix, x: &LabeledPairSet, alpha: f64, beta: f64) -> SymMatrix {
    let stats = scatter_stats(x);
    let mut g = stats.similar.sub(&m.inverse().sandwich(&stats.dissimilar));
    let e = m.eigen();
    let adv = adversarial_gradient_unsymmetrized(e, &stats, beta, e.default_gap_tol(), form);
    let adv = SymMatrix::from_row_major(e.dim(), adv).expect("finite gradient");
    g.add_scaled(&adv, alpha);
    g
}

/// Relative Frobenius error of the analytic gradient against central differences.
pub fn gradient_errors(cfg: &GradcheckConfig) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.gradient_instances);
    for i in 0..cfg.gradient_instances {
        let d = 1 + i % cfg.max_dim.max(1);
        let n = 2 + rng.random_range(0..cfg.max_pairs.max(2) - 1);
        let m = random_metric(&mut rng, d, 1e-3)?;
        let x = random_pairs(&mut rng, d, n)?;
        let alpha = rng.random_range(0.1..2.0);
        let beta = BETAS[i % BETAS.len()];
        let an = analytic_gradient(cfg.form, &m, &x, alpha, beta);
        let fd = finite_diff_gradient(
            |s| objective_with(cfg.form, &MetricMatrix::new(s.clone(), 1e-12)?, &x, alpha, beta),
            m.matrix(),
            1e-5,
        )?;
        out.push(an.sub(&fd).frobenius_norm() / fd.frobenius_norm());
    }
    Ok(out)
}

/// Relative gap between the spectral loss and the loss on explicitly generated pairs.
pub fn substitution_errors(cfg: &GradcheckConfig) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut out = Vec::with_capacity(cfg.substitution_instances);
    for i in 0..cfg.substitution_instances {
        let d = 1 + i % cfg.max_dim.max(1);
        let n = 1 + rng.random_range(0..cfg.max_pairs.max(1));
        let m = random_metric(&mut rng, d, 0.0)?;
        let x = random_pairs(&mut rng, d, n)?;
        let beta = BETAS[i % BETAS.len()];
        let spectral = adversarial_spectral_loss_with(cfg.form, &m, &x, beta)?;
        let direct = geometric_mean_loss(&m, &generate_adversarial(&m, &x, beta)?)?;
        out.push(rel(spectral, direct));
    }
    Ok(out)
}

/// The pinned case `M = I, β = 2`, one similar pair with `x̂ = (1, 0)`: expected 0.25.
pub fn pinned_error(form: SpectralForm) -> Result<f64> {
    let x = LabeledPairSet::new(vec![vec![1.0, 0.0]], vec![vec![0.0, 0.0]], vec![PairLabel::Similar])?;
    Ok(rel(adversarial_spectral_loss_with(form, &MetricMatrix::identity(2), &x, 2.0)?, 0.25))
}

/// Relative error of `h'` against scalar central differences over a fixed grid.
pub fn derivative_errors(form: SpectralForm) -> Vec<f64> {
    let mut out = Vec::new();
    for label in [PairLabel::Similar, PairLabel::Dissimilar] {
        for beta in BETAS {
            for lambda in [0.05, 0.3, 1.0, 1.7, 6.0] {
                let h = 1e-6 * lambda;
                let fd = (form.weight(lambda + h, label, beta) - form.weight(lambda - h, label, beta)) / (2.0 * h);
                out.push(rel(form.derivative(lambda, label, beta), fd));
            }
        }
    }
    out
}

pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        CheckOutcome::new("gradient_vs_finite_differences", &gradient_errors(cfg)?, 1e-4),
        CheckOutcome::new("substitution_identity", &substitution_errors(cfg)?, 1e-10),
        CheckOutcome::new("pinned_similar_beta2", &[pinned_error(cfg.form)?], 1e-12),
        CheckOutcome::new("weight_derivative", &derivative_errors(cfg.form), 1e-7),
    ])
}
