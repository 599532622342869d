//! The bi-level objective `D(M)`, its analytic gradient, and projected
//! gradient descent on the SPD cone.

use std::cell::Cell;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, project_psd_eigen, shifted_pseudoinverse, EigenDecomposition, SymMatrix, DEFAULT_EIG_FLOOR,
    DEFAULT_GAP_RTOL,
};
use crate::loss::{
    adversarial_spectral_loss, adversarial_spectral_loss_scatter, check_beta, geometric_mean_loss,
    geometric_mean_loss_scatter, scatter_stats, ScatterStats, SpectralForm,
};
use crate::metric::{LabeledPairSet, MetricMatrix, PairData, PairLabel};

/// Per-step tolerance used when counting objective increases.
pub const DESCENT_TOL: f64 = 1e-9;
/// Eigen gaps below this fraction of `max|λ|` switch the adversarial gradient to finite differences.
pub const DEFAULT_DEGENERACY_RTOL: f64 = 1e-6;
const MAX_HALVINGS: usize = 30;

/// How the step size `ρ` relates to the summed objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepScale {
    /// `M ← P(M − (ρ/N) ∇D)`: `ρ` acts on the per-pair mean objective.
    #[default]
    PerPair,
    /// `M ← P(M − ρ ∇D)` on the summed objective.
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Weight of the adversarial loss; `0` gives the plain geometric-mean baseline.
    pub alpha: f64,
    /// Proximity weight keeping adversarial pairs near their sources.
    pub beta: f64,
    /// Step size.
    pub rho: f64,
    pub max_iters: usize,
    /// Stop once `‖∇D‖_F` is at most this; `None` means `1e-6 · N`.
    pub grad_tol: Option<f64>,
    /// Smallest eigenvalue allowed after projection.
    pub eig_floor: f64,
    /// Eigen gaps up to `gap_rtol · max|λ|` count as zero in pseudo-inverses.
    pub gap_rtol: f64,
    pub degeneracy_rtol: f64,
    pub seed: u64,
    pub step_scale: StepScale,
    /// Halve the step (up to 30 times) whenever it would raise the objective.
    pub backtracking: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.8,
            rho: 1e-3,
            max_iters: 5000,
            grad_tol: None,
            eig_floor: DEFAULT_EIG_FLOOR,
            gap_rtol: DEFAULT_GAP_RTOL,
            degeneracy_rtol: DEFAULT_DEGENERACY_RTOL,
            seed: 0,
            step_scale: StepScale::PerPair,
            backtracking: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidConfig(format!("{what} out of range: {v}")));
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad("alpha", self.alpha);
        }
        check_beta(self.beta)?;
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return bad("rho", self.rho);
        }
        if !(self.eig_floor.is_finite() && self.eig_floor > 0.0) {
            return bad("eig_floor", self.eig_floor);
        }
        if !(self.gap_rtol.is_finite() && self.gap_rtol >= 0.0) {
            return bad("gap_rtol", self.gap_rtol);
        }
        if !(self.degeneracy_rtol.is_finite() && self.degeneracy_rtol >= 0.0) {
            return bad("degeneracy_rtol", self.degeneracy_rtol);
        }
        if let Some(t) = self.grad_tol {
            if !(t.is_finite() && t > 0.0) {
                return bad("grad_tol", t);
            }
        }
        Ok(())
    }

    pub fn grad_tol_for(&self, pairs: usize) -> f64 {
        self.grad_tol.unwrap_or(1e-6 * pairs as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Objective at `M⁽¹⁾ = I` followed by one value per completed iteration.
    pub trajectory: Vec<f64>,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub converged: bool,
    pub wall_time: Duration,
    /// Iterations in which the projection raised at least one eigenvalue.
    pub projection_activations: usize,
    /// Iterations whose adversarial gradient came from finite differences.
    pub fd_fallbacks: usize,
    /// Steps that raised the objective by more than `DESCENT_TOL`.
    pub descent_violations: usize,
    pub step_halvings: usize,
    /// Number of adversarial loss or gradient evaluations performed.
    pub adversarial_evaluations: usize,
}

/// `D(M) = L_g(M, X) + α · L_g(M, F(M))`, evaluated pair by pair.
pub fn objective(m: &MetricMatrix, x: &LabeledPairSet, cfg: &SolverConfig) -> Result<f64> {
    cfg.validate()?;
    let base = geometric_mean_loss(m, x)?;
    if cfg.alpha == 0.0 {
        return Ok(base);
    }
    Ok(base + cfg.alpha * adversarial_spectral_loss(m, x, cfg.beta)?)
}

/// Gradient of one adversarial term `H_i(M) = x̂ᵀ U h(Λ) Uᵀ x̂` with respect to `M`,
/// before symmetrization:
/// `Σ_j h'(λ_j)(x̂ᵀU_j)² U_jU_jᵀ + Σ_j 2h(λ_j)(λ_jI − M)† x̂x̂ᵀ U_jU_jᵀ`.
///
/// Eigenvectors inside a cluster of (numerically) equal eigenvalues are not
/// unique, so the first sum runs over every pair `j, k` in the same cluster.
pub fn grad_h_unsymmetrized(
    e: &EigenDecomposition,
    xhat: &[f64],
    label: PairLabel,
    beta: f64,
    gap_tol: f64,
    form: SpectralForm,
) -> Result<Vec<f64>> {
    let n = e.dim();
    if xhat.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: xhat.len(),
        });
    }
    let lambda = e.eigenvalues();
    let c = e.project(xhat);
    let vecs: Vec<Vec<f64>> = (0..n).map(|j| e.eigenvector(j)).collect();
    let mut g = vec![0.0; n * n];
    for j in 0..n {
        let dh = form.derivative(lambda[j], label, beta);
        for k in 0..n {
            if (lambda[j] - lambda[k]).abs() > gap_tol {
                continue;
            }
            let w = dh * c[k] * c[j];
            for p in 0..n {
                for q in 0..n {
                    g[p * n + q] += w * vecs[k][p] * vecs[j][q];
                }
            }
        }
        let pinv_x = shifted_pseudoinverse(e, j, gap_tol)?.mul_vec(xhat);
        let w = 2.0 * form.weight(lambda[j], label, beta) * c[j];
        for p in 0..n {
            for q in 0..n {
                g[p * n + q] += w * pinv_x[p] * vecs[j][q];
            }
        }
    }
    Ok(g)
}

/// Symmetrized gradient of one adversarial term.
pub fn grad_h(e: &EigenDecomposition, xhat: &[f64], label: PairLabel, beta: f64, gap_tol: f64) -> Result<SymMatrix> {
    let g = grad_h_unsymmetrized(e, xhat, label, beta, gap_tol, SpectralForm::Substituted)?;
    Ok(SymMatrix::symmetrized(e.dim(), g))
}

/// `Σ_i ∇H_i` before symmetrization, computed once per label from the scatter
/// matrices in the eigenbasis: with `C = UᵀSU`, entry `(k, j)` is
/// `h'(λ_j) C_kj` inside an eigenvalue cluster and `2h(λ_j) C_kj / (λ_j − λ_k)` outside.
pub fn adversarial_gradient_unsymmetrized(
    e: &EigenDecomposition,
    stats: &ScatterStats,
    beta: f64,
    gap_tol: f64,
    form: SpectralForm,
) -> Vec<f64> {
    let n = e.dim();
    let lambda = e.eigenvalues();
    let mut tilde = vec![0.0; n * n];
    for label in [PairLabel::Similar, PairLabel::Dissimilar] {
        let c = e.to_eigenbasis(stats.for_label(label));
        for j in 0..n {
            let h = form.weight(lambda[j], label, beta);
            let dh = form.derivative(lambda[j], label, beta);
            for k in 0..n {
                let gap = lambda[j] - lambda[k];
                let w = if gap.abs() > gap_tol { 2.0 * h / gap } else { dh };
                tilde[k * n + j] += w * c[k * n + j];
            }
        }
    }
    e.from_eigenbasis(&tilde)
}

/// `A − M⁻¹ B M⁻¹`, the gradient of the geometric-mean loss.
fn gmml_gradient(m: &MetricMatrix, stats: &ScatterStats) -> SymMatrix {
    stats.similar.sub(&m.inverse().sandwich(&stats.dissimilar))
}

fn check_dim(m: &MetricMatrix, x: &LabeledPairSet) -> Result<()> {
    if x.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: x.dim(),
        });
    }
    Ok(())
}

/// `∇D = A − M⁻¹BM⁻¹ + α Σ_i ∇H_i` before the final symmetrization.
pub fn gradient_unsymmetrized(m: &MetricMatrix, x: &LabeledPairSet, cfg: &SolverConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_dim(m, x)?;
    let stats = scatter_stats(x);
    let mut g = gmml_gradient(m, &stats).as_slice().to_vec();
    if cfg.alpha != 0.0 {
        let e = m.eigen();
        let adv = adversarial_gradient_unsymmetrized(
            e,
            &stats,
            cfg.beta,
            cfg.gap_rtol * e.max_abs(),
            SpectralForm::Substituted,
        );
        g.iter_mut().zip(&adv).for_each(|(a, b)| *a += cfg.alpha * b);
    }
    Ok(g)
}

pub fn gradient(m: &MetricMatrix, x: &LabeledPairSet, cfg: &SolverConfig) -> Result<SymMatrix> {
    Ok(SymMatrix::symmetrized(m.dim(), gradient_unsymmetrized(m, x, cfg)?))
}

/// Central differences of `f` along the symmetric directions `(e_ie_jᵀ + e_je_iᵀ)/2`.
pub fn finite_diff_gradient<F>(f: F, m: &SymMatrix, step: f64) -> Result<SymMatrix>
where
    F: Fn(&SymMatrix) -> Result<f64>,
{
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidInput(format!("finite-difference step must be positive, got {step}")));
    }
    let n = m.dim();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let mut dir = SymMatrix::zeros(n);
            dir.add_outer_pair(i, j);
            let mut plus = m.clone();
            plus.add_scaled(&dir, step);
            let mut minus = m.clone();
            minus.add_scaled(&dir, -step);
            let (fp, fm) = (f(&plus)?, f(&minus)?);
            if !fp.is_finite() || !fm.is_finite() {
                return Err(Error::NonFinite(format!("objective near entry ({i}, {j})")));
            }
            let v = (fp - fm) / (2.0 * step);
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    Ok(SymMatrix::symmetrized(n, out))
}

/// Gradient used for one descent step, with a note on how it was obtained.
#[derive(Debug, Clone)]
pub struct StepGradient {
    pub gradient: SymMatrix,
    pub finite_difference: bool,
}

/// The training objective with the pair set reduced to its scatter matrices.
#[derive(Debug)]
pub struct BilevelObjective {
    stats: ScatterStats,
    pairs: usize,
    alpha: f64,
    beta: f64,
    gap_rtol: f64,
    degeneracy_rtol: f64,
    adversarial_calls: Cell<usize>,
}

impl BilevelObjective {
    pub fn new(x: &LabeledPairSet, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            stats: scatter_stats(x),
            pairs: x.len(),
            alpha: cfg.alpha,
            beta: cfg.beta,
            gap_rtol: cfg.gap_rtol,
            degeneracy_rtol: cfg.degeneracy_rtol,
            adversarial_calls: Cell::new(0),
        })
    }

    pub fn stats(&self) -> &ScatterStats {
        &self.stats
    }

    pub fn pairs(&self) -> usize {
        self.pairs
    }

    pub fn adversarial_calls(&self) -> usize {
        self.adversarial_calls.get()
    }

    fn spectral(&self, e: &EigenDecomposition) -> f64 {
        self.adversarial_calls.set(self.adversarial_calls.get() + 1);
        adversarial_spectral_loss_scatter(e, &self.stats, self.beta, SpectralForm::Substituted)
    }

    pub fn value(&self, m: &MetricMatrix) -> Result<f64> {
        let base = geometric_mean_loss_scatter(m, &self.stats)?;
        if self.alpha == 0.0 {
            return Ok(base);
        }
        Ok(base + self.alpha * self.spectral(m.eigen()))
    }

    pub fn gradient(&self, m: &MetricMatrix) -> Result<StepGradient> {
        let mut g = gmml_gradient(m, &self.stats);
        if self.alpha == 0.0 {
            return Ok(StepGradient {
                gradient: g,
                finite_difference: false,
            });
        }
        let e = m.eigen();
        let scale = e.max_abs();
        let degenerate = e.min_gap() < self.degeneracy_rtol * scale;
        let adv = if degenerate {
            let lmin = e.eigenvalues()[0];
            let step = (1e-5 * scale).min(0.25 * lmin);
            finite_diff_gradient(|s| Ok(self.spectral(&linalg::sym_eigen(s)?)), m.matrix(), step)?
        } else {
            self.adversarial_calls.set(self.adversarial_calls.get() + 1);
            let raw = adversarial_gradient_unsymmetrized(
                e,
                &self.stats,
                self.beta,
                self.gap_rtol * scale,
                SpectralForm::Substituted,
            );
            SymMatrix::symmetrized(e.dim(), raw)
        };
        g.add_scaled(&adv, self.alpha);
        Ok(StepGradient {
            gradient: g,
            finite_difference: degenerate,
        })
    }
}

/// Projected gradient descent from `M = I`:
/// `M ← P_S(M − ρ∇D(M))`, with `P_S` clamping eigenvalues at the floor.
pub fn train(x: &LabeledPairSet, cfg: &SolverConfig) -> Result<(MetricMatrix, TrainReport)> {
    cfg.validate()?;
    x.require_both_labels()?;
    let start = Instant::now();
    let obj = BilevelObjective::new(x, cfg)?;
    let grad_tol = cfg.grad_tol_for(x.len());
    let scale = match cfg.step_scale {
        StepScale::PerPair => 1.0 / x.len() as f64,
        StepScale::Sum => 1.0,
    };

    let mut m = MetricMatrix::new(SymMatrix::identity(x.dim()), cfg.eig_floor)?;
    let mut f = obj.value(&m)?;
    if !f.is_finite() {
        return Err(Error::Diverged { iteration: 0 });
    }
    let mut report = TrainReport {
        trajectory: vec![f],
        iterations: 0,
        final_grad_norm: f64::NAN,
        converged: false,
        wall_time: Duration::ZERO,
        projection_activations: 0,
        fd_fallbacks: 0,
        descent_violations: 0,
        step_halvings: 0,
        adversarial_evaluations: 0,
    };

    let mut pending = None;
    for t in 1..=cfg.max_iters {
        let g = obj.gradient(&m)?;
        report.fd_fallbacks += g.finite_difference as usize;
        let gnorm = g.gradient.frobenius_norm();
        if !gnorm.is_finite() {
            return Err(Error::Diverged { iteration: t });
        }
        if gnorm <= grad_tol {
            pending = Some(gnorm);
            report.converged = true;
            break;
        }

        let mut step = cfg.rho * scale;
        let mut halvings = 0;
        let (next, raised, f_next) = loop {
            let mut s = m.matrix().clone();
            s.add_scaled(&g.gradient, -step);
            if !s.is_finite() {
                return Err(Error::Diverged { iteration: t });
            }
            let proj = project_psd_eigen(&s, cfg.eig_floor).map_err(|_| Error::Diverged { iteration: t })?;
            let cand = MetricMatrix::from_parts(proj.matrix, proj.eigen, cfg.eig_floor)?;
            let fc = obj.value(&cand)?;
            if !fc.is_finite() {
                return Err(Error::Diverged { iteration: t });
            }
            if cfg.backtracking && fc > f && halvings < MAX_HALVINGS {
                step *= 0.5;
                halvings += 1;
                continue;
            }
            break (cand, proj.raised, fc);
        };
        report.step_halvings += halvings;
        report.projection_activations += (raised > 0) as usize;
        report.descent_violations += (f_next - f > DESCENT_TOL) as usize;
        report.trajectory.push(f_next);
        report.iterations = t;
        m = next;
        f = f_next;
    }

    report.final_grad_norm = match pending {
        Some(v) => v,
        None => obj.gradient(&m)?.gradient.frobenius_norm(),
    };
    report.adversarial_evaluations = obj.adversarial_calls();
    report.wall_time = start.elapsed();
    Ok((m, report))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::adversarial::generate_adversarial;
    use crate::linalg::relative_asymmetry;
    use crate::linalg::test_util::*;

    fn cfg(alpha: f64, beta: f64) -> SolverConfig {
        SolverConfig {
            alpha,
            beta,
            ..SolverConfig::default()
        }
    }

    fn pairs(diffs: &[(Vec<f64>, PairLabel)]) -> LabeledPairSet {
        let d = diffs[0].0.len();
        LabeledPairSet::new(
            diffs.iter().map(|(v, _)| v.clone()).collect(),
            vec![vec![0.0; d]; diffs.len()],
            diffs.iter().map(|(_, l)| *l).collect(),
        )
        .unwrap()
    }

    fn random_pairs(r: &mut ChaCha8Rng, d: usize, n: usize) -> LabeledPairSet {
        let labels = (0..n)
            .map(|i| match i % 2 {
                0 => PairLabel::Similar,
                _ => PairLabel::Dissimilar,
            })
            .collect();
        let left = (0..n).map(|_| normal_vec(r, d)).collect();
        let right = (0..n).map(|_| normal_vec(r, d)).collect();
        LabeledPairSet::new(left, right, labels).unwrap()
    }

    /// Random SPD matrix whose eigenvalues are at least `gap` apart.
    fn spread_spd(r: &mut ChaCha8Rng, d: usize, gap: f64) -> MetricMatrix {
        loop {
            let m = MetricMatrix::new(random_spd(r, d, 0.3), DEFAULT_EIG_FLOOR).unwrap();
            if m.eigen().min_gap() > gap {
                return m;
            }
        }
    }

    fn rel_frob(a: &SymMatrix, b: &SymMatrix) -> f64 {
        a.sub(b).frobenius_norm() / b.frobenius_norm()
    }

    #[test]
    fn objective_examples() {
        let p = pairs(&[
            (vec![1.0, 0.0], PairLabel::Similar),
            (vec![0.0, 2.0], PairLabel::Dissimilar),
        ]);
        let id = MetricMatrix::identity(2);
        assert_eq!(objective(&id, &p, &cfg(0.0, 1.0)).unwrap(), 5.0);
        let d = objective(&id, &p, &cfg(1.0, 1.0)).unwrap();
        assert!((d - (5.0 + 5.0 / 9.0)).abs() < 1e-14);
    }

    #[test]
    fn objective_matches_explicit_adversarial_pairs() {
        for seed in 0..20 {
            let mut r = rng(seed);
            let d = 1 + seed as usize % 5;
            let m = MetricMatrix::new(random_spd(&mut r, d, 0.2), DEFAULT_EIG_FLOOR).unwrap();
            let x = random_pairs(&mut r, d, 6);
            let c = cfg(0.7, 1.3);
            let pi = generate_adversarial(&m, &x, c.beta).unwrap();
            let expect = geometric_mean_loss(&m, &x).unwrap() + c.alpha * geometric_mean_loss(&m, &pi).unwrap();
            let got = objective(&m, &x, &c).unwrap();
            assert!((got - expect).abs() <= 1e-10 * expect);
            let fast = BilevelObjective::new(&x, &c).unwrap().value(&m).unwrap();
            assert!((fast - expect).abs() <= 1e-10 * expect);
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(-1.0, 1.0).validate().is_err());
        assert!(cfg(1.0, 0.0).validate().is_err());
        assert!(SolverConfig { rho: 0.0, ..cfg(1.0, 1.0) }.validate().is_err());
        assert!(SolverConfig { eig_floor: 0.0, ..cfg(1.0, 1.0) }.validate().is_err());
        assert!(SolverConfig { grad_tol: Some(-1.0), ..cfg(1.0, 1.0) }.validate().is_err());
        assert!(cfg(0.0, 1.0).validate().is_ok());
    }

    #[test]
    fn finite_diff_examples() {
        let mut r = rng(3);
        let m = random_symmetric(&mut r, 4);
        let g = finite_diff_gradient(|s| Ok(s.trace()), &m, 1e-5).unwrap();
        assert!(frob_diff(g.as_slice(), SymMatrix::identity(4).as_slice()) < 1e-9);
        let g = finite_diff_gradient(|s| Ok(0.5 * s.dot(s)), &m, 1e-5).unwrap();
        assert!(frob_diff(g.as_slice(), m.as_slice()) < 1e-8);
        assert!(matches!(
            finite_diff_gradient(|_| Ok(f64::NAN), &m, 1e-5),
            Err(Error::NonFinite(_))
        ));
    }

    fn h_of(xhat: &[f64], label: PairLabel, beta: f64) -> impl Fn(&SymMatrix) -> Result<f64> + '_ {
        move |s: &SymMatrix| {
            let m = MetricMatrix::new(s.clone(), 1e-12)?;
            let p = LabeledPairSet::new(vec![xhat.to_vec()], vec![vec![0.0; xhat.len()]], vec![label])?;
            adversarial_spectral_loss(&m, &p, beta)
        }
    }

    #[test]
    fn grad_h_examples() {
        let e = linalg::sym_eigen(&SymMatrix::identity(3)).unwrap();
        let zero = grad_h(&e, &[0.0; 3], PairLabel::Similar, 1.0, 1e-9).unwrap();
        assert_eq!(zero, SymMatrix::zeros(3));

        for label in [PairLabel::Similar, PairLabel::Dissimilar] {
            let xhat = [0.6, -1.2, 0.4];
            let an = grad_h(&e, &xhat, label, 0.8, 1e-9).unwrap();
            let fd = finite_diff_gradient(h_of(&xhat, label, 0.8), &SymMatrix::identity(3), 1e-5).unwrap();
            assert!(rel_frob(&an, &fd) < 1e-4, "{label:?}");
        }

        let mut r = rng(8);
        for label in [PairLabel::Similar, PairLabel::Dissimilar] {
            let m = spread_spd(&mut r, 4, 1e-3);
            let xhat = normal_vec(&mut r, 4);
            let an = grad_h(m.eigen(), &xhat, label, 1.5, m.eigen().default_gap_tol()).unwrap();
            let fd = finite_diff_gradient(h_of(&xhat, label, 1.5), m.matrix(), 1e-5).unwrap();
            assert!(rel_frob(&an, &fd) < 1e-4, "{label:?}");
        }
    }

    #[test]
    fn gradient_examples() {
        let p = pairs(&[
            (vec![1.0, 2.0], PairLabel::Similar),
            (vec![0.5, -1.0], PairLabel::Dissimilar),
        ]);
        let s = scatter_stats(&p);
        let g = gradient(&MetricMatrix::identity(2), &p, &cfg(0.0, 1.0)).unwrap();
        assert_eq!(g, s.similar.sub(&s.dissimilar));

        let only = pairs(&[(vec![1.0, 2.0], PairLabel::Similar)]);
        let mut r = rng(2);
        let m = MetricMatrix::new(random_spd(&mut r, 2, 0.5), DEFAULT_EIG_FLOOR).unwrap();
        let g = gradient(&m, &only, &cfg(0.0, 1.0)).unwrap();
        assert_eq!(g, scatter_stats(&only).similar);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng(77);
        for trial in 0..10 {
            let d = 2 + trial % 5;
            let m = spread_spd(&mut r, d, 1e-3);
            let x = random_pairs(&mut r, d, 4 + trial);
            let c = cfg(r.random_range(0.1..3.0), [0.1, 0.8, 1.0, 2.0, 10.0][trial % 5]);
            let an = gradient(&m, &x, &c).unwrap();
            let fd = finite_diff_gradient(
                |s| objective(&MetricMatrix::new(s.clone(), 1e-12)?, &x, &c),
                m.matrix(),
                1e-5,
            )
            .unwrap();
            assert!(rel_frob(&an, &fd) <= 1e-4, "trial {trial}: {}", rel_frob(&an, &fd));
        }
    }

    #[test]
    fn scatter_gradient_equals_per_pair_sum() {
        let mut r = rng(5);
        for d in 1..6 {
            let m = spread_spd(&mut r, d, 1e-3);
            let x = random_pairs(&mut r, d, 7);
            let tol = m.eigen().default_gap_tol();
            let mut sum = SymMatrix::zeros(d);
            for i in 0..x.len() {
                sum.add_scaled(&grad_h(m.eigen(), &x.diff(i), x.label(i), 0.9, tol).unwrap(), 1.0);
            }
            let fast = adversarial_gradient_unsymmetrized(m.eigen(), &scatter_stats(&x), 0.9, tol, SpectralForm::Substituted);
            let fast = SymMatrix::symmetrized(d, fast);
            assert!(frob_diff(fast.as_slice(), sum.as_slice()) <= 1e-10 * (1.0 + sum.frobenius_norm()));
        }
    }

    #[test]
    fn literal_eigenvector_gradient_is_not_symmetric() {
        // The symmetric part is the gradient; the raw expression carries an
        // antisymmetric component of comparable size.
        let mut r = rng(12);
        let m = spread_spd(&mut r, 4, 1e-3);
        let xhat = normal_vec(&mut r, 4);
        let raw = grad_h_unsymmetrized(m.eigen(), &xhat, PairLabel::Similar, 1.0, 1e-12, SpectralForm::Substituted)
            .unwrap();
        assert!(relative_asymmetry(&raw, 4) > 1e-3);
    }

    #[test]
    fn zero_iterations_returns_identity() {
        let p = pairs(&[
            (vec![1.0, 0.0], PairLabel::Similar),
            (vec![0.0, 2.0], PairLabel::Dissimilar),
        ]);
        let (m, rep) = train(&p, &SolverConfig { max_iters: 0, ..cfg(1.0, 1.0) }).unwrap();
        assert_eq!(m.matrix(), &SymMatrix::identity(2));
        assert_eq!(rep.trajectory.len(), 1);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn train_requires_both_labels() {
        let p = pairs(&[(vec![1.0, 0.0], PairLabel::Similar)]);
        assert!(matches!(train(&p, &cfg(1.0, 1.0)), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn huge_step_reports_divergence_or_stays_feasible() {
        let mut r = rng(1);
        let x = random_pairs(&mut r, 3, 20);
        let c = SolverConfig {
            rho: 1e6,
            step_scale: StepScale::Sum,
            max_iters: 50,
            ..cfg(1.0, 1.0)
        };
        match train(&x, &c) {
            Ok((m, _)) => assert!(m.eigen().eigenvalues()[0] >= c.eig_floor),
            Err(e) => assert!(matches!(e, Error::Diverged { .. })),
        }
    }

    #[test]
    fn baseline_never_touches_adversarial_terms() {
        let mut r = rng(6);
        let x = random_pairs(&mut r, 3, 30);
        let (m, rep) = train(&x, &SolverConfig { max_iters: 3000, ..cfg(0.0, 1.0) }).unwrap();
        assert_eq!(rep.adversarial_evaluations, 0);
        assert_eq!(rep.fd_fallbacks, 0);
        assert_eq!(rep.trajectory.len(), rep.iterations + 1);
        if rep.converged {
            let s = scatter_stats(&x);
            let g = s.similar.sub(&m.inverse().sandwich(&s.dissimilar));
            assert!(g.frobenius_norm() <= cfg(0.0, 1.0).grad_tol_for(x.len()));
        }
    }

    #[test]
    fn training_is_deterministic_feasible_and_counts_fallbacks() {
        let mut r = rng(9);
        let x = random_pairs(&mut r, 4, 40);
        let c = SolverConfig { max_iters: 200, ..cfg(1.0, 0.8) };
        let (m1, r1) = train(&x, &c).unwrap();
        let (m2, r2) = train(&x, &c).unwrap();
        assert_eq!(m1.matrix(), m2.matrix());
        assert_eq!(r1.trajectory, r2.trajectory);
        // M = I is fully degenerate, so the first step uses finite differences
        assert!(r1.fd_fallbacks >= 1);
        assert!(r1.adversarial_evaluations > 0);
        assert!(m1.eigen().eigenvalues()[0] >= c.eig_floor);
        assert!(r1.trajectory.last().unwrap() < &r1.trajectory[0]);
    }

    #[test]
    fn fd_fallback_agrees_with_analytic_near_identity() {
        let mut r = rng(14);
        let x = random_pairs(&mut r, 3, 12);
        let c = cfg(1.0, 0.8);
        let obj = BilevelObjective::new(&x, &c).unwrap();
        let id = MetricMatrix::identity(3);
        let via_fd = obj.gradient(&id).unwrap();
        assert!(via_fd.finite_difference);
        let analytic = gradient(&id, &x, &c).unwrap();
        assert!(rel_frob(&via_fd.gradient, &analytic) < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn gradient_is_symmetric_and_finite(seed in 0u64..10_000, d in 1usize..6) {
            let mut r = rng(seed);
            let m = MetricMatrix::new(random_spd(&mut r, d, 0.1), DEFAULT_EIG_FLOOR).unwrap();
            let x = random_pairs(&mut r, d, 6);
            let g = gradient(&m, &x, &cfg(1.0, 0.8)).unwrap();
            prop_assert!(g.is_finite());
            prop_assert_eq!(relative_asymmetry(g.as_slice(), d), 0.0);
        }

        #[test]
        fn every_iterate_is_feasible(seed in 0u64..1000) {
            let mut r = rng(seed);
            let x = random_pairs(&mut r, 3, 10);
            let c = SolverConfig { max_iters: 20, rho: 0.5, eig_floor: 1e-3, ..cfg(1.0, 0.8) };
            let (m, _) = train(&x, &c).unwrap();
            prop_assert!(m.eigen().eigenvalues()[0] >= c.eig_floor);
        }
    }
}
