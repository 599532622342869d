//! Browser demo. Each exported function takes plain numbers and returns a JSON
//! string; failures come back as `{"error": "..."}`.

use aml_core::adversarial::{confusion_objective, generate_adversarial};
use aml_core::data::{pca2, sample_pairs, synth_overlap, LabeledExamples, SynthConfig};
use aml_core::eval::{pair_distances, roc_from_scores, Experiment, Protocol};
use aml_core::linalg::{SymMatrix, DEFAULT_EIG_FLOOR};
use aml_core::loss::spectral_weight;
use aml_core::metric::{mahalanobis, LabeledPairSet, MetricMatrix, PairData, PairLabel};
use aml_core::solver::SolverConfig;
use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

/// Upper bound on solver iterations accepted from the page.
pub const MAX_DEMO_ITERS: usize = 5000;

fn to_json<T: Serialize>(r: aml_core::Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e.to_string()),
    }
}

fn error_json(message: &str) -> String {
    serde_json::json!({ "error": message }).to_string()
}

#[derive(Debug, Serialize)]
pub struct PairView {
    pub x: [f64; 2],
    pub x_prime: [f64; 2],
    pub pi: [f64; 2],
    pub pi_prime: [f64; 2],
    pub distance_original: f64,
    pub distance_adversarial: f64,
    /// Confusion objective at the original pair and at the generated pair.
    pub confusion_original: f64,
    pub confusion_adversarial: f64,
}

/// Closed-form adversarial pair for one 2-D pair under `M = [[m00, m01], [m01, m11]]`.
pub fn adversarial_pair_view(m: [f64; 3], x: [f64; 2], x_prime: [f64; 2], similar: bool, beta: f64) -> aml_core::Result<PairView> {
    let metric = MetricMatrix::new(SymMatrix::from_rows(&[vec![m[0], m[1]], vec![m[1], m[2]]])?, DEFAULT_EIG_FLOOR)?;
    let label = if similar { PairLabel::Similar } else { PairLabel::Dissimilar };
    let pairs = LabeledPairSet::new(vec![x.to_vec()], vec![x_prime.to_vec()], vec![label])?;
    let pi = generate_adversarial(&metric, &pairs, beta)?;
    let unchanged = aml_core::adversarial::AdversarialPairSet::copy_of(&pairs);
    Ok(PairView {
        x,
        x_prime,
        pi: [pi.left(0)[0], pi.left(0)[1]],
        pi_prime: [pi.right(0)[0], pi.right(0)[1]],
        distance_original: mahalanobis(&metric, &x, &x_prime)?,
        distance_adversarial: mahalanobis(&metric, pi.left(0), pi.right(0))?,
        confusion_original: confusion_objective(&metric, &unchanged, &pairs, beta)?,
        confusion_adversarial: confusion_objective(&metric, &pi, &pairs, beta)?,
    })
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn adversarial_pair(m00: f64, m01: f64, m11: f64, x0: f64, x1: f64, y0: f64, y1: f64, similar: bool, beta: f64) -> String {
    to_json(adversarial_pair_view([m00, m01, m11], [x0, x1], [y0, y1], similar, beta))
}

#[derive(Debug, Serialize)]
pub struct MethodView {
    pub name: String,
    pub train_error: f64,
    pub test_error: f64,
    pub auc: f64,
    /// `[fpr, tpr]` points of the test-pair ROC.
    pub roc: Vec<[f64; 2]>,
    /// `[pc1, pc2, class]` for every test example after mapping by `M^(1/2)`.
    pub pca: Vec<[f64; 3]>,
    /// Objective per iteration, at most 200 evenly spaced samples.
    pub trajectory: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct TrainView {
    pub methods: Vec<MethodView>,
}

fn downsample(v: &[f64], n: usize) -> Vec<f64> {
    if v.len() <= n {
        return v.to_vec();
    }
    (0..n).map(|i| v[i * (v.len() - 1) / (n - 1)]).collect()
}

fn method_view(
    name: &str,
    m: &MetricMatrix,
    exp: &Experiment,
    test_pairs: &LabeledPairSet,
    trajectory: &[f64],
) -> aml_core::Result<MethodView> {
    let (train_error, test_error) = exp.evaluate(m)?;
    let similar: Vec<bool> = test_pairs.labels().iter().map(|&l| l == PairLabel::Similar).collect();
    let roc = roc_from_scores(&pair_distances(m, test_pairs)?, &similar)?;
    let mapped: LabeledExamples = exp.test.transformed(&m.sqrt())?;
    let p = pca2(&mapped)?;
    Ok(MethodView {
        name: name.to_string(),
        train_error,
        test_error,
        auc: roc.auc,
        roc: roc.points.iter().map(|q| [q.fpr, q.tpr]).collect(),
        pca: p
            .coords
            .iter()
            .zip(mapped.labels())
            .map(|(c, &l)| [c[0], c[1], l as f64])
            .collect(),
        trajectory: downsample(trajectory, 200),
    })
}

/// Trains the adversarial metric and the `α = 0` baseline on one synthetic
/// draw and compares both with the identity metric.
pub fn train_view(seed: u64, alpha: f64, beta: f64, iters: usize) -> aml_core::Result<TrainView> {
    if iters == 0 || iters > MAX_DEMO_ITERS {
        return Err(aml_core::Error::InvalidConfig(format!(
            "iterations must lie in 1..={MAX_DEMO_ITERS}, got {iters}"
        )));
    }
    let (tr, te) = synth_overlap(&SynthConfig::default(), seed)?;
    let protocol = Protocol::default();
    let exp = Experiment::prepare(&tr, &te, &protocol, seed)?;
    let test_pairs = sample_pairs(&exp.test, &protocol.pairs, seed.wrapping_add(1))?;
    let cfg = |alpha: f64| SolverConfig {
        alpha,
        beta,
        max_iters: iters,
        seed,
        ..SolverConfig::default()
    };
    let aml = exp.run(&cfg(alpha))?;
    let base = exp.run(&cfg(0.0))?;
    let identity = MetricMatrix::identity(exp.train.dim());
    Ok(TrainView {
        methods: vec![
            method_view("identity", &identity, &exp, &test_pairs, &[])?,
            method_view("baseline", &base.metric, &exp, &test_pairs, &base.report.trajectory)?,
            method_view("adversarial", &aml.metric, &exp, &test_pairs, &aml.report.trajectory)?,
        ],
    })
}

#[wasm_bindgen]
pub fn train_synthetic(seed: u32, alpha: f64, beta: f64, iters: u32) -> String {
    to_json(train_view(seed as u64, alpha, beta, iters as usize))
}

#[derive(Debug, Serialize)]
pub struct WeightView {
    pub lambda: Vec<f64>,
    pub similar: Vec<f64>,
    pub dissimilar: Vec<f64>,
}

/// `h_y(λ)` for both labels on a log-spaced grid over `[0.01, 100]`.
pub fn weight_view(beta: f64, points: usize) -> aml_core::Result<WeightView> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(aml_core::Error::InvalidConfig(format!("beta must be positive, got {beta}")));
    }
    let n = points.clamp(2, 2000);
    let lambda: Vec<f64> = (0..n).map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / (n - 1) as f64)).collect();
    Ok(WeightView {
        similar: lambda.iter().map(|&l| spectral_weight(l, PairLabel::Similar, beta)).collect(),
        dissimilar: lambda.iter().map(|&l| spectral_weight(l, PairLabel::Dissimilar, beta)).collect(),
        lambda,
    })
}

#[wasm_bindgen]
pub fn spectral_weights(beta: f64, points: u32) -> String {
    to_json(weight_view(beta, points as usize))
}
