//! k-NN classification, ROC/AUC verification and parameter sweeps.

use serde::{Deserialize, Serialize};

use crate::data::{sample_pairs, LabeledExamples, PairSampling, Standardizer};
use crate::error::{Error, Result};
use crate::metric::{quad_diff, LabeledPairSet, MetricMatrix, PairData, PairLabel};
use crate::solver::{train, SolverConfig, TrainReport};

fn check_k(k: usize, train: &LabeledExamples) -> Result<()> {
    if k == 0 || k > train.len() {
        return Err(Error::InvalidConfig(format!(
            "k must lie in 1..={}, got {k}",
            train.len()
        )));
    }
    Ok(())
}

fn check_compatible(m: &MetricMatrix, train: &LabeledExamples, test: &LabeledExamples) -> Result<()> {
    for d in [train.dim(), test.dim()] {
        if d != m.dim() {
            return Err(Error::DimensionMismatch {
                expected: m.dim(),
                found: d,
            });
        }
    }
    if train.class_names() != test.class_names() {
        return Err(Error::Misaligned("train and test use different class tables".into()));
    }
    Ok(())
}

/// Majority vote among the `k` nearest training points under `Dist_M`.
///
/// Neighbors at equal distance are taken in training order. A tied vote goes
/// to the class with the smaller summed distance, then the smaller class index.
pub fn knn_predict(m: &MetricMatrix, train: &LabeledExamples, test: &LabeledExamples, k: usize) -> Result<Vec<usize>> {
    check_k(k, train)?;
    check_compatible(m, train, test)?;
    let classes = train.class_names().len();
    let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let mut out = Vec::with_capacity(test.len());
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(train.len());
    for x in test.features() {
        dists.clear();
        dists.extend(
            train
                .features()
                .iter()
                .enumerate()
                .map(|(i, t)| (quad_diff(m.matrix(), x, t), i)),
        );
        if k < dists.len() {
            dists.select_nth_unstable_by(k - 1, order);
        }
        let mut votes = vec![0usize; classes];
        let mut summed = vec![0.0; classes];
        for &(d, i) in &dists[..k] {
            let c = train.labels()[i];
            votes[c] += 1;
            summed[c] += d;
        }
        let best = (0..classes)
            .filter(|&c| votes[c] > 0)
            .min_by(|&a, &b| {
                votes[b]
                    .cmp(&votes[a])
                    .then(summed[a].total_cmp(&summed[b]))
                    .then(a.cmp(&b))
            })
            .expect("k ≥ 1 neighbors vote");
        out.push(best);
    }
    Ok(out)
}

/// Fraction of test points the k-NN vote gets wrong.
pub fn knn_classify(m: &MetricMatrix, train: &LabeledExamples, test: &LabeledExamples, k: usize) -> Result<f64> {
    let pred = knn_predict(m, train, test, k)?;
    let wrong = pred.iter().zip(test.labels()).filter(|(p, y)| p != y).count();
    Ok(wrong as f64 / test.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    /// Ascending thresholds, from `−∞` to `+∞`.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC of the rule "similar when score ≤ threshold", swept over every distinct
/// score plus `±∞`, with the area by the trapezoid rule.
pub fn roc_from_scores(scores: &[f64], similar: &[bool]) -> Result<Roc> {
    if scores.len() != similar.len() {
        return Err(Error::Misaligned(format!(
            "{} scores for {} labels",
            scores.len(),
            similar.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("verification scores".into()));
    }
    let pos = similar.iter().filter(|&&s| s).count();
    let neg = similar.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InsufficientData(
            "ROC needs both similar and dissimilar pairs".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut points = vec![RocPoint {
        threshold: f64::NEG_INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if similar[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    points.push(RocPoint {
        threshold: f64::INFINITY,
        fpr: 1.0,
        tpr: 1.0,
    });
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    Ok(Roc { points, auc })
}

pub fn pair_distances<P: PairData>(m: &MetricMatrix, pairs: &P) -> Result<Vec<f64>> {
    if pairs.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: pairs.dim(),
        });
    }
    Ok((0..pairs.len())
        .map(|i| quad_diff(m.matrix(), pairs.left(i), pairs.right(i)))
        .collect())
}

/// ROC and AUC of thresholded `Dist_M` for pair verification.
pub fn roc_auc(m: &MetricMatrix, pairs: &LabeledPairSet) -> Result<Roc> {
    let similar: Vec<bool> = pairs.labels().iter().map(|&l| l == PairLabel::Similar).collect();
    roc_from_scores(&pair_distances(m, pairs)?, &similar)
}

/// Finite threshold maximizing `TPR − FPR`; the smallest such threshold on ties.
pub fn youden_threshold(roc: &Roc) -> (f64, f64) {
    roc.points
        .iter()
        .filter(|p| p.threshold.is_finite())
        .map(|p| (p.threshold, p.tpr - p.fpr))
        .fold((f64::NAN, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
}

/// Accuracy of "similar when `Dist_M` ≤ threshold".
pub fn verification_accuracy(m: &MetricMatrix, pairs: &LabeledPairSet, threshold: f64) -> Result<f64> {
    let d = pair_distances(m, pairs)?;
    let right = d
        .iter()
        .zip(pairs.labels())
        .filter(|(&dist, &l)| (dist <= threshold) == (l == PairLabel::Similar))
        .count();
    Ok(right as f64 / pairs.len() as f64)
}

/// Mean and sample standard deviation (`n − 1` denominator, `0` for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Evaluation settings shared by trials and sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Protocol {
    pub k: usize,
    pub train_fraction: f64,
    pub trials: usize,
    pub standardize: bool,
    pub pairs: PairSampling,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            k: 5,
            train_fraction: 0.8,
            trials: 20,
            standardize: true,
            pairs: PairSampling::default(),
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be positive".into()));
        }
        if self.pairs.count == Some(0) {
            return Err(Error::InvalidConfig("pair count must be positive".into()));
        }
        Ok(())
    }
}

/// Seed of trial `t`, derived from the base seed.
pub fn trial_seed(base: u64, t: usize) -> u64 {
    base.wrapping_add(t as u64)
}

/// One train/test problem, standardized and paired, ready for the solver.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub train: LabeledExamples,
    pub test: LabeledExamples,
    pub pairs: LabeledPairSet,
    pub standardizer: Standardizer,
    pub k: usize,
}

/// Outcome of training on an experiment and classifying both splits.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub metric: MetricMatrix,
    pub report: TrainReport,
    pub train_error: f64,
    pub test_error: f64,
}

impl Experiment {
    /// Standardizes with training statistics (when asked) and samples training pairs.
    pub fn prepare(train: &LabeledExamples, test: &LabeledExamples, protocol: &Protocol, seed: u64) -> Result<Self> {
        protocol.validate()?;
        check_k(protocol.k, train)?;
        let standardizer = if protocol.standardize {
            Standardizer::fit(train)
        } else {
            Standardizer::identity(train.dim())
        };
        let train = standardizer.apply(train)?;
        let test = standardizer.apply(test)?;
        let pairs = sample_pairs(&train, &protocol.pairs, seed)?;
        Ok(Self {
            train,
            test,
            pairs,
            standardizer,
            k: protocol.k,
        })
    }

    pub fn evaluate(&self, m: &MetricMatrix) -> Result<(f64, f64)> {
        Ok((
            knn_classify(m, &self.train, &self.train, self.k)?,
            knn_classify(m, &self.train, &self.test, self.k)?,
        ))
    }

    pub fn run(&self, cfg: &SolverConfig) -> Result<RunResult> {
        let (metric, report) = train(&self.pairs, cfg)?;
        let (train_error, test_error) = self.evaluate(&metric)?;
        Ok(RunResult {
            metric,
            report,
            train_error,
            test_error,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Alpha,
    Beta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub train_error: f64,
    pub test_error: f64,
    pub iterations: usize,
    pub final_objective: f64,
}

/// Trains once per grid value with everything else (including the seed) fixed.
pub fn sweep(exp: &Experiment, axis: SweepAxis, grid: &[f64], base: &SolverConfig) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("sweep grid is empty".into()));
    }
    let mut out = Vec::with_capacity(grid.len());
    for &value in grid {
        let mut cfg = base.clone();
        match axis {
            SweepAxis::Alpha => cfg.alpha = value,
            SweepAxis::Beta => cfg.beta = value,
        }
        cfg.validate()?;
        let r = exp.run(&cfg)?;
        out.push(SweepPoint {
            value,
            train_error: r.train_error,
            test_error: r.test_error,
            iterations: r.report.iterations,
            final_objective: *r.report.trajectory.last().expect("trajectory is never empty"),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Verification,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub train_error: f64,
    pub test_error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    pub final_grad_norm: f64,
    pub projection_activations: usize,
    pub fd_fallbacks: usize,
    pub descent_violations: usize,
}

impl TrialResult {
    pub fn from_run(seed: u64, run: &RunResult) -> Self {
        let r = &run.report;
        Self {
            seed,
            train_error: run.train_error,
            test_error: run.test_error,
            iterations: r.iterations,
            converged: r.converged,
            final_objective: *r.trajectory.last().expect("trajectory is never empty"),
            final_grad_norm: r.final_grad_norm,
            projection_activations: r.projection_activations,
            fd_fallbacks: r.fd_fallbacks,
            descent_violations: r.descent_violations,
        }
    }
}

/// Summary written by the command-line front end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trials: Vec<TrialResult>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub curve: Vec<SweepPoint>,
}

impl EvalReport {
    pub fn classification(trials: Vec<TrialResult>) -> Self {
        let errors: Vec<f64> = trials.iter().map(|t| t.test_error).collect();
        let (mean, std) = mean_std(&errors);
        Self {
            task: Task::Classification,
            error_rate: Some(mean),
            error_std: Some(std),
            auc: None,
            threshold: None,
            accuracy: None,
            trials,
            curve: Vec::new(),
        }
    }

    pub fn verification(auc: f64, threshold: f64, accuracy: f64) -> Self {
        Self {
            task: Task::Verification,
            error_rate: Some(1.0 - accuracy),
            error_std: None,
            auc: Some(auc),
            threshold: Some(threshold),
            accuracy: Some(accuracy),
            trials: Vec::new(),
            curve: Vec::new(),
        }
    }

    pub fn sweep(curve: Vec<SweepPoint>) -> Self {
        Self {
            task: Task::Sweep,
            error_rate: None,
            error_std: None,
            auc: None,
            threshold: None,
            accuracy: None,
            trials: Vec::new(),
            curve,
        }
    }
}
