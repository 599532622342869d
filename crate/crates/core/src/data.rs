//! Labeled examples: ingestion, splitting, standardization, pair sampling,
//! synthetic overlap data and PCA coordinates.
//!
//! Every random operation takes its own seed and draws from a ChaCha8 stream
//! in the order documented on the function.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, SymMatrix};
use crate::metric::{LabeledPairSet, PairLabel};

/// Feature vectors with integer class labels indexing `class_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExamples {
    dim: usize,
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl LabeledExamples {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InsufficientData("no examples".into()));
        }
        if features.len() != labels.len() {
            return Err(Error::Misaligned(format!(
                "{} feature rows for {} labels",
                features.len(),
                labels.len()
            )));
        }
        let dim = features[0].len();
        if dim == 0 {
            return Err(Error::InvalidInput("examples need at least one feature".into()));
        }
        for f in &features {
            if f.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: f.len(),
                });
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("features must be finite".into()));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::InvalidInput(format!(
                "label index {bad} with only {} classes",
                class_names.len()
            )));
        }
        Ok(Self {
            dim,
            features,
            labels,
            class_names,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Number of distinct classes that actually occur.
    pub fn class_count(&self) -> usize {
        self.class_sizes().iter().filter(|&&s| s > 0).count()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.class_names.len()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Subset by row indices, keeping the class table.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        Self::new(
            rows.iter().map(|&i| self.features[i].clone()).collect(),
            rows.iter().map(|&i| self.labels[i]).collect(),
            self.class_names.clone(),
        )
    }

    /// Every feature vector mapped through `t` (e.g. `M^(1/2)`).
    pub fn transformed(&self, t: &SymMatrix) -> Result<Self> {
        if t.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: t.dim(),
            });
        }
        Self::new(
            self.features.iter().map(|f| t.mul_vec(f)).collect(),
            self.labels.clone(),
            self.class_names.clone(),
        )
    }
}

/// A column picked by header name or by zero-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub delimiter: u8,
    pub has_header: bool,
    /// Label column; `None` means the last column.
    pub label_column: Option<ColumnRef>,
    pub skip_columns: Vec<ColumnRef>,
    /// Cells equal to this marker are replaced by the column mean.
    pub missing_marker: Option<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: false,
            label_column: None,
            skip_columns: Vec::new(),
            missing_marker: None,
        }
    }
}

fn resolve_column(col: &ColumnRef, header: Option<&csv::StringRecord>, width: usize) -> Result<usize> {
    match col {
        ColumnRef::Index(i) if *i < width => Ok(*i),
        ColumnRef::Index(i) => Err(Error::MissingLabelColumn(format!("index {i} (row has {width} columns)"))),
        ColumnRef::Name(name) => header
            .and_then(|h| h.iter().position(|c| c.trim() == name))
            .ok_or_else(|| Error::MissingLabelColumn(name.clone())),
    }
}

/// Sorts class names numerically when they all parse as numbers, lexically otherwise.
fn class_order(names: &mut [String]) {
    let numeric: Option<Vec<f64>> = names.iter().map(|n| n.parse::<f64>().ok()).collect();
    if numeric.is_some() {
        names.sort_by(|a, b| {
            a.parse::<f64>()
                .unwrap()
                .total_cmp(&b.parse::<f64>().unwrap())
        });
    } else {
        names.sort();
    }
}

/// Reads a delimited text file of numeric features plus one label column.
///
/// Row and column numbers in errors are 1-based and count the header line.
pub fn load_examples(path: &Path, opts: &LoadOptions) -> Result<LabeledExamples> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = if opts.has_header {
        Some(reader.headers().map_err(|e| format_error(path, e))?.clone())
    } else {
        None
    };

    let mut rows: Vec<(usize, csv::StringRecord)> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| format_error(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(rows.len() + 1);
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        rows.push((line, rec));
    }
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} has {} data rows, need at least 2",
            path.display(),
            rows.len()
        )));
    }

    let width = header.as_ref().map(|h| h.len()).unwrap_or(rows[0].1.len());
    for (line, rec) in &rows {
        if rec.len() != width {
            return Err(Error::RaggedRow {
                row: *line,
                expected: width,
                found: rec.len(),
            });
        }
    }
    let label_col = match &opts.label_column {
        Some(c) => resolve_column(c, header.as_ref(), width)?,
        None => width - 1,
    };
    let mut skipped = HashSet::new();
    for c in &opts.skip_columns {
        skipped.insert(resolve_column(c, header.as_ref(), width)?);
    }
    let feature_cols: Vec<usize> = (0..width)
        .filter(|c| *c != label_col && !skipped.contains(c))
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::InvalidInput("no feature columns left".into()));
    }

    let mut raw_labels = Vec::with_capacity(rows.len());
    let mut features = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        let label = rec.get(label_col).unwrap_or("");
        if label.is_empty() {
            return Err(Error::EmptyLabel { row: *line });
        }
        raw_labels.push(label.to_string());
        let mut f = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let cell = rec.get(c).unwrap_or("");
            if opts.missing_marker.as_deref() == Some(cell) {
                f.push(f64::NAN);
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => f.push(v),
                _ => {
                    return Err(Error::NonNumeric {
                        row: *line,
                        column: c + 1,
                        value: cell.to_string(),
                    })
                }
            }
        }
        features.push(f);
    }

    // mean imputation of missing cells, column by column
    for (k, &col) in feature_cols.iter().enumerate() {
        let present: Vec<f64> = features.iter().map(|f| f[k]).filter(|v| !v.is_nan()).collect();
        if present.len() == features.len() {
            continue;
        }
        if present.is_empty() {
            return Err(Error::InsufficientData(format!("column {} has no values", col + 1)));
        }
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        for f in &mut features {
            if f[k].is_nan() {
                f[k] = mean;
            }
        }
    }

    let mut names: Vec<String> = raw_labels.iter().cloned().collect::<HashSet<_>>().into_iter().collect();
    class_order(&mut names);
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let labels = raw_labels.iter().map(|l| index[l.as_str()]).collect();
    LabeledExamples::new(features, labels, names)
}

fn format_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Reads a pair file: `2d` feature columns (`x` then `x'`) and a `+1`/`-1` label column.
pub fn load_pairs(path: &Path, opts: &LoadOptions) -> Result<LabeledPairSet> {
    let e = load_examples(path, opts)?;
    if e.dim() % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "pair file needs an even number of feature columns, found {}",
            e.dim()
        )));
    }
    let signs = e
        .class_names()
        .iter()
        .map(|n| match n.parse::<f64>() {
            Ok(v) if v == 1.0 || v == -1.0 => PairLabel::from_sign(v as i64),
            _ => Err(Error::InvalidInput(format!("pair label must be +1 or -1, got {n:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let d = e.dim() / 2;
    let left = e.features().iter().map(|f| f[..d].to_vec()).collect();
    let right = e.features().iter().map(|f| f[d..].to_vec()).collect();
    let labels = e.labels().iter().map(|&c| signs[c]).collect();
    LabeledPairSet::new(left, right, labels)
}

/// Shuffles the row indices once with the seed and cuts at `round(fraction · n)`.
pub fn split(e: &LabeledExamples, train_fraction: f64, seed: u64) -> Result<(LabeledExamples, LabeledExamples)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = e.len();
    let cut = (train_fraction * n as f64).round() as usize;
    if cut == 0 || cut == n {
        return Err(Error::InsufficientData(format!(
            "fraction {train_fraction} of {n} examples leaves one side empty"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((e.select(&idx[..cut])?, e.select(&idx[cut..])?))
}

/// Per-feature centering and scaling fitted on one set and applied to others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; constant features keep scale 1.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(e: &LabeledExamples) -> Self {
        let n = e.len() as f64;
        let d = e.dim();
        let mut mean = vec![0.0; d];
        for f in e.features() {
            mean.iter_mut().zip(f).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for f in e.features() {
            for k in 0..d {
                var[k] += (f[k] - mean[k]).powi(2) / n;
            }
        }
        let scale = var
            .iter()
            .map(|&v| if v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn apply(&self, e: &LabeledExamples) -> Result<LabeledExamples> {
        if e.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: e.dim(),
            });
        }
        LabeledExamples::new(
            e.features().iter().map(|f| self.apply_vec(f)).collect(),
            e.labels().to_vec(),
            e.class_names().to_vec(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairBalance {
    /// Half similar, half dissimilar, topping up from the other kind when one runs out.
    #[default]
    Balanced,
    /// Uniform over all example pairs.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairSampling {
    /// `None` means `1000 · c · (c − 1)` for `c` classes.
    pub count: Option<usize>,
    pub balance: PairBalance,
    pub with_replacement: bool,
}

impl Default for PairSampling {
    fn default() -> Self {
        Self {
            count: None,
            balance: PairBalance::Balanced,
            with_replacement: false,
        }
    }
}

pub fn default_pair_count(classes: usize) -> usize {
    1000 * classes * classes.saturating_sub(1)
}

struct PairSpace<'a> {
    labels: &'a [usize],
    members: Vec<Vec<usize>>,
    similar_weights: Vec<usize>,
    similar: usize,
    dissimilar: usize,
}

impl<'a> PairSpace<'a> {
    fn new(e: &'a LabeledExamples) -> Self {
        let mut members = vec![Vec::new(); e.class_names().len()];
        for (i, &l) in e.labels().iter().enumerate() {
            members[l].push(i);
        }
        let similar_weights: Vec<usize> = members.iter().map(|m| m.len() * m.len().saturating_sub(1) / 2).collect();
        let similar = similar_weights.iter().sum();
        let n = e.len();
        Self {
            labels: e.labels(),
            members,
            similar_weights,
            similar,
            dissimilar: n * (n - 1) / 2 - similar,
        }
    }

    fn available(&self, kind: Option<PairLabel>) -> usize {
        match kind {
            None => self.similar + self.dissimilar,
            Some(PairLabel::Similar) => self.similar,
            Some(PairLabel::Dissimilar) => self.dissimilar,
        }
    }

    fn matches(&self, kind: Option<PairLabel>, i: usize, j: usize) -> bool {
        match kind {
            None => true,
            Some(PairLabel::Similar) => self.labels[i] == self.labels[j],
            Some(PairLabel::Dissimilar) => self.labels[i] != self.labels[j],
        }
    }

    /// One uniformly random ordered pair of distinct examples of the given kind.
    fn draw(&self, kind: Option<PairLabel>, rng: &mut ChaCha8Rng) -> (usize, usize) {
        let n = self.labels.len();
        if kind == Some(PairLabel::Similar) {
            let mut pick = rng.random_range(0..self.similar);
            let class = self
                .similar_weights
                .iter()
                .position(|&w| {
                    if pick < w {
                        true
                    } else {
                        pick -= w;
                        false
                    }
                })
                .expect("pick below the total weight");
            let m = &self.members[class];
            let a = rng.random_range(0..m.len());
            let mut b = rng.random_range(0..m.len() - 1);
            if b >= a {
                b += 1;
            }
            return (m[a], m[b]);
        }
        loop {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            if self.matches(kind, i, j) {
                return (i, j);
            }
        }
    }

    fn sample(&self, kind: Option<PairLabel>, count: usize, replace: bool, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
        if count == 0 {
            return Vec::new();
        }
        if replace {
            return (0..count).map(|_| self.draw(kind, rng)).collect();
        }
        let avail = self.available(kind);
        let count = count.min(avail);
        if 2 * count <= avail {
            let mut seen = HashSet::with_capacity(count);
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let (i, j) = self.draw(kind, rng);
                if seen.insert((i.min(j), i.max(j))) {
                    out.push((i, j));
                }
            }
            out
        } else {
            let n = self.labels.len();
            let mut all: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                .filter(|&(i, j)| self.matches(kind, i, j))
                .collect();
            all.shuffle(rng);
            all.truncate(count);
            all
        }
    }
}

/// Index pairs `(i, j)`, `i ≠ j`, in random order.
///
/// Without replacement the request is capped at the number of distinct
/// unordered pairs. The generator draws the similar pairs first, then the
/// dissimilar ones, then shuffles the combined list.
pub fn sample_pair_indices(e: &LabeledExamples, opts: &PairSampling, seed: u64) -> Result<Vec<(usize, usize)>> {
    if e.len() < 2 {
        return Err(Error::InsufficientData("need at least two examples to form pairs".into()));
    }
    let space = PairSpace::new(e);
    let count = opts.count.unwrap_or_else(|| default_pair_count(e.class_count()));
    if count == 0 {
        return Err(Error::InvalidConfig("pair count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = match opts.balance {
        PairBalance::Uniform => space.sample(None, count, opts.with_replacement, &mut rng),
        PairBalance::Balanced => {
            if space.dissimilar == 0 {
                return Err(Error::InsufficientData(
                    "balanced pairs need at least two classes".into(),
                ));
            }
            let cap = |kind| match space.available(Some(kind)) {
                0 => 0,
                _ if opts.with_replacement => usize::MAX,
                avail => avail,
            };
            let mut want_sim = (count / 2).min(cap(PairLabel::Similar));
            let want_dis = (count - want_sim).min(cap(PairLabel::Dissimilar));
            want_sim = (count - want_dis).min(cap(PairLabel::Similar)).max(want_sim);
            let mut v = space.sample(Some(PairLabel::Similar), want_sim, opts.with_replacement, &mut rng);
            v.extend(space.sample(Some(PairLabel::Dissimilar), want_dis, opts.with_replacement, &mut rng));
            v
        }
    };
    out.shuffle(&mut rng);
    Ok(out)
}

pub fn pairs_from_indices(e: &LabeledExamples, idx: &[(usize, usize)]) -> Result<LabeledPairSet> {
    let label = |i: usize, j: usize| {
        if e.labels()[i] == e.labels()[j] {
            PairLabel::Similar
        } else {
            PairLabel::Dissimilar
        }
    };
    LabeledPairSet::new(
        idx.iter().map(|&(i, _)| e.feature(i).to_vec()).collect(),
        idx.iter().map(|&(_, j)| e.feature(j).to_vec()).collect(),
        idx.iter().map(|&(i, j)| label(i, j)).collect(),
    )
}

pub fn sample_pairs(e: &LabeledExamples, opts: &PairSampling, seed: u64) -> Result<LabeledPairSet> {
    pairs_from_indices(e, &sample_pair_indices(e, opts, seed)?)
}

/// Two Gaussian classes that separate cleanly in training and overlap at test time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub dim: usize,
    pub per_class: usize,
    pub sigma: f64,
    /// Distance between class means in the training split, in units of `sigma`.
    pub train_separation: f64,
    pub test_separation: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dim: 10,
            per_class: 100,
            sigma: 1.0,
            train_separation: 6.0,
            test_separation: 1.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.per_class == 0 {
            return Err(Error::InvalidConfig("synthetic dim and per_class must be positive".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma must be positive, got {}", self.sigma)));
        }
        for s in [self.train_separation, self.test_separation] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidConfig(format!("separation must be non-negative, got {s}")));
            }
        }
        Ok(())
    }
}

/// Class means sit at `±separation·σ/2` on the first axis; every coordinate
/// has noise `σ`. Draws train class 0, train class 1, test class 0, test class 1,
/// each example's coordinates in order.
pub fn synth_overlap(cfg: &SynthConfig, seed: u64) -> Result<(LabeledExamples, LabeledExamples)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = vec!["0".to_string(), "1".to_string()];
    let mut make = |sep: f64| -> Result<LabeledExamples> {
        let mut features = Vec::with_capacity(2 * cfg.per_class);
        let mut labels = Vec::with_capacity(2 * cfg.per_class);
        for class in 0..2 {
            let offset = if class == 0 { -0.5 } else { 0.5 } * sep * cfg.sigma;
            for _ in 0..cfg.per_class {
                let mut x: Vec<f64> = (0..cfg.dim)
                    .map(|_| cfg.sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                x[0] += offset;
                features.push(x);
                labels.push(class);
            }
        }
        LabeledExamples::new(features, labels, names.clone())
    };
    let train = make(cfg.train_separation)?;
    let test = make(cfg.test_separation)?;
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca2 {
    /// One `[pc1, pc2]` row per example.
    pub coords: Vec<[f64; 2]>,
    /// Variance along the two components, non-increasing.
    pub explained: [f64; 2],
    pub total_variance: f64,
}

/// Projection of the centered data onto the top two sample-covariance eigenvectors.
pub fn pca2(e: &LabeledExamples) -> Result<Pca2> {
    let (n, d) = (e.len(), e.dim());
    if n < 2 || d < 2 {
        return Err(Error::InsufficientData(format!("PCA needs n ≥ 2 and d ≥ 2, got n={n}, d={d}")));
    }
    let mut mean = vec![0.0; d];
    for f in e.features() {
        mean.iter_mut().zip(f).for_each(|(m, v)| *m += v / n as f64);
    }
    let centered: Vec<Vec<f64>> = e
        .features()
        .iter()
        .map(|f| f.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    let mut cov = SymMatrix::zeros(d);
    for c in &centered {
        cov.add_outer(c, 1.0 / (n - 1) as f64);
    }
    let total_variance = cov.trace();
    if total_variance <= 0.0 {
        return Err(Error::InvalidInput("data has zero variance".into()));
    }
    let eig = sym_eigen(&cov)?;
    let (v1, v2) = (eig.eigenvector(d - 1), eig.eigenvector(d - 2));
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let coords = centered.iter().map(|c| [dot(c, &v1), dot(c, &v2)]).collect();
    let vals = eig.eigenvalues();
    Ok(Pca2 {
        coords,
        explained: [vals[d - 1].max(0.0), vals[d - 2].max(0.0)],
        total_variance,
    })
}
