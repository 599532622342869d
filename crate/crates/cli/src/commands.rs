//! The five subcommands. Each writes its effective config, its outputs and a
//! metadata file into the run directory.

use std::path::Path;
use std::time::Instant;

use aml_core::check::{run_gradcheck, GradcheckConfig};
use aml_core::data::{load_examples, load_pairs, pca2, sample_pairs, split, synth_overlap, LabeledExamples, Standardizer};
use aml_core::eval::{
    knn_classify, roc_auc, sweep, trial_seed, verification_accuracy, youden_threshold, EvalReport, Experiment, Roc,
    Task, TrialResult,
};
use aml_core::loss::SpectralForm;
use aml_core::metric::{LabeledPairSet, MetricMatrix, PairData};

use crate::config::{EvalMode, RunConfig};
use crate::error::CliError;
use crate::output::{summary_line, write_csv, write_examples, write_toml, Metadata, ModelFile, OutDir};

type Result<T> = std::result::Result<T, CliError>;

fn f(v: f64) -> String {
    v.to_string()
}

/// Loads the data file once; synthetic data is drawn per seed instead.
fn load_data(run: &RunConfig) -> Result<Option<LabeledExamples>> {
    if run.is_synthetic() {
        return Ok(None);
    }
    Ok(Some(load_examples(Path::new(&run.data), &run.load)?))
}

fn split_for(run: &RunConfig, data: Option<&LabeledExamples>, seed: u64) -> Result<(LabeledExamples, LabeledExamples)> {
    Ok(match data {
        None => synth_overlap(&run.synth, seed)?,
        Some(e) => split(e, run.protocol.train_fraction, seed)?,
    })
}

fn start(run: &RunConfig, command: &str) -> Result<(OutDir, Metadata, Instant)> {
    let out = OutDir::create(&run.out)?;
    write_toml(&out.file("config.toml"), &run.to_flat())?;
    Ok((out, Metadata::new(command), Instant::now()))
}

fn finish(out: &OutDir, mut meta: Metadata, started: Instant) -> Result<()> {
    meta.wall_time_seconds = started.elapsed().as_secs_f64();
    write_toml(&out.file("metadata.toml"), &meta)
}

fn write_roc(out: &OutDir, roc: &Roc) -> Result<()> {
    write_csv(
        &out.file("roc.csv"),
        &["threshold", "fpr", "tpr"],
        roc.points.iter().map(|p| vec![f(p.threshold), f(p.fpr), f(p.tpr)]),
    )
}

/// Trains once per trial seed and reports the k-NN test error over trials.
pub fn train(run: &RunConfig) -> Result<()> {
    let (out, mut meta, started) = start(run, "train")?;
    let data = load_data(run)?;
    let mut trials = Vec::with_capacity(run.protocol.trials);
    for t in 0..run.protocol.trials {
        let seed = trial_seed(run.seed, t);
        let (tr, te) = split_for(run, data.as_ref(), seed)?;
        let exp = Experiment::prepare(&tr, &te, &run.protocol, seed)?;
        let r = exp.run(&run.solver)?;
        meta.solver_seconds.push(r.report.wall_time.as_secs_f64());
        if t == 0 {
            write_toml(&out.file("model.toml"), &ModelFile::new(&r.metric, &exp.standardizer))?;
            write_csv(
                &out.file("trajectory.csv"),
                &["iteration", "objective"],
                r.report
                    .trajectory
                    .iter()
                    .enumerate()
                    .map(|(i, v)| vec![i.to_string(), f(*v)]),
            )?;
        }
        trials.push(TrialResult::from_run(seed, &r));
    }
    let report = EvalReport::classification(trials);
    write_toml(&out.file("report.toml"), &report)?;
    finish(&out, meta, started)?;
    println!(
        "train trials={} {}",
        run.protocol.trials,
        summary_line(&[
            ("test_error", report.error_rate.unwrap_or(f64::NAN)),
            ("test_error_std", report.error_std.unwrap_or(f64::NAN)),
        ])
    );
    Ok(())
}

fn standardized_pairs(pairs: &LabeledPairSet, s: &Standardizer, rows: impl Iterator<Item = usize>) -> Result<LabeledPairSet> {
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut labels = Vec::new();
    for i in rows {
        left.push(s.apply_vec(pairs.left(i)));
        right.push(s.apply_vec(pairs.right(i)));
        labels.push(pairs.label(i));
    }
    Ok(LabeledPairSet::new(left, right, labels)?)
}

fn check_model_dim(m: &MetricMatrix, dim: usize) -> Result<()> {
    if m.dim() != dim {
        return Err(aml_core::Error::DimensionMismatch {
            expected: m.dim(),
            found: dim,
        }
        .into());
    }
    Ok(())
}

/// Scores a saved model. Classification uses the trial-0 split; verification
/// picks the Youden threshold on validation pairs and scores held-out pairs.
pub fn eval(run: &RunConfig, model: &Path, pair_file: Option<&Path>) -> Result<()> {
    let (out, meta, started) = start(run, "eval")?;
    let (m, standardizer) = ModelFile::load(model)?;
    let report = match (run.mode, pair_file) {
        (EvalMode::Classification, _) => {
            let data = load_data(run)?;
            let (tr, te) = split_for(run, data.as_ref(), run.seed)?;
            check_model_dim(&m, tr.dim())?;
            let (tr, te) = (standardizer.apply(&tr)?, standardizer.apply(&te)?);
            let error = knn_classify(&m, &tr, &te, run.protocol.k)?;
            println!("eval classification {}", summary_line(&[("test_error", error)]));
            EvalReport {
                task: Task::Classification,
                error_rate: Some(error),
                ..EvalReport::sweep(Vec::new())
            }
        }
        (EvalMode::Verification, source) => {
            let (validation, test) = match source {
                // even rows choose the threshold, odd rows are scored
                Some(path) => {
                    let pairs = load_pairs(path, &run.load)?;
                    check_model_dim(&m, pairs.dim())?;
                    if pairs.len() < 4 {
                        return Err(aml_core::Error::InsufficientData("pair file needs at least 4 pairs".into()).into());
                    }
                    (
                        standardized_pairs(&pairs, &standardizer, (0..pairs.len()).step_by(2))?,
                        standardized_pairs(&pairs, &standardizer, (1..pairs.len()).step_by(2))?,
                    )
                }
                None => {
                    let data = load_data(run)?;
                    let (tr, te) = split_for(run, data.as_ref(), run.seed)?;
                    check_model_dim(&m, tr.dim())?;
                    let (tr, te) = (standardizer.apply(&tr)?, standardizer.apply(&te)?);
                    (
                        sample_pairs(&tr, &run.protocol.pairs, run.seed)?,
                        sample_pairs(&te, &run.protocol.pairs, run.seed.wrapping_add(1))?,
                    )
                }
            };
            let (threshold, _) = youden_threshold(&roc_auc(&m, &validation)?);
            let roc = roc_auc(&m, &test)?;
            let accuracy = verification_accuracy(&m, &test, threshold)?;
            write_roc(&out, &roc)?;
            println!(
                "eval verification {}",
                summary_line(&[("auc", roc.auc), ("threshold", threshold), ("accuracy", accuracy)])
            );
            EvalReport::verification(roc.auc, threshold, accuracy)
        }
    };
    write_toml(&out.file("report.toml"), &report)?;
    finish(&out, meta, started)
}

/// Runs the built-in gradient and identity checks; any failure exits as numerical.
pub fn gradcheck(run: &RunConfig, instances: usize, printed_form: bool) -> Result<()> {
    let (out, meta, started) = start(run, "gradcheck")?;
    let cfg = GradcheckConfig {
        seed: run.seed,
        gradient_instances: instances,
        substitution_instances: instances.max(100),
        form: if printed_form {
            SpectralForm::Printed
        } else {
            SpectralForm::Substituted
        },
        ..GradcheckConfig::default()
    };
    let outcomes = run_gradcheck(&cfg)?;
    for c in &outcomes {
        println!(
            "check {} instances={} max_rel_err={:.3e} tol={:.0e} {}",
            c.name,
            c.instances,
            c.max_error,
            c.tolerance,
            if c.passed { "PASS" } else { "FAIL" }
        );
    }
    #[derive(serde::Serialize)]
    struct Checks<'a> {
        check: &'a [aml_core::check::CheckOutcome],
    }
    write_toml(&out.file("gradcheck.toml"), &Checks { check: &outcomes })?;
    finish(&out, meta, started)?;
    let failed: Vec<&str> = outcomes.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("failed checks: {}", failed.join(", "))))
    }
}

/// Trains over the alpha or beta grid on the trial-0 split.
pub fn sweep_cmd(run: &RunConfig) -> Result<()> {
    let (out, mut meta, started) = start(run, "sweep")?;
    let data = load_data(run)?;
    let (tr, te) = split_for(run, data.as_ref(), run.seed)?;
    let exp = Experiment::prepare(&tr, &te, &run.protocol, run.seed)?;
    let t0 = Instant::now();
    let curve = sweep(&exp, run.axis, &run.grid, &run.solver)?;
    meta.solver_seconds.push(t0.elapsed().as_secs_f64());
    write_csv(
        &out.file("curve.csv"),
        &["value", "train_error", "test_error", "iterations", "final_objective"],
        curve.iter().map(|p| {
            vec![
                f(p.value),
                f(p.train_error),
                f(p.test_error),
                p.iterations.to_string(),
                f(p.final_objective),
            ]
        }),
    )?;
    for p in &curve {
        println!(
            "sweep value={} {}",
            p.value,
            summary_line(&[("train_error", p.train_error), ("test_error", p.test_error)])
        );
    }
    write_toml(&out.file("report.toml"), &EvalReport::sweep(curve))?;
    finish(&out, meta, started)
}

fn write_pca(out: &OutDir, name: &str, e: &LabeledExamples) -> Result<()> {
    let p = pca2(e)?;
    write_csv(
        &out.file(name),
        &["x", "y", "label"],
        p.coords
            .iter()
            .zip(e.labels())
            .map(|(c, &l)| vec![f(c[0]), f(c[1]), e.class_names()[l].clone()]),
    )
}

/// Writes the synthetic splits and their 2-D PCA coordinates, optionally after
/// mapping through a saved model's standardization and `M^(1/2)`.
pub fn synth(run: &RunConfig, model: Option<&Path>) -> Result<()> {
    let (out, meta, started) = start(run, "synth")?;
    let (tr, te) = synth_overlap(&run.synth, run.seed)?;
    write_examples(&out.file("train.csv"), &tr)?;
    write_examples(&out.file("test.csv"), &te)?;
    let (tr, te) = match model {
        None => (tr, te),
        Some(path) => {
            let (m, s) = ModelFile::load(path)?;
            check_model_dim(&m, tr.dim())?;
            let root = m.sqrt();
            (s.apply(&tr)?.transformed(&root)?, s.apply(&te)?.transformed(&root)?)
        }
    };
    write_pca(&out, "pca_train.csv", &tr)?;
    write_pca(&out, "pca_test.csv", &te)?;
    println!("synth train={} test={} dim={}", tr.len(), te.len(), tr.dim());
    finish(&out, meta, started)
}
