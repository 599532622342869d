//! Flat key-value run configuration: defaults, then the config file, then flags.

use std::path::{Path, PathBuf};

use aml_core::data::{ColumnRef, LoadOptions, PairBalance, PairSampling, SynthConfig};
use aml_core::eval::{Protocol, SweepAxis};
use aml_core::solver::{SolverConfig, StepScale};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SYNTHETIC: &str = "synthetic";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Classification,
    Verification,
}

/// Every configurable key. In a config file all keys are optional; the echoed
/// effective config has every key with a default filled in.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatConfig {
    pub data: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,

    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub rho: Option<f64>,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub eig_floor: Option<f64>,
    pub gap_rtol: Option<f64>,
    pub degeneracy_rtol: Option<f64>,
    pub step_scale: Option<StepScale>,
    pub backtracking: Option<bool>,

    pub k: Option<usize>,
    pub trials: Option<usize>,
    pub train_fraction: Option<f64>,
    pub standardize: Option<bool>,
    pub pair_count: Option<usize>,
    pub pair_balance: Option<PairBalance>,
    pub with_replacement: Option<bool>,

    pub delimiter: Option<String>,
    pub header: Option<bool>,
    pub label_column: Option<ColumnRef>,
    pub skip_columns: Option<Vec<ColumnRef>>,
    pub missing_marker: Option<String>,

    pub synth_dim: Option<usize>,
    pub synth_per_class: Option<usize>,
    pub synth_sigma: Option<f64>,
    pub synth_train_separation: Option<f64>,
    pub synth_test_separation: Option<f64>,

    pub mode: Option<EvalMode>,
    pub axis: Option<SweepAxis>,
    pub grid: Option<String>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($field:ident),* $(,)?) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field.clone(); } )*
    };
}

impl FlatConfig {
    /// Keys set in `other` replace the ones here.
    pub fn overlay(&mut self, other: &FlatConfig) {
        overlay!(self, other;
            data, out, seed, alpha, beta, rho, max_iters, grad_tol, eig_floor, gap_rtol,
            degeneracy_rtol, step_scale, backtracking, k, trials, train_fraction, standardize,
            pair_count, pair_balance, with_replacement, delimiter, header, label_column,
            skip_columns, missing_marker, synth_dim, synth_per_class, synth_sigma,
            synth_train_separation, synth_test_separation, mode, axis, grid);
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: String,
    pub out: PathBuf,
    pub seed: u64,
    pub solver: SolverConfig,
    pub protocol: Protocol,
    pub load: LoadOptions,
    pub synth: SynthConfig,
    pub mode: EvalMode,
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
}

impl RunConfig {
    pub fn is_synthetic(&self) -> bool {
        self.data == SYNTHETIC
    }

    /// Resolves defaults and checks every range and referenced path.
    pub fn resolve(flat: &FlatConfig) -> Result<Self, CliError> {
        let solver_default = SolverConfig::default();
        let protocol_default = Protocol::default();
        let synth_default = SynthConfig::default();
        let seed = flat.seed.unwrap_or(0);
        let solver = SolverConfig {
            alpha: flat.alpha.unwrap_or(solver_default.alpha),
            beta: flat.beta.unwrap_or(solver_default.beta),
            rho: flat.rho.unwrap_or(solver_default.rho),
            max_iters: flat.max_iters.unwrap_or(solver_default.max_iters),
            grad_tol: flat.grad_tol.or(solver_default.grad_tol),
            eig_floor: flat.eig_floor.unwrap_or(solver_default.eig_floor),
            gap_rtol: flat.gap_rtol.unwrap_or(solver_default.gap_rtol),
            degeneracy_rtol: flat.degeneracy_rtol.unwrap_or(solver_default.degeneracy_rtol),
            seed,
            step_scale: flat.step_scale.unwrap_or(solver_default.step_scale),
            backtracking: flat.backtracking.unwrap_or(solver_default.backtracking),
        };
        solver.validate()?;
        let protocol = Protocol {
            k: flat.k.unwrap_or(protocol_default.k),
            train_fraction: flat.train_fraction.unwrap_or(protocol_default.train_fraction),
            trials: flat.trials.unwrap_or(protocol_default.trials),
            standardize: flat.standardize.unwrap_or(protocol_default.standardize),
            pairs: PairSampling {
                count: flat.pair_count,
                balance: flat.pair_balance.unwrap_or_default(),
                with_replacement: flat.with_replacement.unwrap_or(false),
            },
        };
        protocol.validate()?;
        let delimiter = match flat.delimiter.as_deref() {
            None => b',',
            Some("\\t") | Some("tab") => b'\t',
            Some(s) if s.len() == 1 && s.is_ascii() => s.as_bytes()[0],
            Some(s) => {
                return Err(CliError::Config(format!(
                    "delimiter must be one ASCII character, got {s:?}"
                )))
            }
        };
        let load = LoadOptions {
            delimiter,
            has_header: flat.header.unwrap_or(false),
            label_column: flat.label_column.clone(),
            skip_columns: flat.skip_columns.clone().unwrap_or_default(),
            missing_marker: flat.missing_marker.clone(),
        };
        let synth = SynthConfig {
            dim: flat.synth_dim.unwrap_or(synth_default.dim),
            per_class: flat.synth_per_class.unwrap_or(synth_default.per_class),
            sigma: flat.synth_sigma.unwrap_or(synth_default.sigma),
            train_separation: flat.synth_train_separation.unwrap_or(synth_default.train_separation),
            test_separation: flat.synth_test_separation.unwrap_or(synth_default.test_separation),
        };
        synth.validate()?;
        let axis = flat.axis.unwrap_or(SweepAxis::Beta);
        let grid = match &flat.grid {
            Some(g) => parse_grid(g)?,
            None => default_grid(axis),
        };
        let data = flat.data.clone().unwrap_or_else(|| SYNTHETIC.to_string());
        if data != SYNTHETIC {
            require_file(Path::new(&data), "data file")?;
        }
        Ok(Self {
            data,
            out: flat.out.clone().unwrap_or_else(|| PathBuf::from("aml-out")),
            seed,
            solver,
            protocol,
            load,
            synth,
            mode: flat.mode.unwrap_or(EvalMode::Classification),
            axis,
            grid,
        })
    }

    /// The effective configuration as a flat table, for echoing next to outputs.
    pub fn to_flat(&self) -> FlatConfig {
        FlatConfig {
            data: Some(self.data.clone()),
            out: Some(self.out.clone()),
            seed: Some(self.seed),
            alpha: Some(self.solver.alpha),
            beta: Some(self.solver.beta),
            rho: Some(self.solver.rho),
            max_iters: Some(self.solver.max_iters),
            grad_tol: self.solver.grad_tol,
            eig_floor: Some(self.solver.eig_floor),
            gap_rtol: Some(self.solver.gap_rtol),
            degeneracy_rtol: Some(self.solver.degeneracy_rtol),
            step_scale: Some(self.solver.step_scale),
            backtracking: Some(self.solver.backtracking),
            k: Some(self.protocol.k),
            trials: Some(self.protocol.trials),
            train_fraction: Some(self.protocol.train_fraction),
            standardize: Some(self.protocol.standardize),
            pair_count: self.protocol.pairs.count,
            pair_balance: Some(self.protocol.pairs.balance),
            with_replacement: Some(self.protocol.pairs.with_replacement),
            delimiter: Some(match self.load.delimiter {
                b'\t' => "tab".to_string(),
                d => (d as char).to_string(),
            }),
            header: Some(self.load.has_header),
            label_column: self.load.label_column.clone(),
            skip_columns: Some(self.load.skip_columns.clone()),
            missing_marker: self.load.missing_marker.clone(),
            synth_dim: Some(self.synth.dim),
            synth_per_class: Some(self.synth.per_class),
            synth_sigma: Some(self.synth.sigma),
            synth_train_separation: Some(self.synth.train_separation),
            synth_test_separation: Some(self.synth.test_separation),
            mode: Some(self.mode),
            axis: Some(self.axis),
            grid: Some(
                self.grid
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
        }
    }
}

/// Referenced input files must exist when the config is validated.
pub fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} {} does not exist", path.display())))
    }
}

pub fn default_grid(axis: SweepAxis) -> Vec<f64> {
    match axis {
        SweepAxis::Alpha => (-3..=3).map(|e| 10f64.powi(e)).collect(),
        SweepAxis::Beta => (1..=10).map(|i| i as f64 * 0.2).collect(),
    }
}

/// `a,b,c` or an inclusive range `start:stop:step`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = |why: &str| CliError::Config(format!("invalid grid {text:?}: {why}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let text_t = text.trim();
    if text_t.is_empty() {
        return Err(bad("empty grid"));
    }
    let values = if text_t.contains(':') {
        let parts: Vec<&str> = text_t.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("ranges are start:stop:step"));
        }
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || stop < start {
            return Err(bad("need step > 0 and stop ≥ start"));
        }
        // index-based so accumulated rounding cannot drop the last point
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| start + i as f64 * step).collect()
    } else {
        text_t
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(num)
            .collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() {
        return Err(bad("empty grid"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(bad("values must be finite"));
    }
    Ok(values)
}
