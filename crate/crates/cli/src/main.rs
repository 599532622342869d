//! `aml`: train, evaluate, sweep and check adversarial metric learning runs.
//!
//! Exit codes: 0 success, 2 configuration, 3 data, 4 numerical.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use aml_core::eval::SweepAxis;
use clap::{Args, Parser, Subcommand};

use crate::config::{require_file, EvalMode, FlatConfig, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "aml", version, about = "Adversarial metric learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train over repeated random splits and report k-NN test error.
    Train(CommonArgs),
    /// Score a saved model by k-NN classification or pair verification.
    Eval(EvalArgs),
    /// Compare analytic gradients and closed forms against numerical references.
    Gradcheck(GradcheckArgs),
    /// Train once per value of an alpha or beta grid.
    Sweep(SweepArgs),
    /// Write the synthetic overlap data and its 2-D PCA coordinates.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Data file, or `synthetic` for the built-in overlap data.
    #[arg(long)]
    data: Option<String>,
    /// TOML file of flat keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weight of the adversarial term.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "baseline")]
    alpha: Option<f64>,
    /// Adversarial pair penalty.
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    /// Gradient step size.
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    /// Neighbours for k-NN.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Train without the adversarial term (alpha = 0).
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Saved model (model.toml from `train`).
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<EvalMode>,
    /// Pair file for verification: x columns, x' columns, then a +1/-1 label.
    #[arg(long)]
    pairs: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Random instances for the gradient check.
    #[arg(long, default_value_t = 50)]
    instances: usize,
    /// Use the literal printed weight instead of the substituted one.
    #[arg(long)]
    printed_form: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_parser = parse_axis)]
    axis: Option<SweepAxis>,
    /// `a,b,c` or `start:stop:step`.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Map the data through this model before PCA.
    #[arg(long)]
    model: Option<PathBuf>,
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    match s {
        "alpha" => Ok(SweepAxis::Alpha),
        "beta" => Ok(SweepAxis::Beta),
        _ => Err(format!("expected alpha or beta, got {s:?}")),
    }
}

impl CommonArgs {
    fn flags(&self) -> FlatConfig {
        FlatConfig {
            data: self.data.clone(),
            out: self.out.clone(),
            seed: self.seed,
            alpha: if self.baseline { Some(0.0) } else { self.alpha },
            beta: self.beta,
            rho: self.rho,
            max_iters: self.max_iters,
            k: self.k,
            trials: self.trials,
            ..FlatConfig::default()
        }
    }

    /// Defaults, then the config file, then `extra`, then flags.
    fn resolve(&self, extra: FlatConfig) -> Result<RunConfig, CliError> {
        let mut flat = match &self.config {
            Some(path) => FlatConfig::read(path)?,
            None => FlatConfig::default(),
        };
        flat.overlay(&extra);
        flat.overlay(&self.flags());
        RunConfig::resolve(&flat)
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Train(c) => commands::train(&c.resolve(FlatConfig::default())?),
        Command::Eval(a) => {
            let run = a.common.resolve(FlatConfig {
                mode: a.mode,
                ..FlatConfig::default()
            })?;
            require_file(&a.model, "model file")?;
            if let Some(p) = &a.pairs {
                require_file(p, "pair file")?;
                if run.mode != EvalMode::Verification {
                    return Err(CliError::Config("--pairs needs --mode verification".into()));
                }
            }
            commands::eval(&run, &a.model, a.pairs.as_deref())
        }
        Command::Gradcheck(a) => {
            if a.instances == 0 {
                return Err(CliError::Config("--instances must be positive".into()));
            }
            commands::gradcheck(&a.common.resolve(FlatConfig::default())?, a.instances, a.printed_form)
        }
        Command::Sweep(a) => commands::sweep_cmd(&a.common.resolve(FlatConfig {
            axis: a.axis,
            grid: a.grid,
            ..FlatConfig::default()
        })?),
        Command::Synth(a) => {
            let run = a.common.resolve(FlatConfig::default())?;
            if let Some(m) = &a.model {
                require_file(m, "model file")?;
            }
            commands::synth(&run, a.model.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("aml: error kind={}: {e}", e.kind_tag());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
