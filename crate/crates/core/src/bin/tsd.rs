//! `tsd`: run threshold-detection experiments and write reports.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tsd_core::harness::{
    emit_report, parse_config_file, run_experiment, ConfigFile, Experiment, ExperimentConfig, OutputFormat, Overrides,
};

#[derive(Parser, Debug)]
#[command(name = "tsd", version, about = "Threshold signal detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Single-signal detection probabilities against the Born rule.
    BornSingle(Common),
    /// Joint detection probabilities of a bi-signal.
    BornJoint(Common),
    /// Single-side detection probabilities against partial traces.
    Marginals(Common),
    /// Correlations at four settings and the CHSH value.
    Chsh(Common),
    /// Scaling of single and joint mean click times.
    MeanTimes(Common),
    /// Randomized checks of the Gaussian quadratic-form identities.
    AppendixCheck(Common),
    /// Positivity and consistency checks of a bi-signal model.
    ValidateModel(Common),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Report,
    Table,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trials (per pair or setting where applicable; samples per case for appendix-check).
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, env = "TSD_WORKERS")]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Background energy E0.
    #[arg(long, allow_negative_numbers = true)]
    background: Option<f64>,
    /// Coincidence window v.
    #[arg(long)]
    window: Option<f64>,
    /// CHSH angles a,a2,b,b2 in radians.
    #[arg(long, value_delimiter = ',', num_args = 4, allow_negative_numbers = true)]
    angles: Option<Vec<f64>>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            trials: self.trials,
            workers: self.workers,
            out: self.out.clone(),
            format: self.format.map(|f| match f {
                FormatArg::Report => OutputFormat::Report,
                FormatArg::Table => OutputFormat::Table,
            }),
            dt: self.dt,
            kappa: self.kappa,
            threshold: self.threshold,
            background: self.background,
            window: self.window,
            angles: self.angles.clone(),
        }
    }
}

fn run(experiment: Experiment, common: &Common) -> tsd_core::Result<i32> {
    let file = match &common.config {
        Some(path) => parse_config_file(path)?,
        None => ConfigFile::default(),
    };
    let cfg = ExperimentConfig::resolve(experiment, file, &common.overrides())?;
    let started = Instant::now();
    let report = run_experiment(&cfg)?;
    let elapsed = started.elapsed().as_secs_f64();
    let written = emit_report(&report, cfg.output.format, &cfg.output.dir)?;
    for path in &written {
        println!("{}", path.display());
    }
    eprintln!(
        "{experiment}: {elapsed:.2} s on {} worker(s)",
        if cfg.run.workers == 0 {
            rayon::current_num_threads()
        } else {
            cfg.run.workers
        }
    );
    for (key, value) in &report.diagnostics {
        eprintln!("  {key} = {value}");
    }
    if report.regime_violation {
        eprintln!("warning: regime check failed (see diagnostics)");
    }
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, common) = match &cli.command {
        Command::BornSingle(c) => (Experiment::BornSingle, c),
        Command::BornJoint(c) => (Experiment::BornJoint, c),
        Command::Marginals(c) => (Experiment::Marginals, c),
        Command::Chsh(c) => (Experiment::Chsh, c),
        Command::MeanTimes(c) => (Experiment::MeanTimes, c),
        Command::AppendixCheck(c) => (Experiment::AppendixCheck, c),
        Command::ValidateModel(c) => (Experiment::ValidateModel, c),
    };
    match run(experiment, common) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
