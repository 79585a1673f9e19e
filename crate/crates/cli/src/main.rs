use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use icon_cli::commands::{self, layered_config, log_path};
use icon_cli::config::{NoiseConfig, RunConfig};
use icon_cli::Result;
use icon_core::domain::Scenario;

/// Simulate BLE-AoA / UWB positioning datasets, train calibration models
/// and evaluate them with leave-one-session-out cross-validation.
#[derive(Parser)]
#[command(name = "icon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one CSV per session plus a manifest.
    Simulate(SimulateArgs),
    /// Train a model on every session but the held-out one.
    Train(TrainArgs),
    /// Run the full cross-validation and write the report.
    Evaluate(EvaluateArgs),
    /// Rebuild report files from an errors.csv.
    Report(ReportArgs),
}

/// Training overrides shared by `train` and `evaluate`.
#[derive(Args)]
struct TrainFlags {
    /// Config file; defaults to the dataset's manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    train_seed: Option<u64>,
}

impl TrainFlags {
    fn apply(&self, data: &std::path::Path) -> Result<RunConfig> {
        let mut cfg = layered_config(Some(data), self.config.as_deref())?;
        if let Some(e) = self.epochs {
            cfg.train.max_epochs = e;
        }
        if let Some(s) = self.train_seed {
            cfg.seeds.training = s;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// `ble` or `uwb`.
    #[arg(long)]
    tech: Option<String>,
    /// Repeat to select several scenarios.
    #[arg(long = "scenario")]
    scenarios: Vec<String>,
    #[arg(long)]
    sessions_per_scenario: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Session length in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Switch every impairment off.
    #[arg(long)]
    noiseless: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Session id to leave out; trains on everything when absent.
    #[arg(long)]
    hold_out: Option<String>,
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Only hold out sessions of this scenario.
    #[arg(long)]
    scenario: Option<Scenario>,
    #[arg(long)]
    window: Option<usize>,
    /// Report directory; `<data>/report` by default.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    errors: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => {
            let mut cfg = layered_config(None, a.config.as_deref())?;
            if let Some(t) = a.tech {
                cfg.tech = t;
            }
            if !a.scenarios.is_empty() {
                cfg.scenarios = a.scenarios;
            }
            if let Some(n) = a.sessions_per_scenario {
                cfg.sessions_per_scenario = n;
            }
            if let Some(s) = a.seed {
                cfg.seeds.simulation = s;
            }
            if a.duration.is_some() {
                cfg.layout.duration_s = a.duration;
            }
            if a.noiseless {
                cfg.noise = NoiseConfig::noiseless();
            }
            cfg.output_dir = Some(a.out.clone());
            let files = commands::simulate(&cfg)?;
            eprintln!("wrote {} sessions to {}", files.len(), a.out.display());
        }
        Command::Train(a) => {
            let cfg = a.flags.apply(&a.data)?;
            let o = commands::train(&a.data, a.hold_out.as_deref(), &a.model, &cfg)?;
            eprintln!(
                "{} model from {} sessions ({} samples), {} accepted steps, stop: {:?}",
                o.technology,
                o.train_sessions,
                o.samples,
                o.log.epochs.len(),
                o.log.stop
            );
            eprintln!("wrote {} and {}", a.model.display(), log_path(&a.model).display());
        }
        Command::Evaluate(a) => {
            let mut cfg = a.flags.apply(&a.data)?;
            if let Some(w) = a.window {
                cfg.window = w;
            }
            let out = a.out.unwrap_or_else(|| a.data.join("report"));
            let result = commands::evaluate(&a.data, &cfg, a.scenario, &out);
            if let Ok(text) = std::fs::read_to_string(out.join(commands::REPORT_TEXT)) {
                print!("{text}");
            }
            result?;
        }
        Command::Report(a) => {
            let r = commands::report(&a.errors, &a.out)?;
            print!("{}", r.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
