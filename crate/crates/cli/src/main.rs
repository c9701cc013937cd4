use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nhlattice::harness::{self, ConfigError, Experiment, RunConfig};

#[derive(Parser)]
#[command(name = "nhlattice", version, about = "Gain/loss tight-binding lattices: scattering, spectra and packet dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reflection and transmission tables (experiment = "scatter").
    Scatter(Common),
    /// Packet evolution: emission, absorption, pt-trace or deviation.
    Evolve(Common),
    /// Spectrum, exceptional-point check and critical roots (experiment = "spectrum").
    PtSpectrum(Common),
    /// A config with a [sweep] table.
    Sweep(Common),
    /// Any config or preset.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in figure preset, e.g. fig2.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory. Defaults to the config's output_dir, then
    /// $NHLATTICE_OUT/<name>, then ./out/<name>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, env = "NHLATTICE_OUT", hide_env_values = true)]
    out_root: Option<PathBuf>,
}

fn load(c: &Common) -> Result<(RunConfig, String), ConfigError> {
    match (&c.preset, &c.config) {
        (Some(name), _) => Ok((harness::preset(name)?, name.clone())),
        (None, Some(path)) => {
            let cfg = RunConfig::from_path(path)?;
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
            Ok((cfg, stem))
        }
        (None, None) => unreachable!("clap requires one of --config/--preset"),
    }
}

fn check_subcommand(cmd: &Command, cfg: &RunConfig) -> Result<(), String> {
    let ok = match cmd {
        Command::Scatter(_) => cfg.experiment == Experiment::Scatter,
        Command::Evolve(_) => cfg.experiment.is_evolution(),
        Command::PtSpectrum(_) => cfg.experiment == Experiment::Spectrum,
        Command::Sweep(_) => cfg.sweep.is_some(),
        Command::Run(_) => true,
    };
    if ok {
        return Ok(());
    }
    let name = match cmd {
        Command::Scatter(_) => "scatter",
        Command::Evolve(_) => "evolve",
        Command::PtSpectrum(_) => "pt-spectrum",
        Command::Sweep(_) => "sweep",
        Command::Run(_) => "run",
    };
    Err(format!("subcommand `{name}` cannot run experiment `{}`{}", cfg.experiment, if name == "sweep" { " without a [sweep] table" } else { "" }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Scatter(c) | Command::Evolve(c) | Command::PtSpectrum(c) | Command::Sweep(c) | Command::Run(c) => c,
    };
    let (cfg, name) = match load(common) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(msg) = check_subcommand(&cli.command, &cfg) {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| common.out_root.as_ref().map(|r| r.join(&name)))
        .unwrap_or_else(|| PathBuf::from("out").join(&name));
    match harness::run(&cfg, &out, common.workers) {
        Ok(o) => {
            println!("wrote {} files to {}\n{:#}", o.files.len(), o.output_dir.display(), o.summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
