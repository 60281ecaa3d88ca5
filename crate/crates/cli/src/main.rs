use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qrabi_cli::commands;
use qrabi_cli::validate::run_suite;
use qrabi_cli::{CliError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "qrabi", version, about = "Multi-mode quantum Rabi spectroscopy of a flux qubit")]
struct Cli {
    /// Config file (flat key = value text). Defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Seed for randomized checks.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Worker threads for flux-point parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Labeled transition frequencies over the flux grid (CSV).
    Transitions,
    /// Photon-dressed Bloch-Siegert shift against flux (CSV).
    BsShift,
    /// Synthetic two-tone spectrum (CSV).
    Spectrum,
    /// Fit qubit and coupling parameters to a peak list (JSON).
    Fit {
        #[arg(long)]
        peaks: PathBuf,
    },
    /// Fit a thermal photon distribution to line depths (JSON).
    FitThermal {
        #[arg(long)]
        depths: PathBuf,
    },
    /// Smallest converged truncation per mode (JSON).
    Converge,
    /// Run the invariant suite and report PASS/FAIL per check.
    Validate,
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut cfg = RunConfig::parse_with_env(&text, std::env::vars())?;
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(cfg: &RunConfig, bytes: &[u8]) -> Result<(), CliError> {
    match &cfg.out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| CliError::Input(format!("{path}: {e}"))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    if cli.print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Input(e.to_string()))?;
    pool.install(|| {
        let bytes = match &cli.command {
            Command::Transitions => commands::cmd_transitions(&cfg)?,
            Command::BsShift => commands::cmd_bs_shift(&cfg)?,
            Command::Spectrum => commands::cmd_spectrum(&cfg)?,
            Command::Fit { peaks } => commands::cmd_fit(&cfg, &peaks.to_string_lossy())?,
            Command::FitThermal { depths } => commands::cmd_fit_thermal(&depths.to_string_lossy())?,
            Command::Converge => commands::cmd_converge(&cfg)?,
            Command::Validate => {
                let outcomes = run_suite(&cfg, cli.seed);
                let mut report = String::new();
                for o in &outcomes {
                    report.push_str(&o.to_string());
                    report.push('\n');
                }
                emit(&cfg, report.as_bytes())?;
                let failed = outcomes.iter().filter(|o| !o.passed).count();
                return if failed == 0 { Ok(()) } else { Err(CliError::ValidationFailed(failed)) };
            }
        };
        emit(&cfg, &bytes)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
