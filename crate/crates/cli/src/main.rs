use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pss_sim::{replay, run, CliError, Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "pss-sim", version, about = "LTE PSS detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the three PSS waveforms as CSV and raw IQ.
    GenPss,
    /// Build cluster tables for all three roots.
    Cluster,
    /// Calibrate CFAR thresholds on noise-only search windows.
    Calibrate,
    /// Search a raw IQ stream.
    Detect {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Miss-detection probability versus SNR.
    Pmd,
    /// Acquisition-time CDF in TU6 fading.
    Acq,
    /// Per-sample operation counts.
    BenchOps,
    /// Rerun a manifest and verify its file hashes.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let command = match cli.command {
        Cmd::Replay { manifest } => {
            let report = replay(&manifest, cli.overrides.output_dir.as_deref())?;
            for f in &report.matched {
                println!("ok       {f}");
            }
            for f in &report.mismatched {
                println!("MISMATCH {f}");
            }
            return if report.mismatched.is_empty() {
                Ok(())
            } else {
                Err(CliError::Runtime(format!("{} file(s) differ", report.mismatched.len())))
            };
        }
        Cmd::GenPss => Command::GenPss,
        Cmd::Cluster => Command::Cluster,
        Cmd::Calibrate => Command::Calibrate,
        Cmd::Detect { .. } => Command::Detect,
        Cmd::Pmd => Command::Pmd,
        Cmd::Acq => Command::Acq,
        Cmd::BenchOps => Command::BenchOps,
    };
    let mut config = RunConfig::resolve(&cli.overrides)?;
    if let Cmd::Detect { input: Some(p) } = &cli.command {
        config.input = Some(p.clone());
    }
    let manifest = run(command, &config)?;
    for f in &manifest.files {
        println!("{}", config.output_dir.join(&f.path).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
