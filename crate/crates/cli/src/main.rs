use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vlcloc_cli::{cmd_evaluate, cmd_simulate, cmd_table1, CliError, TABLE1_FFT_LENS};

#[derive(Parser)]
#[command(name = "vlcloc", version, about = "Visible-light RSS fingerprint localization: simulate, evaluate, tabulate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the site survey and write the fingerprint database.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Database file (default: `[io] db`, else fingerprints.txt).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's root seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train, fuse and evaluate every configured method.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Fingerprint database to evaluate; simulated and written if missing.
        #[arg(long)]
        db: Option<PathBuf>,
        /// Output directory (default: `[io] out_dir`, else results/).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Mean RSS at one grid point for several FFT lengths.
    Table1 {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated FFT lengths.
        #[arg(long, value_delimiter = ',', default_values_t = TABLE1_FFT_LENS)]
        fft_len: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        grid_index: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            println!("{}", cmd_simulate(&config, out.as_deref(), seed)?);
        }
        Command::Evaluate { config, db, out, seed } => {
            let report = cmd_evaluate(&config, db.as_deref(), out.as_deref(), seed)?;
            print!("{}", report.table());
            println!("outputs in {}", report.out_dir.display());
        }
        Command::Table1 {
            config,
            fft_len,
            grid_index,
            seed,
        } => {
            print!("{}", cmd_table1(&config, &fft_len, grid_index, seed)?.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
