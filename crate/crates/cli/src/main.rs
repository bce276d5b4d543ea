use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rfsq_cli::commands;

/// Residual finite scalar quantization codec.
#[derive(Debug, Parser)]
#[command(name = "rfsq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Quantize an FTEN file into an RFSQ stream and print metrics as CSV.
    Quantize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        spec: String,
        #[arg(long)]
        output: PathBuf,
        /// Write the CSV row here instead of standard output.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Decode an RFSQ stream back into an FTEN file.
    Dequantize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Per-stage residual statistics as CSV.
    Diagnose {
        /// FTEN input; uniform(-1,1) synthetic data when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        spec: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Fit per-stage scales and print the spec with fitted alphas.
    FitScales {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        spec: String,
    },
    /// Run a benchmark sweep described by a TOML config.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Codebook sizes and rates for a spec.
    Info {
        #[arg(long)]
        spec: String,
        /// Use this file's vector count when amortising side information.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Write a synthetic FTEN file.
    Generate {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "uniform:-1,1")]
        dist: String,
        #[arg(long, default_value_t = 10_000)]
        vectors: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let result = match cli.command {
        Command::Quantize { input, spec, output, csv } => {
            commands::quantize(&input, &spec, &output, csv.as_deref(), &mut out)
        }
        Command::Dequantize { input, output } => commands::dequantize(&input, &output),
        Command::Diagnose { input, spec, seed, csv } => {
            commands::diagnose(input.as_deref(), &spec, seed, csv.as_deref(), &mut out)
        }
        Command::FitScales { input, spec } => commands::fit(&input, &spec, &mut out),
        Command::Benchmark { config, csv } => commands::benchmark(&config, csv.as_deref(), &mut out),
        Command::Info { spec, input } => commands::info(&spec, input.as_deref(), &mut out),
        Command::Generate { output, dist, vectors, dim, seed } => {
            commands::generate(&output, &dist, vectors, dim, seed)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
