mod compare;
mod grid;
mod io;
mod layers;
mod probes;
mod summarize;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sras_core::spd::{DEFAULT_EPS_REG, DEFAULT_EPS_SPD};
use sras_core::summaries::DEFAULT_CHUNK_SIZE;

use crate::io::{InputError, RunConfig};

/// Family-relative sensitivity summaries compared on the SPD manifold.
///
/// Every command reads plain JSON/CSV inputs, writes JSON reports and CSV
/// tables into the output directory and prints a short summary. Outputs
/// carry the run configuration and SHA-256 digests of every input.
#[derive(Parser, Debug)]
#[command(name = "sras", version)]
struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true, env = "SRAS_THREADS")]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, short = 'o', global = true, env = "SRAS_OUT_DIR", default_value = ".")]
    out: PathBuf,

    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Trace-scaled ridge of the SPD lift.
    #[arg(long, global = true, default_value_t = DEFAULT_EPS_REG)]
    eps_reg: f64,

    /// Eigenvalue floor of estimated noise covariances.
    #[arg(long, global = true, default_value_t = DEFAULT_EPS_SPD)]
    eps_spd: f64,

    /// Samples per accumulation chunk.
    #[arg(long, global = true, default_value_t = DEFAULT_CHUNK_SIZE)]
    chunk_size: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the pullback or Fisher summary of a model over a family.
    Summarize(summarize::Args),
    /// Compare two summaries: AIRM distance, S-RAS and certificate factors.
    Compare(compare::Args),
    /// Contrast probes between two groups of summaries, with controls and scores.
    Probes(probes::Args),
    /// Layer-matching harness over a bank of models.
    MatchLayers(layers::Args),
    /// Condition-grid Fisher operators and donor-distinct retrieval.
    GridFisher(grid::Args),
    /// Write synthetic inputs for the other commands.
    #[command(subcommand)]
    Synth(synth::Command),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if !(cli.eps_reg > 0.0) || !(cli.eps_spd > 0.0) {
        return Err(io::input_error("--eps-reg and --eps-spd must be positive"));
    }
    if cli.chunk_size == 0 {
        return Err(io::input_error("--chunk-size must be positive"));
    }
    let config = RunConfig {
        seed: cli.seed,
        eps_reg: cli.eps_reg,
        eps_spd: cli.eps_spd,
        chunk_size: cli.chunk_size,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(io::input_error("--threads must be positive"));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build()?;
    let out = cli.out;
    pool.install(|| match cli.command {
        Command::Summarize(a) => summarize::run(&a, &config, &out),
        Command::Compare(a) => compare::run(&a, &config, &out),
        Command::Probes(a) => probes::run(&a, &config, &out),
        Command::MatchLayers(a) => layers::run(&a, &config, &out),
        Command::GridFisher(a) => grid::run(&a, &config, &out),
        Command::Synth(c) => synth::run(&c, &config, &out),
    })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let user = err.chain().any(|e| {
        e.is::<InputError>() || e.is::<sras_core::Error>() || e.is::<serde_json::Error>()
    });
    if user {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
