//! `cmalab`: solve the complex Monge-Ampère Dirichlet problem on a grid and
//! run the regularity diagnostics.
//!
//! Exit codes: 0 pass, 1 diagnostic failure, 2 non-convergence, 3 invalid
//! configuration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{config_err, CmdResult};
use config::Config;

#[derive(Parser)]
#[command(name = "cmalab", version, about = "Complex Monge-Ampère grid laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// JSON configuration file.
    config: PathBuf,
    /// Overrides `threads`; more than one switches the solver to red-black sweeps.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides `outdir`.
    #[arg(long)]
    outdir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve and write u.csv, residual.csv, sweeps.csv and metadata.json.
    Solve(ConfigArgs),
    /// Strict plurisubharmonicity, barriers and the psh constant; writes domain_report.json.
    CheckDomain(ConfigArgs),
    /// Solve, then verify the modulus estimates; writes regularity_report.json and modulus.csv.
    Regularity(ConfigArgs),
    /// Build a defining function from a solution; writes rho_new.csv and extract_report.json.
    ExtractRho(ConfigArgs),
    /// Random-matrix check of the determinant perturbation bound.
    Lemmas {
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Defaults to CMA_SEED.
        #[arg(long)]
        seed: Option<u64>,
        /// Optional JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(args: &ConfigArgs) -> Result<Config, commands::Exit> {
    let mut cfg = Config::load(&args.config).map_err(config_err)?;
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(config_err(anyhow::anyhow!("--threads must be >= 1")));
        }
        cfg.threads = t;
    }
    if let Some(o) = &args.outdir {
        cfg.outdir = o.clone();
    }
    Ok(cfg)
}

fn with_pool(threads: usize, run: impl FnOnce() -> CmdResult + Send) -> CmdResult {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(config_err)?;
    pool.install(run)
}

fn run(cli: Cli) -> CmdResult {
    let configured = |args: &ConfigArgs, cmd: fn(&Config) -> CmdResult| -> CmdResult {
        let cfg = load(args)?;
        with_pool(cfg.threads, || cmd(&cfg))
    };
    match cli.command {
        Command::Solve(a) => configured(&a, commands::cmd_solve),
        Command::CheckDomain(a) => configured(&a, commands::cmd_check_domain),
        Command::Regularity(a) => configured(&a, commands::cmd_regularity),
        Command::ExtractRho(a) => configured(&a, commands::cmd_extract_rho),
        Command::Lemmas { samples, seed, out } => {
            commands::cmd_lemmas(samples, seed.unwrap_or_else(cmalab_core::pairs::seed_from_env), out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let code = match run(Cli::parse()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            e.code
        }
    };
    ExitCode::from(code as u8)
}
