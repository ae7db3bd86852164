mod config;
mod run;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use config::{ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "kspl", version, about = "Deep Kolmogorov and deep splitting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (overrides `out` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides `seed` in the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the built-in initial conditions and nonlinearities.
    Catalog,
}

const EXIT_FAILED_CHECK: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return EXIT_VALIDATION;
    }
    match err.downcast_ref::<kspl_core::Error>() {
        Some(e) if e.is_numerical_guard() => EXIT_NUMERICAL,
        Some(
            kspl_core::Error::Architecture(_)
            | kspl_core::Error::Dimension { .. }
            | kspl_core::Error::InvalidArgument(_)
            | kspl_core::Error::Parse { .. }
            | kspl_core::Error::NotAvailable(_),
        ) => EXIT_VALIDATION,
        _ => 1,
    }
}

fn print_catalog() -> std::io::Result<()> {
    let mut out = std::io::stdout().lock();
    for e in kspl_core::catalog::list_catalog() {
        writeln!(out, "{:<4} {:<14} {}", e.kind, e.name, e.formula)?;
        writeln!(out, "     params: {}", e.params)?;
        writeln!(out, "     example: {}", e.example)?;
    }
    Ok(())
}

fn run(config: PathBuf, out: Option<PathBuf>, seed: Option<u64>, threads: Option<usize>) -> anyhow::Result<bool> {
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("kspl-out"));
    cfg.out = Some(dir.clone());
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(ConfigError("--threads must be >= 1".into()).into());
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    log::info!("running {:?} with seed {} into {}", cfg.kind, cfg.seed, dir.display());
    let outcome = pool.install(|| run::execute(&cfg, &dir))?;
    let manifest = run::manifest(&cfg, &outcome);
    std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KSPL_LOG", "info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Catalog => {
            // A closed pipe (e.g. `kspl catalog | head`) is not an error.
            let _ = print_catalog();
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => match run(config, out, seed, threads) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => {
                eprintln!("error: some checks failed; see the output tables");
                ExitCode::from(EXIT_FAILED_CHECK)
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(exit_code(&e))
            }
        },
    }
}
