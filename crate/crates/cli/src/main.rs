use std::path::{Path, PathBuf};
use std::process::ExitCode;

use advcomm_core::harness::output::{write_bound_check, write_run};
use advcomm_core::harness::{run_ablation, run_bound_check, run_sweep, ExperimentConfig};
use advcomm_core::ldpc::read_alist;
use advcomm_core::vuln::analyze;
use advcomm_core::Error;
use clap::{Args, Parser, Subcommand};

/// Minimum adversarial power for classical and learned communication chains.
#[derive(Parser, Debug)]
#[command(name = "advcomm", version)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// SNR sweep of the configured systems and attacks.
    Sweep(RunArgs),
    /// VS attack with and without extra weight on the vulnerable set.
    Ablate(RunArgs),
    /// Measured attack power against the analytic bounds.
    Bounds(RunArgs),
    /// Vulnerability features of a parity-check matrix.
    AnalyzeCode {
        #[arg(long)]
        alist: PathBuf,
        /// Supplies `[vuln]` weights and eps.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write per-step traces as JSON lines.
    #[arg(long)]
    trace: bool,
    /// Overrides the configured output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(config: Option<&Path>) -> Result<ExperimentConfig, Error> {
    match config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn effective(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output = out.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let command = cli.command.unwrap_or(Command::Sweep(RunArgs::default()));
    if cli.print_config {
        let cfg = match &command {
            Command::Sweep(a) | Command::Ablate(a) | Command::Bounds(a) => effective(a)?,
            Command::AnalyzeCode { config, .. } => load(config.as_deref())?,
        };
        print!("{}", cfg.to_toml_string());
        return Ok(());
    }
    match command {
        Command::Sweep(args) => {
            let cfg = effective(&args)?;
            let out = run_sweep(&cfg, args.trace)?;
            for s in &out.summary {
                let ratio = s.ratio_sem_over_sscc.map(|r| format!("  ratio {r:.2}")).unwrap_or_default();
                println!(
                    "{:>5} dB {:<9} {:<4} median ρ* {:.4} [{:.4}, {:.4}] {}/{} reached{ratio}",
                    s.snr_db, s.system, s.attack, s.median_rho, s.q1_rho, s.q3_rho, s.successes, s.frames
                );
            }
            report(&write_run(Path::new(&cfg.output), &out)?);
        }
        Command::Ablate(args) => {
            let cfg = effective(&args)?;
            let out = run_ablation(&cfg, args.trace)?;
            for s in &out.summary {
                println!("{:>5} dB {:<22} {:<6} median ρ* {:.4}", s.snr_db, s.system, s.attack, s.median_rho);
            }
            report(&write_run(Path::new(&cfg.output), &out)?);
        }
        Command::Bounds(args) => {
            let cfg = effective(&args)?;
            let out = run_bound_check(&cfg)?;
            println!(
                "{} rows: {} lower-bound violations, {} upper-bound violations, {} frames with decreased distortion",
                out.rows.len(),
                out.lower_violations,
                out.upper_violations,
                out.distortion_decreases
            );
            report(&write_bound_check(Path::new(&cfg.output), &out)?);
        }
        Command::AnalyzeCode { alist, config } => {
            let cfg = load(config.as_deref())?;
            let text = std::fs::read_to_string(&alist)?;
            let h = read_alist(&text)?;
            print!("{}", analyze(&h, cfg.vuln.weights, cfg.vuln.eps)?.report());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("advcomm: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("advcomm: {e}");
            ExitCode::from(1)
        }
    }
}
