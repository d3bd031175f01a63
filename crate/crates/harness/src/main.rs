use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use equidist_harness::acceptance::run_suite;
use equidist_harness::config::ExperimentConfig;
use equidist_harness::record::Record;
use equidist_harness::runs::{self, RunError};
use serde_json::json;

/// Bergman kernels and zeros of random sections for singular metrics.
#[derive(Parser)]
#[command(name = "equidist", version)]
struct Cli {
    /// Configuration file (`key = value` lines); defaults apply otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the global pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Bergman kernel on the grid for each p.
    Kernel,
    /// Dimensions of the L² section spaces.
    Dim,
    /// Deterministic Fubini–Study current errors against the battery.
    ConvergeFs,
    /// Monte Carlo zero ensembles against the battery.
    ConvergeZeros,
    /// Nonzero-resultant fractions of sampled pairs on P¹×P¹.
    Bertini,
    /// The acceptance suite.
    Verify,
    /// Summarizes the records in the output directory.
    Report,
}

fn config(cli: &Cli) -> Result<ExperimentConfig, RunError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn save(rec: &Record, dir: &Path) -> Result<(), RunError> {
    let path = rec.write(dir)?;
    println!("wrote {} (digest {}, {:.1}s)", path.display(), rec.digest(), rec.wall_clock_s);
    if let Some(csv) = runs::summary_csv(rec) {
        let path = dir.join(format!("{}.csv", rec.kind));
        std::fs::write(&path, csv)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn verify(cfg: &ExperimentConfig) -> Result<bool, RunError> {
    let report = run_suite(cfg)?;
    for c in &report.criteria {
        println!("{}", c.line());
    }
    for (threads, d) in &report.digests {
        println!("digest ({threads} workers): {d}");
    }
    let mut rec = Record::new("verify", cfg);
    for c in &report.criteria {
        rec.push(c);
    }
    rec.summary = json!({ "pass": report.pass(), "digests": report.digests });
    rec.wall_clock_s = report.runtime_s;
    save(&rec, &cfg.out)?;
    Ok(report.pass())
}

fn report(dir: &Path) -> Result<(), RunError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(RunError::Precondition(format!("no records in {}", dir.display())));
    }
    for path in paths {
        let text = std::fs::read_to_string(&path)?;
        let rec = Record::parse(&text).map_err(|e| RunError::Numerical(format!("{}: {e}", path.display())))?;
        println!("== {} ({} units, {:.1}s, digest {})", rec.kind, rec.units.len(), rec.wall_clock_s, rec.digest());
        if let Some(csv) = runs::summary_csv(&rec) {
            print!("{csv}");
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool, RunError> {
    let cfg = config(cli)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| RunError::Precondition(format!("thread pool: {e}")))?;
    }
    let rec = match cli.cmd {
        Cmd::Kernel => runs::run_kernel(&cfg)?,
        Cmd::Dim => runs::run_dim(&cfg)?,
        Cmd::ConvergeFs => runs::run_converge_fs(&cfg)?,
        Cmd::ConvergeZeros => runs::run_converge_zeros(&cfg)?,
        Cmd::Bertini => runs::run_bertini(&cfg)?,
        Cmd::Verify => return verify(&cfg),
        Cmd::Report => {
            report(&cfg.out)?;
            return Ok(true);
        }
    };
    save(&rec, &cfg.out)?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                RunError::Config(_) | RunError::Precondition(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
