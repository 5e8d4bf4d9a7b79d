use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ratiomi_core::critics::CriticKind;
use ratiomi::gradcheck::{gradcheck_all, GRADCHECK_TOLERANCE};
use ratiomi::oracle_report::{oracle_report, OracleRequest};
use ratiomi::suite::{write_aggregates_csv, write_runs_csv};
use ratiomi::{run_benchmark, run_suite, BenchmarkConfig, HarnessError, Result, SuiteConfig};

#[derive(Parser)]
#[command(name = "ratiomi", version = env!("RATIOMI_VERSION"), about = "Contrastive mutual-information estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one critic and print a JSON report.
    Estimate {
        /// TOML config; defaults apply to missing keys.
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Dotted-key override such as `objective.nu=0.5`; repeatable.
        #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        target_bits: Option<f64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run a suite and write per-run CSV.
    Bench {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Per-run CSV (stdout when absent).
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Seed-aggregate CSV.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Exact quantities for a discrete pair given as JSON (`-` for stdin).
    Oracle {
        input: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every objective family.
    Gradcheck {
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        /// Check through a joint critic instead of a separable one.
        #[arg(long)]
        joint: bool,
        #[arg(long)]
        json: bool,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate { config, mut overrides, steps, seed, target_bits, out } => {
            overrides.extend(steps.map(|v| format!("steps={v}")));
            overrides.extend(seed.map(|v| format!("seed={v}")));
            overrides.extend(target_bits.map(|v| format!("target_mi_bits={v:?}")));
            let config = match config {
                Some(p) => BenchmarkConfig::from_file(&p, &overrides)?,
                None => BenchmarkConfig::from_toml_str("", &overrides)?,
            };
            let result = run_benchmark(&config);
            let report = match &result {
                Ok(r) => r,
                Err(HarnessError::Divergence { partial, .. }) => partial,
                Err(_) => return result.map(|_| ()),
            };
            let mut w = output(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, report)?;
            writeln!(w)?;
            result.map(|_| ())
        }
        Command::Bench { config, overrides, out, summary } => {
            let suite = SuiteConfig::from_file(&config, &overrides)?;
            for (_, c) in suite.cells() {
                c.validate()?;
            }
            let result = run_suite(&suite);
            write_runs_csv(output(out.as_deref())?, &result.rows)?;
            if let Some(p) = summary {
                write_aggregates_csv(File::create(p)?, &result.aggregates)?;
            }
            let failed = result.rows.iter().filter(|r| !r.error.is_empty()).count();
            if failed > 0 {
                eprintln!("{failed} of {} runs failed", result.rows.len());
            }
            Ok(())
        }
        Command::Oracle { input, out } => {
            let mut text = String::new();
            if input.as_os_str() == "-" {
                io::stdin().read_to_string(&mut text)?;
            } else {
                text = std::fs::read_to_string(&input)?;
            }
            let req: OracleRequest = serde_json::from_str(&text)?;
            let report = oracle_report(&req)?;
            let mut w = output(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            Ok(())
        }
        Command::Gradcheck { seeds, joint, json } => {
            let kind = if joint { CriticKind::Joint } else { CriticKind::Separable };
            let rows = gradcheck_all(kind, &(0..seeds).collect::<Vec<_>>())?;
            let mut w = io::stdout().lock();
            if json {
                serde_json::to_writer_pretty(&mut w, &rows)?;
                writeln!(w)?;
            } else {
                for r in &rows {
                    let verdict = if r.pass { "ok" } else { "FAIL" };
                    writeln!(w, "{:<22} seed {:<3} {:<10} max rel err {:.2e}  {verdict}", r.objective, r.seed, r.critic, r.max_rel_err)?;
                }
            }
            match rows.iter().find(|r| !r.pass) {
                Some(r) => Err(HarnessError::Core(ratiomi_core::Error::Numeric(format!(
                    "{} exceeds {GRADCHECK_TOLERANCE:e} (seed {})",
                    r.objective, r.seed
                )))),
                None => Ok(()),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
