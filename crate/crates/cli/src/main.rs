use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use rydfb_scenario::config::{load_document, merge};
use rydfb_scenario::run::{to_json_text, write_error, write_run};
use rydfb_scenario::verify::{default_omegas, default_rabis, parse_n_range};
use rydfb_scenario::{
    presets, resolve_runs, resolve_sweep, run_scenario, run_sweep, run_verification, CliError,
};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "rydfb",
    version,
    about = "Quantum-jump feedback stabilization of Rydberg entanglement"
)]
struct Cli {
    /// Directory for CSV and JSON outputs.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Master seed for trajectory ensembles.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the cavity Fock-space dimension.
    #[arg(long, global = true)]
    fock_dim: Option<usize>,
    /// Allow scenarios marked slow.
    #[arg(long, global = true)]
    slow: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a JSON scenario file.
    Run { scenario: String },
    /// Sweep final fidelity over a parameter grid.
    Sweep { scenario: String },
    /// Check the closed-form steady state against the reduced generator.
    Verify {
        /// Atom number or inclusive range, e.g. `2..8`.
        #[arg(long, default_value = "2..8")]
        n: String,
        /// Feedback angles (radians), comma separated.
        #[arg(long, value_delimiter = ',')]
        omegas: Option<Vec<f64>>,
        /// Drive strengths in units of Γ, comma separated.
        #[arg(long, value_delimiter = ',')]
        rabis: Option<Vec<f64>>,
    },
    /// List the built-in presets.
    List,
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io {
        path: path.into(),
        source: e,
    })
}

fn cmd_run(cli: &Cli, arg: &str) -> Result<ExitCode, CliError> {
    let mut doc = load_document(arg)?;
    if let Some(n) = cli.fock_dim {
        merge(&mut doc, &json!({ "params": { "fock_dim": n } }));
    }
    let runs = resolve_runs(&doc)?;
    if let Some(r) = runs.iter().find(|r| r.slow && !cli.slow) {
        return Err(CliError::SlowDisabled(r.id.clone()));
    }
    let results: Vec<_> = runs
        .par_iter()
        .map(|r| (r, run_scenario(r, cli.seed)))
        .collect();
    let mut failed = false;
    for (r, res) in results {
        match res {
            Ok(out) => {
                write_run(&cli.out, &out)?;
                println!(
                    "{}: fidelity {:.6} at t = {}",
                    r.id, out.summary.final_fidelity, out.summary.final_time
                );
            }
            Err(e) => {
                log::error!("{}: {e}", r.id);
                write_error(&cli.out, &r.id, &e)?;
                failed = true;
            }
        }
    }
    Ok(if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_sweep(cli: &Cli, arg: &str) -> Result<ExitCode, CliError> {
    let mut doc = load_document(arg)?;
    if let Some(n) = cli.fock_dim {
        merge(
            &mut doc,
            &json!({ "base": { "params": { "fock_dim": n } } }),
        );
    }
    let cfg = resolve_sweep(&doc)?;
    if cfg.base.slow && !cli.slow {
        return Err(CliError::SlowDisabled(cfg.id.clone()));
    }
    let table = run_sweep(&cfg)?;
    write(&cli.out.join(format!("{}.csv", cfg.id)), &table.to_csv())?;
    println!("{}: {} points", cfg.id, table.points.len());
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(
    cli: &Cli,
    n: &str,
    omegas: Option<Vec<f64>>,
    rabis: Option<Vec<f64>>,
) -> Result<ExitCode, CliError> {
    let ns = parse_n_range(n)?;
    let report = run_verification(
        &ns,
        &omegas.unwrap_or_else(default_omegas),
        &rabis.unwrap_or_else(default_rabis),
    )?;
    write(&cli.out.join("verification.json"), &to_json_text(&report)?)?;
    println!(
        "verification: {}/{} cells pass ({} degenerate), max residual {:.3e}",
        report.n_passed, report.n_cells, report.n_degenerate, report.max_residual
    );
    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

fn execute(cli: &Cli) -> Result<ExitCode, CliError> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    if !matches!(cli.command, Command::List) {
        std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Io {
            path: cli.out.clone(),
            source: e,
        })?;
    }
    match &cli.command {
        Command::Run { scenario } => cmd_run(cli, scenario),
        Command::Sweep { scenario } => cmd_sweep(cli, scenario),
        Command::Verify { n, omegas, rabis } => cmd_verify(cli, n, omegas.clone(), rabis.clone()),
        Command::List => {
            for name in presets::RUN_PRESETS {
                let runs = presets::run_preset(name).expect("listed preset");
                let slow = if runs.iter().any(|r| r.slow) {
                    " (slow)"
                } else {
                    ""
                };
                println!(
                    "run   {name}{slow}: {}",
                    runs.iter()
                        .map(|r| r.id.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                );
            }
            for name in presets::SWEEP_PRESETS {
                println!("sweep {name}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
