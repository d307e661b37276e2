//! `ctxzoom`: run, sweep, inspect and audit contextual-bandit experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use ctxzoom_core::harness::{
    audit, run_config, AuditChecks, AuditSubject, ExperimentConfig, PolicySnapshot,
};
use ctxzoom_core::space::{covering_number, packing_number, zooming_number};
use ctxzoom_core::EnvironmentInstance;

#[derive(Parser)]
#[command(
    name = "ctxzoom",
    about = "Contextual bandits with similarity information: adaptive-partition algorithms, \
             environment generators and a seeded regret harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment config and print a per-seed summary.
    Run {
        /// JSON experiment config.
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-run a config while sweeping one parameter over a list of values.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Sweep spec `NAME=v1,v2,...`; supported names: T (horizon).
        #[arg(long)]
        param: String,
        /// Optional CSV output path for the sweep table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print covering/packing/zooming numbers of an instance at a radius.
    Oracle {
        /// JSON instance file.
        #[arg(long)]
        instance: PathBuf,
        /// Radius r.
        #[arg(long)]
        r: f64,
    },
    /// Audit an exported state snapshot; exits nonzero on failed checks.
    Check {
        /// JSON snapshot file written by `run` with `write_snapshot`.
        #[arg(long)]
        snapshot: PathBuf,
        /// Run every applicable check.
        #[arg(long)]
        all: bool,
        /// Run a single named check.
        #[arg(long)]
        check: Option<String>,
    },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::Sweep { config, param, out } => cmd_sweep(&config, &param, out.as_deref()),
        Command::Oracle { instance, r } => cmd_oracle(&instance, r),
        Command::Check {
            snapshot,
            all,
            check,
        } => cmd_check(&snapshot, all, check.as_deref()),
    }
}

fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let cfg = ExperimentConfig::from_json(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(path: &std::path::Path) -> Result<ExitCode> {
    let cfg = load_config(path)?;
    let outcomes = run_config(&cfg)?;
    let mut failures = 0usize;
    println!("algorithm={} horizon={}", cfg.algorithm.label(), cfg.horizon);
    for o in &outcomes {
        println!(
            "seed={} total_regret={:.4} avg_regret={:.6} structure_size={}",
            o.seed,
            o.log.total_regret,
            o.log.average_regret(),
            o.log.rows.last().map(|r| r.structure_size).unwrap_or(0)
        );
        if let Some(path) = &o.csv_path {
            println!("  csv: {}", path.display());
        }
        if let Some(path) = &o.snapshot_path {
            println!("  snapshot: {}", path.display());
        }
        if let Some(report) = &o.audit {
            for line in report.render().lines() {
                println!("  {line}");
            }
            if !report.passed() {
                failures += 1;
            }
        }
    }
    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_sweep(path: &std::path::Path, param: &str, out: Option<&std::path::Path>) -> Result<ExitCode> {
    let base = load_config(path)?;
    let (name, values) = param
        .split_once('=')
        .context("sweep spec must look like NAME=v1,v2,...")?;
    let values: Vec<f64> = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(anyhow::Error::from))
        .collect::<Result<_>>()?;
    if name != "T" {
        bail!("unsupported sweep parameter {name:?}; supported: T");
    }
    let mut table = String::from("param,value,seed,total_regret,avg_regret\n");
    for &v in &values {
        let mut cfg = base.clone();
        cfg.horizon = v as usize;
        let outcomes = run_config(&cfg)?;
        for o in &outcomes {
            let line = format!(
                "{name},{v},{},{},{}",
                o.seed,
                o.log.total_regret,
                o.log.average_regret()
            );
            println!("{line}");
            table.push_str(&line);
            table.push('\n');
        }
    }
    if let Some(out) = out {
        std::fs::write(out, table).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(path: &std::path::Path, r: f64) -> Result<ExitCode> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading instance {}", path.display()))?;
    let env = EnvironmentInstance::from_json(&text)?;
    let pairs = env.feasible_pair_points();
    let product = env.product_space();
    println!("feasible_pairs={}", pairs.len());
    println!("covering_number={}", covering_number(product, &pairs, r));
    println!("packing_number={}", packing_number(product, &pairs, r));
    match zooming_number(&env, r) {
        Ok(z) => println!("zooming_number={z}"),
        Err(e) => println!("zooming_number=unavailable ({e})"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(path: &std::path::Path, all: bool, check: Option<&str>) -> Result<ExitCode> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading snapshot {}", path.display()))?;
    let snapshot: PolicySnapshot = serde_json::from_str(&text)?;
    let report = audit(AuditSubject::Snapshot(&snapshot), AuditChecks::all());
    let selected: Vec<_> = match (all, check) {
        (true, _) | (false, None) => report.checks.iter().collect(),
        (false, Some(name)) => {
            let found: Vec<_> = report.checks.iter().filter(|c| c.name == name).collect();
            if found.is_empty() {
                bail!(
                    "unknown check {name:?}; available: {}",
                    report
                        .checks
                        .iter()
                        .map(|c| c.name.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                );
            }
            found
        }
    };
    let mut failed = false;
    for c in selected {
        let status = if c.passed { "pass" } else { "FAIL" };
        let at = c
            .first_violation_round
            .map(|r| format!(" first_violation_round={r}"))
            .unwrap_or_default();
        println!(
            "[{status}] {}: events={} violations={}{}",
            c.name, c.events, c.violations, at
        );
        failed |= !c.passed;
    }
    Ok(if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}
