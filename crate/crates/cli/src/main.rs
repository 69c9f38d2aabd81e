//! `slicesim` command line: run plans, sweep them, validate scenario files
//! and rebuild reports.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use slicesim::harness::{self, ExperimentPlan, Scheduler};
use slicesim::ScenarioConfig;

#[derive(Parser)]
#[command(name = "slicesim", version, about = "eMBB/URLLC puncturing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a plan's base scenario for each seed.
    Run(PlanArgs),
    /// Run every sweep point of a plan for each seed.
    Sweep(PlanArgs),
    /// Check a scenario file and print it with defaults filled in.
    Validate {
        config: PathBuf,
    },
    /// Recompute summaries and plots for every run below a directory.
    Report {
        dir: PathBuf,
        /// Reliability thresholds in Mbit/s.
        #[arg(long, value_delimiter = ',', default_value = "1,1.5,2,2.5", env = "SLICESIM_R_MIN")]
        r_min: Vec<f64>,
    },
}

#[derive(Args)]
struct PlanArgs {
    plan: PathBuf,
    /// Replace the plan's seed list with a single seed.
    #[arg(long, env = "SLICESIM_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "SLICESIM_SLOTS")]
    slots: Option<u64>,
    #[arg(
        long,
        env = "SLICESIM_SCHEDULER",
        value_parser = ["drra", "pgacl", "sum-rate", "sum-log", "lmcs", "equal"]
    )]
    scheduler: Option<String>,
    #[arg(long, env = "SLICESIM_OUT")]
    out: Option<PathBuf>,
    /// Parallel runs (0 = all cores).
    #[arg(long, env = "SLICESIM_WORKERS")]
    workers: Option<usize>,
}

impl PlanArgs {
    fn load(&self) -> Result<ExperimentPlan> {
        let mut plan =
            ExperimentPlan::load(&self.plan).with_context(|| format!("loading plan {}", self.plan.display()))?;
        if let Some(s) = self.seed {
            plan.seeds = vec![s];
        }
        if let Some(n) = self.slots {
            plan.slots = n;
        }
        if let Some(s) = &self.scheduler {
            plan.scheduler = s.parse::<Scheduler>()?;
        }
        if let Some(o) = &self.out {
            plan.out = o.clone();
        }
        if let Some(w) = self.workers {
            plan.workers = w;
        }
        Ok(plan)
    }
}

fn run(args: &PlanArgs, sweep: bool) -> Result<()> {
    let plan = args.load()?;
    let runs = harness::run_experiment(&plan, sweep)?;
    for r in &runs {
        let shown = r.warnings.len().min(5);
        for w in &r.warnings[..shown] {
            eprintln!("warning: {w}");
        }
        if r.warnings.len() > shown {
            eprintln!("warning: {} more solver warnings in {}", r.warnings.len() - shown, r.dir.display());
        }
        println!(
            "{}  seed {}  {} slots  {:.2} s  config {}",
            r.dir.display(),
            r.manifest.seed,
            r.manifest.slots,
            r.manifest.wall_time_s,
            r.manifest.config_hash
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a, false),
        Command::Sweep(a) => run(a, true),
        Command::Validate { config } => ScenarioConfig::load(config)
            .and_then(|c| c.validate().map(|_| c))
            .map(|c| print!("{}", c.to_toml_string()))
            .with_context(|| format!("validating {}", config.display())),
        Command::Report { dir, r_min } => harness::report(dir, r_min).map(|runs| {
            for (d, lanes) in runs {
                for s in lanes {
                    println!(
                        "{}  {:<10} rate {:8.2} Mbit/s  std {:6.2}  jain {:.3}  outage {:.4}",
                        d.display(),
                        s.lane,
                        s.mean_sum_rate_mbps,
                        s.std_sum_rate_mbps,
                        s.mean_jain,
                        s.outage_rate
                    );
                }
            }
        })
        .map_err(Into::into),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
