use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use wncs::error::{Error, Result};
use wncs::harness::{self, config::RunConfig, output};
use wncs::scheduler::SchedulerKind;

#[derive(Parser)]
#[command(name = "wncs", version, about = "Wireless networked control system simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seeded simulation and emit records.csv + summary.json.
    Run(RunArgs),
    /// Run one configuration over a seed range, optionally across several
    /// schedulers, and emit aggregated summaries plus figure data.
    Sweep(SweepArgs),
    /// Run several configurations once each and print a side-by-side table.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scheduler: Option<String>,
    #[arg(long)]
    systems: Option<usize>,
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Seed range `a..b` (half-open) or a single count `n` meaning `0..n`.
    #[arg(long)]
    seeds: String,
    /// Comma-separated scheduler list; defaults to the config's scheduler.
    #[arg(long)]
    schedulers: Option<String>,
    #[arg(long)]
    systems: Option<usize>,
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, num_args = 1.., required = true)]
    configs: Vec<PathBuf>,
}

fn parse_seed_range(text: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let start: u64 = a
            .parse()
            .map_err(|_| Error::Config(format!("bad seed range start '{a}'")))?;
        let end: u64 = b
            .parse()
            .map_err(|_| Error::Config(format!("bad seed range end '{b}'")))?;
        if end <= start {
            return Err(Error::Config(format!("empty seed range '{text}'")));
        }
        (start..end).collect()
    } else {
        let n: u64 = text
            .parse()
            .map_err(|_| Error::Config(format!("bad seed count '{text}'")))?;
        (0..n).collect()
    };
    if seeds.is_empty() {
        return Err(Error::Config("no seeds requested".into()));
    }
    Ok(seeds)
}

fn apply_overrides(
    cfg: &mut RunConfig,
    seed: Option<u64>,
    scheduler: Option<&str>,
    systems: Option<usize>,
    slots: Option<usize>,
    out: Option<PathBuf>,
) -> Result<()> {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(name) = scheduler {
        cfg.scheduler = SchedulerKind::from_str(name)?;
    }
    if let Some(m) = systems {
        cfg.systems = m;
    }
    if let Some(k) = slots {
        cfg.slots = k;
    }
    if let Some(dir) = out {
        cfg.out_dir = Some(dir);
    }
    cfg.validate()
}

fn cmd_run(args: RunArgs) -> Result<bool> {
    let mut cfg = RunConfig::from_toml_file(&args.config)?;
    apply_overrides(
        &mut cfg,
        args.seed,
        args.scheduler.as_deref(),
        args.systems,
        args.slots,
        args.out,
    )?;
    let (summary, records) = harness::run(&cfg)?;
    let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("results"));
    output::emit_results(&out_dir, &summary, &records)?;

    let stable = summary.per_system.iter().filter(|s| s.stable).count();
    println!(
        "scheduler={} systems={} slots={} seed={}: {} stable, {} diverged -> {}",
        summary.scheduler.name(),
        summary.systems,
        summary.slots,
        summary.seed,
        stable,
        summary.per_system.iter().filter(|s| s.diverged).count(),
        out_dir.display()
    );
    Ok(summary.all_diverged())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut cfg = RunConfig::from_toml_file(&args.config)?;
    apply_overrides(&mut cfg, None, None, args.systems, args.slots, args.out)?;
    let seeds = parse_seed_range(&args.seeds)?;
    let kinds: Vec<SchedulerKind> = match &args.schedulers {
        Some(list) => list
            .split(',')
            .map(|s| SchedulerKind::from_str(s.trim()))
            .collect::<Result<Vec<_>>>()?,
        None => vec![cfg.scheduler],
    };

    let mut sweeps = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let mut c = cfg.clone();
        c.scheduler = kind;
        let sweep = harness::sweep(&c, &seeds)?;
        println!(
            "scheduler={} systems={} slots={} seeds={}: served {}",
            sweep.scheduler.name(),
            sweep.systems,
            sweep.slots,
            seeds.len(),
            sweep.served_count
        );
        sweeps.push(sweep);
    }
    let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("results"));
    output::emit_sweeps(&out_dir, &sweeps)?;
    println!("figure data -> {}", out_dir.display());
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    println!(
        "{:<22} {:>7} {:>5} {:>6} {:>8} {:>10} {:>10} {:>10}",
        "scheduler", "systems", "slots", "seed", "stable", "tail|theta|", "rate_u", "rate_d"
    );
    for path in &args.configs {
        let cfg = RunConfig::from_toml_file(path)?;
        let (summary, _) = harness::run(&cfg)?;
        let m = summary.systems as f64;
        let stable = summary.per_system.iter().filter(|s| s.stable).count();
        let tail: f64 = summary.per_system.iter().map(|s| s.tail_mean_theta_abs).sum::<f64>() / m;
        let rate_u: f64 = summary.per_system.iter().map(|s| s.comm_rate_u).sum::<f64>() / m;
        let rate_d: f64 = summary.per_system.iter().map(|s| s.comm_rate_d).sum::<f64>() / m;
        println!(
            "{:<22} {:>7} {:>5} {:>6} {:>8} {:>10.4} {:>10.3} {:>10.3}",
            summary.scheduler.name(),
            summary.systems,
            summary.slots,
            summary.seed,
            format!("{stable}/{}", summary.systems),
            tail,
            rate_u,
            rate_d
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args).map(|all_diverged| {
            if all_diverged {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }),
        Command::Sweep(args) => cmd_sweep(args).map(|_| ExitCode::SUCCESS),
        Command::Compare(args) => cmd_compare(args).map(|_| ExitCode::SUCCESS),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
