//! Experiment driver: generate workloads, run single simulations, sweep
//! parameter grids, and verify policies against the exact oracle.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ceisim::experiment::{
    cell_seed, oracle_check, run_sweep, summarize, Axis, CellParams, OracleCheckSpec, SweepSpec,
    RAW_HEADER,
};
use ceisim::model::BudgetVector;
use ceisim::sim::SimConfig;
use ceisim::workload::{generate_instance, write_trace, LifeMode, TinyParams, TinyShape};
use ceisim::{io as fmt_io, InactiveRule, PolicyKind};

#[derive(Parser)]
#[command(
    name = "ceisim",
    about = "Budget-constrained probe scheduling experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an update stream and profile set, writing both to disk.
    Generate(GenerateArgs),
    /// Run the configured policies once and print per-run CSV rows.
    Run(RunArgs),
    /// Run a parameter sweep and write raw plus aggregated CSV files.
    Sweep(SweepArgs),
    /// Compare every policy against the exact oracle on random tiny instances.
    OracleCheck(OracleCheckArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Key-value config file (W, n, m, K, C, lambda, rank, alpha, beta, ...).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the serialized profile set.
    #[arg(long)]
    profiles_out: PathBuf,
    /// Where to write the update stream.
    #[arg(long)]
    updates_out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run against a previously serialized profile set instead of generating.
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Policy names (e.g. mrsf-p); overrides the config file.
    #[arg(long = "policy")]
    policies: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the resulting schedule (requires exactly one policy).
    #[arg(long)]
    schedule_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sweep axis as name=v1,v2,... (rank, lambda, alpha, beta, C, m, W).
    #[arg(long = "axis")]
    axes: Vec<String>,
    #[arg(long)]
    repeats: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output prefix: writes <prefix>_raw.csv and <prefix>_agg.csv.
    #[arg(long)]
    out: PathBuf,
    /// Run cells one at a time (use when measuring runtimes).
    #[arg(long)]
    serial: bool,
    /// Add the single-interval relaxation bound as a pseudo-policy row.
    #[arg(long)]
    bound: bool,
}

#[derive(Args)]
struct OracleCheckArgs {
    #[arg(long, default_value_t = 100)]
    count: u32,
    #[arg(long, default_value_t = 4)]
    resources: u32,
    #[arg(long, default_value_t = 8)]
    chronons: u32,
    #[arg(long, default_value_t = 5)]
    ceis: u32,
    #[arg(long, default_value_t = 2)]
    profiles: u32,
    /// Instance family: general, rank1-no-overlap, or width1-equal-rank.
    #[arg(long, default_value = "general")]
    shape: String,
    #[arg(long, default_value_t = 2)]
    max_rank: u32,
    #[arg(long, default_value_t = 3)]
    max_width: u32,
    /// CEI size for the width1-equal-rank shape.
    #[arg(long, default_value_t = 2)]
    equal_rank: u32,
    #[arg(long, default_value_t = 1)]
    budget: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Parsed key-value config file plus CLI-level defaults.
struct FileConfig {
    cell: CellParams,
    policies: Vec<PolicyKind>,
    seed: u64,
    repeats: u32,
    medf_inactive: InactiveRule,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            cell: CellParams::table_baseline(),
            policies: PolicyKind::all_variants(),
            seed: 1,
            repeats: 10,
            medf_inactive: InactiveRule::FullLength,
        }
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<FileConfig> {
    let mut cfg = FileConfig::default();
    let Some(path) = path else { return Ok(cfg) };
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected key = value", path.display(), idx + 1);
        };
        let key = key.trim();
        let value = value.trim();
        let parse_u32 = || -> Result<u32> {
            value
                .parse()
                .with_context(|| format!("{}:{}: bad integer '{value}'", path.display(), idx + 1))
        };
        let parse_f64 = || -> Result<f64> {
            value
                .parse()
                .with_context(|| format!("{}:{}: bad number '{value}'", path.display(), idx + 1))
        };
        match key {
            "W" => cfg.cell.window = parse_u32()?,
            "n" => cfg.cell.resources = parse_u32()?,
            "m" => cfg.cell.profiles = parse_u32()?,
            "K" => cfg.cell.chronons = parse_u32()?,
            "C" => cfg.cell.budget = parse_u32()?,
            "lambda" => cfg.cell.intensity = parse_f64()?,
            "rank" => cfg.cell.rank = parse_u32()?,
            "alpha" => cfg.cell.alpha = parse_f64()?,
            "beta" => cfg.cell.beta = parse_f64()?,
            "life" => cfg.cell.life = value.parse::<LifeMode>()?,
            "distinct" => cfg.cell.distinct = parse_bool(value, path, idx + 1)?,
            "fixed_rank" => cfg.cell.fixed_rank = parse_bool(value, path, idx + 1)?,
            "seed" => cfg.seed = value.parse().context("bad seed")?,
            "repeats" => cfg.repeats = parse_u32()?,
            "policy" => cfg.policies = parse_policies(value)?,
            // Sensitivity switch: how m-edf charges not-yet-active siblings.
            "medf_inactive" => {
                cfg.medf_inactive = match value {
                    "full" => InactiveRule::FullLength,
                    "t0" => InactiveRule::LiteralTZero,
                    _ => bail!(
                        "{}:{}: medf_inactive must be 'full' or 't0'",
                        path.display(),
                        idx + 1
                    ),
                }
            }
            other => bail!(
                "{}:{}: unknown config key '{other}'",
                path.display(),
                idx + 1
            ),
        }
    }
    for policy in cfg.policies.iter_mut() {
        policy.medf_inactive = cfg.medf_inactive;
    }
    Ok(cfg)
}

fn parse_bool(value: &str, path: &Path, line: usize) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => bail!("{}:{}: bad boolean '{value}'", path.display(), line),
    }
}

fn parse_policies(value: &str) -> Result<Vec<PolicyKind>> {
    if value.eq_ignore_ascii_case("all") {
        return Ok(PolicyKind::all_variants());
    }
    value
        .split(',')
        .map(|name| Ok(name.trim().parse::<PolicyKind>()?))
        .collect()
}

fn main() -> Result<()> {
    if let Ok(workers) = std::env::var("CEISIM_WORKERS") {
        let workers: usize = workers
            .parse()
            .context("CEISIM_WORKERS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .ok();
    }

    match Cli::parse().command {
        Command::Generate(args) => cmd_generate(args),
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::OracleCheck(args) => cmd_oracle_check(args),
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let cfg = load_config(args.config.as_ref())?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let epoch = cfg.cell.epoch()?;
    let instance = generate_instance(&cfg.cell.workload(), epoch, seed)?;

    fmt_io::write_profile_set(&args.profiles_out, &instance.profiles)?;
    if let Some(updates_out) = &args.updates_out {
        write_trace(updates_out, &instance.updates)?;
    }

    let summary = summarize(&instance.profiles, instance.updates.len());
    println!("updates: {}", summary.updates);
    println!("ceis: {}", summary.ceis);
    println!("eis: {}", summary.eis);
    println!("rank: {}", summary.rank);
    let hist: Vec<String> = summary
        .rank_histogram
        .iter()
        .map(|(size, count)| format!("{size}:{count}"))
        .collect();
    println!("rank_histogram: {}", hist.join(" "));
    println!("width_one: {}", summary.width_one);
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let cfg = load_config(args.config.as_ref())?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let policies = if args.policies.is_empty() {
        cfg.policies.clone()
    } else {
        parse_policies(&args.policies.join(","))?
    };
    if args.schedule_out.is_some() && policies.len() != 1 {
        bail!("--schedule-out needs exactly one --policy");
    }

    let epoch = cfg.cell.epoch()?;
    let profiles = match &args.profiles {
        Some(path) => fmt_io::read_profile_set(path)?,
        None => generate_instance(&cfg.cell.workload(), epoch, seed)?.profiles,
    };
    let budget = BudgetVector::uniform(cfg.cell.budget, epoch);

    println!("{RAW_HEADER}");
    for policy in policies {
        let config = SimConfig::new(epoch, budget.clone(), policy);
        let out = ceisim::run(&config, &profiles)?;
        let c = &cfg.cell;
        let m = &out.metrics;
        println!(
            "{},{},{seed},{},{},{},{},{},{},{},{},{},{},{:.1},{},{}",
            policy.score.name(),
            policy.preemption.suffix(),
            c.chronons,
            c.resources,
            c.profiles,
            c.budget,
            c.intensity,
            c.rank,
            c.alpha,
            c.beta,
            c.window,
            m.gained_completeness,
            m.runtime_per_ei_ns,
            m.captured_ceis,
            m.failed_ceis,
        );
        if let Some(path) = &args.schedule_out {
            fmt_io::write_schedule(path, &out.schedule)?;
        }
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let cfg = load_config(args.config.as_ref())?;
    let mut spec = SweepSpec::new(cfg.cell.clone());
    spec.policies = cfg.policies.clone();
    spec.repeats = args.repeats.unwrap_or(cfg.repeats);
    spec.root_seed = args.seed.unwrap_or(cfg.seed);
    spec.include_bound = args.bound;
    spec.parallel = !args.serial;
    for axis_arg in &args.axes {
        let Some((name, values)) = axis_arg.split_once('=') else {
            bail!("--axis needs the form name=v1,v2,...");
        };
        let axis = Axis::from_name(name.trim())?;
        let values: Vec<f64> = values
            .split(',')
            .map(|v| v.trim().parse::<f64>().context("bad axis value"))
            .collect::<Result<_>>()?;
        spec.axes.push((axis, values));
    }

    let outcome = run_sweep(&spec)?;
    let raw_path = args.out.with_file_name(format!(
        "{}_raw.csv",
        args.out.file_name().unwrap_or_default().to_string_lossy()
    ));
    let agg_path = args.out.with_file_name(format!(
        "{}_agg.csv",
        args.out.file_name().unwrap_or_default().to_string_lossy()
    ));
    fs::write(&raw_path, outcome.raw_csv())?;
    fs::write(&agg_path, outcome.agg_csv())?;
    println!(
        "cells: {} repeats: {} raw_rows: {}",
        outcome.cells.len(),
        spec.repeats,
        outcome.raw.len()
    );
    println!("raw: {}", raw_path.display());
    println!("agg: {}", agg_path.display());
    for (cell, repeat, msg) in &outcome.failures {
        eprintln!("cell {cell} repeat {repeat} failed: {msg}");
    }
    // A fully failed sweep is a hard error; partial failures are reported
    // above and the CSVs still carry every completed run.
    if !outcome.failures.is_empty() && outcome.raw.is_empty() {
        bail!("every sweep cell failed");
    }
    // Example of the derived seeding, useful for replaying one cell.
    if let Some(cell) = outcome.cells.first() {
        println!("first_cell_seed: {}", cell_seed(spec.root_seed, cell, 0));
    }
    Ok(())
}

fn cmd_oracle_check(args: OracleCheckArgs) -> Result<()> {
    let shape = match args.shape.as_str() {
        "general" => TinyShape::General {
            max_rank: args.max_rank,
            max_width: args.max_width,
        },
        "rank1-no-overlap" => TinyShape::Rank1NoOverlap,
        "width1-equal-rank" => TinyShape::WidthOneEqualRank {
            rank: args.equal_rank,
        },
        other => bail!("unknown shape '{other}'"),
    };
    let spec = OracleCheckSpec {
        count: args.count,
        tiny: TinyParams {
            resources: args.resources,
            chronons: args.chronons,
            ceis: args.ceis,
            profiles: args.profiles,
            shape,
        },
        budget: args.budget,
        root_seed: args.seed,
    };
    let outcome = oracle_check(&spec)?;
    fs::write(&args.out, outcome.csv())?;

    let worst = outcome
        .rows
        .iter()
        .map(|r| r.gap)
        .fold(f64::INFINITY, f64::min);
    println!("instances: {}", args.count);
    println!("rows: {}", outcome.rows.len());
    if outcome.rows.is_empty() {
        println!("worst_gap: n/a");
    } else {
        println!("worst_gap: {worst}");
    }
    if let Some(misses) = outcome.optimality_misses {
        println!(
            "rank1_optimality: {}",
            if misses == 0 { "pass".into() } else { format!("fail ({misses} misses)") }
        );
    }
    if let Some(misses) = outcome.equivalence_misses {
        println!(
            "equal_rank_equivalence: {}",
            if misses == 0 { "pass".into() } else { format!("fail ({misses} misses)") }
        );
    }
    for (id, msg) in &outcome.errors {
        eprintln!("instance {id} skipped: {msg}");
    }
    Ok(())
}
