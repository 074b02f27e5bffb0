//! Command-line front end: simulate data, fit chains, run the recovery
//! study, check the sampler against the small-instance oracle, and
//! summarize trace files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use epl_core::diagnostics::{export_traces, import_traces, summarize_posterior, PosteriorSummary};
use epl_core::experiments::{
    compare_with_oracle, exact_rho_posterior_oracle, recovery_experiment, simulate_dataset,
    OracleComparison, OracleEstimate, RecoveryReport, DESK_GRID, FULL_GRID,
};
use epl_core::io::{
    load_dataset, write_dataset, write_json, write_recovery_cells, write_recovery_replications,
    write_summary, ChainReport, DataFormat, DataSource, RunManifest, SummaryFile,
};
use epl_core::model::Dataset;
use epl_core::perm::ReferenceOrder;
use epl_core::sampler::{chain_rng, run_chain, Chain, ChainConfig, SwapRule};

#[derive(Parser)]
#[command(
    name = "epl",
    version,
    about = "Bayesian EPL ranking model with a top-or-bottom reference order"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset and write it with its true parameters.
    Simulate(SimulateArgs),
    /// Run MCMC chains on a dataset; write traces and a pooled summary.
    Fit(FitArgs),
    /// Simulate-and-fit study of reference-order recovery.
    Recovery(RecoveryArgs),
    /// Compare the chain's reference-order marginal with the oracle.
    OracleCheck(OracleArgs),
    /// Recompute a summary from trace files.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct ChainArgs {
    /// Total sweeps per chain.
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
    /// Sweeps discarded before recording.
    #[arg(long, default_value_t = 2_000)]
    burnin: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dirichlet concentration scale of the joint proposal.
    #[arg(long, default_value_t = 50.0)]
    alpha0: f64,
    /// Floor of the stagewise bottom-selection probability.
    #[arg(long, default_value_t = 0.1)]
    h: f64,
    /// Top-selection probability at the first stage.
    #[arg(long, default_value_t = 0.5)]
    lambda1: f64,
    /// Gamma prior shape.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Gamma prior rate.
    #[arg(long, default_value_t = 1.0)]
    d: f64,
    /// Monte Carlo draws per expected-frequency table [default: N].
    #[arg(long)]
    mc_size: Option<usize>,
    #[arg(long, value_enum, default_value_t = SwapArg::Posterior)]
    swap_rule: SwapArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum SwapArg {
    Posterior,
    ProposalWeighted,
}

impl ChainArgs {
    fn config(&self) -> Result<ChainConfig> {
        let config = ChainConfig {
            iterations: self.iters,
            burn_in: self.burnin,
            c: self.c,
            d: self.d,
            alpha0: self.alpha0,
            h: self.h,
            lambda1: self.lambda1,
            mc_size: self.mc_size,
            seed: self.seed,
            swap_rule: match self.swap_rule {
                SwapArg::Posterior => SwapRule::Posterior,
                SwapArg::ProposalWeighted => SwapRule::ProposalWeighted,
            },
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long = "K")]
    k: usize,
    #[arg(long = "N")]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for data.csv and truth.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// CSV file with one ordering or ranking per row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = DataFormat::Ordering)]
    format: DataFormat,
    #[arg(long, default_value_t = 4)]
    chains: usize,
    #[command(flatten)]
    chain: ChainArgs,
    /// Output directory for traces and summary.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// K in {5, 10}, N in {50, 200, 1000}.
    Desk,
    /// K in {5, 10, 20}, N in {50, 200, 1000, 10000}.
    Full,
}

#[derive(Args)]
struct RecoveryArgs {
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    /// Explicit grid such as `5x200,10x200`; overrides the preset.
    #[arg(long, value_delimiter = ',', value_parser = parse_cell)]
    grid: Vec<(usize, usize)>,
    /// Replications per grid cell.
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long = "K", default_value_t = 3)]
    k: usize,
    #[arg(long = "N", default_value_t = 10)]
    n: usize,
    /// Prior draws used by the oracle.
    #[arg(long, default_value_t = 1_000_000)]
    draws: usize,
    #[arg(long, default_value_t = 4)]
    chains: usize,
    /// Pass threshold on combined standard errors per order.
    #[arg(long, default_value_t = 3.0)]
    tolerance: f64,
    #[command(flatten)]
    chain: ChainArgs,
    /// Optional output directory for oracle.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Trace CSV files; samples are pooled.
    #[arg(long = "trace", required = true, num_args = 1..)]
    traces: Vec<PathBuf>,
    /// Output JSON path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_cell(s: &str) -> Result<(usize, usize), String> {
    let (k, n) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("grid cell {s:?} is not of the form KxN"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| format!("grid cell {s:?} is not of the form KxN"))
    };
    Ok((parse(k)?, parse(n)?))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

#[derive(Serialize)]
struct Truth<'a> {
    rho: &'a ReferenceOrder,
    w_code: String,
    p: &'a [f64],
    manifest: RunManifest,
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let sim = simulate_dataset(args.k, args.n, &mut chain_rng(args.seed, 0))?;
    create_dir(&args.out)?;
    let manifest = RunManifest {
        source: DataSource::Simulation {
            k: args.k,
            n: args.n,
            seed: args.seed,
        },
        config: ChainConfig::default(),
        chains: 1,
        output_dir: args.out.clone(),
    };
    write_dataset(&sim.dataset, args.out.join("data.csv"))?;
    write_json(
        &Truth {
            rho: &sim.rho,
            w_code: sim.rho.bits(),
            p: sim.p.as_slice(),
            manifest,
        },
        args.out.join("truth.json"),
    )?;
    println!(
        "wrote {} orderings of {} items to {}",
        args.n,
        args.k,
        args.out.display()
    );
    Ok(())
}

/// Chains `0..chains` seeded with `seed + index`, in parallel.
fn run_chains(dataset: &Dataset, config: &ChainConfig, chains: usize) -> Result<Vec<Chain>> {
    if chains == 0 {
        bail!("at least one chain is needed");
    }
    let chains = (0..chains as u64)
        .into_par_iter()
        .map(|i| run_chain(dataset, config, None, &mut chain_rng(config.seed, i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(chains)
}

fn fit(args: FitArgs) -> Result<()> {
    let config = args.chain.config()?;
    let manifest = RunManifest {
        source: DataSource::File {
            path: args.data.clone(),
            format: args.format,
        },
        config: config.clone(),
        chains: args.chains,
        output_dir: args.out.clone(),
    };
    manifest.validate()?;
    let dataset = load_dataset(&args.data, args.format)?;
    let chains = run_chains(&dataset, &config, args.chains)?;

    create_dir(&args.out)?;
    let mut per_chain = Vec::with_capacity(chains.len());
    for (i, chain) in chains.iter().enumerate() {
        export_traces(
            &chain.samples,
            args.out.join(format!("trace_chain{}.csv", i + 1)),
        )?;
        per_chain.push(ChainReport {
            chain: i + 1,
            seed: config.seed.wrapping_add(i as u64),
            joint_acceptance: chain.acceptance.joint_rate(),
            swap_acceptance: chain.acceptance.swap_rate(),
            summary: summarize_posterior(&chain.samples)?,
        });
    }
    let pooled: Vec<_> = chains
        .iter()
        .flat_map(|c| c.samples.iter().cloned())
        .collect();
    let summary = summarize_posterior(&pooled)?;
    print_summary(&summary);
    write_json(&manifest, args.out.join("manifest.json"))?;
    write_summary(
        &SummaryFile {
            summary,
            seed: config.seed,
            manifest,
            per_chain,
        },
        args.out.join("summary.json"),
    )?;
    Ok(())
}

fn print_summary(summary: &PosteriorSummary) {
    println!("top reference orders ({} samples):", summary.samples);
    for row in summary.rho_table.iter().take(5) {
        println!(
            "  {:<24} {}  {:.4}",
            row.rho.to_string(),
            row.w_code,
            row.prob
        );
    }
    let p: Vec<String> = summary.p_mean.iter().map(|x| format!("{x:.4}")).collect();
    println!("posterior mean of p/sum(p): ({})", p.join(","));
    println!("modal ordering: {}", summary.modal_ordering);
}

#[derive(Serialize)]
struct RecoveryFile<'a> {
    grid: &'a [(usize, usize)],
    replications: usize,
    seed: u64,
    config: &'a ChainConfig,
    reports: &'a [RecoveryReport],
}

fn recovery(args: RecoveryArgs) -> Result<()> {
    let config = args.chain.config()?;
    let grid: Vec<(usize, usize)> = if args.grid.is_empty() {
        match args.preset {
            Preset::Desk => DESK_GRID.to_vec(),
            Preset::Full => FULL_GRID.to_vec(),
        }
    } else {
        args.grid.clone()
    };
    let reports = recovery_experiment(&grid, args.reps, &config, config.seed)?;

    create_dir(&args.out)?;
    println!("(K,N)         d_kendall  mode mass  % recovered");
    for r in &reports {
        let mass = r
            .mean_mode_mass
            .map_or("-".to_string(), |m| format!("{m:.2}"));
        println!(
            "{:<13} {:>9.2}  {:>9}  {:>11.0}",
            format!("({},{})", r.k, r.n),
            r.mean_normalized_kendall,
            mass,
            r.percent_recovered
        );
    }
    write_json(
        &RecoveryFile {
            grid: &grid,
            replications: args.reps,
            seed: config.seed,
            config: &config,
            reports: &reports,
        },
        args.out.join("recovery.json"),
    )?;
    write_recovery_cells(&reports, args.out.join("recovery_cells.csv"))?;
    write_recovery_replications(&reports, args.out.join("recovery_replications.csv"))?;
    Ok(())
}

#[derive(Serialize)]
struct OracleFile<'a> {
    manifest: RunManifest,
    oracle: &'a OracleEstimate,
    comparison: &'a OracleComparison,
}

fn oracle_check(args: OracleArgs) -> Result<()> {
    let config = args.chain.config()?;
    let sim = simulate_dataset(args.k, args.n, &mut chain_rng(config.seed, u32::MAX as u64))?;
    let oracle = exact_rho_posterior_oracle(
        args.k,
        sim.dataset.orderings(),
        &config,
        args.draws,
        &mut chain_rng(config.seed, u32::MAX as u64 + 1),
    )?;
    let chains = run_chains(&sim.dataset, &config, args.chains)?;
    let samples: Vec<_> = chains.into_iter().map(|c| c.samples).collect();
    let comparison = compare_with_oracle(&samples, &oracle, args.tolerance)?;

    println!("rho            oracle (se)          chain (se)           z");
    for cell in &comparison.cells {
        println!(
            "{:<14} {:.4} ({:.4})      {:.4} ({:.4})      {:+.2}",
            cell.rho.to_string(),
            cell.oracle,
            cell.oracle_se,
            cell.mcmc,
            cell.mcmc_se,
            cell.z
        );
    }
    if let Some(out) = &args.out {
        create_dir(out)?;
        let manifest = RunManifest {
            source: DataSource::Simulation {
                k: args.k,
                n: args.n,
                seed: config.seed,
            },
            config: config.clone(),
            chains: args.chains,
            output_dir: out.clone(),
        };
        write_json(
            &OracleFile {
                manifest,
                oracle: &oracle,
                comparison: &comparison,
            },
            out.join("oracle.json"),
        )?;
    }
    if !comparison.passed {
        bail!(
            "chain and oracle disagree by more than {} standard errors",
            comparison.tolerance
        );
    }
    println!(
        "chain agrees with the oracle within {} standard errors",
        comparison.tolerance
    );
    Ok(())
}

fn summarize(args: SummarizeArgs) -> Result<()> {
    let mut samples = Vec::new();
    for path in &args.traces {
        samples.extend(import_traces(path)?);
    }
    let summary = summarize_posterior(&samples)?;
    match &args.out {
        Some(path) => {
            write_json(&summary, path)?;
            print_summary(&summary);
        }
        None => println!("{}", serde_json::to_string_pretty(&summary)?),
    }
    Ok(())
}

/// The error chain on one line, skipping causes already spelled out by the
/// message above them.
fn one_line(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg.replace('\n', " ")
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Recovery(a) => recovery(a),
        Command::OracleCheck(a) => oracle_check(a),
        Command::Summarize(a) => summarize(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // help and version requests
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("epl: {}", line.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("epl: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}
