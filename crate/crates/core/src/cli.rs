//! The `grassgossip` experiment runner.
//!
//! `run` executes one protocol variant on a scenario preset, a generated
//! instance file, or a ratings CSV, and writes a trace CSV plus a plain-text
//! summary. `gen` writes a synthetic instance to the sparse text format.
//! All randomness derives from `--seed`: instance generation uses the seed
//! itself, agent initialization seed+1, and the slot draws seed+2, so a
//! repeated run is byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::completion::{solve_weights, test_error, SparseObservations};
use crate::datagen::{self, SyntheticSpec};
use crate::error::{Error, Result};
use crate::gossip::{self, AgentState, ProtocolConfig, Variant};
use crate::grassmann::random_point;
use crate::ingest;
use crate::metrics::{self, RunTrace};

#[derive(Parser, Debug)]
#[command(
    name = "grassgossip",
    version,
    about = "Decentralized low-rank matrix completion by gossip on the Grassmann manifold"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one gossip completion experiment and write trace + summary files.
    Run(RunArgs),
    /// Generate a synthetic instance file in the sparse text format.
    Gen(GenArgs),
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Scenario preset: case1-small, case2-small, case3-small, case5-small.
    /// case5-small additionally needs --data with a ratings CSV.
    #[arg(long)]
    pub scenario: Option<String>,

    /// Input data: a ratings CSV (header userId,movieId,rating,timestamp) or
    /// an instance file written by `gen`. Omitted: the scenario's synthetic
    /// instance is generated in memory.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Protocol variant: online, precon-online, parallel, precon-parallel,
    /// dynamic. Default: the scenario's variant, or online.
    #[arg(long)]
    pub variant: Option<String>,

    /// Number of agents. Default: the scenario's agent count (6; 4 for
    /// case5-small and ratings files).
    #[arg(long)]
    pub agents: Option<usize>,

    /// Subspace dimension r. Default: the scenario or instance-file rank (5).
    #[arg(long)]
    pub rank: Option<usize>,

    /// Completion/consensus trade-off weight. Default: the scenario's rho
    /// (1e3 for case1-3; case5-small uses 1e4, or 1e7 with --xl).
    #[arg(long)]
    pub rho: Option<f64>,

    /// Initial stepsize gamma0 of the schedule gamma0/t. Preset defaults are
    /// tuned for the preset rho; override it when overriding --rho.
    #[arg(long)]
    pub gamma0: Option<f64>,

    /// Comma-separated gamma0 candidates; every candidate is run and the one
    /// with the lowest final mean train cost is kept.
    #[arg(long, conflicts_with = "gamma0")]
    pub gamma0_grid: Option<String>,

    /// Weight-solve regularization. Default: 1e-8 times the mean squared
    /// observed training value.
    #[arg(long)]
    pub reg: Option<f64>,

    /// Time slots (rounds for the parallel variants). Default: the
    /// scenario's budget (1000 online, 400 parallel).
    #[arg(long)]
    pub slots: Option<u64>,

    /// Master seed for data generation, splits, initialization, and draws.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Record a trace row every this many slots (slots 1 and the final slot
    /// are always recorded).
    #[arg(long, default_value_t = 10)]
    pub trace_every: u64,

    /// Held-out fraction used when splitting ratings data (and the
    /// test/train ratio of generated scenarios).
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,

    /// Use the scenario's full paper-scale dimensions instead of desk scale.
    /// Not intended for CI; expect minutes to hours.
    #[arg(long, default_value_t = false)]
    pub xl: bool,

    /// Trace CSV output path.
    #[arg(long, default_value = "trace.csv")]
    pub out: PathBuf,

    /// Summary text output path. Default: <out>.summary.txt.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct GenArgs {
    /// Scenario preset to materialize (case1-small, case2-small,
    /// case3-small); alternatively give explicit dimensions.
    #[arg(long)]
    pub scenario: Option<String>,

    #[arg(long, default_value_t = 100)]
    pub m: usize,

    #[arg(long, default_value_t = 400)]
    pub n: usize,

    #[arg(long, default_value_t = 5)]
    pub rank: usize,

    /// Over-sampling ratio |train| / (mr + nr - r^2).
    #[arg(long, default_value_t = 6.0)]
    pub os: f64,

    /// Gaussian noise added to training entries.
    #[arg(long, default_value_t = 1e-6)]
    pub noise_std: f64,

    /// Optional condition number; singular values then decay exponentially
    /// from 1 to 1/cond.
    #[arg(long)]
    pub cond: Option<f64>,

    #[arg(long, default_value_t = 6)]
    pub agents: usize,

    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    #[arg(long, default_value_t = false)]
    pub xl: bool,

    #[arg(long, default_value = "instance.txt")]
    pub out: PathBuf,
}

/// Scenario presets, desk-scaled; --xl switches to the paper-scale sizes.
struct Preset {
    name: &'static str,
    m: usize,
    n: usize,
    xl_m: usize,
    xl_n: usize,
    r: usize,
    os: f64,
    noise_std: f64,
    cond: Option<f64>,
    n_agents: usize,
    variant: Variant,
    slots: u64,
    rho: f64,
    xl_rho: f64,
    gamma0: f64,
    needs_data: bool,
    /// Rescale generated values by sqrt(m*n), the natural scale of a
    /// Gaussian rank-r product; the conditioned generator normalizes to
    /// sigma_1 = 1, which would dwarf the completion term at the preset rho.
    natural_scale: bool,
}

const PRESETS: &[Preset] = &[
    Preset {
        name: "case1-small",
        m: 500,
        n: 5000,
        xl_m: 10_000,
        xl_n: 100_000,
        r: 5,
        os: 6.0,
        noise_std: 1e-6,
        cond: None,
        n_agents: 6,
        variant: Variant::Online,
        slots: 1000,
        rho: 1e3,
        xl_rho: 1e3,
        gamma0: 3e-3,
        needs_data: false,
        natural_scale: false,
    },
    Preset {
        name: "case2-small",
        m: 500,
        n: 12_000,
        xl_m: 10_000,
        xl_n: 100_000,
        r: 5,
        os: 6.0,
        noise_std: 1e-6,
        cond: None,
        n_agents: 6,
        variant: Variant::Parallel,
        slots: 400,
        rho: 1e3,
        xl_rho: 1e3,
        gamma0: 3e-3,
        needs_data: false,
        natural_scale: false,
    },
    Preset {
        name: "case3-small",
        m: 500,
        n: 2000,
        xl_m: 5000,
        xl_n: 50_000,
        r: 5,
        os: 6.0,
        noise_std: 1e-6,
        cond: Some(500.0),
        n_agents: 6,
        variant: Variant::PreconOnline,
        slots: 1000,
        rho: 1e3,
        xl_rho: 1e3,
        gamma0: 300.0,
        needs_data: false,
        natural_scale: true,
    },
    Preset {
        name: "case5-small",
        m: 0,
        n: 0,
        xl_m: 0,
        xl_n: 0,
        r: 5,
        os: 0.0,
        noise_std: 0.0,
        cond: None,
        n_agents: 4,
        variant: Variant::Online,
        slots: 800,
        rho: 1e4,
        xl_rho: 1e7,
        gamma0: 1e-3,
        needs_data: true,
        natural_scale: false,
    },
];

fn find_preset(name: &str) -> Result<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
        Error::InvalidConfig(format!(
            "unknown scenario {name:?}; available: {}",
            names.join(", ")
        ))
    })
}

fn parse_variant(name: &str) -> Result<Variant> {
    Ok(match name {
        "online" => Variant::Online,
        "precon-online" => Variant::PreconOnline,
        "parallel" => Variant::Parallel,
        "precon-parallel" => Variant::PreconParallel,
        "dynamic" => Variant::Dynamic,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown variant {other:?}; use online, precon-online, parallel, \
                 precon-parallel, or dynamic"
            )))
        }
    })
}

/// Everything needed to execute a run, after scenario/flag resolution.
struct ResolvedRun {
    blocks: Vec<SparseObservations>,
    heldout: Vec<SparseObservations>,
    m: usize,
    n: usize,
    r: usize,
    variant: Variant,
    rho: f64,
    gamma0_candidates: Vec<f64>,
    reg: f64,
    slots: u64,
    trace_every: u64,
    seed: u64,
    ratings_data: bool,
    label: String,
}

/// A finished run, with everything the summary and the tests need.
pub struct CompletedRun {
    pub trace: RunTrace,
    pub config: ProtocolConfig,
    pub update_counts: Vec<u64>,
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub n_agents: usize,
    pub wall: Duration,
    /// Entry-weighted test metrics over all agents, when any test data exists.
    pub pooled_test_rmse: Option<f64>,
    pub pooled_test_mae: Option<f64>,
    /// Pooled MAE / 4.5, reported for ratings data.
    pub test_nmae: Option<f64>,
}

fn resolve(args: &RunArgs) -> Result<ResolvedRun> {
    let preset = args.scenario.as_deref().map(find_preset).transpose()?;
    if preset.is_none() && args.data.is_none() {
        return Err(Error::InvalidConfig(
            "give --scenario <name> or --data <file> (or both, for case5-small)".into(),
        ));
    }
    if let Some(p) = preset {
        if p.needs_data && args.data.is_none() {
            return Err(Error::InvalidConfig(format!(
                "scenario {} needs --data with a ratings CSV",
                p.name
            )));
        }
    }

    let variant = match (&args.variant, preset) {
        (Some(name), _) => parse_variant(name)?,
        (None, Some(p)) => p.variant,
        (None, None) => Variant::Online,
    };
    let rho = args
        .rho
        .or(preset.map(|p| if args.xl { p.xl_rho } else { p.rho }))
        .unwrap_or(1e3);
    let slots = args.slots.or(preset.map(|p| p.slots)).unwrap_or(
        if matches!(variant, Variant::Parallel | Variant::PreconParallel) {
            400
        } else {
            1000
        },
    );
    let gamma0_candidates = match (&args.gamma0_grid, args.gamma0) {
        (Some(grid), _) => {
            let parsed: std::result::Result<Vec<f64>, _> =
                grid.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let list =
                parsed.map_err(|_| Error::InvalidConfig(format!("bad --gamma0-grid {grid:?}")))?;
            if list.is_empty() || list.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
                return Err(Error::InvalidConfig(
                    "--gamma0-grid needs positive finite values".into(),
                ));
            }
            list
        }
        (None, Some(g)) => vec![g],
        (None, None) => vec![preset.map(|p| p.gamma0).unwrap_or(0.05)],
    };

    // Build the observation blocks.
    let (blocks, heldout, m, n, r, ratings_data, label);
    match &args.data {
        None => {
            let p = preset.expect("checked above");
            let spec = SyntheticSpec {
                m: if args.xl { p.xl_m } else { p.m },
                n: if args.xl { p.xl_n } else { p.n },
                r: args.rank.unwrap_or(p.r),
                os: p.os,
                noise_std: p.noise_std,
                cond: p.cond,
                test_fraction: args.test_fraction,
                n_agents: args.agents.unwrap_or(p.n_agents),
                seed: args.seed,
            };
            let instance = datagen::generate(&spec)?;
            let scale = match preset {
                Some(p) if p.natural_scale => ((spec.m * spec.n) as f64).sqrt(),
                _ => 1.0,
            };
            let (scaled_blocks, scaled_heldout) = if scale != 1.0 {
                (
                    instance
                        .blocks
                        .iter()
                        .map(|b| datagen::scale_values(b, scale))
                        .collect::<Result<Vec<_>>>()?,
                    instance
                        .heldout
                        .iter()
                        .map(|b| datagen::scale_values(b, scale))
                        .collect::<Result<Vec<_>>>()?,
                )
            } else {
                (instance.blocks, instance.heldout)
            };
            label = format!(
                "synthetic {}x{} rank {} os {} agents {}",
                spec.m, spec.n, spec.r, spec.os, spec.n_agents
            );
            m = spec.m;
            n = spec.n;
            r = spec.r;
            blocks = scaled_blocks;
            heldout = scaled_heldout;
            ratings_data = false;
        }
        Some(path) => match sniff_format(path)? {
            DataFormat::Ratings => {
                let (obs, maps) = ingest::parse_ratings(path)?;
                let n_agents = args.agents.or(preset.map(|p| p.n_agents)).unwrap_or(4);
                let (train, test) = ingest::split_train_test(&obs, args.test_fraction, args.seed)?;
                let ranges = datagen::partition_columns(obs.n_cols(), n_agents)?;
                blocks = ingest::partition_by_columns(&train, &ranges)?;
                heldout = ingest::partition_by_columns(&test, &ranges)?;
                m = obs.n_rows();
                n = obs.n_cols();
                r = args.rank.or(preset.map(|p| p.r)).unwrap_or(5);
                ratings_data = true;
                label = format!(
                    "ratings {} movies x {} users, {} entries, agents {}",
                    maps.movie_ids.len(),
                    maps.user_ids.len(),
                    obs.len(),
                    n_agents
                );
            }
            DataFormat::Instance => {
                let loaded = ingest::parse_instance(path)?;
                if let Some(agents) = args.agents {
                    if agents != loaded.blocks.len() {
                        return Err(Error::InvalidConfig(format!(
                            "--agents {agents} conflicts with the instance file's {}",
                            loaded.blocks.len()
                        )));
                    }
                }
                m = loaded.m;
                n = loaded.n;
                r = args.rank.unwrap_or(loaded.rank);
                label = format!(
                    "instance file {} ({}x{} rank {}, agents {})",
                    path.display(),
                    m,
                    n,
                    loaded.rank,
                    loaded.blocks.len()
                );
                blocks = loaded.blocks;
                heldout = loaded.heldout;
                ratings_data = false;
            }
        },
    }

    // Default regularization: 1e-8 times the mean squared observed value.
    let reg = match args.reg {
        Some(reg) => reg,
        None => {
            let (mut sq, mut count) = (0.0, 0usize);
            for block in &blocks {
                sq += block.mean_squared_value() * block.len() as f64;
                count += block.len();
            }
            if count == 0 {
                0.0
            } else {
                1e-8 * sq / count as f64
            }
        }
    };

    Ok(ResolvedRun {
        blocks,
        heldout,
        m,
        n,
        r,
        variant,
        rho,
        gamma0_candidates,
        reg,
        slots,
        trace_every: args.trace_every,
        seed: args.seed,
        ratings_data,
        label,
    })
}

enum DataFormat {
    Ratings,
    Instance,
}

fn sniff_format(path: &Path) -> Result<DataFormat> {
    let content = fs::File::open(path)?;
    use std::io::{BufRead, BufReader};
    let mut first = String::new();
    BufReader::new(content).read_line(&mut first)?;
    if first.trim_start().starts_with("userId") {
        return Ok(DataFormat::Ratings);
    }
    let fields: Vec<&str> = first.split_whitespace().collect();
    if fields.len() == 4 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
        return Ok(DataFormat::Instance);
    }
    Err(Error::Parse {
        line: 1,
        msg: "unrecognized data file: expected a ratings CSV header or `m n r n_agents`".into(),
    })
}

fn build_agents(resolved: &ResolvedRun) -> Result<Vec<AgentState>> {
    let mut init_rng = ChaCha8Rng::seed_from_u64(resolved.seed.wrapping_add(1));
    resolved
        .blocks
        .iter()
        .zip(resolved.heldout.iter())
        .enumerate()
        .map(|(idx, (block, held))| {
            let point = random_point(resolved.m, resolved.r, &mut init_rng)?;
            AgentState::new(idx + 1, point, block.clone(), held.clone())
        })
        .collect()
}

fn execute(resolved: &ResolvedRun, gamma0: f64) -> Result<(RunTrace, Vec<AgentState>)> {
    let mut agents = build_agents(resolved)?;
    let config = ProtocolConfig {
        rho: resolved.rho,
        gamma0,
        reg: resolved.reg,
        max_slots: resolved.slots,
        variant: resolved.variant,
        seed: resolved.seed.wrapping_add(2),
        trace_every: resolved.trace_every,
    };
    let trace = gossip::run(&mut agents, &config)?;
    Ok((trace, agents))
}

/// Runs the experiment described by `args` and writes the trace CSV and the
/// summary file. Returns the completed run for inspection.
pub fn run_command(args: &RunArgs) -> Result<CompletedRun> {
    let resolved = resolve(args)?;
    println!(
        "run: {} | variant {} rho {:.3e} slots {} seed {}",
        resolved.label,
        resolved.variant.name(),
        resolved.rho,
        resolved.slots,
        resolved.seed
    );

    let start = Instant::now();
    let mut best: Option<(f64, f64, RunTrace, Vec<AgentState>)> = None;
    for &gamma0 in &resolved.gamma0_candidates {
        let (trace, agents) = execute(&resolved, gamma0)?;
        let final_cost = trace
            .last()
            .map(|row| row.mean_cost())
            .unwrap_or(f64::INFINITY);
        if resolved.gamma0_candidates.len() > 1 {
            println!("  gamma0 {gamma0:.3e}: final mean train cost {final_cost:.6e}");
        }
        let better = best
            .as_ref()
            .map(|(_, cost, _, _)| final_cost < *cost)
            .unwrap_or(true);
        if better {
            best = Some((gamma0, final_cost, trace, agents));
        }
    }
    let (gamma0, _, trace, agents) = best.expect("at least one gamma0 candidate");
    let wall = start.elapsed();

    // Pooled test metrics over all agents at the final state.
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut count = 0usize;
    for agent in &agents {
        if agent.heldout.is_empty() {
            continue;
        }
        let w = solve_weights(&agent.point, &agent.block, resolved.reg)?;
        let (rmse, mae) = test_error(&agent.point, &w, &agent.heldout)?;
        let len = agent.heldout.len() as f64;
        sq += rmse * rmse * len;
        abs += mae * len;
        count += agent.heldout.len();
    }
    let (pooled_test_rmse, pooled_test_mae) = if count > 0 {
        (Some((sq / count as f64).sqrt()), Some(abs / count as f64))
    } else {
        (None, None)
    };
    let test_nmae = if resolved.ratings_data {
        pooled_test_mae.map(ingest::nmae)
    } else {
        None
    };

    let completed = CompletedRun {
        config: ProtocolConfig {
            rho: resolved.rho,
            gamma0,
            reg: resolved.reg,
            max_slots: resolved.slots,
            variant: resolved.variant,
            seed: resolved.seed.wrapping_add(2),
            trace_every: resolved.trace_every,
        },
        update_counts: agents.iter().map(|a| a.update_count).collect(),
        m: resolved.m,
        n: resolved.n,
        r: resolved.r,
        n_agents: agents.len(),
        wall,
        pooled_test_rmse,
        pooled_test_mae,
        test_nmae,
        trace,
    };

    metrics::write_csv(&completed.trace, &args.out)?;
    let summary_path = args
        .summary
        .clone()
        .unwrap_or_else(|| summary_default(&args.out));
    fs::write(&summary_path, render_summary(&completed, &resolved.label))?;
    println!(
        "done in {:.2}s: trace {} summary {}",
        wall.as_secs_f64(),
        args.out.display(),
        summary_path.display()
    );
    if let Some(row) = completed.trace.last() {
        println!(
            "final mean train cost {:.6e}, mean test rmse {:.6e}",
            row.mean_cost(),
            row.mean_rmse()
        );
    }
    Ok(completed)
}

fn summary_default(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".summary.txt");
    out.with_file_name(name)
}

fn render_summary(run: &CompletedRun, label: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "data: {label}");
    let _ = writeln!(s, "variant: {}", run.config.variant.name());
    let _ = writeln!(s, "agents: {}", run.n_agents);
    let _ = writeln!(s, "manifold: m={} r={}", run.m, run.r);
    let _ = writeln!(
        s,
        "slots: {} (skipped on cut-locus overlap: {})",
        run.config.max_slots, run.trace.skipped
    );
    let _ = writeln!(s, "rho: {:.6e}", run.config.rho);
    let _ = writeln!(s, "gamma0: {:.6e}", run.config.gamma0);
    let _ = writeln!(s, "reg: {:.6e}", run.config.reg);
    let _ = writeln!(s, "wall_time_s: {:.3}", run.wall.as_secs_f64());
    let counts: Vec<String> = run.update_counts.iter().map(|c| c.to_string()).collect();
    let _ = writeln!(s, "update_counts: {}", counts.join(" "));
    if matches!(
        run.config.variant,
        Variant::Parallel | Variant::PreconParallel
    ) {
        let [r1, r2] = gossip::parallel_rounds(run.n_agents);
        let fmt = |pairs: &[(usize, usize)]| {
            pairs
                .iter()
                .map(|(i, k)| format!("({i},{k})"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(s, "round 1 pairs: {}", fmt(&r1));
        let _ = writeln!(s, "round 2 pairs: {}", fmt(&r2));
    }
    if let Some(row) = run.trace.last() {
        let _ = writeln!(s, "final_slot: {}", row.slot);
        let _ = writeln!(s, "final_mean_train_cost: {:.6e}", row.mean_cost());
        let costs: Vec<String> = row.costs.iter().map(|c| format!("{c:.6e}")).collect();
        let _ = writeln!(s, "final_train_costs: {}", costs.join(" "));
        let dists: Vec<String> = run
            .trace
            .pairs
            .iter()
            .zip(row.dists.iter())
            .map(|((i, k), d)| match d {
                Some(d) => format!("d_{i}_{k}={d:.6e}"),
                None => format!("d_{i}_{k}=undefined"),
            })
            .collect();
        let _ = writeln!(s, "final_consensus_distances: {}", dists.join(" "));
    }
    if let Some(rmse) = run.pooled_test_rmse {
        let _ = writeln!(s, "final_test_rmse: {rmse:.6e}");
    }
    if let Some(mae) = run.pooled_test_mae {
        let _ = writeln!(s, "final_test_mae: {mae:.6e}");
    }
    if let Some(nmae) = run.test_nmae {
        let _ = writeln!(s, "final_test_nmae: {nmae:.6}");
    }
    s
}

/// Materializes a synthetic instance to the sparse text format.
pub fn gen_command(args: &GenArgs) -> Result<()> {
    let spec = match &args.scenario {
        Some(name) => {
            let p = find_preset(name)?;
            if p.needs_data {
                return Err(Error::InvalidConfig(format!(
                    "scenario {} is driven by an external ratings file; nothing to generate",
                    p.name
                )));
            }
            SyntheticSpec {
                m: if args.xl { p.xl_m } else { p.m },
                n: if args.xl { p.xl_n } else { p.n },
                r: p.r,
                os: p.os,
                noise_std: p.noise_std,
                cond: p.cond,
                test_fraction: args.test_fraction,
                n_agents: args.agents,
                seed: args.seed,
            }
        }
        None => SyntheticSpec {
            m: args.m,
            n: args.n,
            r: args.rank,
            os: args.os,
            noise_std: args.noise_std,
            cond: args.cond,
            test_fraction: args.test_fraction,
            n_agents: args.agents,
            seed: args.seed,
        },
    };
    let instance = datagen::generate(&spec)?;
    datagen::write_instance(&instance, &args.out)?;
    println!(
        "wrote {} ({} train, {} test entries)",
        args.out.display(),
        instance.train_len(),
        instance.test_len()
    );
    Ok(())
}

/// Entry point used by the binary. Errors print to stderr and exit nonzero.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run_command(&args).map(|_| ()),
        Command::Gen(args) => gen_command(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_run_args() -> RunArgs {
        RunArgs {
            scenario: None,
            data: None,
            variant: None,
            agents: None,
            rank: None,
            rho: None,
            gamma0: None,
            gamma0_grid: None,
            reg: None,
            slots: None,
            seed: 1,
            trace_every: 10,
            test_fraction: 0.2,
            xl: false,
            out: PathBuf::from("trace.csv"),
            summary: None,
        }
    }

    #[test]
    fn rejects_missing_inputs_and_unknown_names() {
        let args = base_run_args();
        assert!(resolve(&args).is_err());

        let mut args = base_run_args();
        args.scenario = Some("case9-huge".into());
        assert!(resolve(&args).is_err());

        let mut args = base_run_args();
        args.scenario = Some("case1-small".into());
        args.variant = Some("offline".into());
        assert!(resolve(&args).is_err());

        let mut args = base_run_args();
        args.scenario = Some("case5-small".into());
        assert!(resolve(&args).is_err(), "case5 needs --data");
    }

    #[test]
    fn preset_defaults_flow_through() {
        let mut args = base_run_args();
        args.scenario = Some("case3-small".into());
        let resolved = resolve(&args).unwrap();
        assert_eq!(resolved.variant, Variant::PreconOnline);
        assert_eq!(resolved.m, 500);
        assert_eq!(resolved.n, 2000);
        assert_eq!(resolved.r, 5);
        assert_eq!(resolved.blocks.len(), 6);
        assert_eq!(resolved.rho, 1e3);
        // adaptive reg is positive and tiny
        assert!(resolved.reg > 0.0 && resolved.reg < 1e-6);
    }

    #[test]
    fn flag_overrides_win() {
        let mut args = base_run_args();
        args.scenario = Some("case1-small".into());
        args.agents = Some(3);
        args.rho = Some(42.0);
        args.slots = Some(7);
        args.variant = Some("dynamic".into());
        args.gamma0 = Some(0.25);
        let resolved = resolve(&args).unwrap();
        assert_eq!(resolved.blocks.len(), 3);
        assert_eq!(resolved.rho, 42.0);
        assert_eq!(resolved.slots, 7);
        assert_eq!(resolved.variant, Variant::Dynamic);
        assert_eq!(resolved.gamma0_candidates, vec![0.25]);
    }

    #[test]
    fn gamma0_grid_parses() {
        let mut args = base_run_args();
        args.scenario = Some("case1-small".into());
        args.gamma0_grid = Some("1e-4, 2e-4,5e-4".into());
        let resolved = resolve(&args).unwrap();
        assert_eq!(resolved.gamma0_candidates, vec![1e-4, 2e-4, 5e-4]);

        args.gamma0_grid = Some("1e-4,-3".into());
        assert!(resolve(&args).is_err());
    }

    #[test]
    fn summary_path_default_appends_suffix() {
        assert_eq!(
            summary_default(Path::new("/tmp/t.csv")),
            PathBuf::from("/tmp/t.csv.summary.txt")
        );
    }
}
