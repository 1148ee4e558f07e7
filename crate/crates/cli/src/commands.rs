use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lullaby_bench::{baselines, run_benchmark, BenchConfig, BenchPolicy};
use lullaby_core::domain::AggressivenessLevel;
use lullaby_core::env::{training_pool, DrivingEnv, Scenario};
use lullaby_core::route::{generate_route_with_spacing, RouteMap, DEFAULT_SPACING};
use lullaby_core::traffic::TrafficConfig;
use lullaby_core::world::write_trace_csv;
use lullaby_nets::{ActMode, Architecture, Policy};
use lullaby_ppo::train;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(
    name = "lullaby",
    version,
    about = "Sleep-aware cruise control: training, evaluation and replay"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy with PPO.
    Train(TrainArgs),
    /// Benchmark checkpoints against the fixed and random baselines.
    Eval(EvalArgs),
    /// Drive one route file and export traces.
    Replay(ReplayArgs),
    /// Write generated routes to disk.
    Genroutes(GenroutesArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub arch: Option<Architecture>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `PATH` or `NAME=PATH`; the name defaults to the architecture.
    #[arg(long = "checkpoint", value_name = "[NAME=]PATH")]
    pub checkpoints: Vec<String>,
    /// Number of held-out routes, counted from the configured first seed.
    #[arg(long)]
    pub routes: Option<u64>,
    #[arg(long)]
    pub episodes: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("driver").required(true).args(["level", "policy"]))]
pub struct ReplayArgs {
    pub route: PathBuf,
    #[arg(long)]
    pub level: Option<u8>,
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Per-tick vehicle trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// 100 Hz wrist IMU CSV.
    #[arg(long)]
    pub imu: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub traffic_seed: u64,
    /// No traffic and no intersection stops.
    #[arg(long)]
    pub empty_road: bool,
}

#[derive(Debug, Args)]
pub struct GenroutesArgs {
    /// Half-open seed range `a..b`.
    #[arg(long)]
    pub seeds: String,
    #[arg(long, default_value_t = 100)]
    pub checkpoints: usize,
    #[arg(long, default_value_t = DEFAULT_SPACING)]
    pub spacing: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    arch: Option<Architecture>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    checkpoints: Vec<String>,
}

fn write_run_files(dir: &Path, cfg: &RunConfig, manifest: &Manifest<'_>) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_SNAPSHOT), cfg.to_toml())?;
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(dir.join(MANIFEST), json + "\n")?;
    Ok(())
}

fn manifest(command: &'static str, seed: u64) -> Manifest<'static> {
    Manifest {
        tool: "lullaby",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        arch: None,
        checkpoints: Vec::new(),
    }
}

/// Seed of the trainer's sampling stream: the run seed shifted by `ppo.seed`.
pub fn trainer_seed(cfg: &RunConfig) -> u64 {
    cfg.seed.wrapping_add(cfg.ppo.seed).wrapping_add(1)
}

pub fn run(cli: Cli, vars: Vec<(String, String)>) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => cmd_train(a, vars),
        Command::Eval(a) => cmd_eval(a, vars),
        Command::Replay(a) => cmd_replay(a, vars),
        Command::Genroutes(a) => cmd_genroutes(a),
    }
}

pub fn cmd_train(args: TrainArgs, vars: Vec<(String, String)>) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(args.config.as_deref(), vars)?;
    if let Some(a) = args.arch {
        cfg.train.arch = a;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.iterations {
        cfg.ppo.iterations = n;
    }
    cfg.policy.arch = cfg.train.arch;
    cfg.validate()?;
    let out = args
        .out
        .unwrap_or_else(|| cfg.output_dir.join(&cfg.run_id).join(cfg.train.arch.to_string()));
    write_run_files(
        &out,
        &cfg,
        &Manifest {
            arch: Some(cfg.train.arch),
            ..manifest("train", cfg.seed)
        },
    )?;
    let env = DrivingEnv::new(cfg.env.clone(), training_pool(cfg.train.route_seeds.clone()), cfg.seed)?;
    let policy = Policy::new(cfg.policy.clone(), cfg.seed)?;
    let every = cfg.train.log_every;
    let ppo = lullaby_ppo::PpoConfig {
        seed: trainer_seed(&cfg),
        ..cfg.ppo.clone()
    };
    let outcome = train(&ppo, policy, env, Some(&out), |r| {
        if every > 0 && (r.iteration + 1) % every == 0 {
            let ep = r.mean_episode_reward.map_or("-".to_string(), |v| format!("{v:.4}"));
            eprintln!(
                "iter {:>5}  episode reward {ep:>8}  wakeups {}  entropy {:.4}  value loss {:.4e}",
                r.iteration + 1,
                r.wakeups,
                r.entropy,
                r.value_loss
            );
        }
    })?;
    println!(
        "trained {} for {} iterations; best window ended at iteration {}; outputs in {}",
        cfg.train.arch,
        outcome.curve.len(),
        outcome.best_iteration + 1,
        out.display()
    );
    Ok(())
}

fn parse_checkpoint(spec: &str) -> Result<(Option<String>, PathBuf), CliError> {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((Some(name.to_string()), PathBuf::from(path))),
        Some(_) => Err(CliError::Config(format!("malformed checkpoint argument `{spec}`"))),
        None => Ok((None, PathBuf::from(spec))),
    }
}

pub fn cmd_eval(args: EvalArgs, vars: Vec<(String, String)>) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(args.config.as_deref(), vars)?;
    if let Some(n) = args.routes {
        if n == 0 {
            return Err(CliError::Config("--routes must be positive".into()));
        }
        cfg.eval.route_seeds = cfg.eval.route_seeds.start..cfg.eval.route_seeds.start + n;
    }
    if let Some(e) = args.episodes {
        cfg.eval.episodes_per_route = e;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
        cfg.eval.rand_seed = s;
    }
    cfg.validate()?;
    let mut policies = Vec::new();
    let mut names = Vec::new();
    for spec in &args.checkpoints {
        let (name, path) = parse_checkpoint(spec)?;
        let p = Policy::load(&path)?;
        if p.config().seq_len != cfg.env.k || p.config().actions != cfg.env.actions {
            return Err(CliError::Config(format!(
                "checkpoint {} does not match the environment's window or action space",
                path.display()
            )));
        }
        let mut name = name.unwrap_or_else(|| p.config().arch.to_string());
        if names.contains(&name) {
            name = format!("{name}-{}", names.len());
        }
        names.push(name.clone());
        policies.push(BenchPolicy::trained(name, p));
    }
    policies.extend(baselines(cfg.eval.rand_seed));
    let bench = BenchConfig {
        env: cfg.env.clone(),
        route_seeds: cfg.eval.route_seeds.clone(),
        episodes_per_route: cfg.eval.episodes_per_route,
    };
    let out = args
        .out
        .unwrap_or_else(|| cfg.output_dir.join(&cfg.run_id).join("eval"));
    write_run_files(
        &out,
        &cfg,
        &Manifest {
            checkpoints: args.checkpoints.clone(),
            ..manifest("eval", cfg.seed)
        },
    )?;
    let report = run_benchmark(&bench, &policies)?;
    report.write_csvs(&out)?;
    println!(
        "{:<14} {:>6} {:>10} {:>10} {:>5} {:>5} {:>5}",
        "policy", "trips", "late", "wake", "good", "acc", "poor"
    );
    for a in &report.aggregates {
        println!(
            "{:<14} {:>6} {:>10.4} {:>10.4} {:>5} {:>5} {:>5}",
            a.policy, a.trips, a.mean_late_rate, a.wake_up_rate, a.good, a.acceptable, a.poor
        );
    }
    println!("reports in {}", out.display());
    Ok(())
}

pub fn cmd_replay(args: ReplayArgs, vars: Vec<(String, String)>) -> Result<(), CliError> {
    let cfg = RunConfig::load(args.config.as_deref(), vars)?;
    let route = RouteMap::load(&args.route)?;
    let level = args
        .level
        .map(|l| {
            AggressivenessLevel::within(l, &cfg.env.actions)
                .map_err(|_| CliError::Config(format!("level {l} is outside the action space {:?}", cfg.env.actions)))
        })
        .transpose()?;
    let policy = args.policy.as_deref().map(Policy::load).transpose()?;
    let scenario = Scenario {
        route_seed: 0,
        traffic_seed: args.traffic_seed,
    };
    let traffic = if args.empty_road {
        TrafficConfig::empty()
    } else {
        cfg.env.traffic_for(scenario)
    };
    let mut env = DrivingEnv::new(cfg.env.clone(), vec![scenario], cfg.seed)?;
    env.record_trace(args.trace.is_some());
    let mut obs = env.reset_with_route(route, traffic)?;
    let mut no_rng = ChaCha8Rng::seed_from_u64(0);
    loop {
        let chosen = match (&policy, level) {
            (Some(p), _) => p.act(&obs, ActMode::Greedy, &mut no_rng)?.level,
            (None, Some(l)) => l,
            (None, None) => unreachable!("clap requires a driver"),
        };
        let out = env.step_level(chosen)?;
        obs = out.observation;
        if out.done {
            break;
        }
    }
    if let Some(path) = &args.trace {
        let rows = env.trace().unwrap_or_default();
        write_trace_csv(rows, BufWriter::new(File::create(path)?))?;
    }
    let world = env.world().expect("world exists after reset");
    if let Some(path) = &args.imu {
        world
            .occupant()
            .stream()
            .write_csv(BufWriter::new(File::create(path)?))?;
    }
    let trip = env.trip();
    let (ata, eta) = trip.final_times().expect("at least one decision");
    println!("route {}", trip.route_id);
    println!("sections driven {} of {}", trip.levels.len(), world.route().len());
    println!(
        "arrival {ata:.2} s, eta {eta:.2} s, late rate {:.4}",
        ((ata - eta) / eta).max(0.0)
    );
    println!("woke {}, peak imu {:.4} m/s^2", trip.woke, trip.peak_imu);
    Ok(())
}

pub fn parse_seed_range(s: &str) -> Result<std::ops::Range<u64>, CliError> {
    let bad = || CliError::Config(format!("seed range `{s}` must look like a..b with a < b"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let (a, b): (u64, u64) = (
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    );
    if a >= b {
        return Err(bad());
    }
    Ok(a..b)
}

pub fn route_file_name(seed: u64) -> String {
    format!("route_{seed:05}.toml")
}

pub fn cmd_genroutes(args: GenroutesArgs) -> Result<(), CliError> {
    let seeds = parse_seed_range(&args.seeds)?;
    fs::create_dir_all(&args.out)?;
    let count = seeds.end - seeds.start;
    for seed in seeds {
        generate_route_with_spacing(seed, args.checkpoints, args.spacing)?
            .save(&args.out.join(route_file_name(seed)))?;
    }
    println!("wrote {count} routes to {}", args.out.display());
    Ok(())
}
