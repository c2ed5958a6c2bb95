//! `aeb` — train and evaluate the autonomous braking policy.
//!
//! Subcommands: `train`, `eval-ttc`, `eval-ncap`, `trace`, `ablate-trauma`.
//! Every run prints the fully resolved configuration so results are
//! self-describing; result tables are written as CSV files under the output
//! directory (`--out`, or the `AEB_OUT_DIR` environment variable, or the
//! current directory).

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use aeb_core::checkpoint::{ensure_layer_match, load_checkpoint, save_checkpoint};
use aeb_core::config::{parse_config, Config};
use aeb_core::env::{EpisodeEvent, ScenarioKind, ScenarioParams, Side};
use aeb_core::eval::{self, GreedyPolicy};
use aeb_core::report;
use aeb_core::trainer::{self, EpisodeLog};

#[derive(Parser)]
#[command(name = "aeb", version, about = "Autonomous braking policy: training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write a checkpoint plus the episode log.
    Train(TrainArgs),
    /// Collision-rate sweep over a range of TTC values.
    EvalTtc(EvalTtcArgs),
    /// Deterministic CVFA/CVNA pedestrian test suite.
    EvalNcap(EvalNcapArgs),
    /// Record one episode's trajectory step by step.
    Trace(TraceArgs),
    /// Train twice with the same seed, trauma memory on vs off.
    AblateTrauma(AblateArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Number of training episodes (overrides the config).
    #[arg(long)]
    episodes: Option<usize>,
    /// Run seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Configuration file (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalTtcArgs {
    /// Checkpoint produced by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Trials per TTC value.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Evaluation seed (defaults to the config seed).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.9)]
    ttc_min: f64,
    #[arg(long, default_value_t = 3.9)]
    ttc_max: f64,
    #[arg(long, default_value_t = 0.2)]
    ttc_step: f64,
    /// Configuration file; must match the checkpoint's network sizes.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalNcapArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Time-to-collision parameter of the traced scenario.
    #[arg(long, default_value_t = 1.5)]
    ttc: f64,
    #[arg(long, default_value_t = 10.0)]
    v_init: f64,
    #[arg(long, default_value_t = 3.0)]
    v_ped: f64,
    /// Pedestrian start side: near or far.
    #[arg(long, default_value = "near")]
    side: String,
    /// Pedestrian behavior: cross or stay.
    #[arg(long, default_value = "cross")]
    scenario: String,
    /// Sensor-noise seed (defaults to the config seed).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => cmd_train(args),
        Command::EvalTtc(args) => cmd_eval_ttc(args),
        Command::EvalNcap(args) => cmd_eval_ncap(args),
        Command::Trace(args) => cmd_trace(args),
        Command::AblateTrauma(args) => cmd_ablate(args),
    }
}

fn resolve_config(path: &Option<PathBuf>) -> Result<Config> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            Ok(parse_config(&text)?)
        }
        None => Ok(Config::default()),
    }
}

fn out_dir(flag: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = match flag {
        Some(p) => p.clone(),
        None => match std::env::var_os("AEB_OUT_DIR") {
            Some(v) => PathBuf::from(v),
            None => PathBuf::from("."),
        },
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn echo_config(cfg: &Config) {
    println!("# resolved config");
    print!("{}", cfg.to_document());
    println!("# end config");
}

fn write_table(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn parse_side(s: &str) -> Result<Side> {
    match s {
        "near" => Ok(Side::Near),
        "far" => Ok(Side::Far),
        _ => bail!("side must be `near` or `far`, got `{s}`"),
    }
}

fn parse_scenario(s: &str) -> Result<ScenarioKind> {
    match s {
        "cross" => Ok(ScenarioKind::Cross),
        "stay" => Ok(ScenarioKind::Stay),
        _ => bail!("scenario must be `cross` or `stay`, got `{s}`"),
    }
}

fn ttc_list(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(min > 0.0 && step > 0.0 && max >= min) {
        bail!("need 0 < ttc_min <= ttc_max and ttc_step > 0");
    }
    let mut values = Vec::new();
    let mut k = 0;
    loop {
        let v = min + k as f64 * step;
        if v > max + 1e-9 {
            break;
        }
        values.push(v);
        k += 1;
    }
    Ok(values)
}

fn outcome_counts(logs: &[EpisodeLog]) -> [usize; 5] {
    let mut counts = [0usize; 5];
    for log in logs {
        match log.outcome {
            Some(EpisodeEvent::Stop) => counts[0] += 1,
            Some(EpisodeEvent::Bump) => counts[1] += 1,
            Some(EpisodeEvent::Pass) => counts[2] += 1,
            Some(EpisodeEvent::Cross) => counts[3] += 1,
            None => counts[4] += 1,
        }
    }
    counts
}

/// Mean and variance of the smoothed returns over the final `window`
/// episodes.
fn final_window_stats(logs: &[EpisodeLog], smoothing: usize, window: usize) -> (f64, f64) {
    let returns: Vec<f64> = logs.iter().map(|l| l.ret).collect();
    let smoothed = trainer::trailing_moving_average(&returns, smoothing);
    let tail = &smoothed[smoothed.len().saturating_sub(window)..];
    let n = tail.len().max(1) as f64;
    let mean = tail.iter().sum::<f64>() / n;
    let var = tail.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

fn print_train_summary(logs: &[EpisodeLog], cfg: &Config) {
    let [stops, bumps, passes, crosses, capped] = outcome_counts(logs);
    println!(
        "episodes {}: stop {} bump {} pass {} cross {} capped {}",
        logs.len(),
        stops,
        bumps,
        passes,
        crosses,
        capped
    );
    let (mean, var) = final_window_stats(logs, cfg.smoothing_window, 1000);
    println!("final-window smoothed return: mean {mean} variance {var}");
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = resolve_config(&args.config)?;
    if let Some(episodes) = args.episodes {
        cfg.episodes = episodes;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    echo_config(&cfg);
    let dir = out_dir(&args.out)?;
    let start = Instant::now();
    let out = trainer::train(&cfg)?;
    println!("trained {} episodes in {:.1?}", out.logs.len(), start.elapsed());
    println!("selected snapshot from episode {}", out.selected_at);
    print_train_summary(&out.logs, &cfg);
    write_table(&dir, "train_log.csv", &report::episode_log_csv(&out.logs))?;
    let ckpt = dir.join("checkpoint.bin");
    save_checkpoint(&out.agent.net, &out.agent.opt, &cfg, &ckpt)?;
    println!("wrote {}", ckpt.display());
    Ok(())
}

/// Load the checkpointed network plus the config to evaluate under: the
/// embedded one, or the `--config` file after checking it matches the
/// checkpoint's network sizes.
fn load_for_eval(
    checkpoint: &Path,
    config: &Option<PathBuf>,
) -> Result<(aeb_core::net::QNetwork, Config)> {
    let (net, _opt, ckpt_cfg) = load_checkpoint(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let cfg = match config {
        Some(_) => {
            let cfg = resolve_config(config)?;
            ensure_layer_match(&cfg, &ckpt_cfg)?;
            cfg
        }
        None => ckpt_cfg,
    };
    Ok((net, cfg))
}

fn cmd_eval_ttc(args: EvalTtcArgs) -> Result<()> {
    let (net, cfg) = load_for_eval(&args.checkpoint, &args.config)?;
    echo_config(&cfg);
    let dir = out_dir(&args.out)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let ttcs = ttc_list(args.ttc_min, args.ttc_max, args.ttc_step)?;
    let results = eval::ttc_sweep(&GreedyPolicy(&net), &cfg, &ttcs, args.trials, seed)?;
    let csv = report::sweep_csv(&results);
    print!("{csv}");
    write_table(&dir, "ttc_sweep.csv", &csv)?;
    Ok(())
}

fn cmd_eval_ncap(args: EvalNcapArgs) -> Result<()> {
    let (net, cfg) = load_for_eval(&args.checkpoint, &args.config)?;
    echo_config(&cfg);
    let dir = out_dir(&args.out)?;
    let cases = eval::ncap_suite(&GreedyPolicy(&net), &cfg)?;
    let csv = report::ncap_csv(&cases);
    print!("{csv}");
    write_table(&dir, "ncap.csv", &csv)?;
    let total: f64 = cases.iter().map(|c| c.points_awarded).sum();
    let available: f64 = cases.iter().map(|c| c.points_available).sum();
    println!("points: {total} of {available}");
    Ok(())
}

fn cmd_trace(args: TraceArgs) -> Result<()> {
    let (net, cfg) = load_for_eval(&args.checkpoint, &args.config)?;
    echo_config(&cfg);
    let dir = out_dir(&args.out)?;
    let params = ScenarioParams::derive(
        args.v_init,
        args.ttc,
        args.v_ped,
        parse_side(&args.side)?,
        parse_scenario(&args.scenario)?,
        &cfg,
    );
    let seed = args.seed.unwrap_or(cfg.seed);
    let rows = eval::trace_episode(&GreedyPolicy(&net), &cfg, params, seed)?;
    let csv = report::trace_csv(&rows);
    print!("{csv}");
    write_table(&dir, "trace.csv", &csv)?;
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let mut cfg = resolve_config(&args.config)?;
    if let Some(episodes) = args.episodes {
        cfg.episodes = episodes;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    echo_config(&cfg);
    let dir = out_dir(&args.out)?;
    let mut with_trauma = cfg.clone();
    with_trauma.trauma_enabled = true;
    let mut without_trauma = cfg.clone();
    without_trauma.trauma_enabled = false;
    let start = Instant::now();
    let on = trainer::train(&with_trauma)?;
    let off = trainer::train(&without_trauma)?;
    println!("trained both arms in {:.1?}", start.elapsed());
    println!("trauma on:");
    print_train_summary(&on.logs, &cfg);
    println!("trauma off (memory reads: {}):", off.agent.trauma.reads());
    print_train_summary(&off.logs, &cfg);
    write_table(&dir, "ablate_trauma_on.csv", &report::episode_log_csv(&on.logs))?;
    write_table(&dir, "ablate_trauma_off.csv", &report::episode_log_csv(&off.logs))?;
    Ok(())
}
