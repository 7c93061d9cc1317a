//! `hymos`: scenario generation, training, evaluation, ablations and
//! sweeps for the hyperspherical open-set domain adaptation engine.
//!
//! Exit codes: 0 success, 2 usage/config error, 1 runtime failure.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::SweepAxis;
use config::RunConfig;
use error::CliResult;
use hymos_core::eval::EvalMode;

#[derive(Parser)]
#[command(name = "hymos", version, about = "Hyperspherical multi-source open-set domain adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// JSON run configuration; flags override its fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: config, then $HYMOS_OUT_ROOT)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed list override, comma-free repeated flag
    #[arg(long = "seed")]
    seeds: Vec<u64>,
}

#[derive(Args, Debug, Default)]
struct ScenarioArgs {
    /// Number of source domains
    #[arg(long)]
    sources: Option<usize>,
    /// Number of known (source) classes
    #[arg(long)]
    known: Option<usize>,
    /// Number of target-private (unknown) classes
    #[arg(long)]
    unknown: Option<usize>,
    /// Number of source-private classes
    #[arg(long)]
    source_private: Option<usize>,
    /// Samples per class per domain
    #[arg(long)]
    samples: Option<usize>,
    /// Feature dimension
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct ToggleArgs {
    /// Disable the style-transfer augmentation branch
    #[arg(long)]
    no_style_transfer: bool,
    /// Replace class x domain balanced batches with uniform draws
    #[arg(long)]
    no_source_balance: bool,
    /// Disable break-point pseudo-labeling
    #[arg(long)]
    no_self_training: bool,
    /// Restrict the style pool to target samples of known classes
    #[arg(long)]
    oracle_style_pool: bool,
    /// Augment both views instead of only the second
    #[arg(long)]
    two_view_aug: bool,
    /// Train the cross-entropy baseline instead of the contrastive pipeline
    #[arg(long)]
    ce_baseline: bool,
    /// Pseudo-label gate multiplier
    #[arg(long)]
    alpha_m: Option<f64>,
    /// Contrastive temperature
    #[arg(long)]
    tau: Option<f64>,
    /// Evaluation mode
    #[arg(long, value_parser = parse_mode)]
    mode: Option<EvalMode>,
    /// Write the embedding dump CSV next to the report
    #[arg(long)]
    dump_embeddings: bool,
}

fn parse_mode(s: &str) -> Result<EvalMode, String> {
    match s {
        "open-set" => Ok(EvalMode::OpenSet),
        "closed-set" => Ok(EvalMode::ClosedSet),
        "universal" => Ok(EvalMode::Universal),
        other => Err(format!(
            "unknown mode {other:?} (expected open-set, closed-set or universal)"
        )),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate scenario dataset files and metadata
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Train (one run per seed), emitting checkpoints, logs and reports
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        toggles: ToggleArgs,
        /// Directory of generated dataset files to train on
        #[arg(long)]
        data: Option<PathBuf>,
        /// Total training iterations
        #[arg(long)]
        iters: Option<usize>,
        /// Iterations of the warm source-only phase
        #[arg(long)]
        source_only: Option<usize>,
        /// Iterations between self-training break-points
        #[arg(long)]
        breakpoint_period: Option<usize>,
    },
    /// Evaluate a checkpoint against a dataset
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        toggles: ToggleArgs,
        /// Checkpoint file written by `train`
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory of generated dataset files
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run an axis sweep (alpha-m | tau | openness) over the seed list
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        toggles: ToggleArgs,
        /// Sweep axis: alpha-m, tau or openness
        #[arg(long)]
        axis: String,
    },
    /// Aggregate report.json files under a directory into one CSV
    Report {
        /// Directory to scan recursively
        #[arg(long)]
        dir: PathBuf,
        /// Output CSV path (default: <dir>/report.csv)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn base_config(common: &CommonArgs) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if !common.seeds.is_empty() {
        cfg.seeds = common.seeds.clone();
    }
    Ok(cfg)
}

fn apply_scenario(cfg: &mut RunConfig, args: &ScenarioArgs) {
    if let Some(v) = args.sources {
        cfg.scenario.num_sources = v;
    }
    if let Some(v) = args.known {
        cfg.scenario.known_classes = v;
    }
    if let Some(v) = args.unknown {
        cfg.scenario.target_private = v;
    }
    if let Some(v) = args.source_private {
        cfg.scenario.source_private = v;
    }
    if let Some(v) = args.samples {
        cfg.scenario.samples_per_class = v;
    }
    if let Some(v) = args.dim {
        cfg.scenario.feature_dim = v;
    }
    if let Some(&seed) = cfg.seeds.first() {
        cfg.scenario.seed = seed;
    }
}

fn apply_toggles(cfg: &mut RunConfig, args: &ToggleArgs) {
    if args.no_style_transfer {
        cfg.train.style_transfer = false;
    }
    if args.no_source_balance {
        cfg.train.source_balance = false;
    }
    if args.no_self_training {
        cfg.train.self_training = false;
    }
    if args.oracle_style_pool {
        cfg.train.oracle_style_pool = true;
    }
    if args.two_view_aug {
        cfg.train.two_view_aug = true;
    }
    if args.ce_baseline {
        cfg.ce_baseline = true;
    }
    if let Some(v) = args.alpha_m {
        cfg.train.alpha_m = v;
    }
    if let Some(v) = args.tau {
        cfg.train.tau = v;
    }
    if let Some(mode) = args.mode {
        cfg.eval_mode = mode;
    }
    if args.dump_embeddings {
        cfg.dump_embeddings = true;
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate { common, scenario } => {
            let mut cfg = base_config(&common)?;
            apply_scenario(&mut cfg, &scenario);
            cfg.validate()?;
            let out = cfg.resolve_out(common.out.as_deref(), "generate");
            commands::cmd_generate(&cfg, &out)
        }
        Command::Train {
            common,
            scenario,
            toggles,
            data,
            iters,
            source_only,
            breakpoint_period,
        } => {
            let mut cfg = base_config(&common)?;
            apply_scenario(&mut cfg, &scenario);
            apply_toggles(&mut cfg, &toggles);
            if let Some(dir) = data {
                cfg.data_dir = Some(dir);
            }
            if let Some(v) = iters {
                cfg.train.total_iters = v;
                cfg.train.schedule.total_iters = v;
                if cfg.train.schedule.warmup_iters >= v {
                    cfg.train.schedule.warmup_iters = (v / 8).max(1);
                }
            }
            if let Some(v) = source_only {
                cfg.train.source_only_iters = v;
            }
            if let Some(v) = breakpoint_period {
                cfg.train.breakpoint_period = v;
            }
            cfg.validate()?;
            let out = cfg.resolve_out(common.out.as_deref(), "train");
            commands::cmd_train(&cfg, &out)
        }
        Command::Eval {
            common,
            toggles,
            checkpoint,
            data,
        } => {
            let mut cfg = base_config(&common)?;
            apply_toggles(&mut cfg, &toggles);
            cfg.validate()?;
            let out = cfg.resolve_out(common.out.as_deref(), "eval");
            commands::cmd_eval(&cfg, &checkpoint, data.as_deref(), &out)
        }
        Command::Sweep {
            common,
            toggles,
            axis,
        } => {
            let mut cfg = base_config(&common)?;
            apply_toggles(&mut cfg, &toggles);
            cfg.validate()?;
            let axis = SweepAxis::parse(&axis)?;
            let out = cfg.resolve_out(common.out.as_deref(), "sweep");
            commands::cmd_sweep(&cfg, axis, &out)
        }
        Command::Report { dir, out } => commands::cmd_report(&dir, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits 2 on usage errors, 0 on --help/--version
            e.exit();
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code as u8)
        }
    }
}
