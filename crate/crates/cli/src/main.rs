use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use kgqa_cli::{
    cmd_eval, cmd_filter, cmd_generate, cmd_ingest, cmd_score, cmd_stats, cmd_train, with_threads, FilterInputs,
    Overrides, PipelineConfig, Regime, RunReport, ScorerSpec, TrainInputs,
};
use kgqa_core::distractor::Strategy;
use kgqa_core::scoring::ScoreMode;

/// Synthetic commonsense QA from knowledge graphs.
#[derive(Debug, Parser)]
#[command(name = "kgqa", version)]
struct Cli {
    /// TOML config file; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated seed sweep, e.g. 1,2,3 (train only).
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// random | adv-answer | adv-question | adv-filter
    #[arg(long, global = true, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and normalize an edge file.
    Ingest {
        #[arg(long)]
        edges: Option<PathBuf>,
    },
    /// Generate train/dev QA items with distractors.
    Generate {
        #[arg(long)]
        edges: Option<PathBuf>,
    },
    /// Adversarially filter a generated train/dev pair.
    Filter {
        /// Directory holding train.jsonl and dev.jsonl.
        #[arg(long)]
        input_dir: PathBuf,
        /// Per-item feature vectors (text vector format).
        #[arg(long)]
        features: Option<PathBuf>,
        /// `id<TAB>label` lines.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Score one file and write per-item predictions.
    Score {
        #[arg(long)]
        input: PathBuf,
        /// majority | bigram[:corpus] | checkpoint:<file>
        #[arg(long, default_value = "bigram")]
        scorer: ScorerSpec,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<ScoreMode>,
    },
    /// Train a scorer on synthetic QA.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        /// mr | mlm
        #[arg(long)]
        regime: Option<Regime>,
    },
    /// Accuracy per file next to the majority baseline.
    Eval {
        #[arg(long = "input", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "majority")]
        scorer: ScorerSpec,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<ScoreMode>,
    },
    /// Dataset statistics.
    Stats {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: kgqa_core::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<ScoreMode, String> {
    match s {
        "causal" => Ok(ScoreMode::Causal),
        "masked" => Ok(ScoreMode::Masked),
        other => Err(format!("unknown mode `{other}` (causal or masked)")),
    }
}

fn absolute(p: PathBuf) -> PathBuf {
    std::path::absolute(&p).unwrap_or(p)
}

fn run(cli: Cli) -> Result<RunReport> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig {
            base_dir: std::env::current_dir()?,
            ..Default::default()
        },
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        strategy: cli.strategy,
        out_dir: cli.out_dir.clone(),
    });
    if !cli.seeds.is_empty() && !matches!(cli.command, Command::Train { .. }) {
        bail!("--seeds is only supported by `train`");
    }
    let threads = cli.threads;
    let seeds = cli.seeds;
    with_threads(threads, move || match cli.command {
        Command::Ingest { edges } => {
            if let Some(e) = edges {
                cfg.paths.edges = Some(absolute(e));
            }
            cmd_ingest(&cfg)
        }
        Command::Generate { edges } => {
            if let Some(e) = edges {
                cfg.paths.edges = Some(absolute(e));
            }
            cmd_generate(&cfg)
        }
        Command::Filter {
            input_dir,
            features,
            labels,
        } => cmd_filter(
            &cfg,
            &FilterInputs {
                input_dir,
                features,
                labels,
            },
        ),
        Command::Score { input, scorer, mode } => {
            if let Some(m) = mode {
                cfg.score.mode = m;
            }
            cmd_score(&cfg, &input, &scorer)
        }
        Command::Train { train, dev, regime } => {
            if let Some(r) = regime {
                cfg.train.regime = r;
            }
            cmd_train(&cfg, &TrainInputs { train, dev }, &seeds)
        }
        Command::Eval { inputs, scorer, mode } => {
            if let Some(m) = mode {
                cfg.score.mode = m;
            }
            cmd_eval(&cfg, &inputs, &scorer)
        }
        Command::Stats { inputs } => cmd_stats(&cfg, &inputs),
    })?
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KGQA_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(report) => {
            print!("{}", report.render(true));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
