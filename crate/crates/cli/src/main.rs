use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use troll_irl::irl::IrlVariant;
use troll_irl::pipeline::{self, PipelineConfig};
use troll_irl::{Error, ErrorClass, Execution};

/// Per-account reward inference and troll classification.
#[derive(Debug, Parser)]
#[command(name = "troll-irl", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["linear", "deep"])]
    irl: Option<String>,
    /// Minimum active and passive events per retained account.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Run without the thread pool.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a labelled population and write its activity log.
    Simulate,
    /// Fit per-account rewards from an activity log.
    Rewards {
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Cross-validated classification of a rewards table.
    Classify {
        #[arg(long)]
        rewards: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Compare reward distributions between classes.
    Analyze {
        #[arg(long)]
        rewards: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Classification quality over a range of activity thresholds.
    SweepK {
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Comma-separated ascending thresholds.
        #[arg(long, value_delimiter = ',')]
        k_values: Option<Vec<usize>>,
    },
}

fn effective_config(cli: &Cli) -> troll_irl::Result<PipelineConfig> {
    let g = &cli.global;
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.paths.out = o.clone();
    }
    if let Some(v) = &g.irl {
        cfg.irl_variant = v.parse::<IrlVariant>()?;
    }
    if let Some(k) = g.k {
        cfg.k = k;
    }
    let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
        if v.is_some() {
            slot.clone_from(v);
        }
    };
    match &cli.command {
        Command::Simulate => {}
        Command::Rewards { events, labels } => {
            set(&mut cfg.paths.events, events);
            set(&mut cfg.paths.labels, labels);
        }
        Command::Classify { rewards, labels } | Command::Analyze { rewards, labels } => {
            set(&mut cfg.paths.rewards, rewards);
            set(&mut cfg.paths.labels, labels);
        }
        Command::SweepK { events, labels, k_values } => {
            set(&mut cfg.paths.events, events);
            set(&mut cfg.paths.labels, labels);
            if let Some(ks) = k_values {
                cfg.sweep.k_values = ks.clone();
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> troll_irl::Result<pipeline::Outputs> {
    let cfg = effective_config(cli)?;
    let exec = if cli.global.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Simulate => pipeline::cmd_simulate(&cfg, exec),
        Command::Rewards { .. } => pipeline::cmd_rewards(&cfg, exec),
        Command::Classify { .. } => pipeline::cmd_classify(&cfg, exec),
        Command::Analyze { .. } => pipeline::cmd_analyze(&cfg),
        Command::SweepK { .. } => pipeline::cmd_sweep_k(&cfg, exec),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numerical => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(outputs) => {
            for p in outputs.0 {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
