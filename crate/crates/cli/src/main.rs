use advdrive::config::{load_config, RunConfig};
use advdrive::metrics::{compare, Column};
use advdrive::pipeline::{read_episode_log, read_report, write_comparison, write_plot, Pipeline};
use advdrive::raster::ObsMode;
use advdrive::reward::RewardKind;
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "advdrive", version, about = "Adversarial multi-agent driving: train, attack, retrain, evaluate")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; missing keys take the full-scale defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Preset used when no --config is given (demo defaults to `demo`, everything else to `full`).
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for concurrent episodes. Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Episodes for the phase being run (or evaluation episodes for `evaluate`).
    #[arg(long, global = true)]
    episodes: Option<usize>,
    /// Per-episode tick limit for the phase being run.
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long = "obs-mode", global = true)]
    obs_mode: Option<ObsMode>,
    /// Run directory.
    #[arg(long, global = true, env = "ADVDRIVE_OUT")]
    out: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Preset {
    Full,
    Demo,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the victims from scratch without an adversary.
    TrainBaseline,
    /// Train an adversary against frozen victims.
    TrainAdversary {
        /// Victim checkpoints, comma separated or repeated.
        #[arg(long, required = true, value_delimiter = ',')]
        victims: Vec<PathBuf>,
        #[arg(long, default_value = "adv_collision")]
        reward: RewardKind,
    },
    /// Continue victim training with a frozen adversary present.
    Retrain {
        #[arg(long, required = true, value_delimiter = ',')]
        victims: Vec<PathBuf>,
        #[arg(long)]
        adversary: PathBuf,
        #[arg(long, default_value = "retrained")]
        label: String,
    },
    /// Evaluate frozen policies and write a metrics report and trajectory plot.
    Evaluate {
        #[arg(long, required = true, value_delimiter = ',')]
        victims: Vec<PathBuf>,
        #[arg(long)]
        adversary: Option<PathBuf>,
        #[arg(long, default_value = "eval")]
        label: String,
    },
    /// Tabulate metrics reports side by side.
    Compare {
        /// Report files in column order.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Compare every column with the first instead of with the previous one.
        #[arg(long)]
        against_first: bool,
    },
    /// Render a logged episode as SVG and CSV.
    Plot {
        /// Episode log written next to each evaluation plot (`*.episode.json`).
        episode: PathBuf,
        #[arg(long, default_value = "episode")]
        label: String,
    },
    /// Every phase, all evaluation conditions and the comparison table.
    Demo,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::TrainBaseline => "train-baseline",
            Command::TrainAdversary { .. } => "train-adversary",
            Command::Retrain { .. } => "retrain",
            Command::Evaluate { .. } => "evaluate",
            Command::Compare { .. } => "compare",
            Command::Plot { .. } => "plot",
            Command::Demo => "demo",
        }
    }
}

fn resolve_config(common: &Common, command: &Command) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => match common.preset.unwrap_or(if matches!(command, Command::Demo) {
            Preset::Demo
        } else {
            Preset::Full
        }) {
            Preset::Full => RunConfig::default(),
            Preset::Demo => RunConfig::demo(),
        },
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(mode) = common.obs_mode {
        cfg.raster.resolution_mode = mode;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    let budget = match command {
        Command::TrainBaseline => Some(&mut cfg.phases.baseline),
        Command::TrainAdversary { .. } => Some(&mut cfg.phases.adversary),
        Command::Retrain { .. } => Some(&mut cfg.phases.retraining),
        _ => None,
    };
    if let Some(b) = budget {
        if let Some(e) = common.episodes {
            b.episodes = e;
        }
        if let Some(s) = common.steps {
            b.max_steps = s;
        }
    } else if matches!(command, Command::Evaluate { .. }) {
        if let Some(e) = common.episodes {
            cfg.eval.episodes = e;
            cfg.eval.plot_episode = cfg.eval.plot_episode.min(e.saturating_sub(1));
        }
        if let Some(s) = common.steps {
            cfg.eval.max_steps = s;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn open(common: &Common, command: &Command) -> Result<Pipeline> {
    let cfg = resolve_config(common, command)?;
    let out = cfg.output_dir.clone();
    let name = command.name();
    let mut p = Pipeline::new(cfg, &out, name)?;
    let reproduce = format!(
        "{} --config {} --out {}",
        std::env::args().next().unwrap_or_else(|| "advdrive".into()),
        out.join("config.toml").display(),
        out.display()
    );
    let args = reproduce_args(command);
    p.set_reproduce(format!("{reproduce} {name}{args}"))?;
    Ok(p)
}

fn join_paths(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(",")
}

fn reproduce_args(command: &Command) -> String {
    match command {
        Command::TrainAdversary { victims, reward } => format!(" --victims {} --reward {reward}", join_paths(victims)),
        Command::Retrain { victims, adversary, label } => format!(
            " --victims {} --adversary {} --label {label}",
            join_paths(victims),
            adversary.display()
        ),
        Command::Evaluate { victims, adversary, label } => {
            let adv = adversary
                .as_ref()
                .map(|a| format!(" --adversary {}", a.display()))
                .unwrap_or_default();
            format!(" --victims {}{adv} --label {label}", join_paths(victims))
        }
        _ => String::new(),
    }
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    match &cli.command {
        Command::TrainBaseline => {
            let mut p = open(common, &cli.command)?;
            for c in p.train_baseline()? {
                println!("{} {} sha256={}", c.agent_id, c.path.display(), c.sha256);
            }
        }
        Command::TrainAdversary { victims, reward } => {
            let mut p = open(common, &cli.command)?;
            let c = p.train_adversary(victims, *reward)?;
            println!("{} {} sha256={}", c.agent_id, c.path.display(), c.sha256);
        }
        Command::Retrain { victims, adversary, label } => {
            let mut p = open(common, &cli.command)?;
            for c in p.retrain(victims, adversary, label)? {
                println!("{} {} sha256={}", c.agent_id, c.path.display(), c.sha256);
            }
        }
        Command::Evaluate { victims, adversary, label } => {
            let mut p = open(common, &cli.command)?;
            let report = p.evaluate(label, victims, adversary.as_deref())?;
            print!("{}", report.to_json());
        }
        Command::Compare { reports, against_first } => {
            let loaded = reports
                .iter()
                .map(|p| read_report(p))
                .collect::<advdrive::Result<Vec<_>>>()?;
            let mut columns = Column::chain(&loaded);
            if *against_first {
                let first = loaded[0].label.clone();
                for c in columns.iter_mut().skip(1) {
                    c.reference = Some(first.clone());
                }
            }
            let table = compare(&columns)?;
            let dir = out_dir(common)?.join("reports");
            write_comparison(&dir, &table)?;
            print!("{}", table.render_text());
        }
        Command::Plot { episode, label } => {
            let log = read_episode_log(episode)?;
            let dir = out_dir(common)?.join("plots");
            write_plot(&dir, label, &log)?;
            println!("{}", dir.join(format!("{label}.svg")).display());
        }
        Command::Demo => {
            let mut p = open(common, &cli.command)?;
            let outcome = p.run_demo()?;
            print!("{}", outcome.table.render_text());
            println!("run directory: {}", p.out.display());
        }
    }
    Ok(())
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    if let Some(out) = &common.out {
        return Ok(out.clone());
    }
    let cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    Ok(cfg.output_dir)
}

fn error_class(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| e.downcast_ref::<advdrive::Error>())
        .map(advdrive::Error::class)
        .unwrap_or("internal")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli).context("advdrive failed") {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let msg = err
                .chain()
                .skip(1)
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(": ");
            eprintln!("error class={} msg={}", error_class(&err), msg.replace('\n', " "));
            ExitCode::from(1)
        }
    }
}
