use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use polenav::harness::{self, ArtifactStore, ExperimentConfig, REPORT_FILE};
use polenav::{ConfigError, Error};

#[derive(Debug, Parser)]
#[command(name = "polenav", version, about = "Active self-localization experiments with pole landmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the world and per-pairing domain views.
    Gen(Common),
    /// Detector, map index, lookup tables and baseline step constants.
    Build(Common),
    /// Train the Q planner on the training domain.
    Train(Common),
    /// Evaluate policies on the test domain and write report.csv.
    Eval(Common),
    /// Render the cost-versus-rank figure from a report.
    Plot(Common),
}

#[derive(Debug, Clone, clap::Args)]
struct Common {
    /// Experiment config (JSON); optional for `plot` when `--report` is given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated policies, e.g. `learned,heuristics,oracle`.
    #[arg(long)]
    policies: Option<String>,
    /// `plot` only: report to read instead of `<out>/report.csv`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Append every artifact read/write of this run to a file.
    #[arg(long)]
    access_log: Option<PathBuf>,
}

fn run(command: Command) -> Result<(), Error> {
    let (Command::Gen(c) | Command::Build(c) | Command::Train(c) | Command::Eval(c) | Command::Plot(c)) =
        &command;
    let c = c.clone();
    if let (Command::Plot(_), Some(report)) = (&command, &c.report) {
        let out = harness::plot_path_for(report);
        harness::cmd_plot(report, &out)?;
        println!("wrote {}", out.display());
        return Ok(());
    }
    let config = c
        .config
        .as_ref()
        .ok_or_else(|| ConfigError::new("config", "--config <path> is required"))?;
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(out) = c.out {
        cfg.output_dir = out;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(list) = &c.policies {
        cfg.policies = harness::parse_policies(list)?;
    }
    let store = ArtifactStore::new(cfg.output_dir.clone());
    let result = match command {
        Command::Gen(_) => harness::cmd_gen(&cfg, &store),
        Command::Build(_) => harness::cmd_build(&cfg, &store),
        Command::Train(_) => harness::cmd_train(&cfg, &store).map(|curves| {
            for c in curves {
                let n = c.returns.len();
                let tail = &c.returns[n - n.min(100)..];
                if !tail.is_empty() {
                    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
                    println!("pair {}: {n} episodes, mean return of last {} = {mean:.3}", c.pair_id, tail.len());
                }
            }
        }),
        Command::Eval(_) => harness::cmd_eval(&cfg, &store)
            .map(|rows| print!("{}", harness::format_summary(&harness::summarize(&rows)))),
        Command::Plot(_) => {
            let report = c.report.unwrap_or_else(|| cfg.output_dir.join(REPORT_FILE));
            let out = harness::plot_path_for(&report);
            harness::cmd_plot(&report, &out).map(|_| println!("wrote {}", out.display()))
        }
    };
    if let Some(path) = &c.access_log {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
        f.write_all(store.access_log_text().as_bytes())
            .map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
    }
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
