use std::path::PathBuf;
use std::process::ExitCode;

use alkit::commands::{cmd_inspect, cmd_report, cmd_resume, cmd_run, cmd_synth};
use alkit::simulator::{ExperimentOutcome, RunControl};
use alkit::{Error, ErrorKind, ExperimentConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "alkit", version, about = "Active learning experiments over frozen features")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Dotted-key override, e.g. `pool.budget=500`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug, Clone, Default)]
struct RunArgs {
    /// Comma-separated seeds, replacing run.seeds.
    #[arg(long, value_delimiter = ',', value_name = "a,b,c")]
    seeds: Vec<u64>,
    /// Strategy name, replacing strategy.name.
    #[arg(long, value_name = "NAME")]
    strategy: Option<String>,
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// Stop every run after this round's checkpoint, as if interrupted.
    #[arg(long, hide = true)]
    stop_after_round: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.seeds.is_empty() {
            let list: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
            out.push(format!("run.seeds=[{}]", list.join(",")));
        }
        if let Some(s) = &self.strategy {
            out.push(format!("strategy.name={s}"));
        }
        if let Some(j) = self.jobs {
            out.push(format!("run.jobs={j}"));
        }
        out
    }

    fn control(&self) -> RunControl {
        RunControl {
            stop_after_round: self.stop_after_round,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic long-tailed pool and test set.
    Synth {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Run every configured strategy and seed.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory, replacing run.out_dir.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Continue interrupted runs from their checkpoints.
    Resume {
        /// Directory of a previous `run`.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Config to resume with; defaults to the one stored in DIR.
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Summarize results logs into CSV tables.
    Report {
        /// Directory searched recursively for results logs.
        logs: PathBuf,
        /// Where the tables go; defaults to the logs directory.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Dump boundary scores of the round-0 model for one seed.
    Inspect {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn load(path: &PathBuf, mut overrides: Vec<String>, extra: Vec<String>) -> alkit::Result<ExperimentConfig> {
    overrides.extend(extra);
    ExperimentConfig::from_file(path, &overrides)
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn report_error(e: &Error) -> ExitCode {
    let kind = e.kind();
    eprintln!("[{}] {}", kind.tag(), one_line(&e.to_string()));
    ExitCode::from(kind.exit_code() as u8)
}

fn finish(outcome: ExperimentOutcome) -> ExitCode {
    let mut code = ExitCode::SUCCESS;
    let mut first = true;
    for run in &outcome.runs {
        if let Err(e) = &run.outcome {
            eprintln!(
                "[{}] {} seed {}: {}",
                e.kind().tag(),
                run.strategy,
                run.seed,
                one_line(&e.to_string())
            );
            if first {
                code = ExitCode::from(e.kind().exit_code() as u8);
                first = false;
            }
        }
    }
    code
}

fn dispatch(command: Command) -> alkit::Result<ExitCode> {
    match command {
        Command::Synth { config, out } => {
            let cfg = load(&config.config, config.overrides, vec![])?;
            let manifest = cmd_synth(&cfg, &out)?;
            log::info!("wrote {} pool rows to {}", manifest.counts.iter().sum::<usize>(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, out, run } => {
            let mut cfg = load(&config.config, config.overrides, run.overrides())?;
            if out.is_some() {
                cfg.run.out_dir = out;
            }
            Ok(finish(cmd_run(&cfg, run.control())?))
        }
        Command::Resume {
            out,
            config,
            overrides,
            run,
        } => {
            let path = config.unwrap_or_else(|| out.join(alkit::simulator::CONFIG_FILE));
            let cfg = load(&path, overrides, run.overrides())?;
            Ok(finish(cmd_resume(&out, Some(cfg), run.control())?))
        }
        Command::Report { logs, out } => {
            let out = out.unwrap_or_else(|| logs.clone());
            let files = cmd_report(&logs, &out)?;
            log::info!("wrote {}", files.summary.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Inspect { config, seed, out } => {
            let cfg = load(&config.config, config.overrides, vec![])?;
            cmd_inspect(&cfg, seed, &out)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                // --help, --version
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("[{}] {}", ErrorKind::Config.tag(), first.trim_start_matches("error: "));
            return ExitCode::from(ErrorKind::Config.exit_code() as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => report_error(&e),
    }
}
