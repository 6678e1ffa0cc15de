use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use weaksp::cli::{parse_split, run, CliError, Command, GlobalConfig, Options, QUIET_ENV};

#[derive(Parser)]
#[command(name = "weaksp", version, about = "Weakly supervised table semantic parsing")]
struct Args {
    /// Config file (`key = value`, `[section]` headers, `#` comments).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed everywhere.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for `search` and `eval`.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic corpus.
    Gen,
    /// Search consistent programs into the cache.
    Search,
    /// Print coverage, mean consistent count and distinct parents.
    Stats,
    /// Train the parser.
    Train,
    /// Evaluate a checkpoint.
    Eval {
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Parse one example.
    Parse { example_id: String },
    /// Print alignment marginals for one example.
    Align { example_id: String },
}

fn main() -> ExitCode {
    let quiet = std::env::var(QUIET_ENV).is_ok_and(|v| !v.is_empty() && v != "0");
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if quiet { "warn" } else { "info" })).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match go(args) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("weaksp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn go(args: Args) -> Result<String, CliError> {
    let mut config = match &args.config {
        Some(p) => GlobalConfig::load(p)?,
        None => GlobalConfig::default(),
    };
    if let Some(s) = args.seed {
        config.set_seed(s);
    }
    let cmd = match args.cmd {
        Cmd::Gen => Command::Gen,
        Cmd::Search => Command::Search,
        Cmd::Stats => Command::Stats,
        Cmd::Train => Command::Train,
        Cmd::Eval { split } => Command::Eval { split: parse_split(&split)? },
        Cmd::Parse { example_id } => Command::Parse { example_id },
        Cmd::Align { example_id } => Command::Align { example_id },
    };
    run(&cmd, &Options { config, workers: args.workers })
}
