//! The `diffmig` command line: `migrate`, `eval`, `bench`, `history` and
//! `cost`, configured by a TOML file plus flags.
//!
//! [`run`] is the whole program minus process setup, so tests can drive it
//! with a recording transport and a fake environment.

pub mod config;

mod bench;
mod cost;
mod eval;
mod history;
mod migrate;
mod table;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use diffmig_core::llm::{Clock, Transport, UreqTransport};
use thiserror::Error;

pub use config::{Config, ConfigError};

/// Bad invocation: exits with status 2.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

type EnvLookup = dyn Fn(&str) -> Option<String> + Send + Sync;

/// Everything the commands take from the outside world.
#[derive(Clone)]
pub struct Runtime {
    pub transport: Arc<dyn Transport>,
    pub env: Arc<EnvLookup>,
    /// Overrides the wall clock used for retries and rate limiting.
    pub clock: Option<Arc<dyn Clock>>,
}

impl Runtime {
    pub fn system() -> Self {
        Self {
            transport: Arc::new(UreqTransport),
            env: Arc::new(|name| std::env::var(name).ok()),
            clock: None,
        }
    }

    /// A runtime that never touches the network and sees only `vars`.
    pub fn isolated(transport: Arc<dyn Transport>, vars: &[(&str, &str)]) -> Self {
        let vars: Vec<(String, String)> = vars
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self {
            transport,
            env: Arc::new(move |name| vars.iter().find(|(k, _)| k == name).map(|(_, v)| v.clone())),
            clock: None,
        }
    }

    pub fn load_config(&self, path: &Path) -> Result<Config, ConfigError> {
        Config::load(path, &|name| (self.env)(name))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "diffmig",
    version,
    about = "Diff-driven dependency migration with LLMs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Migrate project files to a new library version.
    Migrate(migrate::MigrateArgs),
    /// Score migrated trees by tests and edit matching.
    Eval(eval::EvalArgs),
    /// Diff-comprehension benchmark.
    #[command(subcommand)]
    Bench(bench::BenchCommand),
    /// Repository size against commit-diff size over history.
    History(history::HistoryArgs),
    /// Summarize usage ledgers into a cost table.
    Cost(cost::CostArgs),
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status: 0 success, 1 operational failure, 2 usage error.
pub fn run<I, T>(args: I, rt: &Runtime, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                2
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    let result = match cli.command {
        Command::Migrate(args) => migrate::run(&args, rt, stdout),
        Command::Eval(args) => eval::run(&args, rt, stdout),
        Command::Bench(cmd) => bench::run(&cmd, rt, stdout),
        Command::History(args) => history::run(&args, rt, stdout),
        Command::Cost(args) => cost::run(&args, rt, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> i32 {
    if e.chain()
        .any(|c| c.is::<UsageError>() || c.is::<ConfigError>())
    {
        2
    } else {
        1
    }
}

/// Creates `dir` and returns `dir/name`.
fn out_file(dir: &Path, name: &str) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir)
        .map_err(|e| anyhow::anyhow!("cannot create {}: {e}", dir.display()))?;
    Ok(dir.join(name))
}

fn require_dir(flag: &str, path: &Path) -> anyhow::Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(usage(format!(
            "{flag}: {} is not a directory",
            path.display()
        )))
    }
}
