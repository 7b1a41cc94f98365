use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use diffmig_core::history::{analyze, emit_csv, emit_tsv, HistoryOptions};
use diffmig_core::repo::Repo;
use diffmig_core::tokens::{TokenCounter, TokenizerSpec};
use diffmig_core::{FileFilter, FilterSpec};

use crate::{out_file, usage, Runtime};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
    Tsv,
}

#[derive(Debug, Args)]
pub struct HistoryArgs {
    /// Local git clone.
    #[arg(long)]
    pub repo: PathBuf,
    #[arg(long = "ref", default_value = "HEAD")]
    pub reference: String,
    #[arg(long)]
    pub include: Vec<String>,
    #[arg(long)]
    pub exclude: Vec<String>,
    /// Walk every parent instead of the first-parent chain.
    #[arg(long)]
    pub all_parents: bool,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Takes the tokenizer from this config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// BPE vocabulary file; overrides the config's tokenizer.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Directory for history.csv or history.tsv; stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &HistoryArgs, rt: &Runtime, stdout: &mut dyn Write) -> Result<()> {
    let mut spec = match &args.config {
        Some(path) => rt.load_config(path)?.tokenizer,
        None => TokenizerSpec::default(),
    };
    if let Some(vocab) = &args.vocab {
        if !vocab.is_file() {
            return Err(usage(format!("--vocab: {} not found", vocab.display())));
        }
        spec = TokenizerSpec::bpe("bpe", vocab);
    }
    let counter = TokenCounter::from_spec(&spec)?;
    let filter = FileFilter::from_spec(FilterSpec {
        include: args.include.clone(),
        exclude: args.exclude.clone(),
    })
    .map_err(|e| usage(e.to_string()))?;
    if !args.repo.is_dir() {
        return Err(usage(format!(
            "--repo: {} is not a directory",
            args.repo.display()
        )));
    }
    let repo = Repo::open(&args.repo)?;
    let opts = HistoryOptions {
        filter,
        first_parent: !args.all_parents,
        workers: args.parallel,
    };
    let points = analyze(&repo, &args.reference, &opts, &counter)?;
    let (text, name) = match args.format {
        Format::Csv => (emit_csv(&points), "history.csv"),
        Format::Tsv => (emit_tsv(&points), "history.tsv"),
    };
    match &args.out {
        Some(dir) => {
            let path = out_file(dir, name)?;
            fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            writeln!(stdout, "{} commits -> {}", points.len(), path.display())?;
        }
        None => write!(stdout, "{text}")?,
    }
    Ok(())
}
