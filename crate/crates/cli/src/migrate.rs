use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Args;
use diffmig_core::llm::{
    ChatProvider, CostTable, LlmClient, LlmError, MockProvider, OpenAiProvider, UsageLedger,
};
use diffmig_core::migrate::{self, LibrarySpec, MigrateError, MigrationJob, Plan, RunResult};
use diffmig_core::prompt::{MigrationStrategy, TemplateSet};
use diffmig_core::repo::RepoRef;
use diffmig_core::tokens::TokenCounter;
use diffmig_core::{FileFilter, FileSet};
use log::info;

use crate::config::{Config, ConfigError, MockReply, ProviderKind};
use crate::table::{Align, Table};
use crate::{out_file, usage, Runtime};

#[derive(Debug, Args)]
pub struct MigrateArgs {
    /// Job configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Build every prompt and print token counts; contacts no provider.
    #[arg(long)]
    pub dry_run: bool,
    /// Legacy library ref (overrides the config).
    #[arg(long)]
    pub v_from: Option<String>,
    /// Target library ref (overrides the config).
    #[arg(long)]
    pub v_to: Option<String>,
    /// Extra library exclusion pattern; repeatable.
    #[arg(long)]
    pub exclude: Vec<String>,
    /// Concurrent requests per run.
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Abort a run on its first failed file.
    #[arg(long)]
    pub die: bool,
    #[arg(long)]
    pub runs: Option<usize>,
    /// black_box, with_code or with_diff.
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Output tree (overrides `job.dest_dir`).
    #[arg(long)]
    pub dest: Option<PathBuf>,
    /// Directory for reports (`plan.json` or `summary.json`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub(crate) struct Setup {
    pub config: Config,
    pub job: MigrationJob,
    pub templates: TemplateSet,
    pub counter: TokenCounter,
}

fn missing(field: &str) -> ConfigError {
    ConfigError::MissingField {
        field: field.into(),
        hint: String::new(),
    }
}

fn invalid(field: &str, e: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: e.to_string(),
    }
}

pub(crate) fn setup(args: &MigrateArgs, rt: &Runtime) -> Result<Setup> {
    let config = rt.load_config(&args.config)?;
    let jc = config.job.clone().ok_or_else(|| missing("job"))?;
    let lc = config.library.clone().ok_or_else(|| missing("library"))?;
    let strategy: MigrationStrategy = match &args.strategy {
        Some(s) => s.parse().map_err(usage)?,
        None => jc.strategy()?,
    };
    let repo = match (&lc.repo, strategy.needs_artifact()) {
        (Some(repo), _) => repo.clone(),
        (None, false) => jc.source_dir.clone(),
        (None, true) => {
            return Err(ConfigError::MissingField {
                field: "library.repo".into(),
                hint: format!(" by the {strategy} strategy"),
            }
            .into())
        }
    };
    let mut lib_filter = lc.filter.clone();
    lib_filter.exclude.extend(args.exclude.iter().cloned());
    let filter = FileFilter::from_spec(lib_filter).map_err(|e| invalid("library.filter", e))?;

    let files = if jc.files.is_empty() {
        let project_filter =
            FileFilter::from_spec(jc.filter.clone()).map_err(|e| invalid("job.filter", e))?;
        let set = FileSet::read_dir(&jc.source_dir, &project_filter)
            .with_context(|| format!("reading {}", jc.source_dir.display()))?;
        set.paths().map(String::from).collect()
    } else {
        jc.files.clone()
    };
    let templates = match &config.templates {
        Some(dir) => TemplateSet::load_dir(dir)?,
        None => TemplateSet::default(),
    };
    let counter = TokenCounter::from_spec(&config.tokenizer)?;
    let alias = if lc.alias.is_empty() {
        lc.name.clone()
    } else {
        lc.alias.clone()
    };
    let job = MigrationJob {
        source_dir: jc.source_dir.clone(),
        dest_dir: args.dest.clone().unwrap_or(jc.dest_dir.clone()),
        files,
        lib: LibrarySpec {
            name: lc.name.clone(),
            alias,
            from: RepoRef::new(&repo, args.v_from.clone().unwrap_or(lc.v_from.clone())),
            to: RepoRef::new(&repo, args.v_to.clone().unwrap_or(lc.v_to.clone())),
        },
        filter,
        strategy,
        model: args.model.clone().unwrap_or(config.provider.model.clone()),
        case: jc.case.clone(),
        runs: args.runs.unwrap_or(jc.runs),
        workers: args.parallel.unwrap_or(jc.parallel).max(1),
        die_on_error: args.die || jc.die,
        temperature: jc.temperature,
        max_output_tokens: jc.max_output_tokens,
        context_window: config.provider.context_window,
    };
    Ok(Setup {
        config,
        job,
        templates,
        counter,
    })
}

/// The configured provider. `source_dir` backs the identity mock.
pub(crate) fn provider(
    config: &Config,
    source_dir: &std::path::Path,
    rt: &Runtime,
) -> Result<Arc<dyn ChatProvider>> {
    let p = &config.provider;
    Ok(match p.kind {
        ProviderKind::Mock => Arc::new(match p.reply {
            MockReply::Identity => MockProvider::from_dir(source_dir),
            MockReply::Dir => {
                MockProvider::from_dir(p.dir.clone().ok_or_else(|| missing("provider.dir"))?)
            }
            MockReply::Canned => {
                MockProvider::canned(p.text.clone().ok_or_else(|| missing("provider.text"))?)
            }
            MockReply::Echo => MockProvider::echo(),
        }),
        ProviderKind::Openai => {
            let key = if p.api_key_env.is_empty() {
                None
            } else {
                Some(
                    (rt.env)(&p.api_key_env)
                        .ok_or_else(|| LlmError::MissingCredential(p.api_key_env.clone()))?,
                )
            };
            Arc::new(OpenAiProvider::new(
                &p.base_url,
                key,
                rt.transport.clone(),
                Duration::from_secs(p.timeout_secs),
            ))
        }
    })
}

pub(crate) fn client(
    config: &Config,
    provider: Arc<dyn ChatProvider>,
    ledger: UsageLedger,
    rt: &Runtime,
) -> LlmClient {
    let mut costs = CostTable::openai_defaults();
    costs.merge(&config.costs);
    let client = LlmClient::new(provider)
        .with_retry(config.retry)
        .with_budget(config.provider.tokens_per_minute)
        .with_costs(costs)
        .with_ledger(ledger);
    match &rt.clock {
        Some(clock) => client.with_clock(clock.clone()),
        None => client,
    }
}

pub fn run(args: &MigrateArgs, rt: &Runtime, stdout: &mut dyn Write) -> Result<()> {
    let setup = setup(args, rt)?;
    let job = &setup.job;
    if args.dry_run {
        let plan = migrate::plan(job, &setup.templates, &setup.counter).map_err(job_error)?;
        print_plan(&plan, stdout)?;
        if let Some(dir) = &args.out {
            let path = out_file(dir, "plan.json")?;
            fs::write(&path, serde_json::to_string_pretty(&plan)? + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
        }
        return Ok(());
    }

    let provider = provider(&setup.config, &job.source_dir, rt)?;
    let ledger = UsageLedger::new();
    let client = client(&setup.config, provider, ledger.clone(), rt);
    let outcome = migrate::run(job, &client, &setup.templates, &setup.counter);
    let ledger_path = setup
        .config
        .usage_ledger
        .clone()
        .unwrap_or_else(|| job.dest_dir.join("usage.jsonl"));
    if !ledger.is_empty() {
        ledger.save_jsonl(&ledger_path)?;
        info!("usage appended to {}", ledger_path.display());
    }
    let results = outcome.map_err(job_error)?;
    print_runs(&results, stdout)?;
    if let Some(dir) = &args.out {
        let path = out_file(dir, "summary.json")?;
        fs::write(&path, serde_json::to_string_pretty(&results)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let failed: usize = results.iter().map(RunResult::failures).sum();
    if failed > 0 {
        writeln!(
            stdout,
            "{failed} file migration(s) failed; see run.json in each run directory"
        )?;
    }
    Ok(())
}

fn job_error(e: MigrateError) -> anyhow::Error {
    match e {
        MigrateError::InvalidJob(msg) => usage(format!("invalid job: {msg}")),
        other => other.into(),
    }
}

fn print_plan(plan: &Plan, out: &mut dyn Write) -> Result<()> {
    writeln!(
        out,
        "{} (dry run, tokenizer {})",
        plan.experiment, plan.tokenizer
    )?;
    let mut table = Table::new(&[
        ("file", Align::Left),
        ("prompt tokens", Align::Right),
        ("fits", Align::Left),
    ]);
    for f in &plan.files {
        let fits = f.fit.map_or("-", |fit| if fit.fits { "yes" } else { "NO" });
        table.row(vec![
            f.path.clone(),
            f.prompt_tokens.to_string(),
            fits.into(),
        ]);
    }
    table.row(vec![
        "total".into(),
        plan.total_prompt_tokens().to_string(),
        String::new(),
    ]);
    table.write(out)?;
    writeln!(out, "artifact tokens: {}", plan.artifact_tokens)?;
    Ok(())
}

fn print_runs(results: &[RunResult], out: &mut dyn Write) -> Result<()> {
    if let Some(first) = results.first() {
        writeln!(out, "{}", first.experiment)?;
    }
    let mut table = Table::new(&[
        ("run", Align::Right),
        ("files", Align::Right),
        ("failed", Align::Right),
        ("prompt", Align::Right),
        ("completion", Align::Right),
        ("cost (USD)", Align::Right),
        ("seconds", Align::Right),
    ]);
    for r in results {
        table.row(vec![
            r.run_index.to_string(),
            r.files.len().to_string(),
            r.failures().to_string(),
            r.prompt_tokens.to_string(),
            r.completion_tokens.to_string(),
            r.cost_usd.map_or("-".into(), |c| format!("{c:.4}")),
            format!("{:.1}", r.duration_ms as f64 / 1000.0),
        ]);
    }
    table.write(out)?;
    Ok(())
}
