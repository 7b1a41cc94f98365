//! The migration loop: one LLM request per project file, repeated for each
//! independent run.
//!
//! Outputs land in `<dest>/run_<k>/<relative path>` with a `run.json` next to
//! them. The source tree is only ever read.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::files::{FileEntry, FileSet};
use crate::filter::FileFilter;
use crate::llm::{sanitize_code_reply, ChatRequest, LlmClient, LlmError, UsageLabels};
use crate::pool::parallel_map;
use crate::prompt::{LibraryMeta, MigrationStrategy, Prompt, PromptError, TemplateSet};
use crate::repo::{self, RepoError, RepoRef};
use crate::tokens::{fits_context, ContextFit, TokenCounter};

#[derive(Debug, Error)]
pub enum MigrateError {
    #[error("invalid job: {0}")]
    InvalidJob(String),
    #[error(transparent)]
    Repo(#[from] RepoError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("library artifact for {0} is empty; the two library refs select no differences")]
    EmptyArtifact(MigrationStrategy),
    #[error("{} file(s) exceed the {window}-token context window (first: {} at {} tokens)", .files.len(), .files[0].0, .files[0].1)]
    ContextOverflow {
        window: usize,
        files: Vec<(String, usize)>,
    },
    #[error("run {run} aborted on {file}: {source}")]
    Aborted {
        run: usize,
        file: String,
        #[source]
        source: LlmError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> MigrateError + '_ {
    move |source| MigrateError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// The library being upgraded: display names plus the two refs to compare.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibrarySpec {
    pub name: String,
    pub alias: String,
    pub from: RepoRef,
    pub to: RepoRef,
}

impl LibrarySpec {
    pub fn meta(&self) -> LibraryMeta {
        LibraryMeta {
            name: self.name.clone(),
            alias: self.alias.clone(),
            v_from: self.from.reference.clone(),
            v_to: self.to.reference.clone(),
        }
    }
}

/// An experiment cell: model `l`, method `m`, case study `c`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub model: String,
    pub method: String,
    pub case: String,
}

impl ExperimentSpec {
    pub fn new(
        model: impl Into<String>,
        method: impl Into<String>,
        case: impl Into<String>,
    ) -> Result<Self, MigrateError> {
        let spec = Self {
            model: model.into(),
            method: method.into(),
            case: case.into(),
        };
        if spec.model.is_empty() || spec.method.is_empty() || spec.case.is_empty() {
            return Err(MigrateError::InvalidJob(
                "experiment model, method and case must be nonempty".into(),
            ));
        }
        Ok(spec)
    }
}

impl fmt::Display for ExperimentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E({}, {}, {})", self.model, self.method, self.case)
    }
}

#[derive(Debug, Clone)]
pub struct MigrationJob {
    pub source_dir: PathBuf,
    pub dest_dir: PathBuf,
    /// Relative paths, migrated (and reported) in this order.
    pub files: Vec<String>,
    pub lib: LibrarySpec,
    /// Selects library files for the with_code / with_diff artifact.
    pub filter: FileFilter,
    pub strategy: MigrationStrategy,
    pub model: String,
    pub case: String,
    pub runs: usize,
    /// Concurrent requests per run; 1 is serial.
    pub workers: usize,
    pub die_on_error: bool,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Fail before any request if a prompt is larger than this.
    pub context_window: Option<usize>,
}

impl MigrationJob {
    pub fn experiment(&self) -> ExperimentSpec {
        ExperimentSpec {
            model: self.model.clone(),
            method: self.strategy.method_label().to_string(),
            case: self.case.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), MigrateError> {
        let bad = |msg: String| Err(MigrateError::InvalidJob(msg));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.files.is_empty() {
            return bad("no files to migrate".into());
        }
        if self.model.is_empty() || self.case.is_empty() {
            return bad("model and case must be nonempty".into());
        }
        let source = fs::canonicalize(&self.source_dir).map_err(io_err(&self.source_dir))?;
        let dest = absolute_lenient(&self.dest_dir).map_err(io_err(&self.dest_dir))?;
        if dest.starts_with(&source) {
            return bad(format!(
                "dest_dir {} must lie outside source_dir {}",
                self.dest_dir.display(),
                self.source_dir.display()
            ));
        }
        for file in &self.files {
            if Path::new(file).is_absolute() || file.split('/').any(|c| c == "..") {
                return bad(format!("file `{file}` must be relative to source_dir"));
            }
            if !self.source_dir.join(file).is_file() {
                return bad(format!(
                    "file `{file}` not found under {}",
                    self.source_dir.display()
                ));
            }
        }
        Ok(())
    }

    fn read_file(&self, path: &str) -> Result<FileEntry, MigrateError> {
        let full = self.source_dir.join(path);
        let content = fs::read_to_string(&full).map_err(io_err(&full))?;
        Ok(FileEntry::new(path, content))
    }

    pub fn run_dir(&self, run_index: usize) -> PathBuf {
        self.dest_dir.join(format!("run_{run_index}"))
    }
}

/// Canonical form of the longest existing ancestor, with the rest appended.
fn absolute_lenient(path: &Path) -> io::Result<PathBuf> {
    let abs = std::path::absolute(path)?;
    let mut existing = abs.as_path();
    let mut tail = Vec::new();
    while !existing.exists() {
        match (existing.parent(), existing.file_name()) {
            (Some(parent), Some(name)) => {
                tail.push(name.to_owned());
                existing = parent;
            }
            _ => break,
        }
    }
    let mut out = fs::canonicalize(existing)?;
    out.extend(tail.into_iter().rev());
    Ok(out)
}

/// `# file: <path>` followed by the content, for every file in path order.
pub fn concat_library_code(files: &FileSet) -> String {
    let mut out = String::new();
    for (path, content, _) in files.iter() {
        out.push_str("# file: ");
        out.push_str(path);
        out.push('\n');
        out.push_str(content);
        if !content.is_empty() && !content.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}

/// The library context for the job's strategy: nothing, the target version's
/// code, or the diff between the two versions.
pub fn prepare_artifact(job: &MigrationJob) -> Result<Option<String>, MigrateError> {
    let artifact = match job.strategy {
        MigrationStrategy::BlackBox => return Ok(None),
        MigrationStrategy::WithCode => {
            concat_library_code(&repo::snapshot(&job.lib.to, &job.filter)?)
        }
        MigrationStrategy::WithDiff => {
            repo::library_diff(&job.lib.from, &job.lib.to, &job.filter)?.render()
        }
    };
    if artifact.is_empty() {
        warn!("{} artifact is empty", job.strategy);
    }
    Ok(Some(artifact))
}

pub fn prompt_hash(prompt: &Prompt) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.system.as_bytes());
    hasher.update([0u8]);
    hasher.update(prompt.user.as_bytes());
    format!("{:x}", hasher.finalize())
}

/// Dry-run view of one file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannedFile {
    pub path: String,
    pub prompt_tokens: usize,
    pub prompt_sha256: String,
    pub fit: Option<ContextFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plan {
    pub experiment: ExperimentSpec,
    pub tokenizer: String,
    pub artifact_tokens: usize,
    pub files: Vec<PlannedFile>,
}

impl Plan {
    pub fn total_prompt_tokens(&self) -> usize {
        self.files.iter().map(|f| f.prompt_tokens).sum()
    }

    fn overflowing(&self) -> Vec<(String, usize)> {
        self.files
            .iter()
            .filter(|f| f.fit.is_some_and(|fit| !fit.fits))
            .map(|f| (f.path.clone(), f.prompt_tokens))
            .collect()
    }
}

struct Prepared {
    plan: Plan,
    prompts: Vec<(FileEntry, Prompt)>,
}

fn prepare(
    job: &MigrationJob,
    templates: &TemplateSet,
    counter: &TokenCounter,
) -> Result<Prepared, MigrateError> {
    job.validate()?;
    let artifact = prepare_artifact(job)?;
    if artifact.as_deref() == Some("") {
        return Err(MigrateError::EmptyArtifact(job.strategy));
    }
    let meta = job.lib.meta();
    let mut prompts = Vec::with_capacity(job.files.len());
    let mut planned = Vec::with_capacity(job.files.len());
    for path in &job.files {
        let file = job.read_file(path)?;
        let prompt =
            templates.build_migration_prompt(job.strategy, &file, &meta, artifact.as_deref())?;
        let tokens = counter.count(&prompt.system) + counter.count(&prompt.user);
        planned.push(PlannedFile {
            path: path.clone(),
            prompt_tokens: tokens,
            prompt_sha256: prompt_hash(&prompt),
            fit: job.context_window.map(|w| fits_context(tokens, w)),
        });
        prompts.push((file, prompt));
    }
    Ok(Prepared {
        plan: Plan {
            experiment: job.experiment(),
            tokenizer: counter.name().to_string(),
            artifact_tokens: artifact.as_deref().map_or(0, |a| counter.count(a)),
            files: planned,
        },
        prompts,
    })
}

/// Builds every prompt and counts its tokens without contacting a provider.
pub fn plan(
    job: &MigrationJob,
    templates: &TemplateSet,
    counter: &TokenCounter,
) -> Result<Plan, MigrateError> {
    prepare(job, templates, counter).map(|p| p.plan)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "message", rename_all = "snake_case")]
pub enum FileStatus {
    Ok,
    LlmError(String),
    WriteError(String),
    /// Not attempted because an earlier failure aborted the run.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileOutcome {
    pub path: String,
    #[serde(flatten)]
    pub status: FileStatus,
    pub prompt_sha256: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub retries: u32,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_index: usize,
    pub experiment: ExperimentSpec,
    pub strategy: MigrationStrategy,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub duration_ms: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost_usd: Option<f64>,
    pub files: Vec<FileOutcome>,
}

impl RunResult {
    pub fn failures(&self) -> usize {
        self.files
            .iter()
            .filter(|f| !matches!(f.status, FileStatus::Ok))
            .count()
    }

    pub fn load(run_dir: &Path) -> Result<Self, MigrateError> {
        let path = run_dir.join("run.json");
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| MigrateError::Io {
            path,
            source: io::Error::new(io::ErrorKind::InvalidData, e),
        })
    }
}

/// Keeps the original file's trailing-newline convention.
fn finish_output(original: &str, migrated: String) -> String {
    let mut out = migrated;
    if original.ends_with('\n') && !out.is_empty() && !out.ends_with('\n') {
        out.push('\n');
    }
    out
}

/// Sends one file's prompt and returns the sanitized reply.
pub fn migrate_file(
    client: &LlmClient,
    job: &MigrationJob,
    file: &FileEntry,
    prompt: &Prompt,
) -> Result<(String, crate::llm::Completion), LlmError> {
    let mut request =
        ChatRequest::new(&job.model, &prompt.system, &prompt.user).with_label(&file.path);
    request.temperature = job.temperature;
    request.max_output_tokens = job.max_output_tokens;
    let labels = UsageLabels::new(&job.case, job.strategy.method_label());
    let completion = client.complete(&request, &labels)?;
    let text = finish_output(
        &file.content,
        sanitize_code_reply(&completion.response.text),
    );
    Ok((text, completion))
}

fn run_once(
    job: &MigrationJob,
    client: &LlmClient,
    prepared: &Prepared,
    run_index: usize,
) -> Result<RunResult, MigrateError> {
    let run_dir = job.run_dir(run_index);
    fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;
    let started_at = Utc::now();
    let clock = Instant::now();
    let abort = AtomicBool::new(false);
    let items: Vec<(&(FileEntry, Prompt), &PlannedFile)> =
        prepared.prompts.iter().zip(&prepared.plan.files).collect();

    let outcomes: Vec<(FileOutcome, Option<LlmError>)> = parallel_map(
        &items,
        job.workers.max(1),
        |_, ((file, prompt), planned)| {
            let mut outcome = FileOutcome {
                path: file.path.clone(),
                status: FileStatus::Skipped,
                prompt_sha256: planned.prompt_sha256.clone(),
                prompt_tokens: 0,
                completion_tokens: 0,
                retries: 0,
                duration_ms: 0,
            };
            if abort.load(Ordering::SeqCst) {
                return (outcome, None);
            }
            let t0 = Instant::now();
            let result = migrate_file(client, job, file, prompt);
            outcome.duration_ms = t0.elapsed().as_millis() as u64;
            match result {
                Ok((text, completion)) => {
                    outcome.prompt_tokens = completion.response.prompt_tokens;
                    outcome.completion_tokens = completion.response.completion_tokens;
                    outcome.retries = completion.retries;
                    let target = run_dir.join(&file.path);
                    let written = target
                        .parent()
                        .map_or(Ok(()), fs::create_dir_all)
                        .and_then(|_| fs::write(&target, text));
                    outcome.status = match written {
                        Ok(()) => FileStatus::Ok,
                        Err(e) => FileStatus::WriteError(e.to_string()),
                    };
                    info!("run {run_index}: {} done", file.path);
                    (outcome, None)
                }
                Err(e) => {
                    warn!("run {run_index}: {} failed: {e}", file.path);
                    outcome.status = FileStatus::LlmError(e.to_string());
                    if job.die_on_error {
                        abort.store(true, Ordering::SeqCst);
                    }
                    (outcome, Some(e))
                }
            }
        },
    );

    let duration: Duration = clock.elapsed();
    let costs = client.costs();
    let prompt_tokens: u64 = outcomes.iter().map(|(o, _)| o.prompt_tokens).sum();
    let completion_tokens: u64 = outcomes.iter().map(|(o, _)| o.completion_tokens).sum();
    let cost_usd = costs
        .rates(&job.model)
        .map(|r| r.cost(prompt_tokens, completion_tokens));
    let first_error = outcomes
        .iter()
        .find_map(|(o, e)| e.clone().map(|e| (o.path.clone(), e)));
    let result = RunResult {
        run_index,
        experiment: job.experiment(),
        strategy: job.strategy,
        temperature: job.temperature,
        max_output_tokens: job.max_output_tokens,
        started_at,
        finished_at: Utc::now(),
        duration_ms: duration.as_millis() as u64,
        prompt_tokens,
        completion_tokens,
        cost_usd,
        files: outcomes.into_iter().map(|(o, _)| o).collect(),
    };
    let meta_path = run_dir.join("run.json");
    let json = serde_json::to_string_pretty(&result).expect("run metadata serializes");
    fs::write(&meta_path, json + "\n").map_err(io_err(&meta_path))?;

    match first_error {
        Some((file, source)) if job.die_on_error => Err(MigrateError::Aborted {
            run: run_index,
            file,
            source,
        }),
        _ => Ok(result),
    }
}

/// Runs the job `runs` times, sequentially. Each run writes its files and a
/// `run.json`; an aborted run still leaves its partial results on disk.
pub fn run(
    job: &MigrationJob,
    client: &LlmClient,
    templates: &TemplateSet,
    counter: &TokenCounter,
) -> Result<Vec<RunResult>, MigrateError> {
    let prepared = prepare(job, templates, counter)?;
    let overflow = prepared.plan.overflowing();
    if let (false, Some(window)) = (overflow.is_empty(), job.context_window) {
        return Err(MigrateError::ContextOverflow {
            window,
            files: overflow,
        });
    }
    info!(
        "{}: {} file(s), {} run(s)",
        job.experiment(),
        job.files.len(),
        job.runs
    );
    let mut results = Vec::with_capacity(job.runs);
    for k in 1..=job.runs {
        results.push(run_once(job, client, &prepared, k)?);
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_code_separators() {
        let files = FileSet::from_entries([
            FileEntry::new("b.py", "y=2\n"),
            FileEntry::new("a.py", "x=1\n"),
        ]);
        assert_eq!(
            concat_library_code(&files),
            "# file: a.py\nx=1\n# file: b.py\ny=2\n"
        );
        let unterminated = FileSet::from_entries([FileEntry::new("a.py", "x=1")]);
        assert_eq!(concat_library_code(&unterminated), "# file: a.py\nx=1\n");
    }

    #[test]
    fn output_keeps_trailing_newline() {
        assert_eq!(finish_output("a\n", "b".into()), "b\n");
        assert_eq!(finish_output("a", "b".into()), "b");
        assert_eq!(finish_output("a\n", "b\n".into()), "b\n");
        assert_eq!(finish_output("a\n", String::new()), "");
    }

    #[test]
    fn experiment_labels_nonempty() {
        assert!(ExperimentSpec::new("gpt-4o", "aim-rc", "").is_err());
        let e = ExperimentSpec::new("gpt-4o", "aim-rc", "starsim").unwrap();
        assert_eq!(e.to_string(), "E(gpt-4o, aim-rc, starsim)");
    }

    #[test]
    fn prompt_hash_separates_fields() {
        let a = Prompt {
            system: "ab".into(),
            user: "c".into(),
        };
        let b = Prompt {
            system: "a".into(),
            user: "bc".into(),
        };
        assert_ne!(prompt_hash(&a), prompt_hash(&b));
        assert_eq!(prompt_hash(&a).len(), 64);
    }

    #[test]
    fn file_status_json_shape() {
        let json = serde_json::to_value(FileStatus::LlmError("boom".into())).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"status": "llm_error", "message": "boom"})
        );
        let json = serde_json::to_value(FileStatus::Ok).unwrap();
        assert_eq!(json, serde_json::json!({"status": "ok"}));
    }
}
