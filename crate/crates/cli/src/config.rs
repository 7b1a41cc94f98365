//! TOML configuration with `${VAR}` interpolation.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Every path the config names must exist when it is loaded.

use std::fs;
use std::path::{Path, PathBuf};

use diffmig_core::llm::{CostTable, RetryPolicy};
use diffmig_core::prompt::MigrationStrategy;
use diffmig_core::tokens::TokenizerSpec;
use diffmig_core::FilterSpec;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config {path}: environment variable `{name}` is not set")]
    MissingVariable { path: PathBuf, name: String },
    #[error("config field `{field}`: path {path} does not exist")]
    MissingPath { field: String, path: PathBuf },
    #[error("config field `{field}` is required{hint}")]
    MissingField { field: String, hint: String },
    #[error("config field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Openai,
    Mock,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockReply {
    /// Each file comes back unchanged.
    #[default]
    Identity,
    /// Replies with the same-named file under `dir`.
    Dir,
    /// Replies with `text` every time.
    Canned,
    /// Replies with the prompt itself.
    Echo,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    #[serde(default)]
    pub kind: ProviderKind,
    #[serde(default = "default_base_url")]
    pub base_url: String,
    /// Name of the variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_model")]
    pub model: String,
    pub context_window: Option<usize>,
    pub tokens_per_minute: Option<u64>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub reply: MockReply,
    pub dir: Option<PathBuf>,
    pub text: Option<String>,
}

fn default_base_url() -> String {
    "https://api.openai.com/v1".into()
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_model() -> String {
    "gpt-4o-2024-08-06".into()
}

fn default_timeout() -> u64 {
    600
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::default(),
            base_url: default_base_url(),
            api_key_env: default_key_env(),
            model: default_model(),
            context_window: None,
            tokens_per_minute: None,
            timeout_secs: default_timeout(),
            reply: MockReply::default(),
            dir: None,
            text: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub source_dir: PathBuf,
    pub dest_dir: PathBuf,
    /// Files to migrate; every file under `source_dir` passing `filter` when
    /// empty.
    #[serde(default)]
    pub files: Vec<String>,
    #[serde(default)]
    pub filter: FilterSpec,
    #[serde(default = "default_strategy")]
    pub strategy: String,
    pub case: String,
    #[serde(default = "one")]
    pub runs: usize,
    #[serde(default = "one")]
    pub parallel: usize,
    #[serde(default)]
    pub die: bool,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_output")]
    pub max_output_tokens: u32,
}

fn default_strategy() -> String {
    "with_diff".into()
}

fn one() -> usize {
    1
}

fn default_temperature() -> f64 {
    1.0
}

fn default_max_output() -> u32 {
    16_384
}

impl JobConfig {
    pub fn strategy(&self) -> Result<MigrationStrategy, ConfigError> {
        self.strategy
            .parse()
            .map_err(|message| ConfigError::Invalid {
                field: "job.strategy".into(),
                message,
            })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibraryConfig {
    pub name: String,
    #[serde(default)]
    pub alias: String,
    /// Local clone; needed by with_code and with_diff.
    pub repo: Option<PathBuf>,
    pub v_from: String,
    pub v_to: String,
    #[serde(default)]
    pub filter: FilterSpec,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Test command, program first. Tests are skipped when empty.
    #[serde(default)]
    pub runner: Vec<String>,
    /// `pytest`, `junit=<path>` or `regex=<pattern>`.
    pub parser: Option<String>,
    pub timeout_secs: Option<u64>,
    #[serde(default)]
    pub filter: FilterSpec,
    /// Lines matching any of these are ignored when matching edits.
    #[serde(default)]
    pub ignore: Vec<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub provider: ProviderConfig,
    pub job: Option<JobConfig>,
    pub library: Option<LibraryConfig>,
    /// Directory of template overrides.
    pub templates: Option<PathBuf>,
    /// Extra or overriding prices, USD per million tokens.
    #[serde(default)]
    pub costs: CostTable,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub tokenizer: TokenizerSpec,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Usage ledger (JSON lines); `<dest_dir>/usage.jsonl` by default.
    pub usage_ledger: Option<PathBuf>,
}

/// Replaces `${NAME}` with `lookup(NAME)`; `$$` is a literal `$`.
pub fn interpolate(text: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<String, String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find('$') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos + 1..];
        if let Some(after) = tail.strip_prefix('$') {
            out.push('$');
            rest = after;
        } else if let Some(body) = tail.strip_prefix('{') {
            let end = body
                .find('}')
                .ok_or_else(|| "unterminated `${`".to_string())?;
            let name = &body[..end];
            out.push_str(&lookup(name).ok_or_else(|| name.to_string())?);
            rest = &body[end + 1..];
        } else {
            out.push('$');
            rest = tail;
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

fn require_exists(field: &str, path: &Path) -> Result<(), ConfigError> {
    if path.exists() {
        Ok(())
    } else {
        Err(ConfigError::MissingPath {
            field: field.into(),
            path: path.to_path_buf(),
        })
    }
}

impl Config {
    pub fn load(path: &Path, env: &dyn Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let raw = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let text = interpolate(&raw, env).map_err(|name| {
            if name.starts_with("unterminated") {
                ConfigError::Parse {
                    path: path.to_path_buf(),
                    message: name,
                }
            } else {
                ConfigError::MissingVariable {
                    path: path.to_path_buf(),
                    name,
                }
            }
        })?;
        let mut config: Config = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.check_paths()?;
        config.costs.validate().map_err(|e| ConfigError::Invalid {
            field: "costs".into(),
            message: e.to_string(),
        })?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let Some(dir) = &mut self.provider.dir {
            resolve(base, dir);
        }
        if let Some(job) = &mut self.job {
            resolve(base, &mut job.source_dir);
            resolve(base, &mut job.dest_dir);
        }
        if let Some(repo) = self.library.as_mut().and_then(|l| l.repo.as_mut()) {
            resolve(base, repo);
        }
        if let Some(dir) = &mut self.templates {
            resolve(base, dir);
        }
        if let Some(vocab) = &mut self.tokenizer.vocab_path {
            resolve(base, vocab);
        }
        if let Some(ledger) = &mut self.usage_ledger {
            resolve(base, ledger);
        }
    }

    fn check_paths(&self) -> Result<(), ConfigError> {
        if let Some(dir) = &self.provider.dir {
            require_exists("provider.dir", dir)?;
        }
        if let Some(job) = &self.job {
            require_exists("job.source_dir", &job.source_dir)?;
        }
        if let Some(repo) = self.library.as_ref().and_then(|l| l.repo.as_ref()) {
            require_exists("library.repo", repo)?;
        }
        if let Some(dir) = &self.templates {
            require_exists("templates", dir)?;
        }
        if let Some(vocab) = &self.tokenizer.vocab_path {
            require_exists("tokenizer.vocab_path", vocab)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(name: &str) -> Option<String> {
        (name == "KEY").then(|| "sk-123".to_string())
    }

    #[test]
    fn interpolation() {
        assert_eq!(interpolate("a ${KEY} b", &env).unwrap(), "a sk-123 b");
        assert_eq!(interpolate("cost $$5 $x", &env).unwrap(), "cost $5 $x");
        assert_eq!(interpolate("${NOPE}", &env).unwrap_err(), "NOPE");
    }

    #[test]
    fn relative_paths_and_missing_paths() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("src")).unwrap();
        let cfg = dir.path().join("job.toml");
        fs::write(
            &cfg,
            "[job]\nsource_dir = \"src\"\ndest_dir = \"out\"\ncase = \"c\"\n[provider]\nkind = \"mock\"\n",
        )
        .unwrap();
        let config = Config::load(&cfg, &env).unwrap();
        let job = config.job.unwrap();
        assert_eq!(job.source_dir, dir.path().join("src"));
        assert_eq!(
            (job.runs, job.parallel, job.strategy.as_str()),
            (1, 1, "with_diff")
        );
        assert_eq!(config.provider.kind, ProviderKind::Mock);

        fs::write(
            &cfg,
            "[job]\nsource_dir = \"gone\"\ndest_dir = \"out\"\ncase = \"c\"\n",
        )
        .unwrap();
        let err = Config::load(&cfg, &env).unwrap_err();
        assert!(
            matches!(err, ConfigError::MissingPath { ref field, .. } if field == "job.source_dir")
        );
    }

    #[test]
    fn unknown_fields_and_variables_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        fs::write(&cfg, "[provider]\nmodle = \"x\"\n").unwrap();
        assert!(matches!(
            Config::load(&cfg, &env),
            Err(ConfigError::Parse { .. })
        ));
        fs::write(&cfg, "[provider]\nbase_url = \"${HOST}\"\n").unwrap();
        assert!(matches!(
            Config::load(&cfg, &env),
            Err(ConfigError::MissingVariable { ref name, .. }) if name == "HOST"
        ));
        fs::write(
            &cfg,
            "[costs]\nmy-model = { input_per_million = 1.0, output_per_million = 2.0 }\n",
        )
        .unwrap();
        let config = Config::load(&cfg, &env).unwrap();
        assert!(config.costs.rates("my-model").is_some());
    }
}
