//! Prompt templates with `{name}` slots.
//!
//! A slot is `{` + one or more characters other than braces or newlines +
//! `}`. `{{` and `}}` produce literal braces; any other brace is literal too.
//! Template files start with a `#slots: a, b` line declaring the slots the
//! body uses.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::files::FileEntry;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template `{template}` is missing a binding for `{{{slot}}}`")]
    MissingSlot { template: String, slot: String },
    #[error("template `{template}` has no slot `{{{slot}}}`")]
    UnknownSlot { template: String, slot: String },
    #[error("strategy {0} needs a library artifact")]
    ArtifactRequired(MigrationStrategy),
    #[error("strategy {0} takes no library artifact")]
    ArtifactForbidden(MigrationStrategy),
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template `{0}` must start with a `#slots:` line")]
    MissingSlotsLine(String),
    #[error("template `{template}` uses undeclared slot `{slot}`")]
    UndeclaredSlot { template: String, slot: String },
    #[error("template `{template}` declares unused slot `{slot}`")]
    UnusedSlot { template: String, slot: String },
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
    pub required_slots: BTreeSet<String>,
    segments: Vec<Segment>,
}

fn scan(body: &str) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut literal = String::new();
    let mut rest = body;
    while let Some(c) = rest.chars().next() {
        if rest.starts_with("{{") || rest.starts_with("}}") {
            literal.push(c);
            rest = &rest[2..];
            continue;
        }
        if c == '{' {
            let inner = &rest[1..];
            let end = inner.find(['{', '}', '\n']);
            if let Some(end) = end.filter(|&e| e > 0 && inner[e..].starts_with('}')) {
                if !literal.is_empty() {
                    segments.push(Segment::Literal(std::mem::take(&mut literal)));
                }
                segments.push(Segment::Slot(inner[..end].to_string()));
                rest = &inner[end + 1..];
                continue;
            }
        }
        literal.push(c);
        rest = &rest[c.len_utf8()..];
    }
    if !literal.is_empty() {
        segments.push(Segment::Literal(literal));
    }
    segments
}

impl PromptTemplate {
    /// Builds a template whose required slots are exactly those in `body`.
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Self {
        let body = body.into();
        let segments = scan(&body);
        let required_slots = segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot(name) => Some(name.clone()),
                Segment::Literal(_) => None,
            })
            .collect();
        Self {
            name: name.into(),
            body,
            required_slots,
            segments,
        }
    }

    /// Parses the template file layout: `#slots:` line, then the body. One
    /// trailing newline is dropped from the body.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self, TemplateError> {
        let name = name.into();
        let (header, body) = text.split_once('\n').unwrap_or((text, ""));
        let declared = header
            .strip_prefix("#slots:")
            .ok_or_else(|| TemplateError::MissingSlotsLine(name.clone()))?;
        let declared: BTreeSet<String> = declared
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        let body = body.strip_suffix('\n').unwrap_or(body);
        let template = Self::new(name.clone(), body);
        if let Some(slot) = template.required_slots.difference(&declared).next() {
            return Err(TemplateError::UndeclaredSlot {
                template: name,
                slot: slot.clone(),
            });
        }
        if let Some(slot) = declared.difference(&template.required_slots).next() {
            return Err(TemplateError::UnusedSlot {
                template: name,
                slot: slot.clone(),
            });
        }
        Ok(template)
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let text = fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(name, &text)
    }

    /// Substitutes every slot. Bound values are inserted verbatim.
    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<String, PromptError> {
        if let Some(slot) = self
            .required_slots
            .iter()
            .find(|s| !bindings.contains_key(*s))
        {
            return Err(PromptError::MissingSlot {
                template: self.name.clone(),
                slot: slot.clone(),
            });
        }
        if let Some(slot) = bindings.keys().find(|k| !self.required_slots.contains(*k)) {
            return Err(PromptError::UnknownSlot {
                template: self.name.clone(),
                slot: slot.clone(),
            });
        }
        let mut out = String::with_capacity(self.body.len());
        for segment in &self.segments {
            match segment {
                Segment::Literal(text) => out.push_str(text),
                Segment::Slot(name) => out.push_str(&bindings[name]),
            }
        }
        Ok(out)
    }

    /// Renders with the subset of `pool` this template uses.
    fn render_from_pool(&self, pool: &BTreeMap<String, String>) -> Result<String, PromptError> {
        let bindings = self
            .required_slots
            .iter()
            .filter_map(|slot| pool.get(slot).map(|v| (slot.clone(), v.clone())))
            .collect();
        self.render(&bindings)
    }
}

/// Free-function form of [`PromptTemplate::render`].
pub fn render(
    template: &PromptTemplate,
    bindings: &BTreeMap<String, String>,
) -> Result<String, PromptError> {
    template.render(bindings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MigrationStrategy {
    BlackBox,
    WithCode,
    WithDiff,
}

impl MigrationStrategy {
    pub const ALL: [MigrationStrategy; 3] = [Self::BlackBox, Self::WithCode, Self::WithDiff];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::BlackBox => "black_box",
            Self::WithCode => "with_code",
            Self::WithDiff => "with_diff",
        }
    }

    /// Short method name used in usage and cost reports.
    pub fn method_label(self) -> &'static str {
        match self {
            Self::BlackBox => "aim-nc",
            Self::WithCode => "aim-lc",
            Self::WithDiff => "aim-rc",
        }
    }

    pub fn needs_artifact(self) -> bool {
        !matches!(self, Self::BlackBox)
    }
}

impl fmt::Display for MigrationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MigrationStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "black_box" | "aim_nc" => Ok(Self::BlackBox),
            "with_code" | "aim_lc" => Ok(Self::WithCode),
            "with_diff" | "aim_rc" => Ok(Self::WithDiff),
            other => Err(format!(
                "unknown strategy `{other}` (expected black_box, with_code or with_diff)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibraryMeta {
    pub name: String,
    pub alias: String,
    pub v_from: String,
    pub v_to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    pub fn text_len(&self) -> usize {
        self.system.len() + self.user.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchTrial {
    /// FileA next to FileB.
    CodePair,
    /// FileA next to the diff FileC.
    DiffPair,
}

impl BenchTrial {
    /// Label used in result tables.
    pub fn algorithm_label(self) -> &'static str {
        match self {
            BenchTrial::CodePair => "baseline",
            BenchTrial::DiffPair => "default",
        }
    }
}

impl FromStr for BenchTrial {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "code" | "code_pair" | "baseline" => Ok(Self::CodePair),
            "diff" | "diff_pair" | "default" => Ok(Self::DiffPair),
            other => Err(format!("unknown trial `{other}` (expected code or diff)")),
        }
    }
}

macro_rules! default_template {
    ($name:literal) => {
        PromptTemplate::parse($name, include_str!(concat!("../templates/", $name, ".txt")))
            .expect(concat!("built-in template ", $name))
    };
}

/// Every template the tool uses. Files in an override directory replace the
/// built-ins with the same stem (`black_box.txt`, `with_diff.txt`, ...).
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub black_box: PromptTemplate,
    pub with_code: PromptTemplate,
    pub with_diff: PromptTemplate,
    pub migration_system: PromptTemplate,
    pub bench_system: PromptTemplate,
    pub bench_code: PromptTemplate,
    pub bench_diff: PromptTemplate,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            black_box: default_template!("black_box"),
            with_code: default_template!("with_code"),
            with_diff: default_template!("with_diff"),
            migration_system: PromptTemplate::new("migration_system", ""),
            bench_system: default_template!("bench_system"),
            bench_code: default_template!("bench_code"),
            bench_diff: default_template!("bench_diff"),
        }
    }
}

impl TemplateSet {
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::default();
        let slots: [(&str, &mut PromptTemplate); 7] = [
            ("black_box", &mut set.black_box),
            ("with_code", &mut set.with_code),
            ("with_diff", &mut set.with_diff),
            ("migration_system", &mut set.migration_system),
            ("bench_system", &mut set.bench_system),
            ("bench_code", &mut set.bench_code),
            ("bench_diff", &mut set.bench_diff),
        ];
        for (stem, template) in slots {
            let path = dir.join(format!("{stem}.txt"));
            if path.is_file() {
                *template = PromptTemplate::load(&path)?;
            }
        }
        Ok(set)
    }

    pub fn for_strategy(&self, strategy: MigrationStrategy) -> &PromptTemplate {
        match strategy {
            MigrationStrategy::BlackBox => &self.black_box,
            MigrationStrategy::WithCode => &self.with_code,
            MigrationStrategy::WithDiff => &self.with_diff,
        }
    }

    /// Per-file migration prompt. `artifact` is the concatenated library code
    /// (with_code) or the library diff (with_diff), and must be absent for
    /// black_box.
    pub fn build_migration_prompt(
        &self,
        strategy: MigrationStrategy,
        file: &FileEntry,
        lib: &LibraryMeta,
        artifact: Option<&str>,
    ) -> Result<Prompt, PromptError> {
        let artifact = match (strategy.needs_artifact(), artifact) {
            (true, Some(a)) if !a.is_empty() => Some(a),
            (true, _) => return Err(PromptError::ArtifactRequired(strategy)),
            (false, Some(_)) => return Err(PromptError::ArtifactForbidden(strategy)),
            (false, None) => None,
        };
        let mut pool = BTreeMap::from([
            ("library".to_string(), lib.name.clone()),
            ("library alias".to_string(), lib.alias.clone()),
            ("legacy version".to_string(), lib.v_from.clone()),
            ("target version".to_string(), lib.v_to.clone()),
            ("code".to_string(), file.content.clone()),
            ("file".to_string(), file.path.clone()),
        ]);
        match (strategy, artifact) {
            (MigrationStrategy::WithCode, Some(a)) => {
                pool.insert("library code".into(), a.to_string());
            }
            (MigrationStrategy::WithDiff, Some(a)) => {
                pool.insert("diff".into(), a.to_string());
            }
            _ => {}
        }
        Ok(Prompt {
            system: self.migration_system.render_from_pool(&pool)?,
            user: self.for_strategy(strategy).render_from_pool(&pool)?,
        })
    }

    /// Diff-comprehension prompt: FileA with FileB (code trial) or with the
    /// diff FileC (diff trial).
    pub fn build_bench_prompt(&self, trial: BenchTrial, file_a: &str, other: &str) -> Prompt {
        let (template, key) = match trial {
            BenchTrial::CodePair => (&self.bench_code, "modified file"),
            BenchTrial::DiffPair => (&self.bench_diff, "diff file"),
        };
        let pool = BTreeMap::from([
            ("original file".to_string(), file_a.to_string()),
            (key.to_string(), other.to_string()),
        ]);
        let render = |t: &PromptTemplate| {
            t.render_from_pool(&pool)
                .unwrap_or_else(|e| panic!("bench template {}: {e}", t.name))
        };
        Prompt {
            system: render(&self.bench_system),
            user: render(template),
        }
    }
}
