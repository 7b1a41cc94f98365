//! Include/exclude glob filtering over repo-relative paths.
//!
//! `*` never crosses a `/`; `**` does. A pattern containing `/` is matched
//! against the whole path and against every ancestor directory of it, so
//! `docs/*` also covers `docs/api/x.py`. A pattern without `/` is matched
//! against each path component, so `__init__.py` covers `pkg/__init__.py`.
//! Exclusion always wins over inclusion.

use globset::{Glob, GlobBuilder, GlobMatcher};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
#[error("invalid glob pattern `{pattern}`: {source}")]
pub struct PatternError {
    pub pattern: String,
    #[source]
    pub source: globset::Error,
}

/// Serializable pattern lists. Empty `include` selects every file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSpec {
    #[serde(default)]
    pub include: Vec<String>,
    #[serde(default)]
    pub exclude: Vec<String>,
}

#[derive(Debug, Clone)]
struct Pattern {
    matcher: GlobMatcher,
    anchored: bool,
}

impl Pattern {
    fn compile(raw: &str) -> Result<Self, PatternError> {
        let trimmed = raw.trim_start_matches("./").trim_start_matches('/');
        let trimmed = trimmed.trim_end_matches('/');
        let glob: Glob = GlobBuilder::new(trimmed)
            .literal_separator(true)
            .build()
            .map_err(|source| PatternError {
                pattern: raw.to_string(),
                source,
            })?;
        Ok(Self {
            matcher: glob.compile_matcher(),
            anchored: trimmed.contains('/'),
        })
    }

    fn matches(&self, path: &str) -> bool {
        if self.anchored {
            // the path itself, then each ancestor directory
            let mut end = path.len();
            loop {
                if self.matcher.is_match(&path[..end]) {
                    return true;
                }
                match path[..end].rfind('/') {
                    Some(i) => end = i,
                    None => return false,
                }
            }
        } else {
            path.split('/')
                .any(|component| self.matcher.is_match(component))
        }
    }
}

/// Compiled form of a [`FilterSpec`].
#[derive(Debug, Clone)]
pub struct FileFilter {
    spec: FilterSpec,
    include: Vec<Pattern>,
    exclude: Vec<Pattern>,
}

impl Default for FileFilter {
    fn default() -> Self {
        Self::all()
    }
}

impl FileFilter {
    pub fn all() -> Self {
        Self {
            spec: FilterSpec::default(),
            include: Vec::new(),
            exclude: Vec::new(),
        }
    }

    pub fn new<I, E, S, T>(include: I, exclude: E) -> Result<Self, PatternError>
    where
        I: IntoIterator<Item = S>,
        E: IntoIterator<Item = T>,
        S: Into<String>,
        T: Into<String>,
    {
        Self::from_spec(FilterSpec {
            include: include.into_iter().map(Into::into).collect(),
            exclude: exclude.into_iter().map(Into::into).collect(),
        })
    }

    pub fn from_spec(spec: FilterSpec) -> Result<Self, PatternError> {
        let include = spec
            .include
            .iter()
            .map(|p| Pattern::compile(p))
            .collect::<Result<_, _>>()?;
        let exclude = spec
            .exclude
            .iter()
            .map(|p| Pattern::compile(p))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            spec,
            include,
            exclude,
        })
    }

    pub fn spec(&self) -> &FilterSpec {
        &self.spec
    }

    pub fn matches(&self, path: &str) -> bool {
        if self.exclude.iter().any(|p| p.matches(path)) {
            return false;
        }
        self.include.is_empty() || self.include.iter().any(|p| p.matches(path))
    }
}
