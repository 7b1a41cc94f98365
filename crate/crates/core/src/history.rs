//! Repository size versus commit-diff size over a commit history.

use serde::{Deserialize, Serialize};

use crate::diff::{diff_file_sets, DEFAULT_CONTEXT};
use crate::files::FileSet;
use crate::filter::FileFilter;
use crate::pool::parallel_map;
use crate::repo::{CommitInfo, Repo, RepoError};
use crate::tokens::TokenCounter;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitSizePoint {
    pub commit: String,
    /// Committer time, seconds since the epoch.
    pub timestamp: i64,
    /// Tokens over every filtered file in the snapshot.
    pub repo_tokens: u64,
    /// Tokens of the rendered unified diff against the first parent (the
    /// empty tree for a root commit).
    pub diff_tokens: u64,
}

#[derive(Debug, Clone)]
pub struct HistoryOptions {
    pub filter: FileFilter,
    pub first_parent: bool,
    pub workers: usize,
}

impl Default for HistoryOptions {
    fn default() -> Self {
        Self {
            filter: FileFilter::all(),
            first_parent: true,
            workers: 1,
        }
    }
}

fn measure(
    repo: &Repo,
    commit: &CommitInfo,
    opts: &HistoryOptions,
    counter: &TokenCounter,
) -> Result<CommitSizePoint, RepoError> {
    let snapshot = repo.snapshot_commit(&commit.hash, &opts.filter)?;
    let parent = match commit.parents.first() {
        Some(p) => repo.snapshot_commit(p, &opts.filter)?,
        None => FileSet::new(),
    };
    let repo_tokens = snapshot
        .iter()
        .map(|(_, content, _)| counter.count(content) as u64)
        .sum();
    let diff = diff_file_sets(&parent, &snapshot, DEFAULT_CONTEXT).render();
    Ok(CommitSizePoint {
        commit: commit.hash.clone(),
        timestamp: commit.timestamp,
        repo_tokens,
        diff_tokens: counter.count(&diff) as u64,
    })
}

/// One point per commit reachable from `reference`, oldest first.
pub fn analyze(
    repo: &Repo,
    reference: &str,
    opts: &HistoryOptions,
    counter: &TokenCounter,
) -> Result<Vec<CommitSizePoint>, RepoError> {
    let commits = repo.commits(reference, opts.first_parent)?;
    log::info!("measuring {} commits", commits.len());
    parallel_map(&commits, opts.workers.max(1), |_, c| {
        measure(repo, c, opts, counter)
    })
    .into_iter()
    .collect()
}

/// RFC 4180 CSV with header `commit,timestamp,repo_tokens,diff_tokens`.
pub fn emit_csv(points: &[CommitSizePoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["commit", "timestamp", "repo_tokens", "diff_tokens"])
        .expect("in-memory write");
    for p in points {
        w.write_record([
            p.commit.clone(),
            p.timestamp.to_string(),
            p.repo_tokens.to_string(),
            p.diff_tokens.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv of utf-8 fields")
}

/// Whitespace-separated columns with a `#` header, as plotting tools expect.
pub fn emit_tsv(points: &[CommitSizePoint]) -> String {
    let mut out = String::from("# index\tcommit\ttimestamp\trepo_tokens\tdiff_tokens\n");
    for (i, p) in points.iter().enumerate() {
        out.push_str(&format!(
            "{i}\t{}\t{}\t{}\t{}\n",
            p.commit, p.timestamp, p.repo_tokens, p.diff_tokens
        ));
    }
    out
}
