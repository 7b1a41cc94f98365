//! Read-only access to local git clones through the `git` executable.
//!
//! Only plumbing commands are used (`rev-parse`, `ls-tree`, `cat-file`,
//! `log`); diffs are computed in-process on the extracted blobs.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::{diff_file_sets, UnifiedDiff, DEFAULT_CONTEXT};
use crate::files::{decode_text, FileEntry, FileSet};
use crate::filter::FileFilter;

#[derive(Debug, Error)]
pub enum RepoError {
    #[error("{0} is not a git repository")]
    NotARepository(PathBuf),
    #[error("cannot resolve `{reference}` in {repo}")]
    UnresolvedRef { repo: PathBuf, reference: String },
    #[error("`git {command}` failed: {stderr}")]
    Git { command: String, stderr: String },
    #[error("git executable not found on PATH")]
    GitNotFound,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A commit-ish inside a local clone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoRef {
    pub repo_path: PathBuf,
    #[serde(rename = "ref")]
    pub reference: String,
}

impl RepoRef {
    pub fn new(repo_path: impl Into<PathBuf>, reference: impl Into<String>) -> Self {
        Self {
            repo_path: repo_path.into(),
            reference: reference.into(),
        }
    }

    pub fn at(&self, reference: impl Into<String>) -> Self {
        Self::new(self.repo_path.clone(), reference)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitInfo {
    pub hash: String,
    /// Committer time, seconds since the epoch.
    pub timestamp: i64,
    pub parents: Vec<String>,
}

/// Handle on a local clone.
#[derive(Debug, Clone)]
pub struct Repo {
    path: PathBuf,
}

impl Repo {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, RepoError> {
        let path = path.as_ref();
        if !path.join(".git").exists() {
            return Err(RepoError::NotARepository(path.to_path_buf()));
        }
        Ok(Self {
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn command(&self) -> Command {
        let mut cmd = Command::new("git");
        cmd.arg("-C").arg(&self.path);
        cmd
    }

    fn run(&self, args: &[&str]) -> Result<Vec<u8>, RepoError> {
        let output = self
            .command()
            .args(args)
            .stdin(Stdio::null())
            .output()
            .map_err(spawn_error)?;
        if !output.status.success() {
            return Err(RepoError::Git {
                command: args.join(" "),
                stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
            });
        }
        Ok(output.stdout)
    }

    /// Full commit hash for a tag, branch, or (abbreviated) hash.
    pub fn resolve(&self, reference: &str) -> Result<String, RepoError> {
        let spec = format!("{reference}^{{commit}}");
        match self.run(&[
            "rev-parse",
            "--verify",
            "--quiet",
            "--end-of-options",
            &spec,
        ]) {
            Ok(out) => Ok(String::from_utf8_lossy(&out).trim().to_string()),
            Err(RepoError::Git { .. }) => Err(RepoError::UnresolvedRef {
                repo: self.path.clone(),
                reference: reference.to_string(),
            }),
            Err(e) => Err(e),
        }
    }

    /// `(path, blob id)` for every regular file in the commit's tree.
    fn tree_blobs(&self, commit: &str) -> Result<Vec<(String, String)>, RepoError> {
        let out = self.run(&["ls-tree", "-r", "-z", "--full-tree", commit])?;
        let mut blobs = Vec::new();
        for record in out.split(|b| *b == 0).filter(|r| !r.is_empty()) {
            let record = String::from_utf8_lossy(record);
            let Some((meta, path)) = record.split_once('\t') else {
                continue;
            };
            let mut fields = meta.split(' ');
            let (mode, kind, oid) = (fields.next(), fields.next(), fields.next());
            // symlinks (120000) and submodules are not source files
            if kind == Some("blob") && mode != Some("120000") {
                if let Some(oid) = oid {
                    blobs.push((path.to_string(), oid.to_string()));
                }
            }
        }
        Ok(blobs)
    }

    /// Reads many blobs through one `cat-file --batch` process.
    fn read_blobs(&self, oids: &[String]) -> Result<Vec<Vec<u8>>, RepoError> {
        if oids.is_empty() {
            return Ok(Vec::new());
        }
        let mut child = self
            .command()
            .args(["cat-file", "--batch"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(spawn_error)?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let request: String = oids.iter().map(|o| format!("{o}\n")).collect();
        let writer = std::thread::spawn(move || stdin.write_all(request.as_bytes()));

        let mut reader = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut blobs = Vec::with_capacity(oids.len());
        for oid in oids {
            let mut header = String::new();
            reader.read_line(&mut header)?;
            let size: usize = header
                .trim_end()
                .rsplit(' ')
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| RepoError::Git {
                    command: "cat-file --batch".into(),
                    stderr: format!("unexpected header for {oid}: {}", header.trim_end()),
                })?;
            let mut content = vec![0u8; size + 1];
            reader.read_exact(&mut content)?;
            content.pop();
            blobs.push(content);
        }
        writer
            .join()
            .map_err(|_| io::Error::other("cat-file writer panicked"))??;
        child.wait()?;
        Ok(blobs)
    }

    /// Filtered text files of a commit; binary blobs are skipped.
    pub fn snapshot_commit(&self, commit: &str, filter: &FileFilter) -> Result<FileSet, RepoError> {
        let (paths, oids): (Vec<String>, Vec<String>) = self
            .tree_blobs(commit)?
            .into_iter()
            .filter(|(path, _)| filter.matches(path))
            .unzip();
        let blobs = self.read_blobs(&oids)?;
        let mut set = FileSet::new();
        for (path, bytes) in paths.into_iter().zip(blobs) {
            match decode_text(bytes) {
                Some(text) => {
                    set.insert(FileEntry::new(path, text));
                }
                None => log::warn!("skipping binary file {path} at {commit}"),
            }
        }
        Ok(set)
    }

    /// Commits reachable from `reference`, oldest first.
    pub fn commits(
        &self,
        reference: &str,
        first_parent: bool,
    ) -> Result<Vec<CommitInfo>, RepoError> {
        let head = self.resolve(reference)?;
        let mut args = vec!["log", "--reverse", "--format=%H%x09%ct%x09%P"];
        if first_parent {
            args.push("--first-parent");
        }
        args.push(&head);
        let out = self.run(&args)?;
        let text = String::from_utf8_lossy(&out);
        let commits = text
            .lines()
            .filter(|l| !l.is_empty())
            .map(|line| {
                let mut fields = line.split('\t');
                let hash = fields.next().unwrap_or_default().to_string();
                let timestamp = fields.next().and_then(|t| t.parse().ok()).unwrap_or(0);
                let parents = fields
                    .next()
                    .unwrap_or_default()
                    .split_whitespace()
                    .map(str::to_string)
                    .collect();
                CommitInfo {
                    hash,
                    timestamp,
                    parents,
                }
            })
            .collect();
        Ok(commits)
    }
}

fn spawn_error(e: io::Error) -> RepoError {
    if e.kind() == io::ErrorKind::NotFound {
        RepoError::GitNotFound
    } else {
        RepoError::Io(e)
    }
}

/// All filtered text files present at `reference`.
pub fn snapshot(reference: &RepoRef, filter: &FileFilter) -> Result<FileSet, RepoError> {
    let repo = Repo::open(&reference.repo_path)?;
    let commit = repo.resolve(&reference.reference)?;
    repo.snapshot_commit(&commit, filter)
}

/// One concatenated unified diff of every filtered file that differs between
/// the two refs, file sections in path order.
pub fn library_diff(
    from: &RepoRef,
    to: &RepoRef,
    filter: &FileFilter,
) -> Result<UnifiedDiff, RepoError> {
    let repo = Repo::open(&from.repo_path)?;
    let to_repo = Repo::open(&to.repo_path)?;
    let old_commit = repo.resolve(&from.reference)?;
    let new_commit = to_repo.resolve(&to.reference)?;
    let old = repo.snapshot_commit(&old_commit, filter)?;
    let new = to_repo.snapshot_commit(&new_commit, filter)?;
    if old.is_empty() && new.is_empty() {
        log::warn!(
            "file filter selects no files between {} and {}",
            from.reference,
            to.reference
        );
    }
    Ok(diff_file_sets(&old, &new, DEFAULT_CONTEXT))
}
