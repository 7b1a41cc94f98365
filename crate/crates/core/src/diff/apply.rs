use thiserror::Error;

use super::unified::{split_lines, FileDiff, LineKind, UnifiedDiff};
use crate::files::{FileEntry, FileSet};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ApplyError {
    #[error("{path}: hunk {hunk} expects `{expected}` at line {line}, found `{found}`")]
    ContextMismatch {
        path: String,
        hunk: usize,
        line: usize,
        expected: String,
        found: String,
    },
    #[error("{path}: hunk {hunk} starts before the end of the previous hunk")]
    OverlappingHunks { path: String, hunk: usize },
    #[error("{0}: file to patch is missing")]
    MissingFile(String),
    #[error("{0}: file to create already exists")]
    FileExists(String),
}

/// Applies one file section to `content`, checking every context and
/// deleted line against the anchor position.
pub fn apply_file(diff: &FileDiff, content: &str) -> Result<String, ApplyError> {
    let lines = split_lines(content);
    let path = diff.path();
    let mut out = String::with_capacity(content.len());
    let mut cursor = 0usize;
    for (h, hunk) in diff.hunks.iter().enumerate() {
        let start = hunk.old_offset();
        if start < cursor {
            return Err(ApplyError::OverlappingHunks {
                path: path.to_string(),
                hunk: h + 1,
            });
        }
        if start > lines.len() {
            return Err(ApplyError::ContextMismatch {
                path: path.to_string(),
                hunk: h + 1,
                line: start + 1,
                expected: String::new(),
                found: "<end of file>".into(),
            });
        }
        lines[cursor..start].iter().for_each(|l| out.push_str(l));
        let mut pos = start;
        for line in &hunk.lines {
            match line.kind {
                LineKind::Context | LineKind::Delete => {
                    let found = lines.get(pos).copied();
                    if found != Some(line.text.as_str()) {
                        return Err(ApplyError::ContextMismatch {
                            path: path.to_string(),
                            hunk: h + 1,
                            line: pos + 1,
                            expected: line.text.clone(),
                            found: found.unwrap_or("<end of file>").to_string(),
                        });
                    }
                    if line.kind == LineKind::Context {
                        out.push_str(&line.text);
                    }
                    pos += 1;
                }
                LineKind::Insert => out.push_str(&line.text),
            }
        }
        cursor = pos;
    }
    lines[cursor..].iter().for_each(|l| out.push_str(l));
    Ok(out)
}

/// Applies a multi-file diff to `old`, returning the patched file set.
pub fn apply(diff: &UnifiedDiff, old: &FileSet) -> Result<FileSet, ApplyError> {
    let mut result = old.clone();
    for file in &diff.files {
        let source = match &file.old_path {
            Some(path) => old
                .get(path)
                .ok_or_else(|| ApplyError::MissingFile(path.clone()))?,
            None => {
                if let Some(path) = &file.new_path {
                    if old.contains(path) {
                        return Err(ApplyError::FileExists(path.clone()));
                    }
                }
                ""
            }
        };
        let patched = apply_file(file, source)?;
        if let Some(path) = &file.old_path {
            result.remove(path);
        }
        if let Some(path) = &file.new_path {
            result.insert(FileEntry::new(path.clone(), patched));
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::{diff_file_sets, parse_unified};

    fn set(files: &[(&str, &str)]) -> FileSet {
        FileSet::from_entries(files.iter().map(|(p, c)| FileEntry::new(*p, *c)))
    }

    #[test]
    fn round_trips_modify_add_delete() {
        let a = set(&[
            ("keep.py", "a\nb\nc\n"),
            ("gone.py", "x\n"),
            ("edit.py", "1\n2\n3"),
        ]);
        let b = set(&[
            ("keep.py", "a\nb\nc\n"),
            ("new.py", "y\n"),
            ("edit.py", "1\ntwo\n3\n"),
        ]);
        let diff = diff_file_sets(&a, &b, 3);
        assert_eq!(apply(&diff, &a).unwrap(), b);
        let reparsed = parse_unified(&diff.render()).unwrap();
        assert_eq!(apply(&reparsed, &a).unwrap(), b);
    }

    #[test]
    fn context_mismatch_is_reported() {
        let a = set(&[("f", "a\nb\nc\n")]);
        let b = set(&[("f", "a\nB\nc\n")]);
        let diff = diff_file_sets(&a, &b, 1);
        let drifted = set(&[("f", "a\nb\nX\n")]);
        let err = apply(&diff, &drifted).unwrap_err();
        assert!(matches!(err, ApplyError::ContextMismatch { line: 3, .. }));
    }

    #[test]
    fn missing_target_file() {
        let diff = diff_file_sets(&set(&[("f", "a\n")]), &set(&[("f", "b\n")]), 3);
        assert_eq!(
            apply(&diff, &FileSet::new()).unwrap_err(),
            ApplyError::MissingFile("f".into())
        );
    }

    #[test]
    fn empty_file_removal_round_trips() {
        let a = set(&[("empty", "")]);
        let b = FileSet::new();
        let diff = diff_file_sets(&a, &b, 3);
        assert_eq!(apply(&diff, &a).unwrap(), b);
        let back = diff_file_sets(&b, &a, 3);
        assert_eq!(apply(&back, &b).unwrap(), a);
    }
}
