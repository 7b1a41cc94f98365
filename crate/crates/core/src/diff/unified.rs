use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::myers::{ops_with_horizon, DiffOp};
use crate::files::{FileEntry, FileSet};

pub const DEFAULT_CONTEXT: usize = 3;

const NO_NEWLINE_MARKER: &str = "\\ No newline at end of file";
const DEV_NULL: &str = "/dev/null";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LineKind {
    Context,
    Delete,
    Insert,
}

impl LineKind {
    fn prefix(self) -> char {
        match self {
            LineKind::Context => ' ',
            LineKind::Delete => '-',
            LineKind::Insert => '+',
        }
    }
}

/// A hunk body line. `text` keeps its `\n` terminator; a line without one is
/// the last line of a file that lacks a trailing newline.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HunkLine {
    pub kind: LineKind,
    pub text: String,
}

/// Header numbers are stored as displayed: a zero-length range names the
/// line before the (empty) range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    pub lines: Vec<HunkLine>,
}

impl Hunk {
    /// 0-based index of the first old-side line covered by this hunk.
    pub fn old_offset(&self) -> usize {
        if self.old_len == 0 {
            self.old_start
        } else {
            self.old_start - 1
        }
    }

    pub fn new_offset(&self) -> usize {
        if self.new_len == 0 {
            self.new_start
        } else {
            self.new_start - 1
        }
    }

    fn render_into(&self, out: &mut String) {
        let _ = writeln!(
            out,
            "@@ -{} +{} @@",
            format_range(self.old_start, self.old_len),
            format_range(self.new_start, self.new_len)
        );
        for line in &self.lines {
            out.push(line.kind.prefix());
            out.push_str(&line.text);
            if !line.text.ends_with('\n') {
                out.push('\n');
                out.push_str(NO_NEWLINE_MARKER);
                out.push('\n');
            }
        }
    }
}

fn format_range(start: usize, len: usize) -> String {
    if len == 1 {
        start.to_string()
    } else {
        format!("{start},{len}")
    }
}

/// One file section. `None` on a side stands for `/dev/null`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDiff {
    pub old_path: Option<String>,
    pub new_path: Option<String>,
    pub hunks: Vec<Hunk>,
}

impl FileDiff {
    pub fn path(&self) -> &str {
        self.new_path
            .as_deref()
            .or(self.old_path.as_deref())
            .unwrap_or_default()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out);
        out
    }

    fn render_into(&self, out: &mut String) {
        match &self.old_path {
            Some(p) => {
                let _ = writeln!(out, "--- a/{p}");
            }
            None => {
                let _ = writeln!(out, "--- {DEV_NULL}");
            }
        }
        match &self.new_path {
            Some(p) => {
                let _ = writeln!(out, "+++ b/{p}");
            }
            None => {
                let _ = writeln!(out, "+++ {DEV_NULL}");
            }
        }
        for hunk in &self.hunks {
            hunk.render_into(out);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnifiedDiff {
    pub files: Vec<FileDiff>,
    pub context_width: usize,
}

impl Default for UnifiedDiff {
    fn default() -> Self {
        Self {
            files: Vec::new(),
            context_width: DEFAULT_CONTEXT,
        }
    }
}

impl UnifiedDiff {
    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for file in &self.files {
            file.render_into(&mut out);
        }
        out
    }
}

/// Splits text into lines that keep their `\n`.
pub fn split_lines(text: &str) -> Vec<&str> {
    text.split_inclusive('\n').collect()
}

fn build_hunks(old: &[&str], new: &[&str], context: usize) -> Vec<Hunk> {
    let ops = ops_with_horizon(old, new, Some(context));
    let changes: Vec<usize> = ops
        .iter()
        .enumerate()
        .filter(|(_, op)| !op.is_keep())
        .map(|(i, _)| i)
        .collect();
    if changes.is_empty() {
        return Vec::new();
    }

    // group change positions whose separating keep-run is at most 2*context
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for &i in &changes {
        match groups.last_mut() {
            Some((_, last)) if i - *last - 1 <= 2 * context => *last = i,
            _ => groups.push((i, i)),
        }
    }

    // old/new line counts consumed before each op index
    let mut old_before = Vec::with_capacity(ops.len() + 1);
    let mut new_before = Vec::with_capacity(ops.len() + 1);
    let (mut o, mut n) = (0usize, 0usize);
    for op in &ops {
        old_before.push(o);
        new_before.push(n);
        match op {
            DiffOp::Keep { .. } => {
                o += 1;
                n += 1;
            }
            DiffOp::Delete { .. } => o += 1,
            DiffOp::Insert { .. } => n += 1,
        }
    }
    old_before.push(o);
    new_before.push(n);

    groups
        .into_iter()
        .map(|(first, last)| {
            let start = first.saturating_sub(context);
            let end = (last + 1 + context).min(ops.len());
            let lines: Vec<HunkLine> = ops[start..end]
                .iter()
                .map(|op| match *op {
                    DiffOp::Keep { old: i, .. } => HunkLine {
                        kind: LineKind::Context,
                        text: old[i].to_string(),
                    },
                    DiffOp::Delete { old: i } => HunkLine {
                        kind: LineKind::Delete,
                        text: old[i].to_string(),
                    },
                    DiffOp::Insert { new: j } => HunkLine {
                        kind: LineKind::Insert,
                        text: new[j].to_string(),
                    },
                })
                .collect();
            let old_len = old_before[end] - old_before[start];
            let new_len = new_before[end] - new_before[start];
            let display = |before: usize, len: usize| if len == 0 { before } else { before + 1 };
            Hunk {
                old_start: display(old_before[start], old_len),
                old_len,
                new_start: display(new_before[start], new_len),
                new_len,
                lines,
            }
        })
        .collect()
}

/// Diff of one file pair; `None` on either side is an absent file. Returns
/// `None` when there is nothing to report.
pub fn diff_files(
    old: Option<&FileEntry>,
    new: Option<&FileEntry>,
    context: usize,
) -> Option<FileDiff> {
    let old_lines = old.map(|f| split_lines(&f.content)).unwrap_or_default();
    let new_lines = new.map(|f| split_lines(&f.content)).unwrap_or_default();
    let hunks = build_hunks(&old_lines, &new_lines, context);
    // an empty file appearing or vanishing still gets a header-only section
    if hunks.is_empty() && old.is_some() == new.is_some() {
        return None;
    }
    Some(FileDiff {
        old_path: old.map(|f| f.path.clone()),
        new_path: new.map(|f| f.path.clone()),
        hunks,
    })
}

/// Unified diff text for one file pair; empty when the files are identical.
pub fn render_unified(old: &FileEntry, new: &FileEntry, context: usize) -> String {
    diff_files(Some(old), Some(new), context)
        .map(|d| d.render())
        .unwrap_or_default()
}

/// Multi-file diff between two file sets, sections ordered by path. A path
/// present on only one side becomes an add or delete against `/dev/null`.
pub fn diff_file_sets(old: &FileSet, new: &FileSet, context: usize) -> UnifiedDiff {
    let mut paths: Vec<&str> = old.paths().chain(new.paths()).collect();
    paths.sort_unstable();
    paths.dedup();
    let files = paths
        .into_iter()
        .filter_map(|path| {
            let a = old.get(path).map(|c| FileEntry::new(path, c));
            let b = new.get(path).map(|c| FileEntry::new(path, c));
            diff_files(a.as_ref(), b.as_ref(), context)
        })
        .collect();
    UnifiedDiff {
        files,
        context_width: context,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: malformed hunk header `{text}`")]
    MalformedHunkHeader { line: usize, text: String },
    #[error("line {line}: hunk body does not match header counts (-{old_len} +{new_len})")]
    LineCountMismatch {
        line: usize,
        old_len: usize,
        new_len: usize,
    },
    #[error("line {line}: `{text}` is not followed by a `+++` header")]
    MissingNewHeader { line: usize, text: String },
    #[error("line {line}: hunk outside of a file section")]
    OrphanHunk { line: usize },
}

fn parse_path(raw: &str, prefix: &str) -> Option<String> {
    // drop a tab-separated timestamp, as written by diff without --label
    let raw = raw.split('\t').next().unwrap_or(raw).trim_end();
    if raw == DEV_NULL {
        return None;
    }
    Some(raw.strip_prefix(prefix).unwrap_or(raw).to_string())
}

fn parse_range(s: &str) -> Option<(usize, usize)> {
    match s.split_once(',') {
        Some((start, len)) => Some((start.parse().ok()?, len.parse().ok()?)),
        None => Some((s.parse().ok()?, 1)),
    }
}

fn parse_hunk_header(line: &str) -> Option<(usize, usize, usize, usize)> {
    let rest = line.strip_prefix("@@ -")?;
    let (ranges, _) = rest.split_once(" @@")?;
    let (old, new) = ranges.split_once(" +")?;
    let (old_start, old_len) = parse_range(old)?;
    let (new_start, new_len) = parse_range(new)?;
    Some((old_start, old_len, new_start, new_len))
}

fn is_file_header(lines: &[&str], i: usize) -> bool {
    lines[i].starts_with("--- ") && lines.get(i + 1).is_some_and(|l| l.starts_with("+++ "))
}

/// Context width implied by the hunks: a hunk that does not start at the top
/// of the file carries exactly `context` leading context lines.
fn infer_context(files: &[FileDiff]) -> usize {
    for hunk in files.iter().flat_map(|f| f.hunks.iter()) {
        if hunk.old_len > 0 && hunk.old_start > 1 {
            return hunk
                .lines
                .iter()
                .take_while(|l| l.kind == LineKind::Context)
                .count();
        }
        if hunk.old_len == 0 && hunk.old_start > 0 {
            return 0;
        }
    }
    DEFAULT_CONTEXT
}

/// Parses (possibly multi-file) unified diff text. Lines outside file
/// sections, such as `diff --git` or `index` lines, are ignored.
pub fn parse_unified(text: &str) -> Result<UnifiedDiff, ParseError> {
    let lines: Vec<&str> = text
        .split_inclusive('\n')
        .map(|l| l.strip_suffix('\n').unwrap_or(l))
        .collect();
    let mut files: Vec<FileDiff> = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        if line.starts_with("--- ") {
            if !is_file_header(&lines, i) {
                return Err(ParseError::MissingNewHeader {
                    line: i + 1,
                    text: line.to_string(),
                });
            }
            let old = line.strip_prefix("--- ").unwrap_or(line);
            files.push(FileDiff {
                old_path: parse_path(old, "a/"),
                new_path: parse_path(&lines[i + 1][4..], "b/"),
                hunks: Vec::new(),
            });
            i += 2;
            continue;
        }
        if line.starts_with("@@") {
            let (old_start, old_len, new_start, new_len) =
                parse_hunk_header(line).ok_or_else(|| ParseError::MalformedHunkHeader {
                    line: i + 1,
                    text: line.to_string(),
                })?;
            let file = files
                .last_mut()
                .ok_or(ParseError::OrphanHunk { line: i + 1 })?;
            let mismatch = |at: usize| ParseError::LineCountMismatch {
                line: at,
                old_len,
                new_len,
            };
            i += 1;
            let (mut seen_old, mut seen_new) = (0usize, 0usize);
            let mut body: Vec<HunkLine> = Vec::new();
            while seen_old < old_len || seen_new < new_len {
                let Some(&raw) = lines.get(i) else {
                    return Err(mismatch(i));
                };
                // counts decide: a `-` line is a deletion while old lines remain
                let (kind, content) = match raw.chars().next() {
                    Some(' ') if seen_old < old_len && seen_new < new_len => {
                        (LineKind::Context, &raw[1..])
                    }
                    Some('-') if seen_old < old_len => (LineKind::Delete, &raw[1..]),
                    Some('+') if seen_new < new_len => (LineKind::Insert, &raw[1..]),
                    // some tools strip the lone space of an empty context line
                    None if seen_old < old_len && seen_new < new_len => (LineKind::Context, ""),
                    Some('\\') => {
                        strip_newline(&mut body);
                        i += 1;
                        continue;
                    }
                    _ => return Err(mismatch(i + 1)),
                };
                match kind {
                    LineKind::Context => {
                        seen_old += 1;
                        seen_new += 1;
                    }
                    LineKind::Delete => seen_old += 1,
                    LineKind::Insert => seen_new += 1,
                }
                body.push(HunkLine {
                    kind,
                    text: format!("{content}\n"),
                });
                i += 1;
            }
            if lines.get(i).is_some_and(|l| l.starts_with('\\')) {
                strip_newline(&mut body);
                i += 1;
            }
            if let Some(next) = lines.get(i) {
                let body_like = next.starts_with(' ')
                    || next.starts_with('+')
                    || (next.starts_with('-') && !is_file_header(&lines, i));
                if body_like {
                    return Err(mismatch(i + 1));
                }
            }
            file.hunks.push(Hunk {
                old_start,
                old_len,
                new_start,
                new_len,
                lines: body,
            });
            continue;
        }
        i += 1;
    }
    let context_width = infer_context(&files);
    Ok(UnifiedDiff {
        files,
        context_width,
    })
}

fn strip_newline(body: &mut [HunkLine]) {
    if let Some(last) = body.last_mut() {
        if last.text.ends_with('\n') {
            last.text.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(path: &str, content: &str) -> FileEntry {
        FileEntry::new(path, content)
    }

    fn numbered(n: usize) -> String {
        (1..=n).map(|i| format!("line {i}\n")).collect()
    }

    #[test]
    fn identical_files_render_nothing() {
        let f = entry("a.py", "x\ny\n");
        assert_eq!(render_unified(&f, &f, 3), "");
    }

    #[test]
    fn single_line_replacement_omits_counts() {
        let text = render_unified(&entry("f", "x\n"), &entry("f", "y\n"), 3);
        assert_eq!(text, "--- a/f\n+++ b/f\n@@ -1 +1 @@\n-x\n+y\n");
    }

    #[test]
    fn insertion_in_ten_lines_spans_seven_old_lines() {
        let old = numbered(10);
        let mut lines: Vec<String> = split_lines(&old).iter().map(|s| s.to_string()).collect();
        lines.insert(5, "new\n".into());
        let new: String = lines.concat();
        let diff = diff_files(Some(&entry("f", &old)), Some(&entry("f", &new)), 3).unwrap();
        assert_eq!(diff.hunks.len(), 1);
        let hunk = &diff.hunks[0];
        assert_eq!((hunk.old_start, hunk.old_len), (3, 6));
        assert_eq!((hunk.new_start, hunk.new_len), (3, 7));
    }

    #[test]
    fn no_newline_marker_round_trips() {
        let diff = diff_files(Some(&entry("f", "a\nb")), Some(&entry("f", "a\nb\n")), 3).unwrap();
        let text = diff.render();
        assert_eq!(
            text,
            "--- a/f\n+++ b/f\n@@ -1,2 +1,2 @@\n a\n-b\n\\ No newline at end of file\n+b\n"
        );
        let parsed = parse_unified(&text).unwrap();
        assert_eq!(parsed.files, vec![diff]);
    }

    #[test]
    fn added_and_deleted_files_use_dev_null() {
        let added = diff_files(None, Some(&entry("n.py", "x=1\n")), 3).unwrap();
        assert_eq!(
            added.render(),
            "--- /dev/null\n+++ b/n.py\n@@ -0,0 +1 @@\n+x=1\n"
        );
        let removed = diff_files(Some(&entry("o.py", "a\nb\n")), None, 3).unwrap();
        assert_eq!(
            removed.render(),
            "--- a/o.py\n+++ /dev/null\n@@ -1,2 +0,0 @@\n-a\n-b\n"
        );
    }

    #[test]
    fn zero_context_insertion_header_names_preceding_line() {
        let old = numbered(6);
        let new = old.replace("line 5\n", "line 5\nextra\n");
        let text = render_unified(&entry("f", &old), &entry("f", &new), 0);
        assert_eq!(text, "--- a/f\n+++ b/f\n@@ -5,0 +6 @@\n+extra\n");
        let parsed = parse_unified(&text).unwrap();
        assert_eq!(parsed.context_width, 0);
    }

    #[test]
    fn distant_changes_split_into_two_hunks() {
        let old = numbered(20);
        let new = old
            .replace("line 2\n", "two\n")
            .replace("line 18\n", "eighteen\n");
        let diff = diff_files(Some(&entry("f", &old)), Some(&entry("f", &new)), 3).unwrap();
        assert_eq!(diff.hunks.len(), 2);
        // seven unchanged lines between changes exceed 2*3, so no merge
        let new = old
            .replace("line 2\n", "two\n")
            .replace("line 9\n", "nine\n");
        let diff = diff_files(Some(&entry("f", &old)), Some(&entry("f", &new)), 3).unwrap();
        assert_eq!(diff.hunks.len(), 1);
    }

    #[test]
    fn parse_rejects_bad_header() {
        let err = parse_unified("--- a/f\n+++ b/f\n@@ -x +1 @@\n").unwrap_err();
        assert!(matches!(
            err,
            ParseError::MalformedHunkHeader { line: 3, .. }
        ));
    }

    #[test]
    fn parse_rejects_short_body() {
        let err = parse_unified("--- a/f\n+++ b/f\n@@ -1,2 +1,2 @@\n a\n").unwrap_err();
        assert!(matches!(err, ParseError::LineCountMismatch { .. }));
    }

    #[test]
    fn parse_rejects_long_body() {
        let err = parse_unified("--- a/f\n+++ b/f\n@@ -1 +1 @@\n-a\n+b\n+c\n").unwrap_err();
        assert!(matches!(err, ParseError::LineCountMismatch { .. }));
    }

    #[test]
    fn parse_skips_git_extended_headers() {
        let text =
            "diff --git a/f b/f\nindex 123..456 100644\n--- a/f\n+++ b/f\n@@ -1 +1 @@\n-x\n+y\n";
        let parsed = parse_unified(text).unwrap();
        assert_eq!(parsed.files.len(), 1);
        assert_eq!(parsed.render(), &text[text.find("--- ").unwrap()..]);
    }

    #[test]
    fn multi_file_sets_are_path_ordered() {
        let old = FileSet::from_entries([entry("b.py", "1\n"), entry("a.py", "1\n")]);
        let new = FileSet::from_entries([
            entry("b.py", "2\n"),
            entry("a.py", "2\n"),
            entry("c.py", "3\n"),
        ]);
        let diff = diff_file_sets(&old, &new, 3);
        let paths: Vec<_> = diff.files.iter().map(|f| f.path()).collect();
        assert_eq!(paths, ["a.py", "b.py", "c.py"]);
        assert_eq!(parse_unified(&diff.render()).unwrap(), diff);
    }
}
