//! In-memory text file collections keyed by repo-relative path.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::filter::FileFilter;

/// One text file, addressed by a `/`-separated relative path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub content: String,
}

impl FileEntry {
    pub fn new(path: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            content: content.into(),
        }
    }

    pub fn line_count(&self) -> usize {
        line_count(&self.content)
    }
}

/// Number of lines in `text`; a final line without `\n` still counts.
pub fn line_count(text: &str) -> usize {
    let newlines = text.bytes().filter(|b| *b == b'\n').count();
    if text.is_empty() || text.ends_with('\n') {
        newlines
    } else {
        newlines + 1
    }
}

/// Content is treated as text only when it is valid UTF-8 without NUL bytes.
pub fn decode_text(bytes: Vec<u8>) -> Option<String> {
    if bytes.contains(&0) {
        return None;
    }
    String::from_utf8(bytes).ok()
}

/// Files sorted by path, paths unique.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileSet {
    entries: BTreeMap<String, String>,
}

impl FileSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Later duplicates replace earlier ones.
    pub fn from_entries(entries: impl IntoIterator<Item = FileEntry>) -> Self {
        let mut set = Self::new();
        for entry in entries {
            set.insert(entry);
        }
        set
    }

    pub fn insert(&mut self, entry: FileEntry) -> Option<String> {
        self.entries.insert(entry.path, entry.content)
    }

    pub fn remove(&mut self, path: &str) -> Option<String> {
        self.entries.remove(path)
    }

    pub fn get(&self, path: &str) -> Option<&str> {
        self.entries.get(path).map(String::as_str)
    }

    pub fn contains(&self, path: &str) -> bool {
        self.entries.contains_key(path)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// `(path, content, line count)` in lexicographic path order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, usize)> {
        self.entries
            .iter()
            .map(|(p, c)| (p.as_str(), c.as_str(), line_count(c)))
    }

    pub fn entries(&self) -> impl Iterator<Item = FileEntry> + '_ {
        self.entries
            .iter()
            .map(|(p, c)| FileEntry::new(p.clone(), c.clone()))
    }

    pub fn total_bytes(&self) -> u64 {
        self.entries.values().map(|c| c.len() as u64).sum()
    }

    /// Loads every text file under `root` that passes `filter`. Binary files are
    /// skipped with a warning.
    pub fn read_dir(root: &Path, filter: &FileFilter) -> io::Result<Self> {
        let mut set = Self::new();
        for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
            let entry = entry.map_err(io::Error::other)?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = relative_slash_path(root, entry.path());
            if rel.split('/').any(|c| c == ".git") || !filter.matches(&rel) {
                continue;
            }
            match decode_text(fs::read(entry.path())?) {
                Some(text) => {
                    set.insert(FileEntry::new(rel, text));
                }
                None => log::warn!("skipping binary file {rel}"),
            }
        }
        Ok(set)
    }

    /// Writes each file below `root`, creating parent directories.
    pub fn write_to(&self, root: &Path) -> io::Result<()> {
        for (path, content) in &self.entries {
            let dest = root.join(path);
            if let Some(parent) = dest.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(dest, content)?;
        }
        Ok(())
    }
}

fn relative_slash_path(root: &Path, path: &Path) -> String {
    let rel: PathBuf = path.strip_prefix(root).unwrap_or(path).to_path_buf();
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_lines_with_and_without_trailing_newline() {
        assert_eq!(line_count(""), 0);
        assert_eq!(line_count("a"), 1);
        assert_eq!(line_count("a\n"), 1);
        assert_eq!(line_count("a\nb"), 2);
        assert_eq!(line_count("\n\n"), 2);
    }

    #[test]
    fn rejects_binary_content() {
        assert_eq!(decode_text(b"ok\n".to_vec()).as_deref(), Some("ok\n"));
        assert!(decode_text(vec![b'a', 0, b'b']).is_none());
        assert!(decode_text(vec![0xff, 0xfe]).is_none());
    }

    #[test]
    fn entries_stay_sorted_and_unique() {
        let set = FileSet::from_entries([
            FileEntry::new("b.py", "1"),
            FileEntry::new("a.py", "2"),
            FileEntry::new("b.py", "3"),
        ]);
        let paths: Vec<_> = set.paths().collect();
        assert_eq!(paths, ["a.py", "b.py"]);
        assert_eq!(set.get("b.py"), Some("3"));
        assert_eq!(set.total_bytes(), 2);
    }
}
