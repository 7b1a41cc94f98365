use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::myers::{myers_ops, DiffOp};
use super::unified::split_lines;

/// A maximal run of consecutive changed lines.
///
/// `old_start`/`new_start` are 1-based. For a pure insertion `old_len` is 0
/// and `old_start` is the old line the insertion precedes (one past the end
/// for an append); pure deletions mirror this on the new side.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChangeBlock {
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    pub removed: Vec<String>,
    pub added: Vec<String>,
}

impl ChangeBlock {
    /// Half-open old-side line range, 1-based.
    pub fn old_range(&self) -> Range<usize> {
        self.old_start..self.old_start + self.old_len
    }

    pub fn new_range(&self) -> Range<usize> {
        self.new_start..self.new_start + self.new_len
    }

    /// Old-side overlap. An empty range is a point between lines: it overlaps
    /// a non-empty range containing that point, or an empty range at the same
    /// point.
    pub fn overlaps_old(&self, other: &ChangeBlock) -> bool {
        let (a, b) = (self.old_range(), other.old_range());
        match (a.is_empty(), b.is_empty()) {
            (false, false) => a.start < b.end && b.start < a.end,
            (true, false) => b.contains(&a.start),
            (false, true) => a.contains(&b.start),
            (true, true) => a.start == b.start,
        }
    }
}

fn strip_terminator(line: &str) -> String {
    line.strip_suffix('\n').unwrap_or(line).to_string()
}

/// Groups the line diff of `old` → `new` into maximal change blocks.
pub fn change_blocks(old: &str, new: &str) -> Vec<ChangeBlock> {
    let old_lines = split_lines(old);
    let new_lines = split_lines(new);
    let ops = myers_ops(&old_lines, &new_lines);

    let mut blocks = Vec::new();
    let (mut o, mut n) = (0usize, 0usize);
    let mut current: Option<ChangeBlock> = None;
    for op in ops {
        match op {
            DiffOp::Keep { .. } => {
                blocks.extend(current.take());
                o += 1;
                n += 1;
            }
            DiffOp::Delete { old: i } => {
                let block = current.get_or_insert_with(|| empty_block(o, n));
                block.old_len += 1;
                block.removed.push(strip_terminator(old_lines[i]));
                o += 1;
            }
            DiffOp::Insert { new: j } => {
                let block = current.get_or_insert_with(|| empty_block(o, n));
                block.new_len += 1;
                block.added.push(strip_terminator(new_lines[j]));
                n += 1;
            }
        }
    }
    blocks.extend(current);
    blocks
}

fn empty_block(old_before: usize, new_before: usize) -> ChangeBlock {
    ChangeBlock {
        old_start: old_before + 1,
        old_len: 0,
        new_start: new_before + 1,
        new_len: 0,
        removed: Vec::new(),
        added: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numbered(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("    line_{i} = {i}\n")).collect()
    }

    #[test]
    fn identical_files_have_no_blocks() {
        assert!(change_blocks("a\nb\n", "a\nb\n").is_empty());
    }

    #[test]
    fn figure_style_edits_form_two_blocks() {
        // three semantic edits: two on line 21, one on line 24
        let old = numbered(30);
        let mut new = old.clone();
        new[20] = "    self.rename_method(new_kwarg=1)\n".into();
        new[23] = "    dur = ss.years(5)\n".into();
        let blocks = change_blocks(&old.concat(), &new.concat());
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].old_start, 21);
        assert_eq!(blocks[1].old_start, 24);
    }

    #[test]
    fn consecutive_changed_lines_are_one_block() {
        let old = numbered(10);
        let mut new = old.clone();
        new[4] = "five\n".into();
        new[5] = "six\n".into();
        let blocks = change_blocks(&old.concat(), &new.concat());
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].old_range(), 5..7);
        assert_eq!(blocks[0].removed.len(), 2);
        assert_eq!(blocks[0].added, ["five", "six"]);
    }

    #[test]
    fn pure_insertion_and_deletion() {
        let blocks = change_blocks("a\nb\n", "a\nx\nb\n");
        assert_eq!(blocks.len(), 1);
        assert_eq!((blocks[0].old_start, blocks[0].old_len), (2, 0));
        assert_eq!(blocks[0].added, ["x"]);

        let blocks = change_blocks("a\nx\nb\n", "a\nb\n");
        assert_eq!((blocks[0].old_start, blocks[0].old_len), (2, 1));
        assert!(blocks[0].added.is_empty());
    }

    #[test]
    fn overlap_rules() {
        let block = |start, len| ChangeBlock {
            old_start: start,
            old_len: len,
            new_start: start,
            new_len: 1,
            removed: vec![],
            added: vec![],
        };
        assert!(block(5, 2).overlaps_old(&block(6, 3)));
        assert!(!block(5, 2).overlaps_old(&block(7, 1)));
        assert!(block(5, 0).overlaps_old(&block(5, 2)));
        assert!(!block(7, 0).overlaps_old(&block(5, 2)));
        assert!(block(3, 0).overlaps_old(&block(3, 0)));
    }
}
