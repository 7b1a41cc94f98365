//! Line diffs: edit scripts, unified diff text, patch application and the
//! change blocks used for edit matching.

mod apply;
mod blocks;
mod myers;
mod unified;

pub use apply::{apply, apply_file, ApplyError};
pub use blocks::{change_blocks, ChangeBlock};
pub use myers::{myers_ops, DiffOp};
pub use unified::{
    diff_file_sets, diff_files, parse_unified, render_unified, split_lines, FileDiff, Hunk,
    HunkLine, LineKind, ParseError, UnifiedDiff, DEFAULT_CONTEXT,
};

use serde::{Deserialize, Serialize};

/// Diff algorithm selector. Only Myers is implemented today.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Myers,
}

impl Algorithm {
    pub fn ops<T: PartialEq>(self, old: &[T], new: &[T]) -> Vec<DiffOp> {
        match self {
            Algorithm::Myers => myers_ops(old, new),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EditKind {
    Keep,
    Delete,
    Insert,
}

/// Ordered edit script carrying the items themselves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditScript<T> {
    pub ops: Vec<(EditKind, T)>,
    pub lcs_length: usize,
}

impl<T: Clone> EditScript<T> {
    /// Keep + Delete items, i.e. the old sequence.
    pub fn old_side(&self) -> Vec<T> {
        self.side(EditKind::Delete)
    }

    /// Keep + Insert items, i.e. the new sequence.
    pub fn new_side(&self) -> Vec<T> {
        self.side(EditKind::Insert)
    }

    /// The common subsequence.
    pub fn kept(&self) -> Vec<T> {
        self.side(EditKind::Keep)
    }

    fn side(&self, with: EditKind) -> Vec<T> {
        self.ops
            .iter()
            .filter(|(kind, _)| *kind == EditKind::Keep || *kind == with)
            .map(|(_, item)| item.clone())
            .collect()
    }

    pub fn edit_distance(&self) -> usize {
        self.ops.len() - self.lcs_length
    }
}

/// Myers edit script over arbitrary comparable items (lines, chars, ...).
pub fn myers_diff<T: PartialEq + Clone>(old: &[T], new: &[T]) -> EditScript<T> {
    let ops = myers_ops(old, new);
    let mut lcs_length = 0;
    let ops = ops
        .into_iter()
        .map(|op| match op {
            DiffOp::Keep { old: i, .. } => {
                lcs_length += 1;
                (EditKind::Keep, old[i].clone())
            }
            DiffOp::Delete { old: i } => (EditKind::Delete, old[i].clone()),
            DiffOp::Insert { new: j } => (EditKind::Insert, new[j].clone()),
        })
        .collect();
    EditScript { ops, lcs_length }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn dolphin_penguin_keeps_pin() {
        let script = myers_diff(&chars("dolphin"), &chars("penguin"));
        let kept: String = script.kept().into_iter().collect();
        assert_eq!(kept, "pin");
        assert_eq!(script.lcs_length, 3);
    }

    #[test]
    fn identical_inputs_are_all_keep() {
        let x = chars("identity");
        let script = myers_diff(&x, &x);
        assert_eq!(script.lcs_length, x.len());
        assert!(script.ops.iter().all(|(k, _)| *k == EditKind::Keep));
    }

    #[test]
    fn sides_reproduce_inputs() {
        let a = chars("ABCABBA");
        let b = chars("CBABAC");
        let script = myers_diff(&a, &b);
        assert_eq!(script.old_side(), a);
        assert_eq!(script.new_side(), b);
        assert_eq!(script.lcs_length, 4);
    }
}
