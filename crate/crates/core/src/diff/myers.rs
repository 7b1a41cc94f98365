//! Greedy forward Myers shortest-edit-script search.
//!
//! A D-path is a path from (0,0) through the edit graph using exactly D
//! non-diagonal edges. For each D we record, per diagonal `k = x - y`, the
//! furthest x reached; the trace of those frontiers is walked backwards to
//! recover the script.

/// One step of an edit script, as indices into the two inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiffOp {
    Keep { old: usize, new: usize },
    Delete { old: usize },
    Insert { new: usize },
}

impl DiffOp {
    pub fn is_keep(&self) -> bool {
        matches!(self, DiffOp::Keep { .. })
    }
}

/// Frontier of furthest-reaching x per diagonal, for diagonals `-d-1..=d+1`.
struct Frontier {
    d: isize,
    xs: Vec<isize>,
}

impl Frontier {
    fn get(&self, k: isize) -> isize {
        self.xs[(k + self.d + 1) as usize]
    }
}

/// Minimal edit script between `old` and `new` (insert/delete cost 1).
///
/// Common prefix and suffix are stripped before the search. Change runs are
/// then slid to a canonical position, and within each run deletions are
/// emitted before insertions.
pub fn myers_ops<T: PartialEq>(old: &[T], new: &[T]) -> Vec<DiffOp> {
    ops_with_horizon(old, new, None)
}

/// Like [`myers_ops`], but change runs may only slide `horizon` lines into
/// the common prefix or suffix. With `horizon` equal to the unified-diff
/// context this reproduces the reference `diff -u` placement exactly.
pub(crate) fn ops_with_horizon<T: PartialEq>(
    old: &[T],
    new: &[T],
    horizon: Option<usize>,
) -> Vec<DiffOp> {
    let prefix = old
        .iter()
        .zip(new.iter())
        .take_while(|(a, b)| a == b)
        .count();
    let suffix = old[prefix..]
        .iter()
        .rev()
        .zip(new[prefix..].iter().rev())
        .take_while(|(a, b)| a == b)
        .count();

    let mut ops = Vec::with_capacity(old.len().max(new.len()));
    ops.extend((0..prefix).map(|i| DiffOp::Keep { old: i, new: i }));

    let a = &old[prefix..old.len() - suffix];
    let b = &new[prefix..new.len() - suffix];
    for op in middle_ops(a, b) {
        ops.push(match op {
            DiffOp::Keep { old, new } => DiffOp::Keep {
                old: old + prefix,
                new: new + prefix,
            },
            DiffOp::Delete { old } => DiffOp::Delete { old: old + prefix },
            DiffOp::Insert { new } => DiffOp::Insert { new: new + prefix },
        });
    }

    let old_tail = old.len() - suffix;
    let new_tail = new.len() - suffix;
    ops.extend((0..suffix).map(|i| DiffOp::Keep {
        old: old_tail + i,
        new: new_tail + i,
    }));
    let (lo, trim) = match horizon {
        Some(h) => (prefix.saturating_sub(h), suffix.saturating_sub(h)),
        None => (0, 0),
    };
    compact(old, new, &ops, lo, trim)
}

fn middle_ops<T: PartialEq>(a: &[T], b: &[T]) -> Vec<DiffOp> {
    let n = a.len() as isize;
    let m = b.len() as isize;
    if n == 0 {
        return (0..b.len()).map(|new| DiffOp::Insert { new }).collect();
    }
    if m == 0 {
        return (0..a.len()).map(|old| DiffOp::Delete { old }).collect();
    }

    let max = n + m;
    let offset = max + 1;
    let mut v = vec![0isize; (2 * max + 3) as usize];
    let mut trace: Vec<Frontier> = Vec::new();

    'search: for d in 0..=max {
        // snapshot of the (d-1)-frontier, enough to step back from depth d
        let lo = (offset - d - 1) as usize;
        let hi = (offset + d + 1) as usize;
        trace.push(Frontier {
            d,
            xs: v[lo..=hi].to_vec(),
        });

        let mut k = -d;
        while k <= d {
            let idx = (k + offset) as usize;
            let mut x = if k == -d || (k != d && v[idx - 1] < v[idx + 1]) {
                v[idx + 1]
            } else {
                v[idx - 1] + 1
            };
            let mut y = x - k;
            while x < n && y < m && a[x as usize] == b[y as usize] {
                x += 1;
                y += 1;
            }
            v[idx] = x;
            if x >= n && y >= m {
                break 'search;
            }
            k += 2;
        }
    }

    let mut ops = Vec::new();
    let (mut x, mut y) = (n, m);
    for frontier in trace.iter().rev() {
        let d = frontier.d;
        let k = x - y;
        let prev_k = if k == -d || (k != d && frontier.get(k - 1) < frontier.get(k + 1)) {
            k + 1
        } else {
            k - 1
        };
        let prev_x = frontier.get(prev_k);
        let prev_y = prev_x - prev_k;
        while x > prev_x && y > prev_y {
            x -= 1;
            y -= 1;
            ops.push(DiffOp::Keep {
                old: x as usize,
                new: y as usize,
            });
        }
        if d > 0 {
            if x == prev_x {
                y -= 1;
                ops.push(DiffOp::Insert { new: y as usize });
            } else {
                x -= 1;
                ops.push(DiffOp::Delete { old: x as usize });
            }
        }
        x = prev_x;
        y = prev_y;
    }
    ops.reverse();
    ops
}

/// Per-line change flags for the two sides of a script.
fn change_flags(ops: &[DiffOp], n: usize, m: usize) -> (Vec<bool>, Vec<bool>) {
    let mut old = vec![false; n];
    let mut new = vec![false; m];
    for op in ops {
        match *op {
            DiffOp::Delete { old: i } => old[i] = true,
            DiffOp::Insert { new: j } => new[j] = true,
            DiffOp::Keep { .. } => {}
        }
    }
    (old, new)
}

/// Rebuilds a script from change flags; deletions precede insertions within
/// each run.
fn ops_from_flags(old: &[bool], new: &[bool]) -> Vec<DiffOp> {
    let mut ops = Vec::with_capacity(old.len().max(new.len()));
    let (mut i, mut j) = (0, 0);
    while i < old.len() || j < new.len() {
        if i < old.len() && old[i] {
            ops.push(DiffOp::Delete { old: i });
            i += 1;
        } else if j < new.len() && new[j] {
            ops.push(DiffOp::Insert { new: j });
            j += 1;
        } else {
            ops.push(DiffOp::Keep { old: i, new: j });
            i += 1;
            j += 1;
        }
    }
    ops
}

/// Slides each run of changed lines over equal neighbours: back to merge
/// with earlier runs, then forward as far as possible, then back again to
/// line up with a run in the other file if one was passed. This is the
/// boundary normalization GNU diff applies, so ties between equally short
/// scripts resolve the same way.
fn shift_boundaries<T: PartialEq>(lines: &[T], changed: &mut [bool], other: &[bool]) {
    let n = lines.len() as isize;
    let at = |v: &[bool], i: isize| i >= 0 && (i as usize) < v.len() && v[i as usize];
    let (mut i, mut j) = (0isize, 0isize);
    loop {
        while i < n && !changed[i as usize] {
            while at(other, j) {
                j += 1;
            }
            j += 1;
            i += 1;
        }
        if i == n {
            break;
        }
        let mut start = i;
        i += 1;
        while at(changed, i) {
            i += 1;
        }
        while at(other, j) {
            j += 1;
        }
        let mut corresponding;
        loop {
            let runlength = i - start;
            while start > 0 && lines[(start - 1) as usize] == lines[(i - 1) as usize] {
                start -= 1;
                changed[start as usize] = true;
                i -= 1;
                changed[i as usize] = false;
                while at(changed, start - 1) {
                    start -= 1;
                }
                j -= 1;
                while at(other, j) {
                    j -= 1;
                }
            }
            corresponding = if at(other, j - 1) { i } else { n };
            while i != n && lines[start as usize] == lines[i as usize] {
                changed[start as usize] = false;
                start += 1;
                changed[i as usize] = true;
                i += 1;
                while at(changed, i) {
                    i += 1;
                }
                j += 1;
                while at(other, j) {
                    j += 1;
                    corresponding = i;
                }
            }
            if runlength == i - start {
                break;
            }
        }
        while corresponding < i {
            start -= 1;
            changed[start as usize] = true;
            i -= 1;
            changed[i as usize] = false;
            j -= 1;
            while at(other, j) {
                j -= 1;
            }
        }
    }
}

/// Canonical placement of each change run within `lo..len - trim` on both
/// sides (a window of unchanged lines at each end); the number of edits is
/// unchanged.
fn compact<T: PartialEq>(
    old: &[T],
    new: &[T],
    ops: &[DiffOp],
    lo: usize,
    trim: usize,
) -> Vec<DiffOp> {
    let (mut old_changed, mut new_changed) = change_flags(ops, old.len(), new.len());
    let (old_hi, new_hi) = (old.len() - trim, new.len() - trim);
    shift_boundaries(
        &old[lo..old_hi],
        &mut old_changed[lo..old_hi],
        &new_changed[lo..new_hi],
    );
    shift_boundaries(
        &new[lo..new_hi],
        &mut new_changed[lo..new_hi],
        &old_changed[lo..old_hi],
    );
    ops_from_flags(&old_changed, &new_changed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcs_len(ops: &[DiffOp]) -> usize {
        ops.iter().filter(|op| op.is_keep()).count()
    }

    #[test]
    fn empty_inputs() {
        assert!(myers_ops::<u8>(&[], &[]).is_empty());
        assert_eq!(myers_ops(&[1], &[]), vec![DiffOp::Delete { old: 0 }]);
        assert_eq!(myers_ops(&[], &[1]), vec![DiffOp::Insert { new: 0 }]);
    }

    #[test]
    fn classic_abcabba_example() {
        let a: Vec<char> = "ABCABBA".chars().collect();
        let b: Vec<char> = "CBABAC".chars().collect();
        let ops = myers_ops(&a, &b);
        assert_eq!(lcs_len(&ops), 4);
        let edits = ops.len() - lcs_len(&ops);
        assert_eq!(edits, 5);
    }

    #[test]
    fn deletes_precede_inserts_in_a_run() {
        let ops = myers_ops(&["a", "x", "y", "b"], &["a", "p", "q", "b"]);
        assert_eq!(
            ops,
            vec![
                DiffOp::Keep { old: 0, new: 0 },
                DiffOp::Delete { old: 1 },
                DiffOp::Delete { old: 2 },
                DiffOp::Insert { new: 1 },
                DiffOp::Insert { new: 2 },
                DiffOp::Keep { old: 3, new: 3 },
            ]
        );
    }

    #[test]
    fn insertion_slides_past_equal_lines() {
        let ops = myers_ops(&["a", "", "b", "", "c"], &["a", "b", "", "", "c"]);
        assert_eq!(
            ops,
            vec![
                DiffOp::Keep { old: 0, new: 0 },
                DiffOp::Delete { old: 1 },
                DiffOp::Keep { old: 2, new: 1 },
                DiffOp::Keep { old: 3, new: 2 },
                DiffOp::Insert { new: 3 },
                DiffOp::Keep { old: 4, new: 4 },
            ]
        );
    }

    #[test]
    fn runs_merge_across_repeats() {
        // deleting one of three equal lines reports the last
        let ops = myers_ops(&["x", "x", "x"], &["x", "x"]);
        assert_eq!(ops[2], DiffOp::Delete { old: 2 });
    }
}
