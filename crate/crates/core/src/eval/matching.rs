//! Line-level edit matching between a candidate and a reference migration.
//!
//! Both are diffed against the original into change blocks. A candidate
//! block matches a reference block's location when their old ranges overlap
//! and matches exactly when, in addition, the added lines agree after
//! trailing whitespace is stripped. Matching is one-to-one and greedy.

use std::collections::{BTreeSet, HashSet};

use log::warn;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::diff::{change_blocks, ChangeBlock};
use crate::files::FileSet;

#[derive(Debug, Clone, Default)]
pub struct MatchOptions {
    /// Lines matching any of these are dropped from blocks before matching;
    /// blocks left with no lines are discarded.
    pub ignore: Vec<Regex>,
}

impl MatchOptions {
    pub fn with_ignore<I, S>(patterns: I) -> Result<Self, regex::Error>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Ok(Self {
            ignore: patterns
                .into_iter()
                .map(|p| Regex::new(p.as_ref()))
                .collect::<Result<_, _>>()?,
        })
    }
}

/// A reference block, identified by file and position in that file's list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockId {
    pub path: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockMatch {
    pub reference: BlockId,
    pub candidate_index: usize,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditMatchReport {
    pub reference_blocks: usize,
    pub candidate_blocks: usize,
    pub matched_exact: usize,
    pub matched_location: usize,
    /// `matched_exact / reference_blocks`.
    pub recall: Option<f64>,
    /// `matched_exact / candidate_blocks`.
    pub precision: Option<f64>,
    /// `matched_location / reference_blocks`.
    pub location_accuracy: Option<f64>,
    pub matches: Vec<BlockMatch>,
    /// Paths missing from the candidate or reference side.
    pub path_mismatches: Vec<String>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl EditMatchReport {
    fn from_counts(
        reference_blocks: usize,
        candidate_blocks: usize,
        matches: Vec<BlockMatch>,
        path_mismatches: Vec<String>,
    ) -> Self {
        let matched_exact = matches.iter().filter(|m| m.exact).count();
        let matched_location = matches.len();
        Self {
            reference_blocks,
            candidate_blocks,
            matched_exact,
            matched_location,
            recall: ratio(matched_exact, reference_blocks),
            precision: ratio(matched_exact, candidate_blocks),
            location_accuracy: ratio(matched_location, reference_blocks),
            matches,
            path_mismatches,
        }
    }

    pub fn exact_ids(&self) -> impl Iterator<Item = &BlockId> {
        self.matches
            .iter()
            .filter(|m| m.exact)
            .map(|m| &m.reference)
    }

    pub fn location_ids(&self) -> impl Iterator<Item = &BlockId> {
        self.matches.iter().map(|m| &m.reference)
    }
}

fn blocks(old: &str, new: &str, opts: &MatchOptions) -> Vec<ChangeBlock> {
    let mut out = change_blocks(old, new);
    if opts.ignore.is_empty() {
        return out;
    }
    let keep = |line: &String| !opts.ignore.iter().any(|re| re.is_match(line));
    for block in &mut out {
        block.removed.retain(keep);
        block.added.retain(keep);
    }
    out.retain(|b| !(b.removed.is_empty() && b.added.is_empty()));
    out
}

fn same_additions(a: &ChangeBlock, b: &ChangeBlock) -> bool {
    a.added.len() == b.added.len()
        && a.added
            .iter()
            .zip(&b.added)
            .all(|(x, y)| x.trim_end() == y.trim_end())
}

/// Greedy one-to-one matching for one file. Returns (reference index,
/// candidate index, exact) triples.
pub fn match_blocks(
    reference: &[ChangeBlock],
    candidate: &[ChangeBlock],
) -> Vec<(usize, usize, bool)> {
    let mut pairs = Vec::new();
    for (r, rb) in reference.iter().enumerate() {
        for (c, cb) in candidate.iter().enumerate() {
            if rb.overlaps_old(cb) {
                pairs.push((rb.old_start, !same_additions(rb, cb), cb.old_start, r, c));
            }
        }
    }
    pairs.sort_unstable();
    let mut used_ref = HashSet::new();
    let mut used_cand = HashSet::new();
    let mut out = Vec::new();
    for (_, not_exact, _, r, c) in pairs {
        if used_ref.contains(&r) || used_cand.contains(&c) {
            continue;
        }
        used_ref.insert(r);
        used_cand.insert(c);
        out.push((r, c, !not_exact));
    }
    out.sort_unstable();
    out
}

/// Scores `candidate` against `reference`, both taken relative to `original`.
///
/// A path missing on the candidate or reference side is treated as
/// unchanged from the original; a path missing from the original is
/// treated as newly created.
pub fn match_edits(
    original: &FileSet,
    reference: &FileSet,
    candidate: &FileSet,
    opts: &MatchOptions,
) -> EditMatchReport {
    let paths: BTreeSet<&str> = reference.paths().chain(candidate.paths()).collect();
    let mut reference_total = 0;
    let mut candidate_total = 0;
    let mut matches = Vec::new();
    let mut mismatches = Vec::new();
    for path in paths {
        let orig = original.get(path).unwrap_or("");
        let ref_text = reference.get(path).unwrap_or_else(|| {
            mismatches.push(path.to_string());
            orig
        });
        let cand_text = candidate.get(path).unwrap_or_else(|| {
            if ref_text != orig {
                mismatches.push(path.to_string());
            }
            orig
        });
        let rb = blocks(orig, ref_text, opts);
        let cb = blocks(orig, cand_text, opts);
        reference_total += rb.len();
        candidate_total += cb.len();
        for (r, c, exact) in match_blocks(&rb, &cb) {
            matches.push(BlockMatch {
                reference: BlockId {
                    path: path.to_string(),
                    index: r,
                },
                candidate_index: c,
                exact,
            });
        }
    }
    for path in &mismatches {
        warn!("path {path} is not present on both the reference and candidate side");
    }
    EditMatchReport::from_counts(reference_total, candidate_total, matches, mismatches)
}

/// Cumulative matching after the first `runs` runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeMatch {
    pub runs: usize,
    pub reference_blocks: usize,
    pub matched_exact: usize,
    pub matched_location: usize,
    pub exact_accuracy: Option<f64>,
    pub location_accuracy: Option<f64>,
}

/// Unions matched reference blocks over successive runs. Entry `k-1` covers
/// runs `1..=k`.
pub fn union_runs(reports: &[EditMatchReport]) -> Vec<CumulativeMatch> {
    let mut exact: HashSet<&BlockId> = HashSet::new();
    let mut location: HashSet<&BlockId> = HashSet::new();
    reports
        .iter()
        .enumerate()
        .map(|(i, report)| {
            exact.extend(report.exact_ids());
            location.extend(report.location_ids());
            CumulativeMatch {
                runs: i + 1,
                reference_blocks: report.reference_blocks,
                matched_exact: exact.len(),
                matched_location: location.len(),
                exact_accuracy: ratio(exact.len(), report.reference_blocks),
                location_accuracy: ratio(location.len(), report.reference_blocks),
            }
        })
        .collect()
}
