//! Migration scoring: external test-suite counts and edit matching against
//! a reference migration.
//!
//! Generated code is only ever executed by the external runner, in a
//! temporary copy of the project. Run it inside a container when the
//! candidate comes from an untrusted model.

mod matching;
mod runner;

pub use matching::{
    match_blocks, match_edits, union_runs, BlockId, BlockMatch, CumulativeMatch, EditMatchReport,
    MatchOptions,
};
pub use runner::{
    copy_tree, parse_junit, parse_pytest, parse_with_pattern, run_tests, run_tests_with_overlay,
    ResultParser, RunnerError, TestCommand, TestReport,
};

use std::io::Write;

use serde::{Deserialize, Serialize};

/// Everything measured for one candidate (typically one migration run).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEval {
    pub name: String,
    pub tests: Option<TestReport>,
    /// Why the suite produced no counts, when it did not.
    pub test_error: Option<String>,
    pub edits: Option<EditMatchReport>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub reference_tests: Option<TestReport>,
    pub candidates: Vec<CandidateEval>,
    pub cumulative: Vec<CumulativeMatch>,
}

impl EvalSummary {
    /// Mean passed-test count over candidates that produced counts.
    pub fn mean_passed(&self) -> Option<f64> {
        let counts: Vec<u64> = self
            .candidates
            .iter()
            .filter_map(|c| c.tests.as_ref().map(|t| t.passed))
            .collect();
        (!counts.is_empty()).then(|| counts.iter().sum::<u64>() as f64 / counts.len() as f64)
    }
}

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One CSV row per candidate; absent values are empty cells.
pub fn write_csv<W: Write>(summary: &EvalSummary, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "candidate",
        "passed",
        "failed",
        "errored",
        "collected",
        "reference_blocks",
        "candidate_blocks",
        "matched_exact",
        "matched_location",
        "recall",
        "precision",
        "location_accuracy",
    ])?;
    for c in &summary.candidates {
        let t = c.tests.as_ref();
        let e = c.edits.as_ref();
        w.write_record([
            c.name.clone(),
            cell(t.map(|t| t.passed)),
            cell(t.map(|t| t.failed)),
            cell(t.map(|t| t.errored)),
            cell(t.map(|t| t.collected)),
            cell(e.map(|e| e.reference_blocks)),
            cell(e.map(|e| e.candidate_blocks)),
            cell(e.map(|e| e.matched_exact)),
            cell(e.map(|e| e.matched_location)),
            cell(e.and_then(|e| e.recall)),
            cell(e.and_then(|e| e.precision)),
            cell(e.and_then(|e| e.location_accuracy)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_leaves_absent_cells_empty() {
        let summary = EvalSummary {
            reference_tests: None,
            candidates: vec![CandidateEval {
                name: "run_1".into(),
                tests: None,
                test_error: Some("timeout".into()),
                edits: Some(match_edits(
                    &Default::default(),
                    &Default::default(),
                    &Default::default(),
                    &MatchOptions::default(),
                )),
            }],
            cumulative: vec![],
        };
        let mut buf = Vec::new();
        write_csv(&summary, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "run_1,,,,,0,0,0,0,,,");
        assert_eq!(summary.mean_passed(), None);
    }
}
