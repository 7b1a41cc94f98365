use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Args;
use diffmig_core::eval::{
    match_edits, run_tests_with_overlay, union_runs, write_csv, CandidateEval, EvalSummary,
    MatchOptions, ResultParser, TestCommand,
};
use diffmig_core::{FileFilter, FileSet, FilterSpec};
use log::info;

use crate::config::EvalConfig;
use crate::table::{opt, ratio, Align, Table};
use crate::{out_file, require_dir, usage, Runtime};

/// Bookkeeping files the migrator writes next to its outputs.
const ALWAYS_EXCLUDED: [&str; 2] = ["run.json", "usage.jsonl"];

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// The pre-update project.
    #[arg(long)]
    pub original: PathBuf,
    /// The reference post-update project.
    #[arg(long)]
    pub reference: PathBuf,
    /// A migrated tree, e.g. `out/run_1`; repeat in run order.
    #[arg(long, required = true)]
    pub candidate: Vec<PathBuf>,
    /// Reads the `[eval]` section; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Test command run inside a copy of the original with the candidate
    /// overlaid, e.g. "python3 -m pytest -q". Tests are skipped without one.
    #[arg(long)]
    pub runner: Option<String>,
    /// pytest, junit=PATH or regex=PATTERN.
    #[arg(long)]
    pub parser: Option<String>,
    /// Test timeout in seconds.
    #[arg(long)]
    pub timeout: Option<u64>,
    #[arg(long)]
    pub include: Vec<String>,
    #[arg(long)]
    pub exclude: Vec<String>,
    /// Lines matching this pattern are ignored when matching edits; repeatable.
    #[arg(long)]
    pub ignore: Vec<String>,
    /// Directory for eval.json, eval.csv and test logs.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the summary as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

pub fn parse_parser(spec: &str) -> Result<ResultParser> {
    if spec == "pytest" {
        return Ok(ResultParser::Pytest);
    }
    match spec.split_once('=') {
        Some(("junit", path)) if !path.is_empty() => Ok(ResultParser::JunitXml(path.into())),
        Some(("regex", re)) => {
            ResultParser::pattern(re).map_err(|e| usage(format!("--parser: {e}")))
        }
        _ => Err(usage(format!(
            "--parser `{spec}`: expected pytest, junit=PATH or regex=PATTERN"
        ))),
    }
}

fn test_command(args: &EvalArgs, cfg: &EvalConfig) -> Result<Option<TestCommand>> {
    let argv: Vec<String> = match &args.runner {
        Some(r) => r.split_whitespace().map(String::from).collect(),
        None => cfg.runner.clone(),
    };
    if argv.is_empty() {
        return Ok(None);
    }
    let mut cmd = TestCommand::new(argv);
    if let Some(spec) = args.parser.as_ref().or(cfg.parser.as_ref()) {
        cmd.parser = parse_parser(spec)?;
    }
    cmd.timeout = args.timeout.or(cfg.timeout_secs).map(Duration::from_secs);
    cmd.log_dir = args.out.as_ref().map(|d| d.join("logs"));
    Ok(Some(cmd))
}

fn candidate_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn read(dir: &Path, filter: &FileFilter) -> Result<FileSet> {
    FileSet::read_dir(dir, filter).with_context(|| format!("reading {}", dir.display()))
}

pub fn run(args: &EvalArgs, rt: &Runtime, stdout: &mut dyn Write) -> Result<()> {
    let cfg = match &args.config {
        Some(path) => rt.load_config(path)?.eval,
        None => EvalConfig::default(),
    };
    require_dir("--original", &args.original)?;
    require_dir("--reference", &args.reference)?;
    for c in &args.candidate {
        require_dir("--candidate", c)?;
    }
    let mut spec: FilterSpec = cfg.filter.clone();
    spec.include.extend(args.include.iter().cloned());
    spec.exclude.extend(args.exclude.iter().cloned());
    spec.exclude
        .extend(ALWAYS_EXCLUDED.iter().map(|s| s.to_string()));
    let filter = FileFilter::from_spec(spec).map_err(|e| usage(e.to_string()))?;
    let ignore: Vec<&String> = cfg.ignore.iter().chain(&args.ignore).collect();
    let options = MatchOptions::with_ignore(ignore).map_err(|e| usage(format!("--ignore: {e}")))?;
    let cmd = test_command(args, &cfg)?;

    let original = read(&args.original, &filter)?;
    let reference = read(&args.reference, &filter)?;
    let mut summary = EvalSummary::default();
    if let Some(cmd) = &cmd {
        info!("running reference tests");
        summary.reference_tests = Some(
            run_tests_with_overlay(&args.original, Some(&args.reference), cmd)
                .context("reference test run")?,
        );
    }
    for dir in &args.candidate {
        let name = candidate_name(dir);
        let candidate = read(dir, &filter)?;
        let edits = match_edits(&original, &reference, &candidate, &options);
        let (tests, test_error) = match &cmd {
            Some(cmd) => {
                info!("running tests for {name}");
                match run_tests_with_overlay(&args.original, Some(dir), cmd) {
                    Ok(report) => (Some(report), None),
                    Err(e) => (None, Some(e.to_string())),
                }
            }
            None => (None, None),
        };
        summary.candidates.push(CandidateEval {
            name,
            tests,
            test_error,
            edits: Some(edits),
        });
    }
    let reports: Vec<_> = summary
        .candidates
        .iter()
        .filter_map(|c| c.edits.clone())
        .collect();
    summary.cumulative = union_runs(&reports);

    if args.json {
        writeln!(stdout, "{}", serde_json::to_string_pretty(&summary)?)?;
    } else {
        print_summary(&summary, stdout)?;
    }
    if let Some(dir) = &args.out {
        let json = out_file(dir, "eval.json")?;
        fs::write(&json, serde_json::to_string_pretty(&summary)? + "\n")
            .with_context(|| format!("writing {}", json.display()))?;
        let csv = dir.join("eval.csv");
        let file = fs::File::create(&csv).with_context(|| format!("writing {}", csv.display()))?;
        write_csv(&summary, file).with_context(|| format!("writing {}", csv.display()))?;
    }
    Ok(())
}

fn print_summary(summary: &EvalSummary, out: &mut dyn Write) -> Result<()> {
    if let Some(t) = &summary.reference_tests {
        writeln!(
            out,
            "reference: {} passed, {} failed, {} errors",
            t.passed, t.failed, t.errored
        )?;
    }
    let mut table = Table::new(&[
        ("candidate", Align::Left),
        ("passed", Align::Right),
        ("failed", Align::Right),
        ("blocks", Align::Right),
        ("exact", Align::Right),
        ("location", Align::Right),
        ("recall", Align::Right),
        ("precision", Align::Right),
        ("loc. acc.", Align::Right),
    ]);
    for c in &summary.candidates {
        let t = c.tests.as_ref();
        let e = c.edits.as_ref();
        table.row(vec![
            c.name.clone(),
            opt(t.map(|t| t.passed)),
            opt(t.map(|t| t.failed + t.errored)),
            opt(e.map(|e| format!("{}/{}", e.candidate_blocks, e.reference_blocks))),
            opt(e.map(|e| e.matched_exact)),
            opt(e.map(|e| e.matched_location)),
            ratio(e.and_then(|e| e.recall)),
            ratio(e.and_then(|e| e.precision)),
            ratio(e.and_then(|e| e.location_accuracy)),
        ]);
    }
    table.write(out)?;
    for c in &summary.candidates {
        if let Some(err) = &c.test_error {
            writeln!(out, "{}: tests failed to run: {err}", c.name)?;
        }
    }
    for c in &summary.cumulative {
        writeln!(
            out,
            "cumulative after {} run(s): exact {}/{} ({}), location {}/{} ({})",
            c.runs,
            c.matched_exact,
            c.reference_blocks,
            ratio(c.exact_accuracy),
            c.matched_location,
            c.reference_blocks,
            ratio(c.location_accuracy),
        )?;
    }
    Ok(())
}
