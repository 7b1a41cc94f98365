//! External test-suite execution and result counting.

use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::LazyLock;
use std::time::{Duration, Instant};

use log::{debug, info};
use quick_xml::events::Event;
use quick_xml::Reader;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;
use walkdir::WalkDir;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("test runner `{0}` not found")]
    RunnerNotFound(String),
    #[error("could not read test counts from the runner output (log: {})", .log.display())]
    ParseFailure { log: PathBuf },
    #[error("test runner timed out after {after:?} (log: {})", .log.display())]
    Timeout { after: Duration, log: PathBuf },
    #[error("bad result pattern: {0}")]
    Pattern(#[from] regex::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestReport {
    pub passed: u64,
    pub failed: u64,
    pub errored: u64,
    pub skipped: u64,
    pub collected: u64,
    pub exit_code: Option<i32>,
    pub duration_ms: u64,
    pub log_path: PathBuf,
}

/// How counts are read from a finished run.
#[derive(Debug, Clone)]
pub enum ResultParser {
    /// The pytest summary line (`2 passed, 7 failed in 1.2s`).
    Pytest,
    /// Last match of a pattern with optional named groups `passed`,
    /// `failed`, `error`, `skipped`, `collected`.
    Pattern(Regex),
    /// A JUnit-style XML file, relative to the working copy.
    JunitXml(PathBuf),
}

impl ResultParser {
    pub fn pattern(re: &str) -> Result<Self, RunnerError> {
        Ok(Self::Pattern(Regex::new(re)?))
    }
}

#[derive(Debug, Clone)]
pub struct TestCommand {
    /// Program followed by its arguments.
    pub argv: Vec<String>,
    pub parser: ResultParser,
    pub timeout: Option<Duration>,
    /// Directory for run logs; a fresh temporary file when unset.
    pub log_dir: Option<PathBuf>,
    pub env: Vec<(String, String)>,
}

impl TestCommand {
    pub fn pytest() -> Self {
        Self::new(["python3", "-m", "pytest", "-q", "-p", "no:cacheprovider"])
    }

    pub fn new<I, S>(argv: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            argv: argv.into_iter().map(Into::into).collect(),
            parser: ResultParser::Pytest,
            timeout: None,
            log_dir: None,
            env: Vec::new(),
        }
    }
}

static PYTEST_COUNT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(\d+) (passed|failed|errors?|skipped|xfailed|xpassed|deselected)\b")
        .expect("static pattern")
});
static PYTEST_COLLECTED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\bcollected (\d+) items?\b").expect("static pattern"));
static PYTEST_EMPTY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\bno tests ran\b").expect("static pattern"));

/// Counts from the last pytest summary line in `log`.
pub fn parse_pytest(log: &str) -> Option<TestReport> {
    let summary = log
        .lines()
        .rev()
        .find(|line| PYTEST_COUNT.is_match(line) || PYTEST_EMPTY.is_match(line))?;
    let mut report = TestReport::default();
    for caps in PYTEST_COUNT.captures_iter(summary) {
        let n: u64 = caps[1].parse().ok()?;
        match &caps[2] {
            "passed" | "xpassed" => report.passed += n,
            "failed" => report.failed += n,
            "error" | "errors" => report.errored += n,
            "skipped" | "xfailed" => report.skipped += n,
            _ => {}
        }
    }
    let counted = report.passed + report.failed + report.errored + report.skipped;
    let announced = PYTEST_COLLECTED
        .captures_iter(log)
        .last()
        .and_then(|c| c[1].parse().ok())
        .unwrap_or(0);
    report.collected = counted.max(announced);
    Some(report)
}

pub fn parse_with_pattern(log: &str, re: &Regex) -> Option<TestReport> {
    let caps = re.captures_iter(log).last()?;
    let get = |name: &str| -> u64 {
        caps.name(name)
            .and_then(|m| m.as_str().trim().parse().ok())
            .unwrap_or(0)
    };
    let mut report = TestReport {
        passed: get("passed"),
        failed: get("failed"),
        errored: get("error"),
        skipped: get("skipped"),
        ..TestReport::default()
    };
    let counted = report.passed + report.failed + report.errored + report.skipped;
    report.collected = get("collected").max(counted);
    Some(report)
}

/// Sums `<testsuite>` attributes; falls back to counting `<testcase>`
/// children when no suite carries totals.
pub fn parse_junit(xml: &str) -> Option<TestReport> {
    let mut reader = Reader::from_str(xml);
    let mut depth_in_suite = 0usize;
    let mut suites = TestReport::default();
    let mut saw_suite_totals = false;
    let mut cases = TestReport::default();
    let mut in_case = false;
    let mut case_outcome: Option<&'static str> = None;
    let mut any = false;
    loop {
        let event = reader.read_event().ok()?;
        let (start, empty) = match &event {
            Event::Start(e) => (Some(e.clone()), false),
            Event::Empty(e) => (Some(e.clone()), true),
            _ => (None, false),
        };
        if let Some(e) = start {
            let name = e.name().as_ref().to_vec();
            let attr = |key: &str| -> Option<u64> {
                e.attributes()
                    .flatten()
                    .find(|a| a.key.as_ref() == key.as_bytes())
                    .and_then(|a| String::from_utf8_lossy(&a.value).parse().ok())
            };
            match name.as_slice() {
                b"testsuite" => {
                    any = true;
                    // nested suites repeat their children's totals
                    if depth_in_suite == 0 {
                        if let Some(tests) = attr("tests") {
                            saw_suite_totals = true;
                            let failed = attr("failures").unwrap_or(0);
                            let errored = attr("errors").unwrap_or(0);
                            let skipped = attr("skipped").or_else(|| attr("disabled")).unwrap_or(0);
                            suites.collected += tests;
                            suites.failed += failed;
                            suites.errored += errored;
                            suites.skipped += skipped;
                            suites.passed += tests.saturating_sub(failed + errored + skipped);
                        }
                    }
                    if !empty {
                        depth_in_suite += 1;
                    }
                }
                b"testcase" => {
                    any = true;
                    cases.collected += 1;
                    if empty {
                        cases.passed += 1;
                    } else {
                        in_case = true;
                        case_outcome = None;
                    }
                }
                b"failure" if in_case => case_outcome = Some("failed"),
                b"error" if in_case => case_outcome = Some("error"),
                b"skipped" if in_case => case_outcome = Some("skipped"),
                _ => {}
            }
        }
        match event {
            Event::End(e) if e.name().as_ref() == b"testsuite" => {
                depth_in_suite = depth_in_suite.saturating_sub(1);
            }
            Event::End(e) if e.name().as_ref() == b"testcase" => {
                in_case = false;
                match case_outcome {
                    Some("failed") => cases.failed += 1,
                    Some("error") => cases.errored += 1,
                    Some(_) => cases.skipped += 1,
                    None => cases.passed += 1,
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !any {
        return None;
    }
    Some(if saw_suite_totals { suites } else { cases })
}

/// Copies `from` into `to`, skipping `.git`, caches and `run.json`.
pub fn copy_tree(from: &Path, to: &Path) -> Result<(), RunnerError> {
    let skip = |name: &str| matches!(name, ".git" | "__pycache__" | ".pytest_cache" | "run.json");
    let walker = WalkDir::new(from)
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !skip(&e.file_name().to_string_lossy()));
    for entry in walker {
        let entry = entry.map_err(|e| RunnerError::Io {
            path: from.to_path_buf(),
            source: e.into(),
        })?;
        let rel = entry
            .path()
            .strip_prefix(from)
            .expect("walk stays under root");
        let target = to.join(rel);
        if entry.file_type().is_dir() {
            fs::create_dir_all(&target).map_err(io_err(&target))?;
        } else if entry.file_type().is_file() {
            fs::copy(entry.path(), &target).map_err(io_err(&target))?;
        }
    }
    Ok(())
}

fn new_log_file(dir: Option<&Path>) -> Result<(File, PathBuf), RunnerError> {
    let dir = dir
        .map(Path::to_path_buf)
        .unwrap_or_else(std::env::temp_dir);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let file = tempfile::Builder::new()
        .prefix("diffmig-test-")
        .suffix(".log")
        .tempfile_in(&dir)
        .map_err(io_err(&dir))?;
    let (file, path) = file.keep().map_err(|e| RunnerError::Io {
        path: dir.clone(),
        source: e.error,
    })?;
    Ok((file, path))
}

/// Runs the suite on a private copy of `project_dir`, optionally with the
/// files of `overlay` (e.g. one migration run) copied on top.
pub fn run_tests_with_overlay(
    project_dir: &Path,
    overlay: Option<&Path>,
    cmd: &TestCommand,
) -> Result<TestReport, RunnerError> {
    let (program, args) = cmd
        .argv
        .split_first()
        .ok_or_else(|| RunnerError::RunnerNotFound(String::new()))?;
    if !project_dir.is_dir() {
        return Err(RunnerError::Io {
            path: project_dir.to_path_buf(),
            source: io::Error::new(io::ErrorKind::NotFound, "project directory not found"),
        });
    }
    let work = tempfile::tempdir().map_err(io_err(project_dir))?;
    copy_tree(project_dir, work.path())?;
    if let Some(overlay) = overlay {
        copy_tree(overlay, work.path())?;
    }

    let (log, log_path) = new_log_file(cmd.log_dir.as_deref())?;
    let stderr = log.try_clone().map_err(io_err(&log_path))?;
    debug!("running {:?} in {}", cmd.argv, work.path().display());
    let started = Instant::now();
    let mut child = Command::new(program)
        .args(args)
        .current_dir(work.path())
        .envs(cmd.env.iter().map(|(k, v)| (k, v)))
        .stdin(Stdio::null())
        .stdout(log)
        .stderr(stderr)
        .spawn()
        .map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => RunnerError::RunnerNotFound(program.clone()),
            _ => RunnerError::Io {
                path: PathBuf::from(program),
                source: e,
            },
        })?;
    let status = match cmd.timeout {
        Some(limit) => match child.wait_timeout(limit).map_err(io_err(&log_path))? {
            Some(status) => status,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(RunnerError::Timeout {
                    after: limit,
                    log: log_path,
                });
            }
        },
        None => child.wait().map_err(io_err(&log_path))?,
    };
    let duration_ms = started.elapsed().as_millis() as u64;

    let output =
        String::from_utf8_lossy(&fs::read(&log_path).map_err(io_err(&log_path))?).into_owned();
    let parsed = match &cmd.parser {
        ResultParser::Pytest => parse_pytest(&output),
        ResultParser::Pattern(re) => parse_with_pattern(&output, re),
        ResultParser::JunitXml(rel) => fs::read_to_string(work.path().join(rel))
            .ok()
            .and_then(|xml| parse_junit(&xml)),
    };
    let mut report = parsed.ok_or(RunnerError::ParseFailure {
        log: log_path.clone(),
    })?;
    report.exit_code = status.code();
    report.duration_ms = duration_ms;
    report.log_path = log_path;
    info!(
        "{}: {} passed, {} failed, {} errors of {}",
        project_dir.display(),
        report.passed,
        report.failed,
        report.errored,
        report.collected
    );
    Ok(report)
}

pub fn run_tests(project_dir: &Path, cmd: &TestCommand) -> Result<TestReport, RunnerError> {
    run_tests_with_overlay(project_dir, None, cmd)
}
