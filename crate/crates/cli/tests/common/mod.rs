#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use diffmig_cli::Runtime;
use diffmig_core::llm::{ManualClock, RecordingTransport, TransportError};
use tempfile::TempDir;

/// Scratch git repository with deterministic author, committer and dates.
pub struct GitFixture {
    dir: TempDir,
    clock: i64,
}

impl GitFixture {
    pub fn new() -> Self {
        let fixture = Self {
            dir: tempfile::tempdir().unwrap(),
            clock: 1_700_000_000,
        };
        fixture.git(&["init", "-q", "-b", "main"]);
        fixture
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn git(&self, args: &[&str]) -> String {
        let date = format!("@{} +0000", self.clock);
        let out = Command::new("git")
            .arg("-C")
            .arg(self.dir.path())
            .args([
                "-c",
                "user.name=Fixture",
                "-c",
                "user.email=fixture@example.com",
            ])
            .args(["-c", "commit.gpgsign=false", "-c", "tag.gpgsign=false"])
            .args(args)
            .env("GIT_AUTHOR_DATE", &date)
            .env("GIT_COMMITTER_DATE", &date)
            .output()
            .expect("git runs");
        assert!(
            out.status.success(),
            "git {args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    pub fn write(&self, rel: &str, content: &str) {
        let path = self.dir.path().join(rel);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, content).unwrap();
    }

    pub fn write_bytes(&self, rel: &str, content: &[u8]) {
        let path = self.dir.path().join(rel);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, content).unwrap();
    }

    pub fn remove(&self, rel: &str) {
        fs::remove_file(self.dir.path().join(rel)).unwrap();
    }

    /// Stages everything and commits; returns the new hash.
    pub fn commit(&mut self, message: &str) -> String {
        self.clock += 3600;
        self.git(&["add", "-A"]);
        self.git(&["commit", "-q", "--allow-empty", "-m", message]);
        self.git(&["rev-parse", "HEAD"]).trim().to_string()
    }

    pub fn tag(&self, name: &str) {
        self.git(&["tag", name]);
    }

    pub fn timestamp(&self) -> i64 {
        self.clock
    }
}

pub fn write_tree(root: &Path, files: &[(&str, &str)]) {
    for (rel, content) in files {
        let path = root.join(rel);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, content).unwrap();
    }
}

pub fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the CLI in-process. `args` excludes the program name.
pub fn run_cli(rt: &Runtime, args: &[&str]) -> Output {
    let mut stdout = Vec::new();
    let mut stderr = Vec::new();
    let argv = std::iter::once("diffmig").chain(args.iter().copied());
    let code = diffmig_cli::run(argv, rt, &mut stdout, &mut stderr);
    Output {
        code,
        stdout: String::from_utf8(stdout).unwrap(),
        stderr: String::from_utf8(stderr).unwrap(),
    }
}

/// A runtime whose transport answers every request with an error, so any
/// network use shows up in `request_count`.
pub fn offline() -> (Arc<RecordingTransport>, Runtime) {
    let transport = Arc::new(RecordingTransport::new(Err(TransportError::Other(
        "offline".into(),
    ))));
    let mut rt = Runtime::isolated(transport.clone(), &[("TEST_KEY", "sk-test")]);
    rt.clock = Some(Arc::new(ManualClock::new()));
    (transport, rt)
}

pub const LIB_V1: &str = "def scale(x):\n    return x * 2\n";
pub const LIB_V2: &str = "def multiply(x, factor=2):\n    return x * factor\n";

pub const CALC_V1: &str = "import mylib\n\n\ndef double(x):\n    return mylib.scale(x)\n\n\ndef triple(x):\n    return mylib.scale(x) + x\n\n\ndef ident(x):\n    return x\n";
pub const CALC_V2: &str = "import mylib\n\n\ndef double(x):\n    return mylib.multiply(x)\n\n\ndef triple(x):\n    return mylib.multiply(x, 3)\n\n\ndef ident(x):\n    return x\n";
pub const TEST_CALC: &str = "from calc import double, triple, ident\n\n\ndef test_double():\n    assert double(2) == 4\n\n\ndef test_triple():\n    assert triple(2) == 6\n\n\ndef test_ident():\n    assert ident(5) == 5\n";

/// A library with a breaking rename between tags v1.0 and v2.0, a project
/// written against v1.0 (with the v2.0 module vendored as `mylib.py`, so
/// its tests exercise the new API), and the hand-migrated reference.
pub struct MigrationFixture {
    pub library: GitFixture,
    pub project: TempDir,
    pub reference: TempDir,
    pub work: TempDir,
}

impl MigrationFixture {
    pub fn new() -> Self {
        let mut library = GitFixture::new();
        library.write("mylib/__init__.py", LIB_V1);
        library.write("docs/conf.py", "project = 'mylib'\n");
        library.commit("v1");
        library.tag("v1.0");
        library.write("mylib/__init__.py", LIB_V2);
        library.write("docs/conf.py", "project = 'mylib 2'\n");
        library.commit("v2");
        library.tag("v2.0");

        let project = tempfile::tempdir().unwrap();
        write_tree(
            project.path(),
            &[
                ("calc.py", CALC_V1),
                ("mylib.py", LIB_V2),
                ("test_calc.py", TEST_CALC),
            ],
        );
        let reference = tempfile::tempdir().unwrap();
        write_tree(
            reference.path(),
            &[
                ("calc.py", CALC_V2),
                ("mylib.py", LIB_V2),
                ("test_calc.py", TEST_CALC),
            ],
        );
        Self {
            library,
            project,
            reference,
            work: tempfile::tempdir().unwrap(),
        }
    }

    /// Writes `<work>/<name>` with the given `[provider]` body and returns
    /// its path. Outputs go to `<work>/out`.
    pub fn config(&self, name: &str, provider: &str) -> PathBuf {
        let text = format!(
            r#"{provider}

[job]
source_dir = "{source}"
dest_dir = "out"
files = ["calc.py"]
strategy = "with_diff"
case = "calc"

[library]
name = "mylib"
alias = "ml"
repo = "{repo}"
v_from = "v1.0"
v_to = "v2.0"
filter = {{ include = ["*.py"], exclude = ["docs"] }}
"#,
            source = self.project.path().display(),
            repo = self.library.path().display(),
        );
        let path = self.work.path().join(name);
        fs::write(&path, text).unwrap();
        path
    }

    pub fn mock_config(&self, reply: &str) -> PathBuf {
        let provider = format!(
            "[provider]\nkind = \"mock\"\nreply = \"{reply}\"\ndir = \"{}\"\nmodel = \"gpt-4o-2024-08-06\"",
            self.reference.path().display()
        );
        self.config(&format!("{reply}.toml"), &provider)
    }

    pub fn openai_config(&self) -> PathBuf {
        self.config(
            "openai.toml",
            "[provider]\nkind = \"openai\"\nbase_url = \"http://127.0.0.1:9/v1\"\napi_key_env = \"TEST_KEY\"\nmodel = \"gpt-4o-2024-08-06\"\ncontext_window = 128000",
        )
    }

    pub fn out(&self) -> PathBuf {
        self.work.path().join("out")
    }
}

pub const PYTEST: &str = "python3 -m pytest -q -p no:cacheprovider";

fn numbered_line(i: usize, v: usize) -> String {
    // 13 bytes: "line_07 = 07\n"
    format!("line_{i:02} = {v:02}\n")
}

fn numbered_lines(n: usize) -> String {
    (1..=n).map(|i| numbered_line(i, i)).collect()
}

/// Three commits: create a 20-line file, edit one line in it, append a line.
/// Commits 2 and 3 also touch paths that `--exclude docs --exclude tests`
/// filters out.
pub fn three_commit_repo() -> GitFixture {
    let mut g = GitFixture::new();
    g.write("pkg/a.py", &numbered_lines(20));
    g.write("README.md", "readme\n");
    g.commit("create");
    let edited = numbered_lines(20).replace(&numbered_line(10, 10), &numbered_line(10, 99));
    g.write("pkg/a.py", &edited);
    g.write("docs/notes.py", "notes = 1\n");
    g.commit("edit");
    g.write("pkg/a.py", &(edited + &numbered_line(21, 21)));
    g.write("tests/test_a.py", "def test():\n    pass\n");
    g.commit("append");
    g
}

/// (repo_tokens, diff_tokens) per commit under the bytes/4 heuristic:
///
/// * commit 1: 20 lines of 13 bytes = 260 bytes, 65 tokens. The diff is
///   `--- /dev/null` (14) + `+++ b/pkg/a.py` (15) + `@@ -0,0 +1,20 @@` (17)
///   + 20 added lines of 14 = 326 bytes, 82 tokens.
/// * commit 2: still 260 bytes, 65. The diff is 15 + 15 + `@@ -7,7 +7,7 @@`
///   (16) + 6 context lines and 2 changed lines of 14 = 158 bytes, 40.
/// * commit 3: 21 lines = 273 bytes, 69. The diff is 15 + 15
///   + `@@ -18,3 +18,4 @@` (18) + 4 lines of 14 = 104 bytes, 26.
pub const HISTORY_COUNTS: [(u64, u64); 3] = [(65, 82), (65, 40), (69, 26)];
