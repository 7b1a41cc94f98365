mod common;

use std::fs;

use common::data_dir;
use diffmig_core::diff::{apply_file, parse_unified, render_unified, DEFAULT_CONTEXT};
use diffmig_core::FileEntry;

/// Each fixture directory holds `old`, `new` and `expected.diff`, the output of
/// `diff -u --label a/x --label b/x old new`.
#[test]
fn rendering_matches_reference_tool() {
    let mut dirs: Vec<_> = fs::read_dir(data_dir().join("golden"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    dirs.sort();
    assert_eq!(dirs.len(), 25);

    let mut failures = Vec::new();
    for dir in &dirs {
        let old = fs::read_to_string(dir.join("old")).unwrap();
        let new = fs::read_to_string(dir.join("new")).unwrap();
        let expected = fs::read_to_string(dir.join("expected.diff")).unwrap();
        let rendered = render_unified(
            &FileEntry::new("x", old.clone()),
            &FileEntry::new("x", new.clone()),
            DEFAULT_CONTEXT,
        );
        if rendered != expected {
            failures.push(format!("{}:\n{rendered}", dir.display()));
            continue;
        }
        let parsed = parse_unified(&expected).unwrap();
        assert_eq!(parsed.render(), expected, "{}", dir.display());
        assert_eq!(
            apply_file(&parsed.files[0], &old).unwrap(),
            new,
            "{}",
            dir.display()
        );
    }
    assert!(
        failures.is_empty(),
        "mismatched fixtures:\n{}",
        failures.join("\n")
    );
}

fn random_text(rng: &mut impl rand::Rng, base: Option<&[String]>) -> Vec<String> {
    const POOL: [&str; 6] = ["a", "b", "c", "", "}", "    pass"];
    let mut lines: Vec<String> = match base {
        Some(b) => b.to_vec(),
        None => (0..rng.gen_range(0..40))
            .map(|_| POOL[rng.gen_range(0..POOL.len())].to_string())
            .collect(),
    };
    if base.is_some() {
        for _ in 0..rng.gen_range(1..6) {
            let at = rng.gen_range(0..=lines.len());
            match rng.gen_range(0..3) {
                0 if at < lines.len() => {
                    lines.remove(at);
                }
                1 if at < lines.len() => lines[at] = POOL[rng.gen_range(0..POOL.len())].to_string(),
                _ => lines.insert(at, POOL[rng.gen_range(0..POOL.len())].to_string()),
            }
        }
    }
    lines
}

fn edit_counts(diff: &str) -> (usize, usize) {
    let body = diff
        .lines()
        .filter(|l| !l.starts_with("---") && !l.starts_with("+++"));
    body.fold((0, 0), |(minus, plus), l| match l.as_bytes().first() {
        Some(b'-') => (minus + 1, plus),
        Some(b'+') => (minus, plus + 1),
        _ => (minus, plus),
    })
}

/// Randomized comparison with the system `diff -u`, when one is installed.
/// Both scripts are minimal, so edit counts always agree; the exact text
/// differs only where the two searches break a tie between equally short
/// scripts differently.
#[test]
fn agrees_with_system_diff_on_random_pairs() {
    use rand::SeedableRng;
    use std::process::Command;

    if Command::new("diff").arg("--version").output().is_err() {
        eprintln!("no system diff; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let trials = 300;
    let mut identical = 0;
    for _ in 0..trials {
        let a = random_text(&mut rng, None);
        let b = random_text(&mut rng, Some(&a));
        let join = |l: &[String]| l.iter().map(|s| format!("{s}\n")).collect::<String>();
        let (old, new) = (join(&a), join(&b));
        fs::write(dir.path().join("old"), &old).unwrap();
        fs::write(dir.path().join("new"), &new).unwrap();
        let out = Command::new("diff")
            .args(["-u", "--label", "a/x", "--label", "b/x", "old", "new"])
            .current_dir(dir.path())
            .output()
            .unwrap();
        let expected = String::from_utf8(out.stdout).unwrap();
        let ours = render_unified(
            &FileEntry::new("x", old.clone()),
            &FileEntry::new("x", new),
            DEFAULT_CONTEXT,
        );
        assert_eq!(edit_counts(&ours), edit_counts(&expected), "{old:?}");
        identical += usize::from(ours == expected);
    }
    assert!(
        identical * 100 >= trials * 95,
        "{identical}/{trials} identical"
    );
}
