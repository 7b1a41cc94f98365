//! Line-based docstring removal for Python sources.
//!
//! A docstring is a string literal that is the first statement of a module,
//! `def` or `class` body. This is a syntactic scan, not a parser; it handles
//! single-line and triple-quoted literals with optional `r`/`u`/`b` prefixes.

use std::sync::LazyLock;

use regex::Regex;

static HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:async\s+)?(?:def|class)\s").expect("static pattern"));
static STRING_START: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"^(?i:[rub]{0,2})("""|'''|"|')"#).expect("static pattern"));

fn indent_of(line: &str) -> usize {
    line.len() - line.trim_start().len()
}

fn paren_delta(line: &str) -> i32 {
    line.chars()
        .map(|c| match c {
            '(' | '[' | '{' => 1,
            ')' | ']' | '}' => -1,
            _ => 0,
        })
        .sum()
}

/// Number of lines the literal starting at `lines[start]` spans.
fn literal_span(lines: &[&str], start: usize, quote: &str) -> usize {
    let first = lines[start].trim_start();
    let open = first.find(quote).expect("quote present") + quote.len();
    if first[open..].contains(quote) || quote.len() == 1 {
        return 1;
    }
    for (offset, line) in lines[start + 1..].iter().enumerate() {
        if line.contains(quote) {
            return offset + 2;
        }
    }
    lines.len() - start
}

fn scan(src: &str) -> (String, usize) {
    let lines: Vec<&str> = src.split_inclusive('\n').collect();
    let mut out = String::with_capacity(src.len());
    let mut removed = 0;
    // a docstring may appear at the next nonblank line
    let mut expect_doc = true;
    let mut in_header = false;
    let mut depth = 0;
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        let trimmed = line.trim();
        if in_header {
            depth += paren_delta(line);
            if depth <= 0 && trimmed.ends_with(':') {
                in_header = false;
                expect_doc = true;
            }
            out.push_str(line);
            i += 1;
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('#') {
            out.push_str(line);
            i += 1;
            continue;
        }
        if expect_doc {
            expect_doc = false;
            if let Some(caps) = STRING_START.captures(trimmed) {
                let span = literal_span(&lines, i, &caps[1]);
                let indent = indent_of(line);
                removed += 1;
                i += span;
                // keep the body syntactically non-empty
                let next = lines[i..].iter().find(|l| !l.trim().is_empty());
                if indent > 0 && next.is_none_or(|l| indent_of(l) < indent) {
                    out.push_str(&line[..indent]);
                    out.push_str("pass\n");
                }
                continue;
            }
        }
        if HEADER.is_match(line) {
            depth = paren_delta(line);
            if depth <= 0 && trimmed.ends_with(':') {
                expect_doc = true;
            } else {
                in_header = true;
            }
        }
        out.push_str(line);
        i += 1;
    }
    (out, removed)
}

pub fn strip_docstrings(src: &str) -> String {
    scan(src).0
}

pub fn has_docstring(src: &str) -> bool {
    scan(src).1 > 0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_single_and_multi_line() {
        let src = "def f(x):\n    \"\"\"One line.\"\"\"\n    return x\n\n\ndef g(\n    a,\n    b,\n):\n    '''\n    Many\n    lines.\n    '''\n    return a + b\n";
        let out = strip_docstrings(src);
        assert_eq!(
            out,
            "def f(x):\n    return x\n\n\ndef g(\n    a,\n    b,\n):\n    return a + b\n"
        );
        assert!(has_docstring(src));
        assert!(!has_docstring(&out));
    }

    #[test]
    fn leaves_non_docstring_strings() {
        let src = "def f():\n    x = \"\"\"text\"\"\"\n    return x\n";
        assert_eq!(strip_docstrings(src), src);
        let src = "def f():\n    return 'a'\n";
        assert_eq!(strip_docstrings(src), src);
    }

    #[test]
    fn docstring_only_body_gets_pass() {
        assert_eq!(
            strip_docstrings("class A:\n    \"doc\"\n"),
            "class A:\n    pass\n"
        );
    }

    #[test]
    fn module_and_nested_docstrings() {
        let src = "\"\"\"Module.\"\"\"\nclass A:\n    r\"\"\"Class.\"\"\"\n    def m(self):\n        \"Method.\"\n        return 1\n";
        assert_eq!(
            strip_docstrings(src),
            "class A:\n    def m(self):\n        return 1\n"
        );
    }
}
