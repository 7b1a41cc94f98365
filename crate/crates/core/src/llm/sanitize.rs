use std::sync::LazyLock;

use regex::Regex;

static ASSIGNMENT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"^[A-Za-z_][\w.\[\]'", ]*\s*(?:[-+*/%&|^@]|//|\*\*|>>|<<)?=[^=]"#)
        .expect("static pattern")
});
static CALL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[A-Za-z_][\w.]*\(").expect("static pattern"));

const CODE_PREFIXES: &[&str] = &[
    "import ", "from ", "def ", "class ", "async ", "#", "@", "if ", "for ", "while ", "try:",
    "with ", "return", "\"\"\"", "'''", "print(",
];

fn is_code_like(line: &str) -> bool {
    if line.starts_with([' ', '\t']) && !line.trim().is_empty() {
        return true;
    }
    let t = line.trim();
    CODE_PREFIXES.iter().any(|p| t.starts_with(p)) || ASSIGNMENT.is_match(t) || CALL.is_match(t)
}

/// A chatty sentence rather than code: starts with a letter, contains a
/// space, and carries no code punctuation.
fn is_prose(line: &str) -> bool {
    let t = line.trim();
    t.starts_with(|c: char| c.is_alphabetic())
        && t.contains(' ')
        && !t.contains(['=', '(', ')', '[', ']', '{', '}', '#', '"'])
        && !is_code_like(line)
}

/// Fenced blocks as line lists. An unterminated final fence runs to the end.
fn fenced_blocks(text: &str) -> Vec<Vec<&str>> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let fence = line.trim_start().starts_with("```");
        match (&mut current, fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(_), true) => blocks.push(current.take().expect("open block")),
            (Some(body), false) => body.push(line),
            (None, false) => {}
        }
    }
    if let Some(body) = current {
        blocks.push(body);
    }
    blocks
}

/// Extracts the code from a model reply.
///
/// One fenced block yields its interior, without a final newline; several
/// yield the longest (first on ties). Without fences, prose lines before the
/// first code-like line and trailing prose lines are dropped. Text that is already code comes
/// back byte-identical.
pub fn sanitize_code_reply(text: &str) -> String {
    let blocks = fenced_blocks(text);
    if !blocks.is_empty() {
        let mut best = &blocks[0];
        for block in &blocks[1..] {
            if block.len() > best.len() {
                best = block;
            }
        }
        return best.join("\n");
    }

    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let Some(start) = lines.iter().position(|l| is_code_like(l)) else {
        return text.to_string();
    };
    let mut end = lines.len();
    while end > start {
        let line = lines[end - 1];
        if line.trim().is_empty() || is_prose(line) {
            end -= 1;
        } else {
            break;
        }
    }
    if start == 0 && !lines[end..].iter().any(|l| is_prose(l)) {
        return text.to_string();
    }
    let mut out: String = lines[start..end].concat();
    if text.ends_with('\n') && !out.ends_with('\n') {
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_fence() {
        let reply = "Here is the code:\n```python\nx=1\n```\nHope it helps";
        assert_eq!(sanitize_code_reply(reply), "x=1");
    }

    #[test]
    fn identity_on_code() {
        assert_eq!(sanitize_code_reply("x=1"), "x=1");
        let src = "import numpy as np\n\n\ndef f(a):\n    return np.sum(a)\n";
        assert_eq!(sanitize_code_reply(src), src);
        assert_eq!(sanitize_code_reply(""), "");
    }

    #[test]
    fn longest_fence_wins() {
        let short: Vec<String> = (0..3).map(|i| format!("a{i} = {i}")).collect();
        let long: Vec<String> = (0..10).map(|i| format!("b{i} = {i}")).collect();
        let reply = format!(
            "First:\n```\n{}\n```\nThen:\n```python\n{}\n```\n",
            short.join("\n"),
            long.join("\n")
        );
        assert_eq!(sanitize_code_reply(&reply), long.join("\n"));
    }

    #[test]
    fn unterminated_fence() {
        assert_eq!(
            sanitize_code_reply("```python\nx = 1\ny = 2\n"),
            "x = 1\ny = 2"
        );
    }

    #[test]
    fn strips_preamble_and_signoff() {
        let reply = "Sure! Here is the refactored file.\n\nimport os\nx = os.getcwd()\n\nLet me know if you need anything else.\n";
        assert_eq!(sanitize_code_reply(reply), "import os\nx = os.getcwd()\n");
    }

    #[test]
    fn prose_only_is_kept() {
        assert_eq!(
            sanitize_code_reply("I cannot do that."),
            "I cannot do that."
        );
    }
}
