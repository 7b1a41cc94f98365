//! Token counting for prompt budgeting and repository size analysis.
//!
//! Two counters are available: a `ceil(bytes / 4)` heuristic, and a byte-level
//! BPE driven by a ranked vocabulary file (one `base64(token) rank` pair per
//! line, the layout used by published tiktoken vocabularies).

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VocabLoadError {
    #[error("cannot read vocabulary {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Format {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("bpe_vocab tokenizer needs a vocab_path")]
    MissingPath,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerKind {
    #[default]
    ByteHeuristic,
    BpeVocab,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerSpec {
    #[serde(default)]
    pub kind: TokenizerKind,
    #[serde(default)]
    pub vocab_path: Option<PathBuf>,
    #[serde(default = "default_name")]
    pub name: String,
}

fn default_name() -> String {
    "bytes/4".to_string()
}

impl Default for TokenizerSpec {
    fn default() -> Self {
        Self::byte_heuristic()
    }
}

impl TokenizerSpec {
    pub fn byte_heuristic() -> Self {
        Self {
            kind: TokenizerKind::ByteHeuristic,
            vocab_path: None,
            name: default_name(),
        }
    }

    pub fn bpe(name: impl Into<String>, vocab_path: impl Into<PathBuf>) -> Self {
        Self {
            kind: TokenizerKind::BpeVocab,
            vocab_path: Some(vocab_path.into()),
            name: name.into(),
        }
    }
}

/// `ceil(len / 4)`.
pub fn heuristic_count(text: &str) -> usize {
    text.len().div_ceil(4)
}

/// Byte-level BPE over a ranked vocabulary. Lower rank merges first.
#[derive(Debug)]
pub struct BpeVocab {
    ranks: HashMap<Vec<u8>, u32>,
    pretokenizer: Regex,
}

// GPT-style chunking expressible without look-around.
const PRETOKENIZE: &str = r"'(?:[sdmt]|ll|ve|re)| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+";

impl BpeVocab {
    pub fn load(path: &Path) -> Result<Self, VocabLoadError> {
        let text = fs::read_to_string(path).map_err(|source| VocabLoadError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|(line, reason)| VocabLoadError::Format {
            path: path.to_path_buf(),
            line,
            reason,
        })
    }

    pub fn parse(text: &str) -> Result<Self, (usize, String)> {
        let mut ranks = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (token, rank) = line
                .split_once(' ')
                .ok_or_else(|| (i + 1, "expected `<base64> <rank>`".to_string()))?;
            let bytes = STANDARD
                .decode(token)
                .map_err(|e| (i + 1, format!("bad base64: {e}")))?;
            let rank: u32 = rank
                .trim()
                .parse()
                .map_err(|e| (i + 1, format!("bad rank: {e}")))?;
            ranks.insert(bytes, rank);
        }
        Ok(Self {
            ranks,
            pretokenizer: Regex::new(PRETOKENIZE).expect("static pattern"),
        })
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// Splits one chunk into token byte-strings by repeatedly merging the
    /// adjacent pair whose concatenation has the lowest rank.
    pub fn encode_chunk<'a>(&self, chunk: &'a [u8]) -> Vec<&'a [u8]> {
        if chunk.is_empty() {
            return Vec::new();
        }
        // part boundaries; parts[i]..parts[i+1] is one token
        let mut bounds: Vec<usize> = (0..=chunk.len()).collect();
        loop {
            let best = (0..bounds.len().saturating_sub(2))
                .filter_map(|i| {
                    self.ranks
                        .get(&chunk[bounds[i]..bounds[i + 2]])
                        .map(|rank| (*rank, i))
                })
                .min();
            match best {
                Some((_, i)) => {
                    bounds.remove(i + 1);
                }
                None => break,
            }
        }
        bounds.windows(2).map(|w| &chunk[w[0]..w[1]]).collect()
    }

    pub fn count(&self, text: &str) -> usize {
        self.pretokenizer
            .find_iter(text)
            .map(|m| self.encode_chunk(m.as_str().as_bytes()).len())
            .sum()
    }
}

/// A ready-to-use counter built from a [`TokenizerSpec`].
#[derive(Debug, Clone, Default)]
pub enum TokenCounter {
    #[default]
    Heuristic,
    Bpe {
        name: String,
        vocab: Arc<BpeVocab>,
    },
}

impl TokenCounter {
    pub fn from_spec(spec: &TokenizerSpec) -> Result<Self, VocabLoadError> {
        match spec.kind {
            TokenizerKind::ByteHeuristic => Ok(TokenCounter::Heuristic),
            TokenizerKind::BpeVocab => {
                let path = spec
                    .vocab_path
                    .as_ref()
                    .ok_or(VocabLoadError::MissingPath)?;
                Ok(TokenCounter::Bpe {
                    name: spec.name.clone(),
                    vocab: Arc::new(BpeVocab::load(path)?),
                })
            }
        }
    }

    pub fn count(&self, text: &str) -> usize {
        match self {
            TokenCounter::Heuristic => heuristic_count(text),
            TokenCounter::Bpe { vocab, .. } => vocab.count(text),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            TokenCounter::Heuristic => "bytes/4",
            TokenCounter::Bpe { name, .. } => name,
        }
    }
}

/// Loads the tokenizer named by `spec` and counts `text`.
pub fn count_tokens(text: &str, spec: &TokenizerSpec) -> Result<usize, VocabLoadError> {
    Ok(TokenCounter::from_spec(spec)?.count(text))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ContextFit {
    pub fits: bool,
    /// `window - tokens`; negative when over budget.
    pub margin: i64,
}

pub fn fits_context(token_count: usize, window: usize) -> ContextFit {
    assert!(window > 0, "context window must be positive");
    let margin = window as i64 - token_count as i64;
    ContextFit {
        fits: margin >= 0,
        margin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(tokens: &[&str]) -> BpeVocab {
        let mut lines = String::new();
        let mut rank = 0;
        for b in 0u8..=255 {
            lines.push_str(&format!("{} {rank}\n", STANDARD.encode([b])));
            rank += 1;
        }
        for t in tokens {
            lines.push_str(&format!("{} {rank}\n", STANDARD.encode(t)));
            rank += 1;
        }
        BpeVocab::parse(&lines).unwrap()
    }

    #[test]
    fn heuristic_examples() {
        assert_eq!(heuristic_count(""), 0);
        assert_eq!(heuristic_count("penguin"), 2);
        assert_eq!(heuristic_count(&"x".repeat(8000)), 2000);
    }

    #[test]
    fn empty_text_is_zero_for_every_counter() {
        assert_eq!(TokenCounter::Heuristic.count(""), 0);
        let bpe = TokenCounter::Bpe {
            name: "t".into(),
            vocab: Arc::new(vocab(&["ab"])),
        };
        assert_eq!(bpe.count(""), 0);
    }

    #[test]
    fn bpe_merges_by_rank() {
        let v = vocab(&["pe", "in", "ng", "uin", "peng", "penguin"]);
        let chunks: Vec<_> = v.encode_chunk(b"penguin").into_iter().collect();
        assert_eq!(chunks, [b"penguin".as_slice()]);
        // "g" + "uin" never merges without a "guin" entry
        let v = vocab(&["pe", "in", "ui", "uin", "pen"]);
        let chunks = v.encode_chunk(b"penguin");
        assert_eq!(chunks, [b"pen".as_slice(), b"g", b"uin"]);
        assert_eq!(v.count("penguin"), 3);
    }

    #[test]
    fn pretokenizer_splits_words_and_spaces() {
        let v = vocab(&[]);
        // bytes only: every byte is a token
        assert_eq!(v.count("ab cd"), 5);
    }

    #[test]
    fn vocab_errors() {
        assert!(matches!(
            TokenCounter::from_spec(&TokenizerSpec {
                kind: TokenizerKind::BpeVocab,
                vocab_path: None,
                name: "x".into()
            }),
            Err(VocabLoadError::MissingPath)
        ));
        assert!(BpeVocab::parse("!!! 1\n").is_err());
        assert!(BpeVocab::parse("YQ== x\n").is_err());
        assert!(matches!(
            count_tokens("x", &TokenizerSpec::bpe("o200k_base", "/nonexistent/vocab")),
            Err(VocabLoadError::Io { .. })
        ));
    }

    #[test]
    fn context_fit_boundaries() {
        assert_eq!(
            fits_context(128_000, 128_000),
            ContextFit {
                fits: true,
                margin: 0
            }
        );
        assert_eq!(
            fits_context(130_000, 128_000),
            ContextFit {
                fits: false,
                margin: -2000
            }
        );
        assert_eq!(
            fits_context(0, 128_000),
            ContextFit {
                fits: true,
                margin: 128_000
            }
        );
    }
}
