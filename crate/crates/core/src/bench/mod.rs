//! Diff-comprehension benchmark.
//!
//! A question shows FileA (five correct functions) next to either FileB (the
//! same functions, rewritten, `k` of them broken) or FileC (the unified diff
//! from A to B) and asks how many functions now have errors.

mod docstring;
mod score;

pub use docstring::{has_docstring, strip_docstrings};
pub use score::{
    answer_from_response, parse_integer_answer, score, weighted_answer, write_question_errors,
    write_results_csv, Answer, BenchResultRow, BenchScore, QuestionScore, ScoreError,
    DEFAULT_DIGIT_FLOOR,
};

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::render_unified;
use crate::files::FileEntry;

pub const FUNCTIONS_PER_QUESTION: usize = 5;

/// Small hand-written corpus: 20 functions, each with a correct rewrite and
/// a buggy twin.
pub const SYNTHETIC_CORPUS: &str = include_str!("../../data/synthetic_corpus.jsonl");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus has {usable} usable functions; a question needs {FUNCTIONS_PER_QUESTION}")]
    CorpusTooSmall { usable: usize },
    #[error("corpus line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("corpus item `{id}`: alternate defines `{found}`, expected `{expected}`")]
    NameMismatch {
        id: String,
        expected: String,
        found: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One corpus line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub id: String,
    pub correct: String,
    pub alternate: String,
    pub erroneous: bool,
}

/// A function with its rewrites. Items sharing the same `correct` text are
/// grouped into one function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusFunction {
    pub id: String,
    pub name: String,
    pub correct: String,
    /// Correct rewrite; the original text is reused when none is given.
    pub good_alternate: Option<String>,
    pub bad_alternate: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FunctionCorpus {
    pub items: Vec<CorpusItem>,
}

fn function_name(src: &str) -> Option<&str> {
    src.lines().find_map(|line| {
        let rest = line
            .trim_start()
            .strip_prefix("async ")
            .unwrap_or(line.trim_start());
        let rest = rest.strip_prefix("def ")?;
        rest.split(['(', ' ', ':']).next().filter(|n| !n.is_empty())
    })
}

impl FunctionCorpus {
    pub fn parse_jsonl(text: &str) -> Result<Self, CorpusError> {
        let mut items = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let item: CorpusItem = serde_json::from_str(line).map_err(|e| CorpusError::Format {
                line: i + 1,
                message: e.to_string(),
            })?;
            let expected = function_name(&item.correct).ok_or_else(|| CorpusError::Format {
                line: i + 1,
                message: format!("item `{}` defines no function", item.id),
            })?;
            let found = function_name(&item.alternate).unwrap_or("");
            if expected != found {
                return Err(CorpusError::NameMismatch {
                    id: item.id.clone(),
                    expected: expected.to_string(),
                    found: found.to_string(),
                });
            }
            items.push(item);
        }
        Ok(Self { items })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_jsonl(&text)
    }

    pub fn synthetic() -> Self {
        Self::parse_jsonl(SYNTHETIC_CORPUS).expect("bundled corpus parses")
    }

    /// Functions in first-appearance order.
    pub fn functions(&self) -> Vec<CorpusFunction> {
        let mut order: Vec<&str> = Vec::new();
        let mut grouped: BTreeMap<&str, CorpusFunction> = BTreeMap::new();
        for item in &self.items {
            let f = grouped.entry(item.correct.as_str()).or_insert_with(|| {
                order.push(item.correct.as_str());
                CorpusFunction {
                    id: item.id.split('/').next().unwrap_or(&item.id).to_string(),
                    name: function_name(&item.correct).unwrap_or_default().to_string(),
                    correct: item.correct.clone(),
                    good_alternate: None,
                    bad_alternate: None,
                }
            });
            let slot = if item.erroneous {
                &mut f.bad_alternate
            } else {
                &mut f.good_alternate
            };
            slot.get_or_insert_with(|| item.alternate.clone());
        }
        order
            .into_iter()
            .map(|key| grouped.remove(key).expect("grouped"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchQuestion {
    pub index: usize,
    pub seed: u64,
    pub function_ids: Vec<String>,
    /// Positions (0-based, ascending) whose FileB version is broken.
    pub erroneous_positions: Vec<usize>,
    pub file_a: String,
    pub file_b: String,
    pub file_c: String,
    pub true_count: u8,
}

fn join_functions<'a>(parts: impl Iterator<Item = &'a str>) -> String {
    let bodies: Vec<String> = parts
        .map(|p| {
            let mut s = strip_docstrings(p).trim_end().to_string();
            s.push('\n');
            s
        })
        .collect();
    bodies.join("\n\n")
}

/// `n` questions, reproducible from `seed`; question `i` depends only on
/// `(corpus, seed, i)`.
pub fn generate_questions(
    corpus: &FunctionCorpus,
    n: usize,
    seed: u64,
) -> Result<Vec<BenchQuestion>, CorpusError> {
    let pool: Vec<CorpusFunction> = corpus
        .functions()
        .into_iter()
        .filter(|f| f.bad_alternate.is_some())
        .collect();
    if pool.len() < FUNCTIONS_PER_QUESTION {
        return Err(CorpusError::CorpusTooSmall { usable: pool.len() });
    }
    Ok((0..n).map(|i| make_question(&pool, seed, i)).collect())
}

fn make_question(pool: &[CorpusFunction], seed: u64, index: usize) -> BenchQuestion {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let chosen: Vec<&CorpusFunction> = sample(&mut rng, pool.len(), FUNCTIONS_PER_QUESTION)
        .into_iter()
        .map(|i| &pool[i])
        .collect();
    let k = rng.gen_range(0..=FUNCTIONS_PER_QUESTION);
    let mut broken: Vec<usize> = sample(&mut rng, FUNCTIONS_PER_QUESTION, k).into_vec();
    broken.sort_unstable();

    let file_a = join_functions(chosen.iter().map(|f| f.correct.as_str()));
    let file_b = join_functions(chosen.iter().enumerate().map(|(pos, f)| {
        if broken.contains(&pos) {
            f.bad_alternate.as_deref().expect("pool has bad alternates")
        } else {
            f.good_alternate.as_deref().unwrap_or(&f.correct)
        }
    }));
    let file_c = render_unified(
        &FileEntry::new("FileA.py", file_a.clone()),
        &FileEntry::new("FileB.py", file_b.clone()),
        crate::diff::DEFAULT_CONTEXT,
    );
    BenchQuestion {
        index,
        seed,
        function_ids: chosen.iter().map(|f| f.id.clone()).collect(),
        erroneous_positions: broken,
        file_a,
        file_b,
        file_c,
        true_count: k as u8,
    }
}

pub fn save_questions(questions: &[BenchQuestion], path: &Path) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for q in questions {
        let line = serde_json::to_string(q).expect("question serializes");
        writeln!(file, "{line}").map_err(io)?;
    }
    file.flush().map_err(io)
}

pub fn load_questions(path: &Path) -> Result<Vec<BenchQuestion>, CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let reader = BufReader::new(fs::File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| CorpusError::Format {
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}
