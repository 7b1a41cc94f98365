use std::io::Write;
use std::sync::LazyLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatResponse, TokenProb};

/// Minimum probability mass on the digits 0..=5 for a weighted answer.
pub const DEFAULT_DIGIT_FLOOR: f64 = 0.5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("{questions} questions but {answers} answers")]
    LengthMismatch { questions: usize, answers: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Answer {
    /// `Σ t·p(t)` over the digit tokens.
    Weighted(f64),
    /// Integer read from the reply text.
    Parsed(u8),
    Invalid,
}

impl Answer {
    pub fn value(self) -> Option<f64> {
        match self {
            Answer::Weighted(v) => Some(v),
            Answer::Parsed(n) => Some(f64::from(n)),
            Answer::Invalid => None,
        }
    }
}

fn digit(token: &str) -> Option<u32> {
    match token.trim().as_bytes() {
        [d @ b'0'..=b'5'] => Some(u32::from(d - b'0')),
        _ => None,
    }
}

/// Expected digit under the token distribution, renormalized to the digits
/// 0..=5. Computed in exact rational arithmetic and rounded once.
pub fn weighted_answer(probs: &[TokenProb], floor: f64) -> Answer {
    let mut mass = BigRational::zero();
    let mut moment = BigRational::zero();
    for p in probs {
        let Some(t) = digit(&p.token) else { continue };
        if p.prob.is_nan() || p.prob < 0.0 {
            continue;
        }
        let Some(q) = BigRational::from_float(p.prob) else {
            continue;
        };
        moment += &q * BigRational::from_integer(BigInt::from(t));
        mass += q;
    }
    let floor = BigRational::from_float(floor.max(0.0)).unwrap_or_else(BigRational::zero);
    if mass.is_zero() || mass < floor {
        return Answer::Invalid;
    }
    Answer::Weighted((moment / mass).to_f64().expect("finite ratio"))
}

static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\d+(\.\d+)?").expect("static pattern"));

/// The first number in the reply, if it is an integer between 0 and 5.
pub fn parse_integer_answer(text: &str) -> Answer {
    let first = NUMBER.captures(text).filter(|c| c.get(1).is_none());
    match first.and_then(|c| c[0].parse::<u32>().ok()) {
        Some(n @ 0..=5) => Answer::Parsed(n as u8),
        _ => Answer::Invalid,
    }
}

/// Weighted answer when token probabilities carry enough digit mass,
/// otherwise the integer in the reply text.
pub fn answer_from_response(resp: &ChatResponse, floor: f64) -> Answer {
    if let Some(probs) = &resp.token_probs {
        if let w @ Answer::Weighted(_) = weighted_answer(probs, floor) {
            return w;
        }
    }
    parse_integer_answer(&resp.text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub index: usize,
    pub truth: u8,
    pub answer: Answer,
    pub abs_error: Option<f64>,
    pub correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchScore {
    pub questions: usize,
    pub valid: usize,
    pub mae: Option<f64>,
    pub accuracy: Option<f64>,
    pub invalid_rate: f64,
    pub per_question: Vec<QuestionScore>,
}

/// Nearest integer, halves rounded up.
fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

pub fn score(truths: &[u8], answers: &[Answer]) -> Result<BenchScore, ScoreError> {
    if truths.len() != answers.len() {
        return Err(ScoreError::LengthMismatch {
            questions: truths.len(),
            answers: answers.len(),
        });
    }
    let per_question: Vec<QuestionScore> = truths
        .iter()
        .zip(answers)
        .enumerate()
        .map(|(index, (&truth, &answer))| {
            let value = answer.value();
            QuestionScore {
                index,
                truth,
                answer,
                abs_error: value.map(|v| (v - f64::from(truth)).abs()),
                correct: value.map(|v| round_half_up(v) == f64::from(truth)),
            }
        })
        .collect();
    let valid: Vec<&QuestionScore> = per_question
        .iter()
        .filter(|q| q.abs_error.is_some())
        .collect();
    let n = valid.len();
    let mae = (n > 0).then(|| valid.iter().filter_map(|q| q.abs_error).sum::<f64>() / n as f64);
    let accuracy =
        (n > 0).then(|| valid.iter().filter(|q| q.correct == Some(true)).count() as f64 / n as f64);
    let invalid_rate = if truths.is_empty() {
        0.0
    } else {
        (truths.len() - n) as f64 / truths.len() as f64
    };
    Ok(BenchScore {
        questions: truths.len(),
        valid: n,
        mae,
        accuracy,
        invalid_rate,
        per_question,
    })
}

/// One line of the model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResultRow {
    pub tested: String,
    pub algorithm: String,
    pub mae: Option<f64>,
    pub accuracy: Option<f64>,
}

/// Columns `,tested,algorithm,MAE,accuracy` with a leading row index and
/// three decimals.
pub fn write_results_csv<W: Write>(rows: &[BenchResultRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["", "tested", "algorithm", "MAE", "accuracy"])?;
    let fmt = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_default();
    for (i, row) in rows.iter().enumerate() {
        w.write_record([
            i.to_string(),
            row.tested.clone(),
            row.algorithm.clone(),
            fmt(row.mae),
            fmt(row.accuracy),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-question absolute errors, for paired tests between trials.
pub fn write_question_errors<W: Write>(score: &BenchScore, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["question", "truth", "answer", "kind", "abs_error"])?;
    for q in &score.per_question {
        let kind = match q.answer {
            Answer::Weighted(_) => "weighted",
            Answer::Parsed(_) => "parsed",
            Answer::Invalid => "invalid",
        };
        w.write_record([
            q.index.to_string(),
            q.truth.to_string(),
            q.answer.value().map(|v| v.to_string()).unwrap_or_default(),
            kind.to_string(),
            q.abs_error.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(pairs: &[(&str, f64)]) -> Vec<TokenProb> {
        pairs
            .iter()
            .map(|(t, p)| TokenProb {
                token: t.to_string(),
                prob: *p,
            })
            .collect()
    }

    #[test]
    fn weighted_examples() {
        assert_eq!(
            weighted_answer(&probs(&[("3", 1.0)]), 0.5),
            Answer::Weighted(3.0)
        );
        let uniform: Vec<(String, f64)> = (0..6).map(|t| (t.to_string(), 1.0 / 6.0)).collect();
        let uniform: Vec<(&str, f64)> = uniform.iter().map(|(t, p)| (t.as_str(), *p)).collect();
        assert_eq!(
            weighted_answer(&probs(&uniform), 0.5),
            Answer::Weighted(2.5)
        );
        assert_eq!(
            weighted_answer(&probs(&[("2", 0.9), ("4", 0.1)]), 0.5),
            Answer::Weighted(2.2)
        );
    }

    #[test]
    fn non_digit_mass_and_floor() {
        // 0.3 on digits only: below the floor
        assert_eq!(
            weighted_answer(&probs(&[("2", 0.3), ("The", 0.7)]), 0.5),
            Answer::Invalid
        );
        // renormalized over digits; " 4" counts as 4, "7" is ignored
        assert_eq!(
            weighted_answer(&probs(&[(" 4", 0.6), ("7", 0.3), ("0", 0.0)]), 0.5),
            Answer::Weighted(4.0)
        );
        assert_eq!(weighted_answer(&[], 0.0), Answer::Invalid);
    }

    #[test]
    fn integer_fallback() {
        assert_eq!(parse_integer_answer("3"), Answer::Parsed(3));
        assert_eq!(parse_integer_answer("The answer is 2."), Answer::Parsed(2));
        assert_eq!(parse_integer_answer("7"), Answer::Invalid);
        assert_eq!(parse_integer_answer("2.5"), Answer::Invalid);
        assert_eq!(parse_integer_answer("none"), Answer::Invalid);
        let resp = ChatResponse {
            text: "4".into(),
            prompt_tokens: 0,
            completion_tokens: 1,
            token_probs: Some(probs(&[("x", 1.0)])),
        };
        assert_eq!(answer_from_response(&resp, 0.5), Answer::Parsed(4));
    }

    #[test]
    fn score_examples() {
        let s = score(
            &[1, 2, 3],
            &[Answer::Parsed(1), Answer::Parsed(2), Answer::Parsed(3)],
        )
        .unwrap();
        assert_eq!((s.mae, s.accuracy), (Some(0.0), Some(1.0)));
        let s = score(&[0, 5], &[Answer::Weighted(1.0), Answer::Weighted(4.0)]).unwrap();
        assert_eq!((s.mae, s.accuracy), (Some(1.0), Some(0.0)));
        assert_eq!(
            score(&[1], &[]).unwrap_err(),
            ScoreError::LengthMismatch {
                questions: 1,
                answers: 0
            }
        );
    }

    #[test]
    fn half_rounds_up_and_invalid_excluded() {
        let s = score(
            &[3, 2, 1],
            &[
                Answer::Weighted(2.5),
                Answer::Weighted(2.49),
                Answer::Invalid,
            ],
        )
        .unwrap();
        assert_eq!(s.valid, 2);
        assert_eq!(s.accuracy, Some(1.0));
        assert!((s.invalid_rate - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn results_csv_layout() {
        let mut buf = Vec::new();
        write_results_csv(
            &[BenchResultRow {
                tested: "o1-2024-12-17".into(),
                algorithm: "default".into(),
                mae: Some(0.14),
                accuracy: Some(0.92),
            }],
            &mut buf,
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            ",tested,algorithm,MAE,accuracy\n0,o1-2024-12-17,default,0.140,0.920\n"
        );
    }
}
