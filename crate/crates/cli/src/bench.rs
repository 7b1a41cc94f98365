use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use diffmig_core::bench::{
    answer_from_response, generate_questions, load_questions, save_questions, score,
    write_question_errors, write_results_csv, Answer, BenchQuestion, BenchResultRow,
    FunctionCorpus, DEFAULT_DIGIT_FLOOR,
};
use diffmig_core::llm::{
    ChatRequest, ChatResponse, LlmClient, TokenProb, UsageLabels, UsageLedger,
};
use diffmig_core::prompt::{BenchTrial, TemplateSet};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::table::{ratio, Align, Table};
use crate::{migrate, out_file, usage, Runtime};

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Generate seeded questions from a function corpus.
    Generate(GenerateArgs),
    /// Ask a model every question and record its answers.
    Run(RunArgs),
    /// Score answers against the questions.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Corpus JSON lines; the bundled synthetic corpus when omitted.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Provider configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub questions: PathBuf,
    /// code (FileA with FileB) or diff (FileA with the diff).
    #[arg(long, default_value = "diff")]
    pub trial: String,
    #[arg(long)]
    pub model: Option<String>,
    /// Only the first N questions.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 16)]
    pub max_output_tokens: u32,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Minimum digit probability mass for a weighted answer.
    #[arg(long, default_value_t = DEFAULT_DIGIT_FLOOR)]
    pub floor: f64,
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Answers file (JSON lines); appended to when it exists.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub questions: PathBuf,
    /// Answers files; repeatable.
    #[arg(long, required = true)]
    pub answers: Vec<PathBuf>,
    /// Recompute weighted answers with this digit floor.
    #[arg(long)]
    pub floor: Option<f64>,
    /// Directory for results.csv and per-trial error files.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One line of an answers file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub index: usize,
    pub tested: String,
    pub algorithm: String,
    pub text: String,
    #[serde(default)]
    pub token_probs: Option<Vec<TokenProb>>,
    pub answer: Answer,
}

pub fn run(cmd: &BenchCommand, rt: &Runtime, stdout: &mut dyn Write) -> Result<()> {
    match cmd {
        BenchCommand::Generate(args) => generate(args, stdout),
        BenchCommand::Run(args) => ask(args, rt, stdout),
        BenchCommand::Score(args) => score_answers(args, stdout),
    }
}

fn generate(args: &GenerateArgs, stdout: &mut dyn Write) -> Result<()> {
    let corpus = match &args.corpus {
        Some(path) => FunctionCorpus::load(path)?,
        None => FunctionCorpus::synthetic(),
    };
    let questions = generate_questions(&corpus, args.n, args.seed)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    save_questions(&questions, &args.out)?;
    let mut histogram = [0usize; 6];
    for q in &questions {
        histogram[usize::from(q.true_count)] += 1;
    }
    writeln!(
        stdout,
        "{} questions (seed {}) -> {}",
        questions.len(),
        args.seed,
        args.out.display()
    )?;
    let mut table = Table::new(&[("errors", Align::Right), ("questions", Align::Right)]);
    for (k, n) in histogram.iter().enumerate() {
        table.row(vec![k.to_string(), n.to_string()]);
    }
    table.write(stdout)?;
    Ok(())
}

fn ask(args: &RunArgs, rt: &Runtime, stdout: &mut dyn Write) -> Result<()> {
    let trial: BenchTrial = args.trial.parse().map_err(usage)?;
    let config = rt.load_config(&args.config)?;
    let mut questions = load_questions(&args.questions)?;
    if let Some(limit) = args.limit {
        questions.truncate(limit);
    }
    let model = args.model.clone().unwrap_or(config.provider.model.clone());
    let templates = match &config.templates {
        Some(dir) => TemplateSet::load_dir(dir)?,
        None => TemplateSet::default(),
    };
    let source = config
        .job
        .as_ref()
        .map_or(Path::new("."), |j| j.source_dir.as_path());
    let provider = migrate::provider(&config, source, rt)?;
    let ledger = UsageLedger::new();
    let client = migrate::client(&config, provider, ledger.clone(), rt);
    let labels = UsageLabels::new("bench", trial.algorithm_label());

    let next = AtomicUsize::new(0);
    let records: Mutex<Vec<AnswerRecord>> = Mutex::new(Vec::with_capacity(questions.len()));
    let failures = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(q) = questions.get(i) else { break };
        match ask_one(&client, &templates, trial, &model, q, args, &labels) {
            Ok(record) => records.lock().expect("records poisoned").push(record),
            Err(e) => {
                warn!("question {}: {e}", q.index);
                failures.fetch_add(1, Ordering::SeqCst);
            }
        }
    };
    std::thread::scope(|s| {
        for _ in 0..args.parallel.max(1) {
            s.spawn(worker);
        }
    });
    let mut records = records.into_inner().expect("records poisoned");
    records.sort_by_key(|r| r.index);

    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&args.out)
        .with_context(|| format!("opening {}", args.out.display()))?;
    for r in &records {
        writeln!(file, "{}", serde_json::to_string(r)?)?;
    }
    if let Some(ledger_path) = &config.usage_ledger {
        ledger.save_jsonl(ledger_path)?;
    }
    let invalid = records
        .iter()
        .filter(|r| r.answer == Answer::Invalid)
        .count();
    writeln!(
        stdout,
        "{} answered ({} invalid), {} failed -> {}",
        records.len(),
        invalid,
        failures.load(Ordering::SeqCst),
        args.out.display()
    )?;
    if records.is_empty() && !questions.is_empty() {
        bail!("every request failed");
    }
    Ok(())
}

fn ask_one(
    client: &LlmClient,
    templates: &TemplateSet,
    trial: BenchTrial,
    model: &str,
    q: &BenchQuestion,
    args: &RunArgs,
    labels: &UsageLabels,
) -> Result<AnswerRecord> {
    let other = match trial {
        BenchTrial::CodePair => &q.file_b,
        BenchTrial::DiffPair => &q.file_c,
    };
    let prompt = templates.build_bench_prompt(trial, &q.file_a, other);
    let mut req =
        ChatRequest::new(model, prompt.system, prompt.user).with_label(format!("q{}", q.index));
    req.want_token_probs = true;
    req.max_output_tokens = args.max_output_tokens;
    req.temperature = args.temperature;
    let done = client.complete(&req, labels)?;
    info!("question {} answered", q.index);
    Ok(AnswerRecord {
        index: q.index,
        tested: model.to_string(),
        algorithm: trial.algorithm_label().to_string(),
        answer: answer_from_response(&done.response, args.floor),
        text: done.response.text,
        token_probs: done.response.token_probs,
    })
}

fn load_answers(path: &Path) -> Result<Vec<AnswerRecord>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .with_context(|| format!("{}:{}: bad answer record", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

fn score_answers(args: &ScoreArgs, stdout: &mut dyn Write) -> Result<()> {
    let questions = load_questions(&args.questions)?;
    let truth: BTreeMap<usize, u8> = questions.iter().map(|q| (q.index, q.true_count)).collect();
    // groups keyed by (tested, algorithm), in first-seen order
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), BTreeMap<usize, Answer>> = BTreeMap::new();
    for path in &args.answers {
        for r in load_answers(path)? {
            if !truth.contains_key(&r.index) {
                bail!(
                    "{}: answer for unknown question {}",
                    path.display(),
                    r.index
                );
            }
            let answer = match args.floor {
                Some(floor) => answer_from_response(
                    &ChatResponse {
                        text: r.text.clone(),
                        prompt_tokens: 0,
                        completion_tokens: 0,
                        token_probs: r.token_probs.clone(),
                    },
                    floor,
                ),
                None => r.answer,
            };
            let key = (r.tested, r.algorithm);
            if !groups.contains_key(&key) {
                order.push(key.clone());
            }
            groups.entry(key).or_default().insert(r.index, answer);
        }
    }
    let mut rows = Vec::new();
    let mut table = Table::new(&[
        ("tested", Align::Left),
        ("algorithm", Align::Left),
        ("answered", Align::Right),
        ("invalid", Align::Right),
        ("MAE", Align::Right),
        ("accuracy", Align::Right),
    ]);
    for key in &order {
        let answers = &groups[key];
        let truths: Vec<u8> = answers.keys().map(|i| truth[i]).collect();
        let values: Vec<Answer> = answers.values().copied().collect();
        let s = score(&truths, &values)?;
        table.row(vec![
            key.0.clone(),
            key.1.clone(),
            s.questions.to_string(),
            (s.questions - s.valid).to_string(),
            ratio(s.mae),
            ratio(s.accuracy),
        ]);
        if let Some(dir) = &args.out {
            let path = out_file(dir, &format!("errors_{}_{}.csv", key.0, key.1))?;
            let file =
                fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
            write_question_errors(&s, file)?;
        }
        rows.push(BenchResultRow {
            tested: key.0.clone(),
            algorithm: key.1.clone(),
            mae: s.mae,
            accuracy: s.accuracy,
        });
    }
    table.write(stdout)?;
    if let Some(dir) = &args.out {
        let path = out_file(dir, "results.csv")?;
        let file =
            fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        write_results_csv(&rows, file)?;
    }
    Ok(())
}
