use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("no pricing configured for model `{0}`")]
    UnknownModel(String),
    #[error("negative rate for model `{0}`")]
    NegativeRate(String),
    #[error("usage ledger {path}: {message}")]
    Ledger { path: String, message: String },
}

/// USD per one million tokens, the unit providers publish.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelRates {
    pub input_per_million: f64,
    pub output_per_million: f64,
}

impl ModelRates {
    pub fn new(input_per_million: f64, output_per_million: f64) -> Self {
        Self {
            input_per_million,
            output_per_million,
        }
    }

    pub fn cost(&self, prompt_tokens: u64, completion_tokens: u64) -> f64 {
        from_picos(self.cost_picos(prompt_tokens, completion_tokens))
    }

    /// Exact cost in 1e-12 USD. A rate per million tokens is held in
    /// millionths of a dollar, so it is exact to six decimals; sums of
    /// these are associative, which keeps grouped totals equal to
    /// per-request totals.
    pub fn cost_picos(&self, prompt_tokens: u64, completion_tokens: u64) -> u128 {
        u128::from(prompt_tokens) * rate_micros(self.input_per_million)
            + u128::from(completion_tokens) * rate_micros(self.output_per_million)
    }
}

fn rate_micros(per_million: f64) -> u128 {
    (per_million.max(0.0) * 1e6).round() as u128
}

const PICOS_PER_USD: f64 = 1e12;

pub fn from_picos(picos: u128) -> f64 {
    picos as f64 / PICOS_PER_USD
}

/// Inverse of [`from_picos`] for values it produced.
pub fn to_picos(usd: f64) -> u128 {
    (usd.max(0.0) * PICOS_PER_USD).round() as u128
}

/// Sum of dollar amounts, accumulated exactly.
pub fn sum_usd(amounts: impl IntoIterator<Item = f64>) -> f64 {
    from_picos(amounts.into_iter().map(to_picos).sum())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostTable {
    rates: BTreeMap<String, ModelRates>,
}

impl CostTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// OpenAI list prices (USD per 1M tokens) as of January 2025.
    pub fn openai_defaults() -> Self {
        let mut table = Self::new();
        for (model, input, output) in [
            ("gpt-4o", 2.50, 10.00),
            ("gpt-4o-mini", 0.15, 0.60),
            ("o1", 15.00, 60.00),
            ("o1-mini", 3.00, 12.00),
            ("o3-mini", 1.10, 4.40),
        ] {
            table
                .rates
                .insert(model.to_string(), ModelRates::new(input, output));
        }
        table
    }

    pub fn insert(&mut self, model: impl Into<String>, rates: ModelRates) -> Result<(), CostError> {
        let model = model.into();
        if !(rates.input_per_million >= 0.0 && rates.output_per_million >= 0.0) {
            return Err(CostError::NegativeRate(model));
        }
        self.rates.insert(model, rates);
        Ok(())
    }

    /// Overlays `other` on top of this table.
    pub fn merge(&mut self, other: &CostTable) {
        for (model, rates) in &other.rates {
            self.rates.insert(model.clone(), *rates);
        }
    }

    pub fn validate(&self) -> Result<(), CostError> {
        for (model, rates) in &self.rates {
            if !(rates.input_per_million >= 0.0 && rates.output_per_million >= 0.0) {
                return Err(CostError::NegativeRate(model.clone()));
            }
        }
        Ok(())
    }

    /// Exact name first, then the longest configured prefix, so dated
    /// snapshots like `gpt-4o-2024-08-06` price as `gpt-4o`.
    pub fn rates(&self, model: &str) -> Option<&ModelRates> {
        self.rates.get(model).or_else(|| {
            self.rates
                .iter()
                .filter(|(name, _)| {
                    model.starts_with(name.as_str()) && model[name.len()..].starts_with('-')
                })
                .max_by_key(|(name, _)| name.len())
                .map(|(_, rates)| rates)
        })
    }

    pub fn models(&self) -> impl Iterator<Item = &str> {
        self.rates.keys().map(String::as_str)
    }
}

pub fn estimate_cost(
    prompt_tokens: u64,
    completion_tokens: u64,
    model: &str,
    table: &CostTable,
) -> Result<f64, CostError> {
    table
        .rates(model)
        .map(|r| r.cost(prompt_tokens, completion_tokens))
        .ok_or_else(|| CostError::UnknownModel(model.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub model: String,
    pub case: String,
    pub method: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// `None` when the model has no configured price.
    pub cost_usd: Option<f64>,
}

/// Append-only, thread-safe record of every successful request.
#[derive(Debug, Clone, Default)]
pub struct UsageLedger {
    records: Arc<Mutex<Vec<UsageRecord>>>,
}

impl UsageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&self, record: UsageRecord) {
        self.records.lock().expect("ledger poisoned").push(record);
    }

    pub fn records(&self) -> Vec<UsageRecord> {
        self.records.lock().expect("ledger poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("ledger poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_cost(&self) -> f64 {
        sum_usd(
            self.records
                .lock()
                .expect("ledger poisoned")
                .iter()
                .filter_map(|r| r.cost_usd),
        )
    }

    /// Appends every record as one JSON line.
    pub fn save_jsonl(&self, path: &Path) -> Result<(), CostError> {
        let err = |e: std::io::Error| CostError::Ledger {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(err)?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(err)?;
        for record in self.records() {
            let line = serde_json::to_string(&record).expect("usage record serializes");
            writeln!(file, "{line}").map_err(err)?;
        }
        Ok(())
    }

    pub fn load_jsonl(path: &Path) -> Result<Vec<UsageRecord>, CostError> {
        let err = |message: String| CostError::Ledger {
            path: path.display().to_string(),
            message,
        };
        let file = fs::File::open(path).map_err(|e| err(e.to_string()))?;
        let mut out = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?);
        }
        Ok(out)
    }
}

/// One line of a usage report: totals per (model, case, method).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub model: String,
    pub case: String,
    pub method: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost_usd: Option<f64>,
}

type GroupKey = (String, String, String);

/// Groups records and prices them with `table`. Records whose model is not
/// priced keep whatever cost they were logged with.
pub fn summarize_usage(records: &[UsageRecord], table: &CostTable) -> Vec<CostRow> {
    let mut groups: BTreeMap<GroupKey, (u64, u64, Option<u128>)> = BTreeMap::new();
    for r in records {
        let entry = groups
            .entry((r.model.clone(), r.case.clone(), r.method.clone()))
            .or_insert((0, 0, None));
        entry.0 += r.prompt_tokens;
        entry.1 += r.completion_tokens;
        if let Some(c) = r.cost_usd {
            entry.2 = Some(entry.2.unwrap_or(0) + to_picos(c));
        }
    }
    groups
        .into_iter()
        .map(|((model, case, method), (prompt, completion, logged))| {
            let cost_usd = table
                .rates(&model)
                .map(|rates| rates.cost(prompt, completion))
                .or(logged.map(from_picos));
            CostRow {
                model,
                case,
                method,
                prompt_tokens: prompt,
                completion_tokens: completion,
                cost_usd,
            }
        })
        .collect()
}

/// Report total over priced rows.
pub fn total_cost(rows: &[CostRow]) -> f64 {
    sum_usd(rows.iter().filter_map(|r| r.cost_usd))
}
