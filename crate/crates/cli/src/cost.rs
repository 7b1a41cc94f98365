use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use diffmig_core::llm::{summarize_usage, total_cost, CostRow, CostTable, ModelRates, UsageLedger};

use crate::table::{Align, Table};
use crate::{out_file, usage, Runtime};

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Usage ledger (JSON lines); repeatable.
    #[arg(long, required = true)]
    pub ledger: Vec<PathBuf>,
    /// Takes extra prices from the config's `[costs]`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Price override `MODEL=INPUT:OUTPUT`, USD per million tokens; repeatable.
    #[arg(long)]
    pub rate: Vec<String>,
    /// Directory for cost.csv and cost.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn parse_rate(spec: &str) -> Result<(String, ModelRates)> {
    let bad = || usage(format!("--rate `{spec}`: expected MODEL=INPUT:OUTPUT"));
    let (model, rates) = spec.split_once('=').ok_or_else(bad)?;
    let (input, output) = rates.split_once(':').ok_or_else(bad)?;
    let input: f64 = input.trim().parse().map_err(|_| bad())?;
    let output: f64 = output.trim().parse().map_err(|_| bad())?;
    if model.is_empty() {
        return Err(bad());
    }
    Ok((model.to_string(), ModelRates::new(input, output)))
}

pub fn run(args: &CostArgs, rt: &Runtime, stdout: &mut dyn Write) -> Result<()> {
    let mut table = CostTable::openai_defaults();
    if let Some(path) = &args.config {
        table.merge(&rt.load_config(path)?.costs);
    }
    for spec in &args.rate {
        let (model, rates) = parse_rate(spec)?;
        table
            .insert(model, rates)
            .map_err(|e| usage(format!("--rate `{spec}`: {e}")))?;
    }
    let mut records = Vec::new();
    for path in &args.ledger {
        records.extend(UsageLedger::load_jsonl(path)?);
    }
    let rows = summarize_usage(&records, &table);
    print_rows(&rows, stdout)?;
    if let Some(dir) = &args.out {
        let json = out_file(dir, "cost.json")?;
        fs::write(&json, serde_json::to_string_pretty(&rows)? + "\n")
            .with_context(|| format!("writing {}", json.display()))?;
        let csv = dir.join("cost.csv");
        fs::write(&csv, csv_text(&rows)).with_context(|| format!("writing {}", csv.display()))?;
    }
    Ok(())
}

fn money(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

fn print_rows(rows: &[CostRow], out: &mut dyn Write) -> Result<()> {
    let mut table = Table::new(&[
        ("Model/LLM", Align::Left),
        ("Case Study", Align::Left),
        ("Method", Align::Left),
        ("Prompt", Align::Right),
        ("Completion", Align::Right),
        ("Cost (USD)", Align::Right),
    ]);
    for r in rows {
        table.row(vec![
            r.model.clone(),
            r.case.clone(),
            r.method.clone(),
            r.prompt_tokens.to_string(),
            r.completion_tokens.to_string(),
            money(r.cost_usd),
        ]);
    }
    table.row(vec![
        "total".into(),
        String::new(),
        String::new(),
        rows.iter()
            .map(|r| r.prompt_tokens)
            .sum::<u64>()
            .to_string(),
        rows.iter()
            .map(|r| r.completion_tokens)
            .sum::<u64>()
            .to_string(),
        money(Some(total_cost(rows))),
    ]);
    table.write(out)?;
    let unpriced: Vec<&str> = rows
        .iter()
        .filter(|r| r.cost_usd.is_none())
        .map(|r| r.model.as_str())
        .collect();
    if !unpriced.is_empty() {
        writeln!(
            out,
            "no price for: {} (excluded from the total)",
            unpriced.join(", ")
        )?;
    }
    Ok(())
}

fn csv_text(rows: &[CostRow]) -> String {
    let mut out = String::from("model,case,method,prompt_tokens,completion_tokens,cost_usd\n");
    for r in rows {
        let cost = r.cost_usd.map(|c| c.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{cost}\n",
            r.model, r.case, r.method, r.prompt_tokens, r.completion_tokens
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_specs() {
        let (m, r) = parse_rate("my-model=1.5:6").unwrap();
        assert_eq!(
            (m.as_str(), r.input_per_million, r.output_per_million),
            ("my-model", 1.5, 6.0)
        );
        for bad in ["x", "x=1", "=1:2", "x=a:2"] {
            assert!(parse_rate(bad).is_err(), "{bad}");
        }
    }
}
