//! Detail importance (S) and average effect (E) per model and dataset,
//! computed from the published per-prompt F2 scores.
//!
//! cargo run --example prompt_ablation [-- markdown]

use std::fs::File;

use cia_core::ablation::{importance_report, read_score_table, rows_by_context, GbdtParams};
use cia_core::ablation::render_importance;
use cia_core::metrics::ReportFormat;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/prompt_variant_scores.csv");
    let format: ReportFormat = std::env::args().nth(1).as_deref().unwrap_or("markdown").parse()?;
    let mut records = read_score_table(File::open(path)?)?;
    records.retain(|r| r.context.as_deref().is_some_and(|c| c.contains("GPT4o") || c.contains("LLaMa")));
    let params = GbdtParams::default();
    let mut reports = Vec::new();
    for (context, rows) in rows_by_context(&records, false)? {
        let rep = importance_report(context, &rows, &params)?;
        reports.push(rep);
    }
    print!("{}", render_importance(&reports, format));
    for r in &reports {
        println!("{}: training MSE {:.10}", r.context, r.train_mse);
    }
    Ok(())
}
