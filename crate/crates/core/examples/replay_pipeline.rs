//! Runs the full pipeline on the demo data from the committed replay store
//! (no network) and prints every stage of the C1 trace.
//!
//! cargo run --example replay_pipeline

use cia_core::corpus::load_dataset;
use cia_core::entailment::{LexicalEntailment, Predictor};
use cia_core::llm::{ReplayBackend, ReplayStore};
use cia_core::pipeline::{run_all, Pipeline, PipelineConfig};
use cia_core::promptkit::DetailTextCatalog;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/demo");
    let dataset = load_dataset(root)?;
    let backend = ReplayBackend::strict(ReplayStore::open(format!("{root}/replay")));
    let catalog = DetailTextCatalog::builtin(dataset.name());
    let config = PipelineConfig::default();
    let pipeline = Pipeline::new(&backend, &catalog, &config);
    let labels = Predictor(LexicalEntailment::default());
    for result in run_all(&pipeline, &dataset, &labels, 2) {
        let (set, trace) = result?;
        let s = &trace.stages;
        let ids = |v: &[cia_core::corpus::ReqId]| v.iter().map(|r| r.as_str()).collect::<Vec<_>>().join(",");
        println!("{}:", trace.rationale_id);
        println!("  initial  {}", ids(&s.initial));
        if let Some(r) = &s.refined {
            println!("  refined  {}", ids(r));
        }
        if let Some(r) = &s.ranked {
            println!("  ranked   {}", ids(r));
        }
        println!("  final    {}  ({} LLM calls)", ids(&set.ids()), trace.calls.len());
    }
    Ok(())
}
