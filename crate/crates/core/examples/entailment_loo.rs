//! Leave-one-out entailment labels for the demo data. Refined impact sets
//! come from the committed replay store; each fold "trains" on the other
//! rationales and labels its own candidates. The lexical stand-in service is
//! used unless NLI_URL points at a running NLI service.
//!
//! cargo run --example entailment_loo

use std::collections::HashMap;

use cia_core::corpus::load_dataset;
use cia_core::entailment::{
    build_loo_folds, run_loo, LexicalEntailment, LexicalNliService, NliClient, NliHyperparams, NliService,
};
use cia_core::llm::{ReplayBackend, ReplayStore};
use cia_core::pipeline::{Pipeline, PipelineConfig};
use cia_core::promptkit::DetailTextCatalog;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/demo");
    let dataset = load_dataset(root)?;
    let backend = ReplayBackend::strict(ReplayStore::open(format!("{root}/replay")));
    let catalog = DetailTextCatalog::builtin(dataset.name());
    let config = PipelineConfig::default();
    let pipeline = Pipeline::new(&backend, &catalog, &config);

    let mut refined = HashMap::new();
    for c in dataset.rationales() {
        let (set, _) = pipeline.discover(c, &dataset)?;
        refined.insert(c.id.clone(), set);
    }
    let folds = build_loo_folds(&dataset, &refined)?;

    let service: Box<dyn NliService> = match std::env::var("NLI_URL") {
        Ok(url) => Box::new(NliClient::new(url, Some("NLI_TOKEN".into()))?),
        Err(_) => Box::new(LexicalNliService::new(LexicalEntailment::default())),
    };
    println!("service: {}", service.health()?.status);
    let labels = run_loo(&folds, service.as_ref(), &NliHyperparams::default())?;
    for fold in &folds {
        println!("{} (trained on {} pairs):", fold.held_out, fold.train.len());
        for (id, pair) in &fold.test {
            let label = labels.get(&fold.held_out, id).map(|l| l.is_entailed() as u8);
            println!("  {id} -> {label:?}   premise: {}", pair.candidate_text);
        }
    }
    Ok(())
}
