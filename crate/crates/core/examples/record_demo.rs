//! Records the replay store shipped in `fixtures/demo/replay` by running the
//! pipeline against a scripted stand-in for the LLM. The scripted answers
//! follow the refinement walk-through: the first pass picks R2, R3 and R5
//! for C1 and the second pass adds R1 and R6.
//!
//! cargo run --example record_demo [-- <replay dir>]

use std::collections::HashMap;
use std::path::PathBuf;

use cia_core::corpus::load_dataset;
use cia_core::entailment::{LexicalEntailment, Predictor};
use cia_core::llm::{ChatBackend, ChatRequest, ChatResponse, FnBackend, ReplayBackend, ReplayMode, ReplayStore};
use cia_core::pipeline::{Pipeline, PipelineConfig};
use cia_core::promptkit::DetailTextCatalog;

struct Script {
    rationale: &'static str,
    initial: &'static [(&'static str, &'static str)],
    refinement: &'static [(&'static str, &'static str)],
    ranking: &'static str,
}

const SCRIPTS: &[Script] = &[
    Script {
        rationale: "C1",
        initial: &[
            ("R2", "Device configuration is issued through SNMP set operations, which the SDN controller replaces."),
            ("R3", "Link failure detection and rerouting is a network management function taken over by the controller."),
            ("R5", "Telemetry archives may carry device management records whose format changes."),
        ],
        refinement: &[
            ("R1", "Status polling relies on SNMP and moves to controller-based monitoring."),
            ("R6", "Launch operations depend on ground network availability during the switchover."),
        ],
        ranking: "Sorted_List: R2, R1, R3, R6, R5",
    },
    Script {
        rationale: "C2",
        initial: &[("R5", "The archive format is defined in Ref-D1, which is superseded by Ref-D2.")],
        refinement: &[],
        ranking: "Sorted_List: R5",
    },
    Script {
        rationale: "C3",
        initial: &[("R6", "The launch plan explicitly supports the dual-launch configuration being removed.")],
        refinement: &[],
        ranking: "Sorted_List: R6",
    },
];

fn answer(lines: &[(&str, &str)], listed: &[&str]) -> String {
    let picked: Vec<String> = lines
        .iter()
        .filter(|(id, _)| listed.contains(id))
        .map(|(id, why)| format!("impacted ReqID: {id},justification: {why}\n"))
        .collect();
    if picked.is_empty() {
        "No further requirements are impacted by this change.\n".to_string()
    } else {
        picked.concat()
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/demo"));
    let replay_dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| root.join("replay"));
    let dataset = load_dataset(&root)?;
    let texts: HashMap<String, String> =
        dataset.rationales().iter().map(|c| (c.id.clone(), c.text.clone())).collect();
    let n_req = dataset.n_req();

    let scripted = FnBackend(move |req: &ChatRequest| {
        let script = SCRIPTS
            .iter()
            .find(|s| req.prompt.contains(texts[s.rationale].as_str()))
            .expect("prompt names a scripted rationale");
        if req.prompt.contains("Sorted_List") {
            return Ok(ChatResponse::text(format!("{}\n", script.ranking)));
        }
        let listed: Vec<&str> = req
            .prompt
            .lines()
            .filter_map(|l| l.split_once(": ").map(|(id, _)| id))
            .filter(|id| id.len() == 2 && id.starts_with('R'))
            .collect();
        let lines = if listed.len() == n_req { script.initial } else { script.refinement };
        Ok(ChatResponse::text(answer(lines, &listed)))
    });

    let backend = ReplayBackend::new(ReplayStore::open(&replay_dir), ReplayMode::Record, Some(Box::new(scripted)))?;
    let catalog = DetailTextCatalog::builtin(dataset.name());
    let config = PipelineConfig::default();
    let pipeline = Pipeline::new(&backend as &dyn ChatBackend, &catalog, &config);
    let labels = Predictor(LexicalEntailment::default());
    for c in dataset.rationales() {
        let (set, trace) = pipeline.run(c, &dataset, &labels)?;
        let ids: Vec<&str> = set.iter().map(|x| x.req_id.as_str()).collect();
        println!("{}: {} ({} calls recorded)", c.id, ids.join(" "), trace.calls.len());
    }
    println!("replay store: {}", replay_dir.display());
    Ok(())
}
