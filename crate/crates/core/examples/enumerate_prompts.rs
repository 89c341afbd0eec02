//! Lists the 64 prompt variants and renders one of them over the demo data.
//!
//! cargo run --example enumerate_prompts [-- P15]

use cia_core::corpus::load_dataset;
use cia_core::promptkit::{enumerate_prompts, render_cag_prompt, DetailTextCatalog, PromptSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for p in enumerate_prompts() {
        println!("{:>3}  {:<16} {}", p.prompt_id, p.detail_label(), p.glyphs());
    }
    let id = std::env::args().nth(1).unwrap_or_else(|| "P15".into());
    let spec = PromptSpec::from_id(&id)?;
    let dataset = load_dataset(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/demo"))?;
    let catalog = DetailTextCatalog::builtin(dataset.name());
    println!("\n--- {id} for {} ---", dataset.rationales()[0].id);
    print!("{}", render_cag_prompt(&spec, &dataset.rationales()[0], dataset.requirements(), &catalog)?);
    Ok(())
}
