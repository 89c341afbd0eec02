//! Similarity baseline: hashing embeddings, cosine ranking and the three
//! cutoff strategies, first on the worked score list and then on the demo data.
//!
//! cargo run --example similarity_cutoffs

use cia_core::baselines::{apply_cutoff, rank_by_similarity, CutoffStrategy, HashingEmbedder, SimilarityRanking};
use cia_core::corpus::{load_dataset, ReqId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let strategies = [CutoffStrategy::T1 { theta: 0.5 }, CutoffStrategy::T2, CutoffStrategy::T3];
    let worked = SimilarityRanking::from_scores(
        [0.85, 0.82, 0.80, 0.78, 0.60, 0.58, 0.57, 0.40]
            .iter()
            .enumerate()
            .map(|(i, s)| (ReqId::new(format!("R{}", i + 1)), *s))
            .collect(),
    );
    for s in strategies {
        println!("{s:?}: keeps {} of {}", apply_cutoff(&worked, s)?.len(), worked.len());
    }

    let dataset = load_dataset(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/demo"))?;
    let embedder = HashingEmbedder::new(256);
    for c in dataset.rationales() {
        let ranking = rank_by_similarity(c, &dataset, &embedder)?;
        let scores: Vec<String> = ranking.entries.iter().map(|(id, s)| format!("{id}={s:.3}")).collect();
        println!("\n{}: {}", c.id, scores.join(" "));
        for s in strategies {
            let kept: Vec<String> = apply_cutoff(&ranking, s)?.iter().map(|r| r.to_string()).collect();
            println!("  {s:?}: {}", kept.join(" "));
        }
    }
    Ok(())
}
