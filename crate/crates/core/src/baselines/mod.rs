//! Comparison systems: embedding similarity with three cutoff strategies,
//! per-requirement ("iterative") prompting, and a retrieve-then-classify
//! chain-of-thought baseline.

mod cutoff;
mod embedding;

use std::collections::HashSet;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use thiserror::Error;

pub use cutoff::{keep_count_t1, keep_count_t2, keep_count_t3, CutoffStrategy};
pub use embedding::{cosine, rank_by_similarity, Embedder, HashingEmbedder, HttpEmbedder, SimilarityRanking};

use crate::corpus::{ChangeRationale, Dataset, ReqId, Requirement};
use crate::llm::{parse_impact_output, LlmError};
use crate::pipeline::{ImpactCandidate, ImpactSet, Origin, Pipeline, RunTrace, Stage};
use crate::promptkit::{render_cot_pair_prompt, render_impact_prompt, PromptSpec};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("a cutoff needs at least two scores, got {0}")]
    TooFewScores(usize),
    #[error("cosine of a zero vector")]
    ZeroVector,
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedding backend: {0}")]
    Embedding(String),
    #[error("dataset has no requirements")]
    EmptyDataset,
    #[error("k must be in 1..={n_req}, got {k}")]
    BadK { k: usize, n_req: usize },
    #[error("empty k grid")]
    EmptyGrid,
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Applies `strategy` to a ranking and returns the kept ids, best first.
pub fn apply_cutoff(ranking: &SimilarityRanking, strategy: CutoffStrategy) -> Result<Vec<ReqId>, BaselineError> {
    let n = strategy.keep_count(&ranking.scores())?;
    Ok(ranking.top(n))
}

fn pool(parallel: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .expect("thread pool")
}

// Runs one LLM call per item with at most `parallel` in flight, then merges
// the per-item traces in item order.
fn fan_out<T: Sync>(
    pipeline: &Pipeline<'_>,
    items: &[T],
    parallel: usize,
    trace: &mut RunTrace,
    stage: Stage,
    prompt: impl Fn(&T) -> String + Sync,
) -> Result<Vec<String>, BaselineError> {
    let results: Vec<Result<(String, RunTrace), LlmError>> = pool(parallel).install(|| {
        items
            .par_iter()
            .enumerate()
            .map(|(i, item)| {
                let mut local = RunTrace::default();
                let text = pipeline.call(stage, i, prompt(item), &mut local)?;
                Ok((text, local))
            })
            .collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for r in results {
        let (text, local) = r?;
        trace.calls.extend(local.calls);
        out.push(text);
    }
    Ok(out)
}

/// Asks the impact prompt about each requirement on its own and unions the
/// positives in dataset order.
pub fn iterative_baseline(
    pipeline: &Pipeline<'_>,
    rationale: &ChangeRationale,
    dataset: &Dataset,
    spec: &PromptSpec,
    parallel: usize,
    trace: &mut RunTrace,
) -> Result<ImpactSet, BaselineError> {
    if dataset.n_req() == 0 {
        return Err(BaselineError::EmptyDataset);
    }
    let reqs: Vec<&Requirement> = dataset.requirements().iter().collect();
    let texts = fan_out(pipeline, &reqs, parallel, trace, Stage::Iterative, |r| {
        render_impact_prompt(spec, rationale, std::iter::once(*r), pipeline.catalog())
    })?;
    let mut set = ImpactSet::new();
    for (req, text) in reqs.iter().zip(texts) {
        let known: HashSet<ReqId> = HashSet::from([req.id.clone()]);
        let parsed = parse_impact_output(&text, &known);
        for s in parsed.selections {
            set.insert(ImpactCandidate::new(s.req_id.0, s.justification, Origin::Initial));
        }
    }
    trace.stages.final_ids = set.ids();
    Ok(set)
}

fn trace_tag_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)<trace>\s*(yes|no)\s*</trace>").expect("valid regex"))
}

fn bare_answer_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\W*(yes|no)\b").expect("valid regex"))
}

/// Reads the final `<trace>yes|no</trace>` tag, else a last line starting
/// with yes/no. `None` when neither is present.
pub fn parse_trace_answer(text: &str) -> Option<bool> {
    let verdict = |s: &str| s.eq_ignore_ascii_case("yes");
    if let Some(c) = trace_tag_re().captures_iter(text).last() {
        return Some(verdict(&c[1]));
    }
    let last = text.lines().rev().find(|l| !l.trim().is_empty())?;
    bare_answer_re().captures(last).map(|c| verdict(&c[1]))
}

/// Retrieves the top `k` requirements by similarity, then asks a yes/no
/// chain-of-thought question per pair. Positives keep ranking order.
pub fn cot_baseline(
    pipeline: &Pipeline<'_>,
    rationale: &ChangeRationale,
    dataset: &Dataset,
    ranking: &SimilarityRanking,
    k: usize,
    parallel: usize,
    trace: &mut RunTrace,
) -> Result<ImpactSet, BaselineError> {
    if k == 0 || k > dataset.n_req() {
        return Err(BaselineError::BadK { k, n_req: dataset.n_req() });
    }
    let top: Vec<&Requirement> = ranking
        .top(k)
        .iter()
        .filter_map(|id| dataset.requirement(id.as_str()))
        .collect();
    let texts = fan_out(pipeline, &top, parallel, trace, Stage::Cot, |r| {
        render_cot_pair_prompt(rationale, r, pipeline.catalog())
    })?;
    let mut set = ImpactSet::new();
    for (req, text) in top.iter().zip(texts) {
        match parse_trace_answer(&text) {
            Some(true) => {
                set.insert(ImpactCandidate::new(req.id.0.clone(), "", Origin::Initial));
            }
            Some(false) => {}
            None => trace.warnings.push(crate::pipeline::TraceWarning {
                stage: Stage::Cot,
                message: format!("no yes/no answer for {}; treated as no", req.id),
            }),
        }
    }
    trace.stages.final_ids = set.ids();
    Ok(set)
}

/// Evaluates `score` on every grid value and returns the best one; the
/// first wins on ties.
pub fn grid_search_k<E>(
    grid: &[usize],
    mut score: impl FnMut(usize) -> Result<f64, E>,
) -> Result<(usize, f64), E>
where
    E: From<BaselineError>,
{
    let mut best: Option<(usize, f64)> = None;
    for &k in grid {
        let s = score(k)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    best.ok_or_else(|| BaselineError::EmptyGrid.into())
}

/// `{5, 10, ..}` up to `n_req`.
pub fn default_k_grid(n_req: usize) -> Vec<usize> {
    (1..).map(|i| i * 5).take_while(|&k| k <= n_req).collect()
}
