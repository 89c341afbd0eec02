//! The four-stage impact pipeline for one change rationale:
//! full-list pass, refinement over the unselected complement, LLM ranking,
//! and entailment-gated selection.
//!
//! When the requirement list does not fit the batch token budget, each LLM
//! pass is split into batches (greedy fill, 4 characters per token) and the
//! per-batch selections are unioned in first-seen order.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ChangeRationale, Dataset, ReqId, Requirement};
use crate::entailment::{EntailmentError, EntailmentLabel, LabelSource};
use crate::llm::parse::RankingParseError;
use crate::llm::{
    parse_impact_output, parse_ranking_output, ChatBackend, ChatRequest, LlmError, SamplingParams,
    DEFAULT_MODEL,
};
use crate::promptkit::{
    render_impact_prompt, render_ranking_prompt, DetailTextCatalog, PromptError, PromptSpec,
};

/// Impact sets of at most this many requirements skip the entailment gate.
pub const SMALL_SET_LIMIT: usize = 5;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Entailment(#[from] EntailmentError),
    #[error("ranking for change rationale {rationale_id} failed: {source}")]
    Ranking {
        rationale_id: String,
        #[source]
        source: RankingParseError,
    },
    #[error("selection needs one label per ranked candidate: {candidates} candidates, {labels} labels")]
    LabelMismatch { candidates: usize, labels: usize },
    #[error("dataset has no requirements")]
    EmptyDataset,
    #[error("unknown change rationale `{0}`")]
    UnknownRationale(String),
    #[error("batch token budget must be positive")]
    ZeroBudget,
    #[error("cannot write run artifacts to {path}: {source}")]
    Artifact {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Initial,
    Refinement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpactCandidate {
    pub req_id: ReqId,
    pub justification: String,
    pub origin: Origin,
    /// 1-based position assigned by the ranking pass.
    pub rank: Option<usize>,
}

impl ImpactCandidate {
    pub fn new(req_id: impl Into<String>, justification: impl Into<String>, origin: Origin) -> Self {
        ImpactCandidate {
            req_id: ReqId(req_id.into()),
            justification: justification.into(),
            origin,
            rank: None,
        }
    }
}

/// Ordered candidates without duplicate requirement ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImpactSet {
    candidates: Vec<ImpactCandidate>,
}

impl ImpactSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keeps the first occurrence of every id.
    pub fn from_candidates(candidates: impl IntoIterator<Item = ImpactCandidate>) -> Self {
        let mut set = ImpactSet::new();
        for c in candidates {
            set.insert(c);
        }
        set
    }

    /// Adds `candidate` unless its id is already present. Returns whether it was added.
    pub fn insert(&mut self, candidate: ImpactCandidate) -> bool {
        if self.contains(candidate.req_id.as_str()) {
            return false;
        }
        self.candidates.push(candidate);
        true
    }

    pub fn contains(&self, id: &str) -> bool {
        self.candidates.iter().any(|c| c.req_id.as_str() == id)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidates(&self) -> &[ImpactCandidate] {
        &self.candidates
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ImpactCandidate> {
        self.candidates.iter()
    }

    pub fn ids(&self) -> Vec<ReqId> {
        self.candidates.iter().map(|c| c.req_id.clone()).collect()
    }

    pub fn id_set(&self) -> HashSet<ReqId> {
        self.candidates.iter().map(|c| c.req_id.clone()).collect()
    }
}

impl<'a> IntoIterator for &'a ImpactSet {
    type Item = &'a ImpactCandidate;
    type IntoIter = std::slice::Iter<'a, ImpactCandidate>;
    fn into_iter(self) -> Self::IntoIter {
        self.candidates.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankingFallback {
    /// Ask once more, then fail.
    Retry,
    /// Keep discovery order.
    InputOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub prompt_id: String,
    pub refinement: bool,
    pub filtering: bool,
    pub batch_token_budget: usize,
    pub repetitions: u32,
    pub ranking_fallback: RankingFallback,
    pub model: String,
    pub params: SamplingParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            prompt_id: "P30".into(),
            refinement: true,
            filtering: true,
            batch_token_budget: 100_000,
            repetitions: 1,
            ranking_fallback: RankingFallback::Retry,
            model: DEFAULT_MODEL.into(),
            params: SamplingParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Initial,
    Refinement,
    Ranking,
    Iterative,
    Cot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCall {
    pub stage: Stage,
    pub batch: usize,
    pub digest: String,
    pub prompt: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceWarning {
    pub stage: Stage,
    pub message: String,
}

/// Requirement ids after each stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSnapshot {
    pub initial: Vec<ReqId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refined: Option<Vec<ReqId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranked: Option<Vec<ReqId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<EntailmentLabel>>,
    #[serde(rename = "final")]
    pub final_ids: Vec<ReqId>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub rationale_id: String,
    pub prompt_id: String,
    pub calls: Vec<TraceCall>,
    pub warnings: Vec<TraceWarning>,
    pub stages: StageSnapshot,
}

impl RunTrace {
    pub fn new(rationale_id: &str, prompt_id: &str) -> Self {
        RunTrace {
            rationale_id: rationale_id.to_string(),
            prompt_id: prompt_id.to_string(),
            ..Default::default()
        }
    }

    pub fn calls_for(&self, stage: Stage) -> impl Iterator<Item = &TraceCall> {
        self.calls.iter().filter(move |c| c.stage == stage)
    }

    fn warn(&mut self, stage: Stage, message: impl Into<String>) {
        let message = message.into();
        log::warn!("{}: {:?}: {}", self.rationale_id, stage, message);
        self.warnings.push(TraceWarning { stage, message });
    }
}

/// Rough token count used for batching: one token per four characters.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// Splits `reqs` into consecutive batches whose rendered prompts stay within
/// `budget` tokens. A requirement too large for any batch is placed alone.
pub fn plan_batches<'a>(
    spec: &PromptSpec,
    rationale: &ChangeRationale,
    reqs: &[&'a Requirement],
    catalog: &DetailTextCatalog,
    budget: usize,
) -> Vec<Vec<&'a Requirement>> {
    let overhead = estimate_tokens(&render_impact_prompt(spec, rationale, std::iter::empty(), catalog));
    let mut batches: Vec<Vec<&Requirement>> = Vec::new();
    let mut current: Vec<&Requirement> = Vec::new();
    let mut used = overhead;
    for &req in reqs {
        let line = estimate_tokens(&format!("{}: {}\n", req.id, req.text));
        if !current.is_empty() && used + line > budget {
            batches.push(std::mem::take(&mut current));
            used = overhead;
        }
        used += line;
        current.push(req);
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches
}

/// Keeps ranked element `i` (1-based) iff its label is 1 or `i <= n / 2`
/// (floor). Sets of at most five elements pass through unchanged.
pub fn select(ranked: &ImpactSet, labels: &[EntailmentLabel]) -> Result<ImpactSet, PipelineError> {
    if labels.len() != ranked.len() {
        return Err(PipelineError::LabelMismatch {
            candidates: ranked.len(),
            labels: labels.len(),
        });
    }
    let n = ranked.len();
    if n <= SMALL_SET_LIMIT {
        return Ok(ranked.clone());
    }
    let keep = ranked
        .iter()
        .zip(labels)
        .enumerate()
        .filter(|(i, (_, label))| label.is_entailed() || *i < n / 2)
        .map(|(_, (c, _))| c.clone());
    Ok(ImpactSet::from_candidates(keep))
}

/// Runs the pipeline stages against one chat backend and template catalog.
pub struct Pipeline<'a> {
    llm: &'a dyn ChatBackend,
    catalog: &'a DetailTextCatalog,
    config: &'a PipelineConfig,
    repetition: u32,
}

impl<'a> Pipeline<'a> {
    pub fn new(llm: &'a dyn ChatBackend, catalog: &'a DetailTextCatalog, config: &'a PipelineConfig) -> Self {
        Pipeline {
            llm,
            catalog,
            config,
            repetition: 0,
        }
    }

    /// Tags every request with a repetition index (see [`ChatRequest::repetition`]).
    pub fn with_repetition(mut self, repetition: u32) -> Self {
        self.repetition = repetition;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        self.config
    }

    pub fn catalog(&self) -> &DetailTextCatalog {
        self.catalog
    }

    pub(crate) fn call(
        &self,
        stage: Stage,
        batch: usize,
        prompt: String,
        trace: &mut RunTrace,
    ) -> Result<String, LlmError> {
        let request = ChatRequest::new(self.config.model.clone(), prompt)
            .with_params(self.config.params)
            .with_repetition(self.repetition);
        let response = self.llm.complete(&request)?;
        trace.calls.push(TraceCall {
            stage,
            batch,
            digest: request.digest(),
            prompt: request.prompt,
            response: response.text.clone(),
            latency_ms: response.latency_ms,
        });
        Ok(response.text)
    }

    // One impact pass over `reqs`, batched; selections are unioned into `into`.
    fn impact_pass(
        &self,
        stage: Stage,
        origin: Origin,
        rationale: &ChangeRationale,
        reqs: &[&Requirement],
        spec: &PromptSpec,
        into: &mut ImpactSet,
        trace: &mut RunTrace,
    ) -> Result<(), PipelineError> {
        if self.config.batch_token_budget == 0 {
            return Err(PipelineError::ZeroBudget);
        }
        let batches = plan_batches(spec, rationale, reqs, self.catalog, self.config.batch_token_budget);
        for (b, batch) in batches.iter().enumerate() {
            let prompt = render_impact_prompt(spec, rationale, batch.iter().copied(), self.catalog);
            if estimate_tokens(&prompt) > self.config.batch_token_budget {
                trace.warn(stage, format!("batch {b} exceeds the token budget ({} requirement(s))", batch.len()));
            }
            let text = self.call(stage, b, prompt, trace)?;
            let known: HashSet<ReqId> = batch.iter().map(|r| r.id.clone()).collect();
            let parsed = parse_impact_output(&text, &known);
            for w in parsed.warnings {
                trace.warn(stage, w.to_string());
            }
            for s in parsed.selections {
                into.insert(ImpactCandidate {
                    req_id: s.req_id,
                    justification: s.justification,
                    origin,
                    rank: None,
                });
            }
        }
        Ok(())
    }

    /// First pass over every requirement of the dataset.
    pub fn initial_pass(
        &self,
        rationale: &ChangeRationale,
        dataset: &Dataset,
        spec: &PromptSpec,
        trace: &mut RunTrace,
    ) -> Result<ImpactSet, PipelineError> {
        if dataset.n_req() == 0 {
            return Err(PipelineError::EmptyDataset);
        }
        let reqs: Vec<&Requirement> = dataset.requirements().iter().collect();
        let mut set = ImpactSet::new();
        self.impact_pass(Stage::Initial, Origin::Initial, rationale, &reqs, spec, &mut set, trace)?;
        Ok(set)
    }

    /// Second pass over the requirements `first` did not select. Never
    /// removes a first-pass candidate.
    pub fn refinement_pass(
        &self,
        rationale: &ChangeRationale,
        dataset: &Dataset,
        first: &ImpactSet,
        spec: &PromptSpec,
        trace: &mut RunTrace,
    ) -> Result<ImpactSet, PipelineError> {
        let complement: Vec<&Requirement> = dataset
            .requirements()
            .iter()
            .filter(|r| !first.contains(r.id.as_str()))
            .collect();
        let mut set = first.clone();
        if complement.is_empty() {
            return Ok(set);
        }
        self.impact_pass(Stage::Refinement, Origin::Refinement, rationale, &complement, spec, &mut set, trace)?;
        Ok(set)
    }

    /// Reorders `candidates` by the model's ranking and assigns ranks.
    pub fn rank(
        &self,
        rationale: &ChangeRationale,
        dataset: &Dataset,
        candidates: &ImpactSet,
        trace: &mut RunTrace,
    ) -> Result<ImpactSet, PipelineError> {
        if candidates.is_empty() {
            return Err(PromptError::EmptyCandidates.into());
        }
        let order = if candidates.len() == 1 {
            candidates.ids()
        } else {
            let prompt = render_ranking_prompt(rationale, candidates.candidates(), dataset, self.catalog)?;
            let expected = candidates.ids();
            let attempts = match self.config.ranking_fallback {
                RankingFallback::Retry => 2,
                RankingFallback::InputOrder => 1,
            };
            let mut parsed = None;
            let mut last_err = None;
            for attempt in 0..attempts {
                let text = self.call(Stage::Ranking, attempt, prompt.clone(), trace)?;
                match parse_ranking_output(&text, &expected) {
                    Ok(r) => {
                        parsed = Some(r);
                        break;
                    }
                    Err(e) => {
                        trace.warn(Stage::Ranking, format!("attempt {}: {e}", attempt + 1));
                        last_err = Some(e);
                    }
                }
            }
            match (parsed, self.config.ranking_fallback) {
                (Some(r), _) => {
                    for w in r.warnings {
                        trace.warn(Stage::Ranking, w.to_string());
                    }
                    r.order
                }
                (None, RankingFallback::InputOrder) => {
                    trace.warn(Stage::Ranking, "falling back to discovery order");
                    expected
                }
                (None, RankingFallback::Retry) => {
                    return Err(PipelineError::Ranking {
                        rationale_id: rationale.id.clone(),
                        source: last_err.expect("at least one attempt failed"),
                    })
                }
            }
        };
        let ranked = order.iter().enumerate().map(|(i, id)| {
            let mut c = candidates
                .iter()
                .find(|c| &c.req_id == id)
                .expect("ranking is a permutation of the candidates")
                .clone();
            c.rank = Some(i + 1);
            c
        });
        Ok(ImpactSet::from_candidates(ranked))
    }

    /// Initial pass plus refinement (when enabled): everything before ranking.
    pub fn discover(&self, rationale: &ChangeRationale, dataset: &Dataset) -> Result<(ImpactSet, RunTrace), PipelineError> {
        let spec = PromptSpec::from_id(&self.config.prompt_id)?;
        let mut trace = RunTrace::new(&rationale.id, &spec.prompt_id);

        let initial = self.initial_pass(rationale, dataset, &spec, &mut trace)?;
        trace.stages.initial = initial.ids();

        let mut current = initial;
        if self.config.refinement {
            current = self.refinement_pass(rationale, dataset, &current, &spec, &mut trace)?;
            trace.stages.refined = Some(current.ids());
        }
        trace.stages.final_ids = current.ids();
        Ok((current, trace))
    }

    /// Ranking and entailment-gated selection over a discovered set (when
    /// filtering is enabled).
    pub fn filter(
        &self,
        rationale: &ChangeRationale,
        dataset: &Dataset,
        discovered: ImpactSet,
        trace: &mut RunTrace,
        labels: &dyn LabelSource,
    ) -> Result<ImpactSet, PipelineError> {
        let mut current = discovered;
        if self.config.filtering && !current.is_empty() {
            let ranked = self.rank(rationale, dataset, &current, trace)?;
            trace.stages.ranked = Some(ranked.ids());
            current = if ranked.len() <= SMALL_SET_LIMIT {
                ranked
            } else {
                let labels = labels.labels(rationale, dataset, &ranked)?;
                let selected = select(&ranked, &labels)?;
                trace.stages.labels = Some(labels);
                selected
            };
        }
        trace.stages.final_ids = current.ids();
        Ok(current)
    }

    /// Full flow for one rationale.
    pub fn run(
        &self,
        rationale: &ChangeRationale,
        dataset: &Dataset,
        labels: &dyn LabelSource,
    ) -> Result<(ImpactSet, RunTrace), PipelineError> {
        let (discovered, mut trace) = self.discover(rationale, dataset)?;
        let out = self.filter(rationale, dataset, discovered, &mut trace, labels)?;
        Ok((out, trace))
    }
}

/// Applies `f` to every rationale, up to `parallel` at a time. Results come
/// back in input order.
pub fn for_each_rationale<T, F>(rationales: &[ChangeRationale], parallel: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&ChangeRationale) -> T + Sync,
{
    if parallel <= 1 {
        return rationales.iter().map(f).collect();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .expect("thread pool")
        .install(|| rationales.par_iter().map(|c| f(c)).collect())
}

/// Runs the full pipeline on every rationale of `dataset`.
pub fn run_all(
    pipeline: &Pipeline<'_>,
    dataset: &Dataset,
    labels: &dyn LabelSource,
    parallel: usize,
) -> Vec<Result<(ImpactSet, RunTrace), PipelineError>> {
    for_each_rationale(dataset.rationales(), parallel, |c| pipeline.run(c, dataset, labels))
}

/// Serialized shape of `impact_set.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpactSetDocument {
    pub rationale_id: String,
    pub candidates: Vec<ImpactCandidate>,
}

pub const IMPACT_SET_FILE: &str = "impact_set.json";
pub const TRACE_FILE: &str = "trace.json";
pub const WARNINGS_FILE: &str = "warnings.log";

/// Writes `<out>/<rationale_id>/{impact_set.json, trace.json, warnings.log}`.
pub fn write_run_artifacts(out: &Path, set: &ImpactSet, trace: &RunTrace) -> Result<PathBuf, PipelineError> {
    let dir = out.join(&trace.rationale_id);
    let wrap = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PipelineError::Artifact { path, source }
    };
    fs::create_dir_all(&dir).map_err(wrap(&dir))?;

    let doc = ImpactSetDocument {
        rationale_id: trace.rationale_id.clone(),
        candidates: set.candidates().to_vec(),
    };
    let impact_path = dir.join(IMPACT_SET_FILE);
    let json = serde_json::to_string_pretty(&doc).expect("impact set serializes") + "\n";
    fs::write(&impact_path, json).map_err(wrap(&impact_path))?;

    let trace_path = dir.join(TRACE_FILE);
    let json = serde_json::to_string_pretty(trace).expect("trace serializes") + "\n";
    fs::write(&trace_path, json).map_err(wrap(&trace_path))?;

    let warn_path = dir.join(WARNINGS_FILE);
    let mut log = String::new();
    for w in &trace.warnings {
        log.push_str(&format!("[{:?}] {}\n", w.stage, w.message));
    }
    fs::write(&warn_path, log).map_err(wrap(&warn_path))?;
    Ok(dir)
}

pub fn read_impact_set(path: &Path) -> io::Result<ImpactSetDocument> {
    let raw = fs::read_to_string(path)?;
    serde_json::from_str(&raw).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

pub fn read_trace(path: &Path) -> io::Result<RunTrace> {
    let raw = fs::read_to_string(path)?;
    serde_json::from_str(&raw).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entailment::EntailmentLabel::{Entailed as E1, NotEntailed as E0};

    fn set(ids: &[&str]) -> ImpactSet {
        ImpactSet::from_candidates(ids.iter().map(|i| ImpactCandidate::new(*i, "", Origin::Initial)))
    }

    fn ids(s: &ImpactSet) -> Vec<String> {
        s.iter().map(|c| c.req_id.0.clone()).collect()
    }

    #[test]
    fn small_sets_pass_through() {
        let s = set(&["a", "b", "c", "d"]);
        assert_eq!(select(&s, &[E0; 4]).unwrap(), s);
        let s5 = set(&["a", "b", "c", "d", "e"]);
        assert_eq!(select(&s5, &[E0; 5]).unwrap(), s5);
    }

    #[test]
    fn six_with_mixed_labels() {
        let s = set(&["p1", "p2", "p3", "p4", "p5", "p6"]);
        let out = select(&s, &[E0, E0, E0, E1, E0, E1]).unwrap();
        assert_eq!(ids(&out), ["p1", "p2", "p3", "p4", "p6"]);
    }

    #[test]
    fn seven_unlabelled_keeps_floor_half() {
        let s = set(&["p1", "p2", "p3", "p4", "p5", "p6", "p7"]);
        assert_eq!(ids(&select(&s, &[E0; 7]).unwrap()), ["p1", "p2", "p3"]);
    }

    #[test]
    fn label_count_must_match() {
        assert!(matches!(
            select(&set(&["a", "b"]), &[E1]),
            Err(PipelineError::LabelMismatch { candidates: 2, labels: 1 })
        ));
    }

    #[test]
    fn impact_set_keeps_first_seen() {
        let mut s = ImpactSet::new();
        assert!(s.insert(ImpactCandidate::new("R1", "first", Origin::Initial)));
        assert!(!s.insert(ImpactCandidate::new("R1", "second", Origin::Refinement)));
        assert_eq!(s.candidates()[0].justification, "first");
    }

    #[test]
    fn token_estimate_rounds_up() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
        assert_eq!(estimate_tokens("éééé"), 1);
    }

    #[test]
    fn batches_cover_every_requirement_in_order() {
        let reqs: Vec<Requirement> = (1..=20)
            .map(|i| Requirement::new(format!("R{i}"), "x".repeat(40)))
            .collect();
        let refs: Vec<&Requirement> = reqs.iter().collect();
        let spec = PromptSpec::from_id("P1").unwrap();
        let catalog = DetailTextCatalog::builtin("d");
        let rationale = ChangeRationale::new("C1", "change");
        let overhead = estimate_tokens(&render_impact_prompt(&spec, &rationale, std::iter::empty(), &catalog));
        let budget = overhead + 30;
        let batches = plan_batches(&spec, &rationale, &refs, &catalog, budget);
        assert!(batches.len() > 1);
        let flat: Vec<&str> = batches.iter().flatten().map(|r| r.id.as_str()).collect();
        let expect: Vec<String> = (1..=20).map(|i| format!("R{i}")).collect();
        assert_eq!(flat, expect);
        for b in &batches {
            let prompt = render_impact_prompt(&spec, &rationale, b.iter().copied(), &catalog);
            assert!(estimate_tokens(&prompt) <= budget + 1, "{}", estimate_tokens(&prompt));
        }

        // a budget smaller than the overhead still yields one requirement per batch
        let tiny = plan_batches(&spec, &rationale, &refs, &catalog, 1);
        assert_eq!(tiny.len(), 20);
    }
}
