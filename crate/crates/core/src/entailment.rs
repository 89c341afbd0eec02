//! Entailment labels for the selection step.
//!
//! The premise is a candidate requirement followed by its justification and
//! the hypothesis is the change rationale. Labels come from either the
//! remote NLI service ([`NliClient`]) or the deterministic lexical fallback
//! ([`LexicalEntailment`]).

use std::collections::{BTreeSet, HashMap};
use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ChangeRationale, CorpusError, Dataset, ReqId};
use crate::pipeline::ImpactSet;

#[derive(Debug, Error)]
pub enum EntailmentError {
    #[error("entailment pair has an empty {0}")]
    EmptyText(&'static str),
    #[error("NLI service transport error: {0}")]
    Transport(String),
    #[error("NLI service returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("cannot decode NLI service response: {0}")]
    Decode(String),
    #[error("NLI service returned {got} labels for {expected} pairs")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fold {fold}: {source}")]
    Fold {
        fold: String,
        #[source]
        source: Box<EntailmentError>,
    },
    #[error("no refined impact set for change rationale `{0}`")]
    MissingRefinedSet(String),
    #[error("no entailment label for ({rationale_id}, {req_id})")]
    MissingLabel { rationale_id: String, req_id: String },
    #[error("candidate `{0}` is not a requirement of the dataset")]
    UnknownRequirement(String),
    #[error("credential environment variable `{0}` is not set")]
    MissingCredential(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum EntailmentLabel {
    NotEntailed,
    Entailed,
}

impl EntailmentLabel {
    pub fn is_entailed(self) -> bool {
        self == EntailmentLabel::Entailed
    }

    pub fn from_bool(b: bool) -> Self {
        if b {
            EntailmentLabel::Entailed
        } else {
            EntailmentLabel::NotEntailed
        }
    }
}

impl From<EntailmentLabel> for u8 {
    fn from(l: EntailmentLabel) -> u8 {
        l.is_entailed() as u8
    }
}

impl TryFrom<u8> for EntailmentLabel {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(EntailmentLabel::NotEntailed),
            1 => Ok(EntailmentLabel::Entailed),
            other => Err(format!("entailment label must be 0 or 1, got {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntailmentPair {
    /// Hypothesis.
    pub rationale_text: String,
    /// Premise: requirement text, a space, then the justification.
    pub candidate_text: String,
}

impl EntailmentPair {
    pub fn new(rationale: &str, requirement: &str, justification: &str) -> Result<Self, EntailmentError> {
        let rationale = rationale.trim();
        let requirement = requirement.trim();
        let justification = justification.trim();
        if rationale.is_empty() {
            return Err(EntailmentError::EmptyText("rationale"));
        }
        if requirement.is_empty() {
            return Err(EntailmentError::EmptyText("candidate"));
        }
        let candidate_text = if justification.is_empty() {
            requirement.to_string()
        } else {
            format!("{requirement} {justification}")
        };
        Ok(EntailmentPair {
            rationale_text: rationale.to_string(),
            candidate_text,
        })
    }
}

/// Pairs for every candidate of `set`, in set order.
pub fn pairs_for(
    rationale: &ChangeRationale,
    dataset: &Dataset,
    set: &ImpactSet,
) -> Result<Vec<EntailmentPair>, EntailmentError> {
    set.iter()
        .map(|c| {
            let req = dataset
                .requirement(c.req_id.as_str())
                .ok_or_else(|| EntailmentError::UnknownRequirement(c.req_id.0.clone()))?;
            EntailmentPair::new(&rationale.text, &req.text, &c.justification)
        })
        .collect()
}

/// Anything that labels pairs, one label per pair in order.
pub trait EntailmentBackend: Send + Sync {
    fn predict(&self, pairs: &[EntailmentPair]) -> Result<Vec<EntailmentLabel>, EntailmentError>;
}

/// Supplies the labels Algorithm 1 consumes for one ranked impact set.
pub trait LabelSource: Sync {
    fn labels(
        &self,
        rationale: &ChangeRationale,
        dataset: &Dataset,
        ranked: &ImpactSet,
    ) -> Result<Vec<EntailmentLabel>, EntailmentError>;
}

/// Labels every candidate through a backend.
pub struct Predictor<B>(pub B);

impl<B: EntailmentBackend> LabelSource for Predictor<B> {
    fn labels(
        &self,
        rationale: &ChangeRationale,
        dataset: &Dataset,
        ranked: &ImpactSet,
    ) -> Result<Vec<EntailmentLabel>, EntailmentError> {
        let pairs = pairs_for(rationale, dataset, ranked)?;
        let labels = self.0.predict(&pairs)?;
        if labels.len() != pairs.len() {
            return Err(EntailmentError::LengthMismatch {
                expected: pairs.len(),
                got: labels.len(),
            });
        }
        Ok(labels)
    }
}

/// Precomputed labels keyed by (rationale id, requirement id), e.g. from
/// [`run_loo`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelMap(pub HashMap<(String, ReqId), EntailmentLabel>);

impl LabelMap {
    pub fn get(&self, rationale_id: &str, req_id: &ReqId) -> Option<EntailmentLabel> {
        self.0.get(&(rationale_id.to_string(), req_id.clone())).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl LabelSource for LabelMap {
    fn labels(
        &self,
        rationale: &ChangeRationale,
        _dataset: &Dataset,
        ranked: &ImpactSet,
    ) -> Result<Vec<EntailmentLabel>, EntailmentError> {
        ranked
            .iter()
            .map(|c| {
                self.get(&rationale.id, &c.req_id).ok_or_else(|| EntailmentError::MissingLabel {
                    rationale_id: rationale.id.clone(),
                    req_id: c.req_id.0.clone(),
                })
            })
            .collect()
    }
}

const STOP_WORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "in", "is", "it", "its", "of", "on", "or",
    "shall", "should", "must", "that", "the", "this", "to", "will", "with",
];

/// Lowercased alphanumeric tokens minus the stop-list.
pub fn content_tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !STOP_WORDS.contains(&t.as_str()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexicalMeasure {
    /// Share of hypothesis (rationale) tokens found in the premise.
    Coverage,
    /// |P ∩ H| / |P ∪ H|.
    Jaccard,
}

/// Token-overlap stand-in for the NLI model. Label 1 iff overlap ≥ threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LexicalEntailment {
    pub threshold: f64,
    pub measure: LexicalMeasure,
}

impl Default for LexicalEntailment {
    fn default() -> Self {
        LexicalEntailment {
            threshold: 0.2,
            measure: LexicalMeasure::Coverage,
        }
    }
}

impl LexicalEntailment {
    pub fn new(threshold: f64, measure: LexicalMeasure) -> Self {
        LexicalEntailment { threshold, measure }
    }

    pub fn overlap(&self, pair: &EntailmentPair) -> f64 {
        let h = content_tokens(&pair.rationale_text);
        let p = content_tokens(&pair.candidate_text);
        let shared = h.intersection(&p).count() as f64;
        let denom = match self.measure {
            LexicalMeasure::Coverage => h.len(),
            LexicalMeasure::Jaccard => h.union(&p).count(),
        };
        if denom == 0 {
            0.0
        } else {
            shared / denom as f64
        }
    }

    pub fn label(&self, pair: &EntailmentPair) -> EntailmentLabel {
        EntailmentLabel::from_bool(self.overlap(pair) >= self.threshold)
    }
}

impl EntailmentBackend for LexicalEntailment {
    fn predict(&self, pairs: &[EntailmentPair]) -> Result<Vec<EntailmentLabel>, EntailmentError> {
        Ok(pairs.iter().map(|p| self.label(p)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainExample {
    pub rationale_text: String,
    pub candidate_text: String,
    pub label: EntailmentLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliHyperparams {
    pub epochs: u32,
    pub weight_decay: f64,
    pub train_batch: u32,
    pub learning_rate: f64,
    pub best_metric: String,
    pub seed: u64,
}

impl Default for NliHyperparams {
    fn default() -> Self {
        NliHyperparams {
            epochs: 100,
            weight_decay: 1e-3,
            train_batch: 10,
            learning_rate: 2e-2,
            best_metric: "recall".into(),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub examples: Vec<TrainExample>,
    pub hyperparams: NliHyperparams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHandle {
    pub model_id: String,
    #[serde(default)]
    pub created_at: Option<String>,
    #[serde(default)]
    pub hyperparams: Option<NliHyperparams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub model_id: String,
    pub pairs: Vec<EntailmentPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub labels: Vec<EntailmentLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
}

/// The NLI service protocol: fresh-model training and prediction.
pub trait NliService: Sync {
    fn health(&self) -> Result<HealthResponse, EntailmentError>;
    fn train(&self, request: &TrainRequest) -> Result<ModelHandle, EntailmentError>;
    fn predict(&self, model_id: &str, pairs: &[EntailmentPair]) -> Result<Vec<EntailmentLabel>, EntailmentError>;
}

pub const TOKEN_HEADER: &str = "x-service-token";

/// HTTP client of the NLI service.
#[derive(Debug, Clone)]
pub struct NliClient {
    base_url: String,
    token_env: Option<String>,
    client: Client,
}

impl NliClient {
    /// `token_env` names the environment variable holding the shared token.
    pub fn new(base_url: impl Into<String>, token_env: Option<String>) -> Result<Self, EntailmentError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(3600))
            .build()
            .map_err(|e| EntailmentError::Transport(e.to_string()))?;
        Ok(NliClient {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token_env,
            client,
        })
    }

    fn with_token(&self, req: reqwest::blocking::RequestBuilder) -> Result<reqwest::blocking::RequestBuilder, EntailmentError> {
        match &self.token_env {
            Some(var) => {
                let token = std::env::var(var).map_err(|_| EntailmentError::MissingCredential(var.clone()))?;
                Ok(req.header(TOKEN_HEADER, token))
            }
            None => Ok(req),
        }
    }

    fn send<T: serde::de::DeserializeOwned>(&self, req: reqwest::blocking::RequestBuilder) -> Result<T, EntailmentError> {
        let resp = self
            .with_token(req)?
            .send()
            .map_err(|e| EntailmentError::Transport(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| EntailmentError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(EntailmentError::Status {
                status: status.as_u16(),
                body,
            });
        }
        serde_json::from_str(&body).map_err(|e| EntailmentError::Decode(e.to_string()))
    }
}

impl NliService for NliClient {
    fn health(&self) -> Result<HealthResponse, EntailmentError> {
        self.send(self.client.get(format!("{}/health", self.base_url)))
    }

    fn train(&self, request: &TrainRequest) -> Result<ModelHandle, EntailmentError> {
        self.send(self.client.post(format!("{}/train", self.base_url)).json(request))
    }

    fn predict(&self, model_id: &str, pairs: &[EntailmentPair]) -> Result<Vec<EntailmentLabel>, EntailmentError> {
        let body = PredictRequest {
            model_id: model_id.to_string(),
            pairs: pairs.to_vec(),
        };
        let resp: PredictResponse = self.send(self.client.post(format!("{}/predict", self.base_url)).json(&body))?;
        if resp.labels.len() != pairs.len() {
            return Err(EntailmentError::LengthMismatch {
                expected: pairs.len(),
                got: resp.labels.len(),
            });
        }
        Ok(resp.labels)
    }
}

/// One trained model of a service, used as a plain backend.
pub struct TrainedModel<'a, S: NliService + ?Sized> {
    pub service: &'a S,
    pub model_id: String,
}

impl<S: NliService + Send + ?Sized> EntailmentBackend for TrainedModel<'_, S> {
    fn predict(&self, pairs: &[EntailmentPair]) -> Result<Vec<EntailmentLabel>, EntailmentError> {
        self.service.predict(&self.model_id, pairs)
    }
}

/// In-process service whose "training" ignores the examples and whose
/// predictions come from the lexical fallback. Lets the LOO protocol run
/// with no model server.
#[derive(Debug, Default)]
pub struct LexicalNliService {
    pub lexical: LexicalEntailment,
    trained: std::sync::atomic::AtomicUsize,
}

impl LexicalNliService {
    pub fn new(lexical: LexicalEntailment) -> Self {
        LexicalNliService {
            lexical,
            trained: Default::default(),
        }
    }
}

impl NliService for LexicalNliService {
    fn health(&self) -> Result<HealthResponse, EntailmentError> {
        Ok(HealthResponse { status: "ok".into() })
    }

    fn train(&self, request: &TrainRequest) -> Result<ModelHandle, EntailmentError> {
        let n = self.trained.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        Ok(ModelHandle {
            model_id: format!("lexical-{n}"),
            created_at: None,
            hyperparams: Some(request.hyperparams.clone()),
        })
    }

    fn predict(&self, _model_id: &str, pairs: &[EntailmentPair]) -> Result<Vec<EntailmentLabel>, EntailmentError> {
        self.lexical.predict(pairs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LooFold {
    pub held_out: String,
    pub train: Vec<TrainExample>,
    /// Held-out candidates and their pairs, in refined-set order.
    pub test: Vec<(ReqId, EntailmentPair)>,
}

/// One fold per rationale, in dataset order. Train pairs are the other
/// rationales' refined candidates labelled by gold membership.
pub fn build_loo_folds(
    dataset: &Dataset,
    refined: &HashMap<String, ImpactSet>,
) -> Result<Vec<LooFold>, EntailmentError> {
    if !dataset.has_gold() {
        return Err(CorpusError::GoldAbsent(dataset.name().to_string()).into());
    }
    let mut labelled: Vec<(&str, Vec<(ReqId, EntailmentPair, EntailmentLabel)>)> = Vec::new();
    for c in dataset.rationales() {
        let set = refined
            .get(&c.id)
            .ok_or_else(|| EntailmentError::MissingRefinedSet(c.id.clone()))?;
        let gold = dataset.gold_for(&c.id)?;
        let pairs = pairs_for(c, dataset, set)?;
        let rows = set
            .iter()
            .zip(pairs)
            .map(|(cand, pair)| (cand.req_id.clone(), pair, EntailmentLabel::from_bool(gold.contains(&cand.req_id))))
            .collect();
        labelled.push((&c.id, rows));
    }

    Ok(labelled
        .iter()
        .map(|(held_out, rows)| LooFold {
            held_out: held_out.to_string(),
            train: labelled
                .iter()
                .filter(|(id, _)| id != held_out)
                .flat_map(|(_, rows)| rows.iter())
                .map(|(_, pair, label)| TrainExample {
                    rationale_text: pair.rationale_text.clone(),
                    candidate_text: pair.candidate_text.clone(),
                    label: *label,
                })
                .collect(),
            test: rows.iter().map(|(id, pair, _)| (id.clone(), pair.clone())).collect(),
        })
        .collect())
}

/// Trains a fresh model per fold and labels that fold's held-out pairs.
/// Folds with nothing to label are skipped entirely.
pub fn run_loo(
    folds: &[LooFold],
    service: &dyn NliService,
    hyperparams: &NliHyperparams,
) -> Result<LabelMap, EntailmentError> {
    let mut map = LabelMap::default();
    for fold in folds {
        if fold.test.is_empty() {
            continue;
        }
        let tag = |e: EntailmentError| EntailmentError::Fold {
            fold: fold.held_out.clone(),
            source: Box::new(e),
        };
        if !fold.train.iter().any(|e| e.label.is_entailed()) || fold.train.iter().all(|e| e.label.is_entailed()) {
            log::warn!("fold {}: training data covers a single class", fold.held_out);
        }
        let handle = service
            .train(&TrainRequest {
                examples: fold.train.clone(),
                hyperparams: hyperparams.clone(),
            })
            .map_err(tag)?;
        let pairs: Vec<EntailmentPair> = fold.test.iter().map(|(_, p)| p.clone()).collect();
        let labels = service.predict(&handle.model_id, &pairs).map_err(tag)?;
        if labels.len() != pairs.len() {
            return Err(tag(EntailmentError::LengthMismatch {
                expected: pairs.len(),
                got: labels.len(),
            }));
        }
        for ((id, _), label) in fold.test.iter().zip(labels) {
            map.0.insert((fold.held_out.clone(), id.clone()), label);
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{GoldImpact, Requirement};
    use crate::pipeline::{ImpactCandidate, Origin};
    use std::sync::Mutex;

    fn pair(r: &str, c: &str) -> EntailmentPair {
        EntailmentPair::new(r, c, "").unwrap()
    }

    #[test]
    fn lexical_identical_and_disjoint() {
        let lex = LexicalEntailment::default();
        let t = "The gateway shall encrypt telemetry";
        assert_eq!(lex.overlap(&pair(t, t)), 1.0);
        assert_eq!(lex.label(&pair(t, t)), EntailmentLabel::Entailed);
        assert_eq!(lex.label(&pair("alpha beta", "gamma delta")), EntailmentLabel::NotEntailed);
    }

    #[test]
    fn lexical_snmp_example() {
        // rationale content tokens {replace, snmp, sdn, controller}
        // premise content tokens {snmp, agent, report, faults, mentions, management}
        let p = pair(
            "replace SNMP with SDN controller",
            "SNMP agent shall report faults; mentions SNMP management",
        );
        let cov = LexicalEntailment::default();
        assert!((cov.overlap(&p) - 1.0 / 4.0).abs() < 1e-12);
        assert_eq!(cov.label(&p), EntailmentLabel::Entailed);
        let jac = LexicalEntailment::new(0.2, LexicalMeasure::Jaccard);
        assert!((jac.overlap(&p) - 1.0 / 9.0).abs() < 1e-12);
        assert_eq!(jac.label(&p), EntailmentLabel::NotEntailed);
    }

    #[test]
    fn pair_joins_requirement_and_justification() {
        let p = EntailmentPair::new("c", " req ", " why ").unwrap();
        assert_eq!(p.candidate_text, "req why");
        assert!(EntailmentPair::new(" ", "r", "j").is_err());
        assert!(EntailmentPair::new("c", "", "j").is_err());
    }

    #[test]
    fn labels_serialize_as_bits() {
        let json = serde_json::to_string(&vec![EntailmentLabel::Entailed, EntailmentLabel::NotEntailed]).unwrap();
        assert_eq!(json, "[1,0]");
        assert!(serde_json::from_str::<EntailmentLabel>("2").is_err());
    }

    fn toy() -> (Dataset, HashMap<String, ImpactSet>) {
        let ds = Dataset::new(
            "toy",
            vec![
                Requirement::new("R1", "log every access"),
                Requirement::new("R2", "encrypt stored data"),
                Requirement::new("R3", "rotate keys monthly"),
            ],
            vec![
                ChangeRationale::new("C1", "add audit logging"),
                ChangeRationale::new("C2", "strengthen encryption"),
            ],
            Some(vec![
                GoldImpact { rationale_id: "C1".into(), impacted_ids: vec!["R1".into()] },
                GoldImpact { rationale_id: "C2".into(), impacted_ids: vec!["R2".into(), "R3".into()] },
            ]),
        )
        .unwrap();
        let mut refined = HashMap::new();
        refined.insert(
            "C1".to_string(),
            ImpactSet::from_candidates([
                ImpactCandidate::new("R1", "logging", Origin::Initial),
                ImpactCandidate::new("R2", "maybe", Origin::Refinement),
            ]),
        );
        refined.insert(
            "C2".to_string(),
            ImpactSet::from_candidates([ImpactCandidate::new("R2", "crypto", Origin::Initial)]),
        );
        (ds, refined)
    }

    #[test]
    fn folds_exclude_the_held_out_rationale() {
        let (ds, refined) = toy();
        let folds = build_loo_folds(&ds, &refined).unwrap();
        assert_eq!(folds.len(), 2);
        let f1 = &folds[0];
        assert_eq!(f1.held_out, "C1");
        assert!(f1.train.iter().all(|e| e.rationale_text == "strengthen encryption"));
        assert_eq!(f1.train.len(), 1);
        assert_eq!(f1.train[0].label, EntailmentLabel::Entailed);
        assert_eq!(f1.test.len(), 2);
        // R2 was refined for C1 but is not gold for C1
        let f2 = &folds[1];
        assert_eq!(f2.train[1].label, EntailmentLabel::NotEntailed);
    }

    #[test]
    fn missing_refined_set_is_an_error() {
        let (ds, mut refined) = toy();
        refined.remove("C2");
        assert!(matches!(build_loo_folds(&ds, &refined), Err(EntailmentError::MissingRefinedSet(id)) if id == "C2"));
    }

    #[derive(Default)]
    struct Recorder {
        log: Mutex<Vec<String>>,
    }

    impl NliService for Recorder {
        fn health(&self) -> Result<HealthResponse, EntailmentError> {
            Ok(HealthResponse { status: "ok".into() })
        }
        fn train(&self, r: &TrainRequest) -> Result<ModelHandle, EntailmentError> {
            let mut log = self.log.lock().unwrap();
            let id = format!("m{}", log.len());
            log.push(format!("train {} {}", id, r.examples.len()));
            Ok(ModelHandle { model_id: id, created_at: None, hyperparams: None })
        }
        fn predict(&self, id: &str, pairs: &[EntailmentPair]) -> Result<Vec<EntailmentLabel>, EntailmentError> {
            self.log.lock().unwrap().push(format!("predict {} {}", id, pairs.len()));
            Ok(pairs.iter().map(|p| EntailmentLabel::from_bool(p.candidate_text.contains("log"))).collect())
        }
    }

    #[test]
    fn loo_trains_once_per_fold_and_predicts_held_out_only() {
        let (ds, refined) = toy();
        let folds = build_loo_folds(&ds, &refined).unwrap();
        let svc = Recorder::default();
        let map = run_loo(&folds, &svc, &NliHyperparams::default()).unwrap();
        assert_eq!(*svc.log.lock().unwrap(), ["train m0 1", "predict m0 2", "train m2 2", "predict m2 1"]);
        assert_eq!(map.len(), 3);
        assert_eq!(map.get("C1", &"R1".into()), Some(EntailmentLabel::Entailed));
        assert_eq!(map.get("C2", &"R2".into()), Some(EntailmentLabel::NotEntailed));
    }

    #[test]
    fn empty_held_out_set_makes_no_calls() {
        let (ds, mut refined) = toy();
        refined.insert("C2".into(), ImpactSet::new());
        let folds = build_loo_folds(&ds, &refined).unwrap();
        let svc = Recorder::default();
        let map = run_loo(&folds, &svc, &NliHyperparams::default()).unwrap();
        assert_eq!(svc.log.lock().unwrap().len(), 2);
        assert!(map.get("C2", &"R2".into()).is_none());
    }
}
