//! Requirements corpora, change rationales and gold impact sets.
//!
//! A dataset lives in a single JSON document:
//!
//! ```json
//! {
//!   "name": "demo",
//!   "requirements": [{"id": "R1", "text": "..."}],
//!   "change_rationales": [{"id": "C1", "text": "...", "category": "Modification"}],
//!   "gold": [{"rationale_id": "C1", "impacted_ids": ["R1"]}]
//! }
//! ```
//!
//! Requirement order in the file is preserved; it is the order in which
//! requirements are listed inside prompts.

use std::borrow::Borrow;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// File name looked up when a dataset path points at a directory.
pub const DATASET_FILE_NAME: &str = "dataset.json";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed dataset {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("dataset `{0}` has no gold impact sets")]
    GoldAbsent(String),
}

/// Identifier of a requirement (`R12`, `REQ-4`, ...).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReqId(pub String);

impl ReqId {
    pub fn new(id: impl Into<String>) -> Self {
        ReqId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ReqId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for ReqId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for ReqId {
    fn from(s: &str) -> Self {
        ReqId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub id: ReqId,
    pub text: String,
}

impl Requirement {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Requirement {
            id: ReqId(id.into()),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChangeCategory {
    #[serde(alias = "addition")]
    Addition,
    #[serde(alias = "deletion")]
    Deletion,
    #[serde(alias = "modification")]
    Modification,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeRationale {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<ChangeCategory>,
}

impl ChangeRationale {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        ChangeRationale {
            id: id.into(),
            text: text.into(),
            category: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldImpact {
    pub rationale_id: String,
    pub impacted_ids: Vec<ReqId>,
}

/// On-disk shape of a dataset. Field names are part of the file format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct DatasetDocument {
    name: String,
    requirements: Vec<Requirement>,
    change_rationales: Vec<ChangeRationale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold: Option<Vec<GoldImpact>>,
}

/// A validated, immutable requirements dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    name: String,
    requirements: Vec<Requirement>,
    rationales: Vec<ChangeRationale>,
    gold: Option<Vec<GoldImpact>>,
    req_index: HashMap<ReqId, usize>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.requirements == other.requirements
            && self.rationales == other.rationales
            && self.gold == other.gold
    }
}

impl Dataset {
    /// Builds a dataset, trimming texts and checking every invariant.
    pub fn new(
        name: impl Into<String>,
        requirements: Vec<Requirement>,
        rationales: Vec<ChangeRationale>,
        gold: Option<Vec<GoldImpact>>,
    ) -> Result<Self, CorpusError> {
        let requirements: Vec<Requirement> = requirements
            .into_iter()
            .map(|r| Requirement {
                id: ReqId(r.id.0.trim().to_string()),
                text: r.text.trim().to_string(),
            })
            .collect();
        let rationales: Vec<ChangeRationale> = rationales
            .into_iter()
            .map(|c| ChangeRationale {
                id: c.id.trim().to_string(),
                text: c.text.trim().to_string(),
                category: c.category,
            })
            .collect();
        let gold = gold.map(|g| {
            g.into_iter()
                .map(|gi| GoldImpact {
                    rationale_id: gi.rationale_id.trim().to_string(),
                    impacted_ids: gi
                        .impacted_ids
                        .into_iter()
                        .map(|id| ReqId(id.0.trim().to_string()))
                        .collect(),
                })
                .collect::<Vec<_>>()
        });

        let mut req_index = HashMap::with_capacity(requirements.len());
        for (pos, req) in requirements.iter().enumerate() {
            if req.id.0.is_empty() {
                return Err(CorpusError::Invalid(format!(
                    "requirement at position {} has an empty id",
                    pos + 1
                )));
            }
            if req.text.is_empty() {
                return Err(CorpusError::Invalid(format!(
                    "requirement {} has empty text",
                    req.id
                )));
            }
            if req_index.insert(req.id.clone(), pos).is_some() {
                return Err(CorpusError::Invalid(format!(
                    "duplicate requirement id {}",
                    req.id
                )));
            }
        }

        let mut rationale_ids = HashSet::new();
        for (pos, c) in rationales.iter().enumerate() {
            if c.id.is_empty() {
                return Err(CorpusError::Invalid(format!(
                    "change rationale at position {} has an empty id",
                    pos + 1
                )));
            }
            if c.text.is_empty() {
                return Err(CorpusError::Invalid(format!(
                    "change rationale {} has empty text",
                    c.id
                )));
            }
            if !rationale_ids.insert(c.id.as_str()) {
                return Err(CorpusError::Invalid(format!(
                    "duplicate change rationale id {}",
                    c.id
                )));
            }
        }

        if let Some(gold) = &gold {
            let mut seen = HashSet::new();
            for g in gold {
                if !rationale_ids.contains(g.rationale_id.as_str()) {
                    return Err(CorpusError::Invalid(format!(
                        "gold entry references unknown change rationale {}",
                        g.rationale_id
                    )));
                }
                if !seen.insert(g.rationale_id.as_str()) {
                    return Err(CorpusError::Invalid(format!(
                        "duplicate gold entry for change rationale {}",
                        g.rationale_id
                    )));
                }
                let mut ids = HashSet::new();
                for id in &g.impacted_ids {
                    if !req_index.contains_key(id) {
                        return Err(CorpusError::Invalid(format!(
                            "gold for {} references unknown requirement {}",
                            g.rationale_id, id
                        )));
                    }
                    if !ids.insert(id) {
                        return Err(CorpusError::Invalid(format!(
                            "gold for {} lists requirement {} twice",
                            g.rationale_id, id
                        )));
                    }
                }
            }
        }

        Ok(Dataset {
            name: name.into(),
            requirements,
            rationales,
            gold,
            req_index,
        })
    }

    /// Parses and validates a dataset document held in memory.
    pub fn from_json_str(json: &str) -> Result<Self, CorpusError> {
        let doc: DatasetDocument =
            serde_json::from_str(json).map_err(|source| CorpusError::Parse {
                path: PathBuf::from("<memory>"),
                source,
            })?;
        Self::from_document(doc)
    }

    fn from_document(doc: DatasetDocument) -> Result<Self, CorpusError> {
        Dataset::new(doc.name, doc.requirements, doc.change_rationales, doc.gold)
    }

    /// Serializes back to the dataset document format (pretty JSON).
    pub fn to_json_string(&self) -> String {
        let doc = DatasetDocument {
            name: self.name.clone(),
            requirements: self.requirements.clone(),
            change_rationales: self.rationales.clone(),
            gold: self.gold.clone(),
        };
        // The document only holds strings and vectors, serialization cannot fail.
        serde_json::to_string_pretty(&doc).expect("dataset document serializes")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn requirements(&self) -> &[Requirement] {
        &self.requirements
    }

    pub fn rationales(&self) -> &[ChangeRationale] {
        &self.rationales
    }

    pub fn gold(&self) -> Option<&[GoldImpact]> {
        self.gold.as_deref()
    }

    pub fn has_gold(&self) -> bool {
        self.gold.is_some()
    }

    pub fn n_req(&self) -> usize {
        self.requirements.len()
    }

    pub fn n_rationales(&self) -> usize {
        self.rationales.len()
    }

    pub fn requirement(&self, id: &str) -> Option<&Requirement> {
        self.req_index.get(id).map(|&pos| &self.requirements[pos])
    }

    /// Zero-based position of a requirement in dataset order.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.req_index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.req_index.contains_key(id)
    }

    pub fn rationale(&self, id: &str) -> Option<&ChangeRationale> {
        self.rationales.iter().find(|c| c.id == id)
    }

    /// Gold impact set of one rationale. A rationale without a gold entry
    /// has an empty impact set.
    pub fn gold_for(&self, rationale_id: &str) -> Result<HashSet<ReqId>, CorpusError> {
        let gold = self
            .gold
            .as_ref()
            .ok_or_else(|| CorpusError::GoldAbsent(self.name.clone()))?;
        Ok(gold
            .iter()
            .find(|g| g.rationale_id == rationale_id)
            .map(|g| g.impacted_ids.iter().cloned().collect())
            .unwrap_or_default())
    }
}

/// Loads a dataset from a JSON file, or from `dataset.json` inside a directory.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
    let path = resolve_dataset_path(path.as_ref());
    let raw = fs::read_to_string(&path).map_err(|source| CorpusError::Io {
        path: path.clone(),
        source,
    })?;
    let doc: DatasetDocument =
        serde_json::from_str(&raw).map_err(|source| CorpusError::Parse {
            path: path.clone(),
            source,
        })?;
    Dataset::from_document(doc)
}

pub fn resolve_dataset_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(DATASET_FILE_NAME)
    } else {
        path.to_path_buf()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldStats {
    /// Distinct requirements impacted by at least one rationale.
    pub impacted: usize,
    pub n_req: usize,
    /// `impacted / n_req`, in `[0, 1]`.
    pub percentage: f64,
}

pub fn gold_stats(dataset: &Dataset) -> Result<GoldStats, CorpusError> {
    let gold = dataset
        .gold()
        .ok_or_else(|| CorpusError::GoldAbsent(dataset.name().to_string()))?;
    let union: HashSet<&ReqId> = gold.iter().flat_map(|g| g.impacted_ids.iter()).collect();
    let n_req = dataset.n_req();
    let percentage = if n_req == 0 {
        0.0
    } else {
        union.len() as f64 / n_req as f64
    };
    Ok(GoldStats {
        impacted: union.len(),
        n_req,
        percentage,
    })
}
