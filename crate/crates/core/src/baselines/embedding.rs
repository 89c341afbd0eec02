use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::corpus::{ChangeRationale, Dataset, ReqId};

pub trait Embedder: Send + Sync {
    /// One vector per text, in order.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BaselineError>;
}

/// Feature-hashed bag of lowercased alphanumeric tokens with signed buckets,
/// scaled to unit length. Pure and deterministic; carries no semantics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    pub dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder { dim: 256 }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashingEmbedder { dim }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for tok in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let h = fnv1a(tok.to_lowercase().as_bytes());
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // no tokens (or full cancellation): a fixed unit vector
            v[0] = 1.0;
        } else {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Embedder for HashingEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BaselineError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Client of an embeddings endpoint: POST `{model, input: [..]}`, answer
/// `{data: [{embedding, index}]}`.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    endpoint: String,
    model: String,
    api_key_env: Option<String>,
    client: Client,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedItem>,
}

#[derive(Deserialize)]
struct EmbedItem {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key_env: Option<String>) -> Result<Self, BaselineError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| BaselineError::Embedding(e.to_string()))?;
        Ok(HttpEmbedder {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env,
            client,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BaselineError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut req = self.client.post(&self.endpoint).json(&EmbedRequest {
            model: &self.model,
            input: texts,
        });
        if let Some(var) = &self.api_key_env {
            let key = std::env::var(var).map_err(|_| BaselineError::Embedding(format!("credential environment variable `{var}` is not set")))?;
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| BaselineError::Embedding(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| BaselineError::Embedding(e.to_string()))?;
        if !status.is_success() {
            return Err(BaselineError::Embedding(format!("HTTP {}: {body}", status.as_u16())));
        }
        let mut parsed: EmbedResponse =
            serde_json::from_str(&body).map_err(|e| BaselineError::Embedding(format!("bad response: {e}")))?;
        if parsed.data.len() != texts.len() {
            return Err(BaselineError::Embedding(format!(
                "{} vectors for {} texts",
                parsed.data.len(),
                texts.len()
            )));
        }
        if parsed.data.iter().all(|d| d.index.is_some()) {
            parsed.data.sort_by_key(|d| d.index);
        }
        let vectors: Vec<Vec<f64>> = parsed.data.into_iter().map(|d| d.embedding).collect();
        let dim = vectors[0].len();
        if vectors.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
            return Err(BaselineError::Embedding("inconsistent or non-finite vectors".into()));
        }
        Ok(vectors)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, BaselineError> {
    if a.len() != b.len() {
        return Err(BaselineError::DimensionMismatch(a.len(), b.len()));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(BaselineError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Every requirement with its score, descending; ties keep dataset order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRanking {
    pub entries: Vec<(ReqId, f64)>,
}

impl SimilarityRanking {
    /// Sorts `entries` (given in dataset order) by descending score.
    pub fn from_scores(mut entries: Vec<(ReqId, f64)>) -> Self {
        entries.sort_by(|a, b| b.1.total_cmp(&a.1));
        SimilarityRanking { entries }
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.1).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn top(&self, k: usize) -> Vec<ReqId> {
        self.entries.iter().take(k).map(|e| e.0.clone()).collect()
    }
}

pub fn rank_by_similarity(
    rationale: &ChangeRationale,
    dataset: &Dataset,
    embedder: &dyn Embedder,
) -> Result<SimilarityRanking, BaselineError> {
    if dataset.n_req() == 0 {
        return Err(BaselineError::EmptyDataset);
    }
    let mut texts = Vec::with_capacity(dataset.n_req() + 1);
    texts.push(rationale.text.clone());
    texts.extend(dataset.requirements().iter().map(|r| r.text.clone()));
    let vectors = embedder.embed(&texts)?;
    if vectors.len() != texts.len() {
        return Err(BaselineError::Embedding(format!("{} vectors for {} texts", vectors.len(), texts.len())));
    }
    let entries = dataset
        .requirements()
        .iter()
        .zip(&vectors[1..])
        .map(|(r, v)| Ok((r.id.clone(), cosine(&vectors[0], v)?)))
        .collect::<Result<Vec<_>, BaselineError>>()?;
    Ok(SimilarityRanking::from_scores(entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Requirement;

    #[test]
    fn hashing_is_pure_and_unit_norm() {
        let e = HashingEmbedder::default();
        for t in ["", "a", "The system shall log", "!!!", "Ünïcode text"] {
            let v = e.embed_one(t);
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12, "{t}");
            assert_eq!(v, e.embed_one(t));
        }
        assert!(e.embed(&[]).unwrap().is_empty());
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn cosine_basics() {
        assert!((cosine(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, -2.0], &[-1.0, 2.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(cosine(&[0.0], &[1.0]), Err(BaselineError::ZeroVector)));
        assert!(matches!(cosine(&[1.0], &[1.0, 0.0]), Err(BaselineError::DimensionMismatch(1, 2))));
    }

    #[test]
    fn duplicate_texts_tie_in_dataset_order() {
        let ds = Dataset::new(
            "d",
            vec![
                Requirement::new("R1", "other words entirely"),
                Requirement::new("R2", "log access events"),
                Requirement::new("R3", "log access events"),
            ],
            vec![ChangeRationale::new("C1", "log access events")],
            None,
        )
        .unwrap();
        let r = rank_by_similarity(&ds.rationales()[0], &ds, &HashingEmbedder::default()).unwrap();
        assert_eq!(r.top(2), vec![ReqId::from("R2"), ReqId::from("R3")]);
        assert!((r.entries[0].1 - 1.0).abs() < 1e-12);
    }
}
