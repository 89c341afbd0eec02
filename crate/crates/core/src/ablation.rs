//! Which optional prompt details matter: gradient-boosted regression trees
//! over the six detail indicators, impurity-based importances, and the sign
//! of each detail's average effect.
//!
//! Trees split binary features at 0.5 (left = detail absent). Split gain is
//! `N·I − N_L·I_L − N_R·I_R` with `I` the node's mean squared deviation;
//! equal gains go to the lowest feature index. Rows are put into a canonical
//! order before fitting, so the model does not depend on input order.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::io::Read;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::ReportFormat;
use crate::promptkit::{PromptError, PromptSpec, OPTIONAL_DETAILS};

pub const N_FEATURES: usize = OPTIONAL_DETAILS.len();

// Node impurity at or below this is treated as pure.
const PURE: f64 = f64::EPSILON;

#[derive(Debug, Error)]
pub enum AblationError {
    #[error("need at least two rows, got {0}")]
    TooFewRows(usize),
    #[error("non-finite target in row {0}")]
    NonFinite(usize),
    #[error("detail {0} is never {1} in the data")]
    OneSided(u8, &'static str),
    #[error("{0} is not an optional detail")]
    NotOptional(u8),
    #[error("need at least one estimator")]
    NoEstimators,
    #[error("subsample must be in (0, 1], got {0}")]
    BadSubsample(f64),
    #[error("empty grid")]
    EmptyGrid,
    #[error("duplicate prompt {0} in context `{1}`; use per-rationale rows")]
    DuplicatePrompt(String, String),
    #[error("score table: {0}")]
    Table(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Indicators for details 1, 3, 4, 5, 6, 7 (in that order) and the F2 target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetailFeatureRow {
    pub features: [bool; N_FEATURES],
    pub target: f64,
}

impl DetailFeatureRow {
    pub fn new(features: [bool; N_FEATURES], target: f64) -> Self {
        DetailFeatureRow { features, target }
    }

    pub fn from_spec(spec: &PromptSpec, target: f64) -> Self {
        let mut features = [false; N_FEATURES];
        for (slot, d) in features.iter_mut().zip(OPTIONAL_DETAILS) {
            *slot = spec.contains(d);
        }
        DetailFeatureRow { features, target }
    }
}

pub fn feature_index(detail: u8) -> Result<usize, AblationError> {
    OPTIONAL_DETAILS
        .iter()
        .position(|&d| d == detail)
        .ok_or(AblationError::NotOptional(detail))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Fraction of rows drawn (without replacement) for each tree.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_estimators: 40,
            learning_rate: 0.1,
            max_depth: 3,
            subsample: 1.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        n_samples: usize,
        /// `N·I − N_L·I_L − N_R·I_R`.
        gain: f64,
        /// Child for rows without the feature.
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub n_root: usize,
}

impl Tree {
    pub fn predict(&self, x: &[bool; N_FEATURES]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, left, right, .. } => i = if x[*feature] { *right } else { *left },
            }
        }
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }

    /// Per-feature impurity decrease summed over splits, divided by the root
    /// sample count.
    pub fn raw_importance(&self) -> [f64; N_FEATURES] {
        let mut imp = [0.0; N_FEATURES];
        for n in &self.nodes {
            if let Node::Split { feature, gain, .. } = n {
                imp[*feature] += gain;
            }
        }
        imp.map(|g| g / self.n_root as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl GbdtModel {
    pub fn predict(&self, x: &[bool; N_FEATURES]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    /// Training MSE after 1, 2, .., all trees.
    pub fn staged_mse(&self, rows: &[DetailFeatureRow]) -> Vec<f64> {
        let mut pred = vec![self.base; rows.len()];
        self.trees
            .iter()
            .map(|t| {
                for (p, r) in pred.iter_mut().zip(rows) {
                    *p += self.learning_rate * t.predict(&r.features);
                }
                mse(&pred, rows)
            })
            .collect()
    }
}

fn mse(pred: &[f64], rows: &[DetailFeatureRow]) -> f64 {
    pred.iter().zip(rows).map(|(p, r)| (r.target - p).powi(2)).sum::<f64>() / rows.len() as f64
}

fn mean_and_impurity(idx: &[usize], y: &[f64]) -> (f64, f64) {
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / n;
    let var = idx.iter().map(|&i| (y[i] - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

struct Builder<'a> {
    x: &'a [[bool; N_FEATURES]],
    y: &'a [f64],
    max_depth: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let (mean, impurity) = mean_and_impurity(&idx, self.y);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { value: mean });
        if depth >= self.max_depth || idx.len() < 2 || impurity <= PURE {
            return slot;
        }
        let n = idx.len() as f64;
        let mut best: Option<(usize, f64, Vec<usize>, Vec<usize>)> = None;
        for f in 0..N_FEATURES {
            let (right, left): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][f]);
            if left.is_empty() || right.is_empty() {
                continue;
            }
            let (_, il) = mean_and_impurity(&left, self.y);
            let (_, ir) = mean_and_impurity(&right, self.y);
            let gain = n * impurity - left.len() as f64 * il - right.len() as f64 * ir;
            if best.as_ref().is_none_or(|b| gain > b.1) {
                best = Some((f, gain, left, right));
            }
        }
        let Some((feature, gain, left, right)) = best else {
            return slot;
        };
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[slot] = Node::Split {
            feature,
            n_samples: idx.len(),
            gain: gain.max(0.0),
            left: l,
            right: r,
        };
        slot
    }
}

fn fit_tree(x: &[[bool; N_FEATURES]], y: &[f64], idx: Vec<usize>, max_depth: usize) -> Tree {
    let n_root = idx.len();
    let mut b = Builder {
        x,
        y,
        max_depth,
        nodes: Vec::new(),
    };
    b.grow(idx, 0);
    Tree { nodes: b.nodes, n_root }
}

fn canonical(rows: &[DetailFeatureRow]) -> Vec<DetailFeatureRow> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.features.cmp(&b.features).then(a.target.total_cmp(&b.target)));
    sorted
}

/// Squared-error boosting from the target mean.
pub fn fit_gbdt(rows: &[DetailFeatureRow], params: &GbdtParams) -> Result<GbdtModel, AblationError> {
    if rows.len() < 2 {
        return Err(AblationError::TooFewRows(rows.len()));
    }
    if let Some(i) = rows.iter().position(|r| !r.target.is_finite()) {
        return Err(AblationError::NonFinite(i));
    }
    if params.n_estimators == 0 {
        return Err(AblationError::NoEstimators);
    }
    if !(params.subsample > 0.0 && params.subsample <= 1.0) {
        return Err(AblationError::BadSubsample(params.subsample));
    }
    let rows = canonical(rows);
    let n = rows.len();
    let x: Vec<[bool; N_FEATURES]> = rows.iter().map(|r| r.features).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.target).collect();
    let base = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base; n];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let draw = ((params.subsample * n as f64) as usize).max(1);

    let mut trees = Vec::with_capacity(params.n_estimators);
    for _ in 0..params.n_estimators {
        let residual: Vec<f64> = y.iter().zip(&pred).map(|(t, p)| t - p).collect();
        let idx: Vec<usize> = if draw >= n {
            (0..n).collect()
        } else {
            let mut s = sample(&mut rng, n, draw).into_vec();
            s.sort_unstable();
            s
        };
        let tree = fit_tree(&x, &residual, idx, params.max_depth);
        for (p, xi) in pred.iter_mut().zip(&x) {
            *p += params.learning_rate * tree.predict(xi);
        }
        trees.push(tree);
    }
    Ok(GbdtModel {
        base,
        learning_rate: params.learning_rate,
        trees,
    })
}

/// Raw importances averaged over trees that split at least once.
pub fn feature_importance(model: &GbdtModel) -> [f64; N_FEATURES] {
    let split_trees: Vec<&Tree> = model.trees.iter().filter(|t| t.n_splits() > 0).collect();
    let mut total = [0.0; N_FEATURES];
    for t in &split_trees {
        for (acc, v) in total.iter_mut().zip(t.raw_importance()) {
            *acc += v;
        }
    }
    if !split_trees.is_empty() {
        total.iter_mut().for_each(|v| *v /= split_trees.len() as f64);
    }
    total
}

/// Scales to sum 1. All-zero input stays zero and reports `false`.
pub fn normalize(raw: [f64; N_FEATURES]) -> ([f64; N_FEATURES], bool) {
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 {
        return ([0.0; N_FEATURES], false);
    }
    (raw.map(|v| v / sum), true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Effect {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Effect::Positive => "+",
            Effect::Negative => "-",
        })
    }
}

/// "+" iff the mean target with the detail exceeds the mean without it.
pub fn effect_sign(rows: &[DetailFeatureRow], detail: u8) -> Result<Effect, AblationError> {
    let f = feature_index(detail)?;
    let (with, without): (Vec<f64>, Vec<f64>) = {
        let (a, b): (Vec<&DetailFeatureRow>, Vec<&DetailFeatureRow>) = rows.iter().partition(|r| r.features[f]);
        (a.iter().map(|r| r.target).collect(), b.iter().map(|r| r.target).collect())
    };
    if with.is_empty() {
        return Err(AblationError::OneSided(detail, "included"));
    }
    if without.is_empty() {
        return Err(AblationError::OneSided(detail, "excluded"));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(if mean(&with) > mean(&without) {
        Effect::Positive
    } else {
        Effect::Negative
    })
}

/// Smallest grid value whose MSE is within 1e-6 (relative) of the minimum.
pub fn elbow_from_curve(grid: &[usize], mse: &[f64]) -> Result<usize, AblationError> {
    let min = mse.iter().copied().fold(f64::INFINITY, f64::min);
    grid.iter()
        .zip(mse)
        .find(|(_, &m)| m - min <= 1e-6 * min.abs())
        .map(|(&n, _)| n)
        .ok_or(AblationError::EmptyGrid)
}

/// Fits once with the largest grid value and reads the staged MSE curve.
pub fn elbow_select(rows: &[DetailFeatureRow], grid: &[usize], params: &GbdtParams) -> Result<usize, AblationError> {
    let max = *grid.iter().max().ok_or(AblationError::EmptyGrid)?;
    if grid.contains(&0) {
        return Err(AblationError::NoEstimators);
    }
    let model = fit_gbdt(rows, &GbdtParams { n_estimators: max, ..*params })?;
    let staged = model.staged_mse(&canonical(rows));
    let curve: Vec<f64> = grid.iter().map(|&n| staged[n - 1]).collect();
    elbow_from_curve(grid, &curve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetailImportance {
    pub detail: u8,
    pub score: f64,
    pub effect: Effect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub context: String,
    /// Descending by score; equal scores in detail order.
    pub entries: Vec<DetailImportance>,
    /// All raw importances were zero (e.g. constant targets).
    pub degenerate: bool,
    pub train_mse: f64,
}

impl ImportanceReport {
    pub fn score(&self, detail: u8) -> Option<f64> {
        self.entries.iter().find(|e| e.detail == detail).map(|e| e.score)
    }

    pub fn effect(&self, detail: u8) -> Option<Effect> {
        self.entries.iter().find(|e| e.detail == detail).map(|e| e.effect)
    }
}

pub fn importance_report(
    context: impl Into<String>,
    rows: &[DetailFeatureRow],
    params: &GbdtParams,
) -> Result<ImportanceReport, AblationError> {
    let model = fit_gbdt(rows, params)?;
    let (scores, ok) = normalize(feature_importance(&model));
    let mut entries = OPTIONAL_DETAILS
        .iter()
        .zip(scores)
        .map(|(&detail, score)| {
            Ok(DetailImportance {
                detail,
                score,
                effect: effect_sign(rows, detail)?,
            })
        })
        .collect::<Result<Vec<_>, AblationError>>()?;
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.detail.cmp(&b.detail)));
    Ok(ImportanceReport {
        context: context.into(),
        entries,
        degenerate: !ok,
        train_mse: model.staged_mse(&canonical(rows)).last().copied().unwrap_or(0.0),
    })
}

/// One F2 value per prompt (or per prompt and rationale), grouped by context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    #[serde(default)]
    pub context: Option<String>,
    pub prompt_id: String,
    #[serde(default)]
    pub rationale_id: Option<String>,
    pub f2: f64,
}

/// Reads a CSV with columns `prompt_id` and `f2` (a rate in [0, 1]) or
/// `F2` / `f2_pct` (a percentage), plus optional `rationale_id` and either
/// `context` or `model` and `dataset` columns (joined as `model/dataset`).
pub fn read_score_table(reader: impl Read) -> Result<Vec<ScoreRecord>, AblationError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| AblationError::Table(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let prompt = col("prompt_id").ok_or_else(|| AblationError::Table("missing `prompt_id` column".into()))?;
    let (value, scale) = match (col("f2"), col("F2").or_else(|| col("f2_pct"))) {
        (Some(c), _) => (c, 1.0),
        (None, Some(c)) => (c, 0.01),
        (None, None) => return Err(AblationError::Table("missing `f2`, `F2` or `f2_pct` column".into())),
    };
    let context = col("context");
    let (model, dataset) = (col("model"), col("dataset"));
    let rationale = col("rationale_id");
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| AblationError::Table(e.to_string()))?;
        let get = |c: usize| rec.get(c).unwrap_or("").to_string();
        let raw = get(value);
        let f2: f64 = raw
            .parse()
            .map_err(|_| AblationError::Table(format!("row {}: bad F2 value `{raw}`", i + 1)))?;
        out.push(ScoreRecord {
            context: match (context, model, dataset) {
                (Some(c), _, _) => Some(get(c)),
                (None, Some(m), Some(d)) => Some(format!("{}/{}", get(m), get(d))),
                (None, m, d) => m.or(d).map(get),
            }
            .filter(|s| !s.is_empty()),
            prompt_id: get(prompt),
            rationale_id: rationale.map(get).filter(|s| !s.is_empty()),
            f2: f2 * scale,
        });
    }
    Ok(out)
}

/// Feature rows per context, contexts in first-seen order. Without
/// `per_rationale`, each prompt may appear once per context.
pub fn rows_by_context(
    records: &[ScoreRecord],
    per_rationale: bool,
) -> Result<Vec<(String, Vec<DetailFeatureRow>)>, AblationError> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, (Vec<DetailFeatureRow>, Vec<String>)> = BTreeMap::new();
    for r in records {
        let ctx = r.context.clone().unwrap_or_else(|| "all".to_string());
        let spec = PromptSpec::from_id(&r.prompt_id)?;
        let entry = groups.entry(ctx.clone()).or_insert_with(|| {
            order.push(ctx.clone());
            Default::default()
        });
        if !per_rationale {
            if entry.1.contains(&spec.prompt_id) {
                return Err(AblationError::DuplicatePrompt(spec.prompt_id, ctx));
            }
            entry.1.push(spec.prompt_id.clone());
        }
        entry.0.push(DetailFeatureRow::from_spec(&spec, r.f2));
    }
    Ok(order
        .into_iter()
        .map(|c| {
            let rows = groups.remove(&c).map(|g| g.0).unwrap_or_default();
            (c, rows)
        })
        .collect())
}

/// Table with one (detail, S, E) block per context, best detail first.
pub fn render_importance(reports: &[ImportanceReport], format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str("context,detail,S,E\n");
            for r in reports {
                for e in &r.entries {
                    let _ = writeln!(out, "{},{},{:.2},{}", r.context, e.detail, e.score, e.effect);
                }
            }
        }
        ReportFormat::Markdown => {
            for (i, r) in reports.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                let _ = writeln!(out, "### {}", r.context);
                if r.degenerate {
                    out.push_str("\n(all importances are zero)\n");
                }
                out.push_str("\n| Detail | S | E |\n|---|---|---|\n");
                for e in &r.entries {
                    let _ = writeln!(out, "| {} | {:.2} | {} |", e.detail, e.score, e.effect);
                }
            }
        }
    }
    out
}
