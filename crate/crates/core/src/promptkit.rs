//! Prompt variants and prompt rendering.
//!
//! Seven prompt details follow the Role / Instruction / Context layout:
//!
//! | detail | component   | content                                  |
//! |--------|-------------|------------------------------------------|
//! | 1      | role        | requirements-engineer persona            |
//! | 2      | instruction | core impact-analysis directive (always)  |
//! | 3      | instruction | use commonsense knowledge                |
//! | 4      | instruction | keyword semantic relations               |
//! | 5      | context     | what change impact analysis is           |
//! | 6      | context     | what a change rationale is               |
//! | 7      | context     | application domain                       |
//!
//! Every subset of the six optional details, unioned with detail 2, gives
//! one of 64 prompt variants `P1..P64`. The wording of each detail is
//! frozen in `templates/`; golden tests pin the rendered bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ChangeRationale, Dataset, Requirement};
use crate::pipeline::ImpactCandidate;

/// Output directive every impact prompt must carry.
pub const OUTPUT_DIRECTIVE: &str = "impacted ReqID: <ID> justification: <text>";

pub const OPTIONAL_DETAILS: [u8; 6] = [1, 3, 4, 5, 6, 7];
pub const MANDATORY_DETAIL: u8 = 2;
pub const PROMPT_COUNT: usize = 64;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt detail must be in 1..=7, got {0}")]
    InvalidDetail(u8),
    #[error("prompt detail set {0:?} lacks the mandatory detail 2")]
    MissingCoreDirective(Vec<u8>),
    #[error("unknown prompt id `{0}` (expected P1..P64)")]
    UnknownPromptId(String),
    #[error("cannot render a prompt over an empty requirement list")]
    EmptyRequirementList,
    #[error("nothing to refine: every requirement was already selected")]
    NothingToRefine,
    #[error("cannot rank an empty candidate set")]
    EmptyCandidates,
    #[error("template {path}: {source}")]
    Template {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("output format template must contain `{OUTPUT_DIRECTIVE}`")]
    MissingDirective,
}

/// One of the seven prompt details.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct DetailId(u8);

impl DetailId {
    pub fn new(value: u8) -> Result<Self, PromptError> {
        if (1..=7).contains(&value) {
            Ok(DetailId(value))
        } else {
            Err(PromptError::InvalidDetail(value))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Circled-digit glyph used in report tables.
    pub fn glyph(self) -> char {
        ['①', '②', '③', '④', '⑤', '⑥', '⑦'][usize::from(self.0 - 1)]
    }
}

impl TryFrom<u8> for DetailId {
    type Error = PromptError;
    fn try_from(value: u8) -> Result<Self, Self::Error> {
        DetailId::new(value)
    }
}

impl From<DetailId> for u8 {
    fn from(d: DetailId) -> u8 {
        d.0
    }
}

impl fmt::Display for DetailId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptSpec {
    pub prompt_id: String,
    pub details: BTreeSet<DetailId>,
}

impl PromptSpec {
    pub fn contains(&self, detail: u8) -> bool {
        self.details.iter().any(|d| d.0 == detail)
    }

    /// Looks a variant up by its canonical id (`P1`..`P64`, case-insensitive).
    pub fn from_id(id: &str) -> Result<Self, PromptError> {
        let n: usize = id
            .trim()
            .strip_prefix(['P', 'p'])
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| PromptError::UnknownPromptId(id.to_string()))?;
        if !(1..=PROMPT_COUNT).contains(&n) {
            return Err(PromptError::UnknownPromptId(id.to_string()));
        }
        Ok(all_prompts()[n - 1].clone())
    }

    /// Finds the canonical variant holding exactly `details`.
    pub fn from_details(details: &[u8]) -> Result<Self, PromptError> {
        let mut set = BTreeSet::new();
        for &d in details {
            set.insert(DetailId::new(d)?);
        }
        if !set.contains(&DetailId(MANDATORY_DETAIL)) {
            return Err(PromptError::MissingCoreDirective(details.to_vec()));
        }
        Ok(all_prompts()
            .iter()
            .find(|p| p.details == set)
            .cloned()
            .expect("every detail set containing 2 is enumerated"))
    }

    /// `{1,2,5,6}`
    pub fn detail_label(&self) -> String {
        let inner: Vec<String> = self.details.iter().map(|d| d.to_string()).collect();
        format!("{{{}}}", inner.join(","))
    }

    /// `①②⑤⑥`
    pub fn glyphs(&self) -> String {
        self.details.iter().map(|d| d.glyph()).collect()
    }
}

/// The 64 prompt variants: optional-detail subsets by ascending size, then
/// lexicographically by detail number, each unioned with detail 2.
pub fn enumerate_prompts() -> Vec<PromptSpec> {
    let mut out = Vec::with_capacity(PROMPT_COUNT);
    for size in 0..=OPTIONAL_DETAILS.len() {
        let mut combos = Vec::new();
        combinations(&OPTIONAL_DETAILS, size, 0, &mut Vec::new(), &mut combos);
        for combo in combos {
            let mut details: BTreeSet<DetailId> = combo.into_iter().map(DetailId).collect();
            details.insert(DetailId(MANDATORY_DETAIL));
            out.push(PromptSpec {
                prompt_id: format!("P{}", out.len() + 1),
                details,
            });
        }
    }
    out
}

fn all_prompts() -> &'static [PromptSpec] {
    static PROMPTS: OnceLock<Vec<PromptSpec>> = OnceLock::new();
    PROMPTS.get_or_init(enumerate_prompts)
}

// Emits k-subsets in lexicographic order.
fn combinations(items: &[u8], k: usize, start: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in start..items.len() {
        cur.push(items[i]);
        combinations(items, k, i + 1, cur, out);
        cur.pop();
    }
}

/// Frozen wording for every detail plus the auxiliary templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetailTextCatalog {
    details: BTreeMap<DetailId, String>,
    output_format: String,
    ranking: String,
    cot_pair: String,
    domain: String,
}

const BUILTIN_DETAILS: [&str; 7] = [
    include_str!("../templates/detail_1.txt"),
    include_str!("../templates/detail_2.txt"),
    include_str!("../templates/detail_3.txt"),
    include_str!("../templates/detail_4.txt"),
    include_str!("../templates/detail_5.txt"),
    include_str!("../templates/detail_6.txt"),
    include_str!("../templates/detail_7.txt"),
];
const BUILTIN_OUTPUT_FORMAT: &str = include_str!("../templates/output_format.txt");
const BUILTIN_RANKING: &str = include_str!("../templates/ranking.txt");
const BUILTIN_COT_PAIR: &str = include_str!("../templates/cot_pair.txt");

impl DetailTextCatalog {
    /// The templates shipped in `templates/`, compiled into the binary.
    pub fn builtin(domain: impl Into<String>) -> Self {
        let details = BUILTIN_DETAILS
            .iter()
            .enumerate()
            .map(|(i, t)| (DetailId(i as u8 + 1), t.trim_end().to_string()))
            .collect();
        DetailTextCatalog {
            details,
            output_format: BUILTIN_OUTPUT_FORMAT.trim_end().to_string(),
            ranking: BUILTIN_RANKING.trim_end().to_string(),
            cot_pair: BUILTIN_COT_PAIR.trim_end().to_string(),
            domain: domain.into(),
        }
    }

    /// Loads `detail_<n>.txt`, `output_format.txt`, `ranking.txt` and
    /// `cot_pair.txt` from a template directory.
    pub fn from_dir(dir: impl AsRef<Path>, domain: impl Into<String>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let read = |name: &str| -> Result<String, PromptError> {
            let path = dir.join(name);
            fs::read_to_string(&path)
                .map(|s| s.trim_end().to_string())
                .map_err(|source| PromptError::Template { path, source })
        };
        let mut details = BTreeMap::new();
        for n in 1..=7u8 {
            details.insert(DetailId(n), read(&format!("detail_{n}.txt"))?);
        }
        let output_format = read("output_format.txt")?;
        if !output_format.contains(OUTPUT_DIRECTIVE) {
            return Err(PromptError::MissingDirective);
        }
        Ok(DetailTextCatalog {
            details,
            output_format,
            ranking: read("ranking.txt")?,
            cot_pair: read("cot_pair.txt")?,
            domain: domain.into(),
        })
    }

    pub fn with_domain(mut self, domain: impl Into<String>) -> Self {
        self.domain = domain.into();
        self
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn detail_text(&self, detail: DetailId) -> String {
        fill(&self.details[&detail], &[("domain", &self.domain)])
    }

    pub fn output_format(&self) -> &str {
        &self.output_format
    }
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").expect("valid regex"))
}

// Single-pass substitution, so values containing `{...}` are never expanded.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    placeholder_re()
        .replace_all(template, |caps: &Captures| {
            values
                .iter()
                .find(|(k, _)| *k == &caps[1])
                .map(|(_, v)| v.to_string())
                .unwrap_or_else(|| caps[0].to_string())
        })
        .into_owned()
}

/// Collapses line breaks so a value occupies exactly one line.
pub fn flatten_line(text: &str) -> String {
    text.split(['\n', '\r'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Impact prompt over the full requirement list, in dataset order.
pub fn render_cag_prompt(
    spec: &PromptSpec,
    rationale: &ChangeRationale,
    reqs: &[Requirement],
    catalog: &DetailTextCatalog,
) -> Result<String, PromptError> {
    if reqs.is_empty() {
        return Err(PromptError::EmptyRequirementList);
    }
    Ok(render_impact_prompt(spec, rationale, reqs.iter(), catalog))
}

/// Same prompt over the requirements the first pass did not select.
pub fn render_refinement_prompt(
    spec: &PromptSpec,
    rationale: &ChangeRationale,
    complement: &[Requirement],
    catalog: &DetailTextCatalog,
) -> Result<String, PromptError> {
    if complement.is_empty() {
        return Err(PromptError::NothingToRefine);
    }
    Ok(render_impact_prompt(spec, rationale, complement.iter(), catalog))
}

/// Impact prompt over an arbitrary requirement sequence; empty sequences are allowed.
pub fn render_impact_prompt<'a>(
    spec: &PromptSpec,
    rationale: &ChangeRationale,
    reqs: impl Iterator<Item = &'a Requirement>,
    catalog: &DetailTextCatalog,
) -> String {
    let mut out = String::new();
    for detail in &spec.details {
        out.push_str(&catalog.detail_text(*detail));
        out.push_str("\n\n");
    }
    out.push_str("Change Rationale: ");
    out.push_str(&flatten_line(&rationale.text));
    out.push_str("\n\nRequirements List:\n");
    for req in reqs {
        out.push_str(req.id.as_str());
        out.push_str(": ");
        out.push_str(&flatten_line(&req.text));
        out.push('\n');
    }
    out.push('\n');
    out.push_str(catalog.output_format());
    out.push('\n');
    out
}

/// Ranking prompt over an impact set. Requirement texts come from `dataset`;
/// justifications are flattened to one line each.
pub fn render_ranking_prompt(
    rationale: &ChangeRationale,
    candidates: &[ImpactCandidate],
    dataset: &Dataset,
    catalog: &DetailTextCatalog,
) -> Result<String, PromptError> {
    if candidates.is_empty() {
        return Err(PromptError::EmptyCandidates);
    }
    let ids: Vec<&str> = candidates.iter().map(|c| c.req_id.as_str()).collect();
    let justifications: Vec<String> = candidates
        .iter()
        .map(|c| {
            let req_text = dataset
                .requirement(c.req_id.as_str())
                .map(|r| flatten_line(&r.text))
                .unwrap_or_default();
            format!(
                "{}: {} | {}",
                c.req_id,
                req_text,
                flatten_line(&c.justification)
            )
        })
        .collect();
    let rendered = fill(
        &catalog.ranking,
        &[
            ("rationale", &flatten_line(&rationale.text)),
            ("req_ids", &ids.join(", ")),
            ("justifications", &justifications.join("\n")),
        ],
    );
    Ok(rendered + "\n")
}

/// Yes/no chain-of-thought prompt for one (rationale, requirement) pair.
pub fn render_cot_pair_prompt(
    rationale: &ChangeRationale,
    req: &Requirement,
    catalog: &DetailTextCatalog,
) -> String {
    fill(
        &catalog.cot_pair,
        &[
            ("rationale", &flatten_line(&rationale.text)),
            ("requirement", &format!("{}: {}", req.id, flatten_line(&req.text))),
        ],
    ) + "\n"
}
