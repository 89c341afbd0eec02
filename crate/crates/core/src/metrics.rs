//! Precision, recall, F2, effectiveness (macro recall over rationales),
//! cost (share of the requirement list an analyst has to read), box-plot
//! summaries and report rendering.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, Dataset, ReqId};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no rationale contributes to effectiveness")]
    NothingToAverage,
    #[error("requirement count must be positive")]
    NoRequirements,
    #[error("box plot of an empty sample")]
    EmptySample,
    #[error("non-finite value in sample")]
    NonFinite,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub rationale_id: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn new(rationale_id: impl Into<String>, tp: usize, fp: usize, fn_: usize) -> Self {
        ConfusionCounts {
            rationale_id: rationale_id.into(),
            tp,
            fp,
            fn_,
        }
    }

    pub fn retrieved(&self) -> usize {
        self.tp + self.fp
    }

    pub fn gold_size(&self) -> usize {
        self.tp + self.fn_
    }
}

pub fn confusion(rationale_id: &str, predicted: &HashSet<ReqId>, gold: &HashSet<ReqId>) -> ConfusionCounts {
    ConfusionCounts {
        rationale_id: rationale_id.to_string(),
        tp: predicted.intersection(gold).count(),
        fp: predicted.difference(gold).count(),
        fn_: gold.difference(predicted).count(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf2 {
    pub precision: f64,
    pub recall: f64,
    pub f2: f64,
}

/// F-beta with beta = 2.
pub fn f2_score(precision: f64, recall: f64) -> f64 {
    let denom = 4.0 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        5.0 * precision * recall / denom
    }
}

/// Precision is 1 when nothing was retrieved and nothing was missed, 0 when
/// nothing was retrieved but gold is non-empty. Recall is 1 on empty gold.
pub fn prf2(c: &ConfusionCounts) -> Prf2 {
    let precision = if c.retrieved() == 0 {
        if c.fn_ == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        c.tp as f64 / c.retrieved() as f64
    };
    let recall = if c.gold_size() == 0 {
        1.0
    } else {
        c.tp as f64 / c.gold_size() as f64
    };
    Prf2 {
        precision,
        recall,
        f2: f2_score(precision, recall),
    }
}

pub fn totals(counts: &[ConfusionCounts]) -> ConfusionCounts {
    counts.iter().fold(ConfusionCounts::new("total", 0, 0, 0), |mut acc, c| {
        acc.tp += c.tp;
        acc.fp += c.fp;
        acc.fn_ += c.fn_;
        acc
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effectiveness {
    pub value: f64,
    /// Rationales left out of the mean (empty gold but something retrieved).
    pub excluded: Vec<String>,
}

/// Mean per-rationale recall. A rationale with empty gold counts as 1 when
/// nothing was retrieved and is excluded otherwise.
pub fn effectiveness(counts: &[ConfusionCounts]) -> Result<Effectiveness, MetricsError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut excluded = Vec::new();
    for c in counts {
        if c.gold_size() == 0 {
            if c.retrieved() == 0 {
                sum += 1.0;
                n += 1;
            } else {
                log::warn!("{}: empty gold set but {} retrieved; left out of effectiveness", c.rationale_id, c.retrieved());
                excluded.push(c.rationale_id.clone());
            }
            continue;
        }
        sum += c.tp as f64 / c.gold_size() as f64;
        n += 1;
    }
    if n == 0 {
        return Err(MetricsError::NothingToAverage);
    }
    Ok(Effectiveness {
        value: sum / n as f64,
        excluded,
    })
}

/// (ΣTP + ΣFP) / (N_c · N_req).
pub fn cost(counts: &[ConfusionCounts], n_req: usize) -> Result<f64, MetricsError> {
    if n_req == 0 {
        return Err(MetricsError::NoRequirements);
    }
    if counts.is_empty() {
        return Ok(0.0);
    }
    let t = totals(counts);
    Ok(t.retrieved() as f64 / (counts.len() * n_req) as f64)
}

/// Linear interpolation between order statistics (the "type 7" rule).
/// `sorted` must be ascending and non-empty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub lower_whisker: f64,
    pub upper_whisker: f64,
    pub outliers: Vec<f64>,
}

/// Tukey box plot: whiskers reach the most extreme points within 1.5 IQR of
/// the quartiles; anything beyond is an outlier.
pub fn boxplot_summary(values: &[f64]) -> Result<DistributionSummary, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = sorted.iter().copied().filter(|v| (lo_fence..=hi_fence).contains(v)).collect();
    Ok(DistributionSummary {
        median,
        q1,
        q3,
        iqr,
        lower_whisker: inside.first().copied().unwrap_or(q1),
        upper_whisker: inside.last().copied().unwrap_or(q3),
        outliers: sorted.into_iter().filter(|v| *v < lo_fence || *v > hi_fence).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub counts: ConfusionCounts,
    pub scores: Prf2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub totals: ConfusionCounts,
    pub micro: Prf2,
    pub effectiveness: Option<f64>,
    pub cost: f64,
    pub n_c: usize,
    pub n_req: usize,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn from_counts(counts: Vec<ConfusionCounts>, n_req: usize) -> Result<Self, MetricsError> {
        let mut warnings = Vec::new();
        let eff = match effectiveness(&counts) {
            Ok(e) => {
                warnings.extend(e.excluded.iter().map(|id| format!("{id}: empty gold set, left out of eff")));
                Some(e.value)
            }
            Err(MetricsError::NothingToAverage) => None,
            Err(e) => return Err(e),
        };
        let cost = cost(&counts, n_req)?;
        let t = totals(&counts);
        Ok(EvalReport {
            micro: prf2(&t),
            totals: t,
            n_c: counts.len(),
            rows: counts
                .into_iter()
                .map(|c| ReportRow {
                    scores: prf2(&c),
                    counts: c,
                })
                .collect(),
            effectiveness: eff,
            cost,
            n_req,
            warnings,
        })
    }
}

/// Scores predicted sets against the dataset's gold, in rationale order. A
/// rationale without a prediction counts as an empty prediction.
pub fn evaluate(dataset: &Dataset, predicted: &HashMap<String, HashSet<ReqId>>) -> Result<EvalReport, MetricsError> {
    let mut counts = Vec::new();
    let mut missing = Vec::new();
    for c in dataset.rationales() {
        let gold = dataset.gold_for(&c.id)?;
        let pred = match predicted.get(&c.id) {
            Some(p) => p.clone(),
            None => {
                missing.push(format!("{}: no prediction; scored as empty", c.id));
                HashSet::new()
            }
        };
        counts.push(confusion(&c.id, &pred, &gold));
    }
    let mut report = EvalReport::from_counts(counts, dataset.n_req())?;
    report.warnings.splice(0..0, missing);
    Ok(report)
}

/// Percentage of `x` (a rate) to one decimal, rounding halves up.
pub fn pct1(x: f64) -> f64 {
    ((x * 1000.0) + 0.5 + 1e-9).floor() / 10.0
}

fn pct(x: f64) -> String {
    format!("{:.1}", pct1(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format `{other}` (csv, markdown)")),
        }
    }
}

const COLUMNS: [&str; 7] = ["rationale_id", "TP", "FP", "FN", "P", "R", "F2"];

fn row_cells(label: &str, c: &ConfusionCounts, s: &Prf2) -> [String; 7] {
    [
        label.to_string(),
        c.tp.to_string(),
        c.fp.to_string(),
        c.fn_.to_string(),
        pct(s.precision),
        pct(s.recall),
        pct(s.f2),
    ]
}

/// Per-rationale rows, a `micro` row over summed counts, then `eff` and
/// `cost`. Rates are percentages to one decimal.
pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    let mut body: Vec<[String; 7]> = report
        .rows
        .iter()
        .map(|r| row_cells(&r.counts.rationale_id, &r.counts, &r.scores))
        .collect();
    body.push(row_cells("micro", &report.totals, &report.micro));
    let eff = report.effectiveness.map_or_else(|| "n/a".to_string(), pct);
    let cost = pct(report.cost);
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str(&COLUMNS.join(","));
            out.push('\n');
            for cells in &body {
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            let _ = writeln!(out, "eff,{eff}");
            let _ = writeln!(out, "cost,{cost}");
        }
        ReportFormat::Markdown => {
            let _ = writeln!(out, "| {} |", COLUMNS.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(COLUMNS.len()));
            for cells in &body {
                let _ = writeln!(out, "| {} |", cells.join(" | "));
            }
            out.push('\n');
            let _ = writeln!(out, "| eff | cost |");
            let _ = writeln!(out, "|---|---|");
            let _ = writeln!(out, "| {eff} | {cost} |");
        }
    }
    out
}

/// One line of the per-stage summary (initial pass, refinement, filtering).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: String,
    pub totals: ConfusionCounts,
    pub effectiveness: Option<f64>,
    pub cost: f64,
}

impl StageRow {
    pub fn from_report(stage: impl Into<String>, report: &EvalReport) -> Self {
        StageRow {
            stage: stage.into(),
            totals: report.totals.clone(),
            effectiveness: report.effectiveness,
            cost: report.cost,
        }
    }
}

/// Stage, TP, FN, FP, eff, cost.
pub fn render_stage_table(rows: &[StageRow], format: ReportFormat) -> String {
    let header = ["Stage", "TP", "FN", "FP", "eff", "cost"];
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            let eff = r.effectiveness.map_or_else(|| "n/a".to_string(), pct);
            [
                r.stage.clone(),
                r.totals.tp.to_string(),
                r.totals.fn_.to_string(),
                r.totals.fp.to_string(),
                eff,
                pct(r.cost),
            ]
        })
        .collect();
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str(&header.join(","));
            out.push('\n');
            for c in &cells {
                out.push_str(&c.join(","));
                out.push('\n');
            }
        }
        ReportFormat::Markdown => {
            let _ = writeln!(out, "| {} |", header.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
            for c in &cells {
                let mut c = c.clone();
                for v in &mut c[4..] {
                    if v != "n/a" {
                        v.push('%');
                    }
                }
                let _ = writeln!(out, "| {} |", c.join(" | "));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ids(v: &[&str]) -> HashSet<ReqId> {
        v.iter().map(|s| ReqId::from(*s)).collect()
    }

    #[test]
    fn confusion_examples() {
        let c = confusion("c", &ids(&["a", "b"]), &ids(&["a", "b"]));
        assert_eq!((c.tp, c.fp, c.fn_), (2, 0, 0));
        let c = confusion("c", &ids(&["a", "b", "c"]), &ids(&["a"]));
        assert_eq!((c.tp, c.fp, c.fn_), (1, 2, 0));
        let c = confusion("c", &ids(&[]), &ids(&["a"]));
        assert_eq!((c.tp, c.fp, c.fn_), (0, 0, 1));
    }

    #[test]
    fn degenerate_precision() {
        assert_eq!(prf2(&ConfusionCounts::new("c", 0, 0, 1)).precision, 0.0);
        let all_empty = prf2(&ConfusionCounts::new("c", 0, 0, 0));
        assert_eq!((all_empty.precision, all_empty.recall, all_empty.f2), (1.0, 1.0, 1.0));
        assert_eq!(prf2(&ConfusionCounts::new("c", 0, 3, 2)).f2, 0.0);
    }

    #[test]
    fn f2_published_pairs() {
        assert_eq!(pct1(f2_score(0.857, 0.818)), 82.6);
        assert_eq!(pct1(f2_score(0.294, 0.909)), 64.1);
    }

    #[test]
    fn effectiveness_is_macro_recall() {
        let e = effectiveness(&[ConfusionCounts::new("a", 2, 0, 0), ConfusionCounts::new("b", 1, 5, 1)]).unwrap();
        assert_abs_diff_eq!(e.value, 0.75);
        assert!(effectiveness(&[]).is_err());
        let e = effectiveness(&[ConfusionCounts::new("a", 1, 0, 0), ConfusionCounts::new("b", 0, 2, 0)]).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.excluded, ["b"]);
    }

    #[test]
    fn cost_is_retrieved_share() {
        let counts: Vec<_> = (0..5).map(|i| ConfusionCounts::new(format!("c{i}"), 0, 0, 0)).collect();
        assert_eq!(cost(&counts, 72).unwrap(), 0.0);
        assert!(cost(&counts, 0).is_err());
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(pct1(0.0865), 8.7);
        assert_eq!(pct1(0.08649), 8.6);
        assert_eq!(pct1(0.0), 0.0);
        assert_eq!(pct1(1.0), 100.0);
        assert_eq!(pct1(31.0 / 360.0), 8.6);
    }

    #[test]
    fn boxplot_one_to_nine() {
        let v: Vec<f64> = (1..=9).map(f64::from).collect();
        let s = boxplot_summary(&v).unwrap();
        assert_eq!((s.q1, s.median, s.q3, s.iqr), (3.0, 5.0, 7.0, 4.0));
        assert_eq!((s.lower_whisker, s.upper_whisker), (1.0, 9.0));
        assert!(s.outliers.is_empty());
    }

    #[test]
    fn boxplot_flags_extreme_value() {
        let mut v: Vec<f64> = (1..=9).map(f64::from).collect();
        v.push(100.0);
        let s = boxplot_summary(&v).unwrap();
        // positions 2.25 and 6.75 over ten sorted values
        assert_abs_diff_eq!(s.q1, 3.25);
        assert_abs_diff_eq!(s.q3, 7.75);
        assert_eq!(s.upper_whisker, 9.0);
        assert_eq!(s.outliers, vec![100.0]);
    }

    #[test]
    fn boxplot_constant_and_empty() {
        let s = boxplot_summary(&[0.4; 5]).unwrap();
        assert_eq!(s.iqr, 0.0);
        assert!(s.outliers.is_empty());
        assert!(boxplot_summary(&[]).is_err());
    }

    #[test]
    fn empty_report_has_header_and_footer() {
        let r = EvalReport::from_counts(vec![], 10).unwrap();
        let csv = render_report(&r, ReportFormat::Csv);
        assert_eq!(csv, "rationale_id,TP,FP,FN,P,R,F2\nmicro,0,0,0,100.0,100.0,100.0\neff,n/a\ncost,0.0\n");
    }

    #[test]
    fn csv_and_markdown_agree() {
        let r = EvalReport::from_counts(
            vec![ConfusionCounts::new("C1", 3, 1, 1), ConfusionCounts::new("C2", 2, 0, 2)],
            20,
        )
        .unwrap();
        let csv = render_report(&r, ReportFormat::Csv);
        let md = render_report(&r, ReportFormat::Markdown);
        let nums = |s: &str| -> Vec<String> {
            s.split(|c: char| !(c.is_ascii_digit() || c == '.'))
                .filter(|t| !t.is_empty() && t.chars().any(|c| c.is_ascii_digit()))
                .map(str::to_string)
                .collect()
        };
        assert_eq!(nums(&csv), nums(&md));
    }
}
