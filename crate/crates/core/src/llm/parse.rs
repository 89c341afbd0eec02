//! Parsers for the two line-oriented LLM output formats.
//!
//! Impact passes answer with lines like
//! `impacted ReqID: R2,justification: overlaps SNMP`; the ranking pass
//! answers with `Sorted_List: R3, R1, R2`. Model text is untrusted, so the
//! impact parser never fails: unknown or repeated ids become warnings.

use std::collections::HashSet;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ReqId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum ParseWarning {
    UnknownId(String),
    DuplicateId(String),
    MissingFromRanking(String),
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseWarning::UnknownId(id) => write!(f, "dropped unknown requirement id `{id}`"),
            ParseWarning::DuplicateId(id) => write!(f, "ignored repeated requirement id `{id}`"),
            ParseWarning::MissingFromRanking(id) => {
                write!(f, "`{id}` missing from ranking; appended at the tail")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub req_id: ReqId,
    pub justification: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedImpact {
    pub selections: Vec<Selection>,
    pub warnings: Vec<ParseWarning>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedIds {
    pub order: Vec<ReqId>,
    pub warnings: Vec<ParseWarning>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RankingParseError {
    #[error("ranking output has no `Sorted_List:` line")]
    NoSortedList,
}

fn impact_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)impacted[\s*_]*req[\s_]*id[\s*]*[:=][\s*]*[\[<(]?([A-Za-z0-9][A-Za-z0-9_./\-]*)[\]>)]?[\s*]*[,;]?\s*(?:justification[\s*]*[:=][\s*]*(.*))?",
        )
        .expect("valid regex")
    })
}

fn sorted_list_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)sorted[_ ]?list[\s*]*:(.*)").expect("valid regex"))
}

/// Extracts `(id, justification)` selections in order of appearance.
pub fn parse_impact_output(text: &str, known_ids: &HashSet<ReqId>) -> ParsedImpact {
    let mut out = ParsedImpact::default();
    let mut seen: HashSet<String> = HashSet::new();
    for line in text.lines() {
        let Some(caps) = impact_line_re().captures(line) else {
            continue;
        };
        let id = caps[1].trim_end_matches(['.', '-', '/']).to_string();
        if id.is_empty() {
            continue;
        }
        if !known_ids.contains(id.as_str()) {
            out.warnings.push(ParseWarning::UnknownId(id));
            continue;
        }
        if !seen.insert(id.clone()) {
            out.warnings.push(ParseWarning::DuplicateId(id));
            continue;
        }
        let justification = caps
            .get(2)
            .map(|m| m.as_str().trim().trim_end_matches("**").trim().to_string())
            .unwrap_or_default();
        out.selections.push(Selection {
            req_id: ReqId(id),
            justification,
        });
    }
    out
}

fn ranking_tokens(segment: &str) -> Vec<String> {
    segment
        .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .map(|t| t.trim_matches(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '-')))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Reads the last `Sorted_List:` line and returns a permutation of
/// `expected` (given in candidate order): unknown ids are dropped and
/// missing ones appended in candidate order, both with warnings.
pub fn parse_ranking_output(text: &str, expected: &[ReqId]) -> Result<RankedIds, RankingParseError> {
    let lines: Vec<&str> = text.lines().collect();
    let (line_no, caps) = lines
        .iter()
        .enumerate()
        .rev()
        .find_map(|(i, l)| sorted_list_re().captures(l).map(|c| (i, c)))
        .ok_or(RankingParseError::NoSortedList)?;

    let mut tokens = ranking_tokens(&caps[1]);
    if tokens.is_empty() {
        // `Sorted_List:` alone on its line, ids on the next non-empty one
        if let Some(next) = lines[line_no + 1..].iter().find(|l| !l.trim().is_empty()) {
            tokens = ranking_tokens(next);
        }
    }

    let expected_set: HashSet<&str> = expected.iter().map(ReqId::as_str).collect();
    let mut placed: HashSet<String> = HashSet::new();
    let mut order = Vec::with_capacity(expected.len());
    let mut warnings = Vec::new();
    for tok in tokens {
        if !expected_set.contains(tok.as_str()) {
            warnings.push(ParseWarning::UnknownId(tok));
            continue;
        }
        if placed.insert(tok.clone()) {
            order.push(ReqId(tok));
        }
    }
    for id in expected {
        if !placed.contains(id.as_str()) {
            warnings.push(ParseWarning::MissingFromRanking(id.0.clone()));
            placed.insert(id.0.clone());
            order.push(id.clone());
        }
    }
    Ok(RankedIds { order, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<ReqId> {
        v.iter().map(|s| ReqId::from(*s)).collect()
    }

    fn known(v: &[&str]) -> HashSet<ReqId> {
        ids(v).into_iter().collect()
    }

    #[test]
    fn reads_the_published_line_shape() {
        let p = parse_impact_output("impacted ReqID: R2,justification: overlaps SNMP", &known(&["R1", "R2"]));
        assert_eq!(p.selections, vec![Selection { req_id: "R2".into(), justification: "overlaps SNMP".into() }]);
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn separators_and_case_are_tolerated() {
        let text = "Here is my analysis.\n\
                    IMPACTED REQID: R1, justification: a\n\
                    - impacted ReqID: R3 justification: b\n\
                    impacted ReqID: **R4**, Justification: c\n\
                    impacted reqid: R5";
        let p = parse_impact_output(text, &known(&["R1", "R3", "R4", "R5"]));
        let got: Vec<(&str, &str)> = p.selections.iter().map(|s| (s.req_id.as_str(), s.justification.as_str())).collect();
        assert_eq!(got, [("R1", "a"), ("R3", "b"), ("R4", "c"), ("R5", "")]);
    }

    #[test]
    fn empty_text_gives_nothing() {
        let p = parse_impact_output("", &known(&["R1"]));
        assert!(p.selections.is_empty() && p.warnings.is_empty());
    }

    #[test]
    fn unknown_ids_are_dropped_with_a_warning() {
        let p = parse_impact_output("impacted ReqID: R999,justification: x", &known(&["R1"]));
        assert!(p.selections.is_empty());
        assert_eq!(p.warnings, vec![ParseWarning::UnknownId("R999".into())]);
    }

    #[test]
    fn first_occurrence_wins() {
        let p = parse_impact_output(
            "impacted ReqID: R1,justification: first\nimpacted ReqID: R1,justification: second",
            &known(&["R1"]),
        );
        assert_eq!(p.selections.len(), 1);
        assert_eq!(p.selections[0].justification, "first");
        assert_eq!(p.warnings, vec![ParseWarning::DuplicateId("R1".into())]);
    }

    #[test]
    fn ranking_basic() {
        let r = parse_ranking_output("Sorted_List: R3, R1, R2", &ids(&["R1", "R2", "R3"])).unwrap();
        assert_eq!(r.order, ids(&["R3", "R1", "R2"]));
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn ranking_appends_missing_ids_in_candidate_order() {
        let r = parse_ranking_output("Sorted_List: R3, R1", &ids(&["R1", "R2", "R3"])).unwrap();
        assert_eq!(r.order, ids(&["R3", "R1", "R2"]));
        assert_eq!(r.warnings, vec![ParseWarning::MissingFromRanking("R2".into())]);
    }

    #[test]
    fn ranking_uses_the_last_sorted_list_line() {
        let text = "I will think first. The format is Sorted_List: <req_ids>\nreasoning...\nSorted_List: [R2, R9, R1]";
        let r = parse_ranking_output(text, &ids(&["R1", "R2"])).unwrap();
        assert_eq!(r.order, ids(&["R2", "R1"]));
        assert_eq!(r.warnings, vec![ParseWarning::UnknownId("R9".into())]);
    }

    #[test]
    fn ranking_ids_on_the_following_line() {
        let r = parse_ranking_output("Sorted_List:\n\nR2 R1", &ids(&["R1", "R2"])).unwrap();
        assert_eq!(r.order, ids(&["R2", "R1"]));
    }

    #[test]
    fn ranking_without_marker_is_fatal() {
        assert_eq!(
            parse_ranking_output("R1 is most relevant", &ids(&["R1"])),
            Err(RankingParseError::NoSortedList)
        );
    }
}
