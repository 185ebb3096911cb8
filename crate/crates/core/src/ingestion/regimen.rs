//! Dose-regimen extraction from free-text group descriptions.
//!
//! Pattern table (case-insensitive unless noted):
//!
//! | pattern                                | result                    |
//! |----------------------------------------|---------------------------|
//! | taxonomy active-principle label        | candidate (longest match) |
//! | `<num> <unit>`, `<num>-<num> <unit>`   | dose range                |
//! | `bid`, `b.i.d.`, `twice daily/a day`   | 2 intakes/day             |
//! | `tid`, `t.i.d.`                        | 3 intakes/day             |
//! | `qid`, `q.i.d.`                        | 4 intakes/day             |
//! | `qd`, `once daily`, `once a day`       | 1 intake/day              |
//! | `<n> times per day`, `<n>-<m> times per day` (also `a day`, `daily`) | n..m intakes/day |
//! | route keywords (`oral`, `po`, `iv`, ...) | route                   |
//! | release keywords (`extended release`, `IR`/`ER`/`XR`/`SR`/`CR`, upper case only) | release |
//!
//! Ranges accept `-`, `–` or `to`. Units are spelled canonically (`mcg`,
//! `ug` become `µg`; `iu` becomes `IU`) but never converted.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::{DoseRange, IntakeRange, Release, Route};
use crate::taxonomy::{NodeKind, Taxonomy};

/// Byte range into the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start..self.end]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extracted<T> {
    pub value: T,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub span: Span,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegimenExtraction {
    pub active_principle_candidates: Vec<Candidate>,
    pub dose_range: Option<Extracted<DoseRange>>,
    pub intakes_per_day: Option<Extracted<IntakeRange>>,
    pub route: Option<Extracted<Route>>,
    pub release: Option<Extracted<Release>>,
}

const NUM: &str = r"(\d+(?:\.\d+)?)";
const RANGE_SEP: &str = r"\s*(?:-|–|to)\s*";

static DOSE: LazyLock<Regex> = LazyLock::new(|| {
    let units = [
        "mg/kg", "mg/m2", "mg/h", "mcg/kg", "µg/kg", "μg/kg", "ug/kg", "mcg/h", "µg/h", "μg/h", "ug/h", "mg", "mcg",
        "µg", "μg", "ug", "g", "ml", "iu", "%",
    ];
    let units = units.map(regex::escape).join("|");
    Regex::new(&format!(r"(?i){NUM}(?:{RANGE_SEP}{NUM})?\s*({units})")).expect("dose pattern")
});

static INTAKES: LazyLock<Regex> = LazyLock::new(|| {
    let counted = format!(r"{NUM}(?:{RANGE_SEP}{NUM})?\s*(?:times|x)\s*(?:(?:per|a|/)\s*day|daily)");
    Regex::new(&format!(
        r"(?i)(?:^|[^\p{{L}}\p{{N}}])({counted}|b\.i\.d\.?|bid|t\.i\.d\.?|tid|q\.i\.d\.?|qid|q\.d\.?|qd|once daily|once a day|twice daily|twice a day)(?:$|[^\p{{L}}\p{{N}}])"
    ))
    .expect("intake pattern")
});

static ROUTE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)(?:^|[^\p{L}\p{N}])(orally|oral|per os|p\.o\.|po|intravenously|intravenous|i\.v\.|iv|subcutaneously|subcutaneous|s\.c\.|sc|transdermal|patch|topically|topical|intramuscularly|intramuscular|i\.m\.|im|rectally|rectal|suppository|intranasally|intranasal|nasal)(?:$|[^\p{L}\p{N}])",
    )
    .expect("route pattern")
});

static RELEASE_WORDS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)(?:^|[^\p{L}\p{N}])((?:immediate|extended|modified|prolonged|controlled|sustained)[- ]release)(?:$|[^\p{L}\p{N}])",
    )
    .expect("release pattern")
});

static RELEASE_ABBREV: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:^|[^\p{L}\p{N}])(IR|ER|XR|SR|CR)(?:$|[^\p{L}\p{N}])").expect("release abbreviations")
});

fn canonical_unit(unit: &str) -> String {
    let lower = unit.to_lowercase().replace('μ', "µ");
    match lower.as_str() {
        "mcg" | "ug" => "µg".into(),
        "mcg/kg" | "ug/kg" => "µg/kg".into(),
        "mcg/h" | "ug/h" => "µg/h".into(),
        "iu" => "IU".into(),
        _ => lower,
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Parses a dose expression; exposed so callers can re-check a reported span.
pub fn parse_dose(text: &str) -> Option<Extracted<DoseRange>> {
    for caps in DOSE.captures_iter(text) {
        let whole = caps.get(0)?;
        let before_ok = text[..whole.start()].chars().next_back().is_none_or(|c| !is_word_char(c) && c != '.');
        let after_ok = text[whole.end()..].chars().next().is_none_or(|c| !is_word_char(c));
        if !before_ok || !after_ok {
            continue;
        }
        let min: f64 = caps[1].parse().ok()?;
        let max: f64 = caps.get(2).map_or(Some(min), |m| m.as_str().parse().ok())?;
        if min > max {
            continue;
        }
        return Some(Extracted {
            value: DoseRange::new(min, max, canonical_unit(&caps[3])),
            span: Span { start: whole.start(), end: whole.end() },
        });
    }
    None
}

/// Parses an intake-frequency expression.
pub fn parse_intakes(text: &str) -> Option<Extracted<IntakeRange>> {
    for caps in INTAKES.captures_iter(text) {
        let m = caps.get(1)?;
        let token = m.as_str().to_lowercase().replace('.', "");
        let range = match token.as_str() {
            "bid" | "twice daily" | "twice a day" => IntakeRange::new(2.0, 2.0),
            "tid" => IntakeRange::new(3.0, 3.0),
            "qid" => IntakeRange::new(4.0, 4.0),
            "qd" | "once daily" | "once a day" => IntakeRange::new(1.0, 1.0),
            _ => {
                let min: f64 = caps.get(2)?.as_str().parse().ok()?;
                let max: f64 = caps.get(3).map_or(Some(min), |v| v.as_str().parse().ok())?;
                if min > max {
                    continue;
                }
                IntakeRange::new(min, max)
            }
        };
        return Some(Extracted { value: range, span: Span { start: m.start(), end: m.end() } });
    }
    None
}

fn parse_route(text: &str) -> Option<Extracted<Route>> {
    let caps = ROUTE.captures(text)?;
    let m = caps.get(1)?;
    let route = match m.as_str().to_lowercase().as_str() {
        "orally" | "oral" | "per os" | "p.o." | "po" => Route::Oral,
        "intravenously" | "intravenous" | "i.v." | "iv" => Route::Intravenous,
        "subcutaneously" | "subcutaneous" | "s.c." | "sc" => Route::Subcutaneous,
        "transdermal" | "patch" => Route::Transdermal,
        "topically" | "topical" => Route::Topical,
        "intramuscularly" | "intramuscular" | "i.m." | "im" => Route::Intramuscular,
        "rectally" | "rectal" | "suppository" => Route::Rectal,
        _ => Route::Nasal,
    };
    Some(Extracted { value: route, span: Span { start: m.start(), end: m.end() } })
}

fn parse_release(text: &str) -> Option<Extracted<Release>> {
    let words = RELEASE_WORDS.captures(text).and_then(|c| c.get(1));
    let abbrev = RELEASE_ABBREV.captures(text).and_then(|c| c.get(1));
    let m = match (words, abbrev) {
        (Some(a), Some(b)) => {
            if a.start() <= b.start() {
                a
            } else {
                b
            }
        }
        (a, b) => a.or(b)?,
    };
    let lower = m.as_str().to_lowercase();
    let release = if lower.starts_with("immediate") || lower == "ir" { Release::Immediate } else { Release::Modified };
    Some(Extracted { value: release, span: Span { start: m.start(), end: m.end() } })
}

/// Longest-match detector for taxonomy labels of one kind.
#[derive(Debug, Clone)]
pub struct LabelMatcher {
    pattern: Option<Regex>,
    ids: BTreeMap<String, String>,
}

impl LabelMatcher {
    pub fn new(taxonomy: &Taxonomy, kind: NodeKind) -> Self {
        let mut ids = BTreeMap::new();
        for id in taxonomy.ids_of_kind(kind) {
            let node = taxonomy.get(id).expect("indexed id");
            for label in std::iter::once(&node.label_en).chain(node.label_fr.as_ref()) {
                let key = label.trim().to_lowercase();
                if !key.is_empty() {
                    ids.entry(key).or_insert_with(|| id.to_string());
                }
            }
        }
        let mut labels: Vec<&String> = ids.keys().collect();
        labels.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then(a.cmp(b)));
        let pattern = (!labels.is_empty()).then(|| {
            let alternation = labels.iter().map(|l| regex::escape(l)).collect::<Vec<_>>().join("|");
            Regex::new(&format!(r"(?i)(?:^|[^\p{{L}}\p{{N}}])({alternation})(?:$|[^\p{{L}}\p{{N}}])"))
                .expect("label pattern")
        });
        LabelMatcher { pattern, ids }
    }

    /// Non-overlapping matches, left to right, longest label first.
    pub fn find_all(&self, text: &str) -> Vec<Candidate> {
        let Some(re) = &self.pattern else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let mut from = 0;
        while from <= text.len() {
            let Some(caps) = re.captures_at(text, from) else {
                break;
            };
            let m = caps.get(1).expect("label group");
            if let Some(id) = self.ids.get(&m.as_str().to_lowercase()) {
                out.push(Candidate { id: id.clone(), span: Span { start: m.start(), end: m.end() } });
            }
            // Resume at the end of the label so a shared separator can open the next match.
            from = m.end();
        }
        out
    }
}

/// Reusable extractor holding the compiled active-principle matcher.
#[derive(Debug, Clone)]
pub struct RegimenExtractor {
    principles: LabelMatcher,
}

impl RegimenExtractor {
    pub fn new(taxonomy: &Taxonomy) -> Self {
        RegimenExtractor { principles: LabelMatcher::new(taxonomy, NodeKind::ActivePrinciple) }
    }

    pub fn extract(&self, text: &str) -> RegimenExtraction {
        RegimenExtraction {
            active_principle_candidates: self.principles.find_all(text),
            dose_range: parse_dose(text),
            intakes_per_day: parse_intakes(text),
            route: parse_route(text),
            release: parse_release(text),
        }
    }
}

/// One-shot extraction; build a [`RegimenExtractor`] when processing many texts.
pub fn extract_regimen(text: &str, taxonomy: &Taxonomy) -> RegimenExtraction {
    RegimenExtractor::new(taxonomy).extract(text)
}
