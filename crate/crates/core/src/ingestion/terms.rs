//! MedDRA term dictionary and SOC-to-category mapping.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::xml::normalize_space;
use crate::model::AdeTerm;

/// Default SOC mapping shipped with the crate (27 MedDRA SOCs).
pub const DEFAULT_SOC_CATEGORIES: &str = include_str!("../../data/soc_categories.txt");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TermError {
    #[error("{file} line {line}: {reason}")]
    Malformed { file: &'static str, line: usize, reason: String },
    #[error("term `{label}` is not in the dictionary and SOC `{soc}` is unknown")]
    UnknownSoc { label: String, soc: String },
}

fn categories(field: &str) -> BTreeSet<String> {
    field.split(';').map(str::trim).filter(|c| !c.is_empty()).map(String::from).collect()
}

fn key(label: &str) -> String {
    normalize_space(label).to_lowercase()
}

/// `soc_name|category_id[;category_id]`
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SocMap {
    entries: BTreeMap<String, (String, BTreeSet<String>)>,
}

impl SocMap {
    pub fn parse(text: &str) -> Result<Self, TermError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = |reason: String| TermError::Malformed { file: "soc mapping", line: i + 1, reason };
            let Some((soc, cats)) = line.split_once('|') else {
                return Err(malformed("expected `soc|categories`".into()));
            };
            let cats = categories(cats);
            if !(1..=2).contains(&cats.len()) {
                return Err(malformed(format!("{} categories, expected 1 or 2", cats.len())));
            }
            let soc = normalize_space(soc);
            entries.insert(soc.to_lowercase(), (soc, cats));
        }
        Ok(SocMap { entries })
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_SOC_CATEGORIES).expect("bundled SOC mapping parses")
    }

    /// Canonical SOC name and its categories.
    pub fn get(&self, soc: &str) -> Option<(&str, &BTreeSet<String>)> {
        self.entries.get(&key(soc)).map(|(name, cats)| (name.as_str(), cats))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Term dictionary (`label|meddra_code|soc|category_id[;category_id]`) plus
/// the SOC fallback table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TermDictionary {
    terms: BTreeMap<String, AdeTerm>,
    socs: SocMap,
}

impl TermDictionary {
    pub fn parse(terms: &str, socs: SocMap) -> Result<Self, TermError> {
        let mut map = BTreeMap::new();
        for (i, raw) in terms.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = |reason: String| TermError::Malformed { file: "term dictionary", line: i + 1, reason };
            let fields: Vec<&str> = line.split('|').collect();
            if fields.len() != 4 {
                return Err(malformed(format!("expected 4 fields, found {}", fields.len())));
            }
            let label = normalize_space(fields[0]);
            if label.is_empty() {
                return Err(malformed("empty label".into()));
            }
            let cats = categories(fields[3]);
            if !(1..=2).contains(&cats.len()) {
                return Err(malformed(format!("{} categories, expected 1 or 2", cats.len())));
            }
            let code = fields[1].trim();
            let term = AdeTerm {
                label: label.clone(),
                meddra_code: (!code.is_empty()).then(|| code.to_string()),
                soc: normalize_space(fields[2]),
                category_ids: cats,
            };
            if map.insert(key(&label), term).is_some() {
                return Err(malformed(format!("duplicate label `{label}`")));
            }
        }
        Ok(TermDictionary { terms: map, socs })
    }

    pub fn socs(&self) -> &SocMap {
        &self.socs
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn lookup(&self, label: &str) -> Option<&AdeTerm> {
        self.terms.get(&key(label))
    }
}

/// Map a registry event label to a term: exact case-insensitive,
/// whitespace-normalised dictionary match, otherwise a SOC-level term that
/// keeps the registry label and takes its categories from the SOC table.
pub fn map_ade_term(label: &str, soc: &str, dictionary: &TermDictionary) -> Result<AdeTerm, TermError> {
    if let Some(term) = dictionary.lookup(label) {
        return Ok(term.clone());
    }
    let Some((soc_name, cats)) = dictionary.socs.get(soc) else {
        return Err(TermError::UnknownSoc { label: normalize_space(label), soc: soc.to_string() });
    };
    Ok(AdeTerm {
        label: normalize_space(label),
        meddra_code: None,
        soc: soc_name.to_string(),
        category_ids: cats.clone(),
    })
}
