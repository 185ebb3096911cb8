//! Registry data model: trials, periods, patient groups, treatments and
//! ADE observations, plus validated [`Dataset`] assembly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::taxonomy::{NodeKind, Taxonomy};

/// Id of the taxonomy node that marks placebo treatments.
pub const PLACEBO_ID: &str = "placebo";

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let lower = s.trim().to_ascii_lowercase();
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str() == lower)
                    .ok_or_else(|| format!("unknown {} `{}`", stringify!($name), s.trim()))
            }
        }
    };
}

string_enum!(
    PeriodKind {
        Single => "single",
        Titration => "titration",
        Maintenance => "maintenance",
        Continuation => "continuation",
    }
);

string_enum!(
    Release {
        Immediate => "immediate",
        Modified => "modified",
        Unspecified => "unspecified",
    }
);

string_enum!(
    Route {
        Oral => "oral",
        Intravenous => "intravenous",
        Subcutaneous => "subcutaneous",
        Transdermal => "transdermal",
        Topical => "topical",
        Intramuscular => "intramuscular",
        Rectal => "rectal",
        Nasal => "nasal",
        Unspecified => "unspecified",
    }
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseRange {
    pub min: f64,
    pub max: f64,
    pub unit: String,
}

impl DoseRange {
    pub fn new(min: f64, max: f64, unit: impl Into<String>) -> Self {
        DoseRange { min, max, unit: unit.into() }
    }

    /// Overlap test; ranges in different units never intersect.
    pub fn intersects(&self, other: &DoseRange) -> bool {
        self.unit == other.unit && self.min <= other.max && other.min <= self.max
    }

    fn check(&self) -> Result<(), String> {
        check_range(self.min, self.max)?;
        if self.unit.trim().is_empty() {
            return Err("dose range has an empty unit".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntakeRange {
    pub min: f64,
    pub max: f64,
}

impl IntakeRange {
    pub fn new(min: f64, max: f64) -> Self {
        IntakeRange { min, max }
    }

    pub fn intersects(&self, other: &IntakeRange) -> bool {
        self.min <= other.max && other.min <= self.max
    }
}

fn check_range(min: f64, max: f64) -> Result<(), String> {
    if !min.is_finite() || !max.is_finite() || min < 0.0 {
        return Err(format!("invalid range {min}-{max}"));
    }
    if min > max {
        return Err(format!("range minimum {min} exceeds maximum {max}"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrugTreatment {
    pub active_principle_id: String,
    pub release: Release,
    pub route: Route,
    pub dose_range: Option<DoseRange>,
    pub intakes_per_day: Option<IntakeRange>,
}

impl DrugTreatment {
    pub fn new(active_principle_id: impl Into<String>) -> Self {
        DrugTreatment {
            active_principle_id: active_principle_id.into(),
            release: Release::Unspecified,
            route: Route::Unspecified,
            dose_range: None,
            intakes_per_day: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientGroup {
    pub id: String,
    pub label: String,
    pub n_patients: u32,
    pub treatments: Vec<DrugTreatment>,
    pub indication_ids: BTreeSet<String>,
}

impl PatientGroup {
    /// A placebo group receives nothing but placebo.
    pub fn is_placebo(&self, taxonomy: &Taxonomy) -> bool {
        !self.treatments.is_empty()
            && self.treatments.iter().all(|t| taxonomy.subsumes(PLACEBO_ID, &t.active_principle_id))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Period {
    pub kind: PeriodKind,
    pub groups: Vec<PatientGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalTrial {
    pub id: String,
    pub title: String,
    pub completion_date: Option<NaiveDate>,
    pub trial_type_ids: BTreeSet<String>,
    pub periods: Vec<Period>,
}

impl ClinicalTrial {
    pub fn group(&self, period_index: usize, group_id: &str) -> Option<&PatientGroup> {
        self.periods.get(period_index)?.groups.iter().find(|g| g.id == group_id)
    }

    /// Every group with its period index.
    pub fn groups(&self) -> impl Iterator<Item = (usize, &Period, &PatientGroup)> {
        self.periods.iter().enumerate().flat_map(|(i, p)| p.groups.iter().map(move |g| (i, p, g)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdeTerm {
    pub label: String,
    pub meddra_code: Option<String>,
    pub soc: String,
    pub category_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdeObservation {
    pub trial_id: String,
    pub period_index: usize,
    pub group_id: String,
    /// Label of the [`AdeTerm`] in the dataset's term dictionary.
    pub term: String,
    pub serious: bool,
    pub event_count: u64,
}

impl AdeObservation {
    fn key(&self) -> (&str, usize, &str, &str, bool) {
        (&self.trial_id, self.period_index, &self.group_id, &self.term, self.serious)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("duplicate trial id `{0}`")]
    DuplicateTrial(String),
    #[error("trial `{0}` has no period")]
    NoPeriods(String),
    #[error("trial `{trial}` period {period} has no group")]
    EmptyPeriod { trial: String, period: usize },
    #[error("trial `{trial}` declares group `{group}` twice")]
    DuplicateGroup { trial: String, group: String },
    #[error("group `{group}` of trial `{trial}`: {reason}")]
    InvalidGroup { trial: String, group: String, reason: String },
    #[error("unknown {kind} id `{id}` ({context})")]
    UnknownTaxonomyId { id: String, kind: NodeKind, context: String },
    #[error("term `{label}` has {count} categories; expected 1 or 2")]
    TermCategories { label: String, count: usize },
    #[error("duplicate term label `{0}`")]
    DuplicateTerm(String),
    #[error("observation references unknown {what} `{id}`")]
    DanglingReference { what: &'static str, id: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssemblyWarning {
    /// Several records for one (group, term, seriousness) were summed.
    MergedDuplicate {
        trial_id: String,
        period_index: usize,
        group_id: String,
        term: String,
        serious: bool,
        counts: Vec<u64>,
    },
}

impl fmt::Display for AssemblyWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssemblyWarning::MergedDuplicate { trial_id, period_index, group_id, term, serious, counts } => write!(
                f,
                "merged {} records for {trial_id}/{period_index}/{group_id} `{term}` (serious={serious}): {:?}",
                counts.len(),
                counts
            ),
        }
    }
}

type GroupKey = (String, usize, String);

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    taxonomy: Taxonomy,
    trials: BTreeMap<String, ClinicalTrial>,
    /// Sorted by (trial, period, group, term, serious); unique on that key.
    observations: Vec<AdeObservation>,
    terms: BTreeMap<String, AdeTerm>,
    by_group: BTreeMap<GroupKey, Range<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub trials: usize,
    pub groups: usize,
    /// Patients in non-titration periods.
    pub patients: u64,
    /// Patients in titration periods, reported separately.
    pub titration_patients: u64,
    pub observations: usize,
    pub distinct_terms: usize,
    pub mapped_terms: usize,
    pub mapped_fraction: f64,
}

/// Validate the components and build a [`Dataset`]. Duplicate observation
/// records are merged by summing their counts, with one warning each.
pub fn assemble_dataset(
    taxonomy: Taxonomy,
    trials: Vec<ClinicalTrial>,
    terms: Vec<AdeTerm>,
    observations: Vec<AdeObservation>,
) -> Result<(Dataset, Vec<AssemblyWarning>), ModelError> {
    let mut trial_map = BTreeMap::new();
    for trial in trials {
        validate_trial(&taxonomy, &trial)?;
        if trial_map.contains_key(&trial.id) {
            return Err(ModelError::DuplicateTrial(trial.id));
        }
        trial_map.insert(trial.id.clone(), trial);
    }

    let mut term_map = BTreeMap::new();
    for term in terms {
        let count = term.category_ids.len();
        if !(1..=2).contains(&count) {
            return Err(ModelError::TermCategories { label: term.label, count });
        }
        for cat in &term.category_ids {
            if !taxonomy.has(cat, NodeKind::AdeCategory) {
                return Err(ModelError::UnknownTaxonomyId {
                    id: cat.clone(),
                    kind: NodeKind::AdeCategory,
                    context: format!("term `{}`", term.label),
                });
            }
        }
        if term_map.contains_key(&term.label) {
            return Err(ModelError::DuplicateTerm(term.label));
        }
        term_map.insert(term.label.clone(), term);
    }

    for obs in &observations {
        let trial = trial_map
            .get(&obs.trial_id)
            .ok_or_else(|| ModelError::DanglingReference { what: "trial", id: obs.trial_id.clone() })?;
        if obs.period_index >= trial.periods.len() {
            return Err(ModelError::DanglingReference {
                what: "period",
                id: format!("{}#{}", obs.trial_id, obs.period_index),
            });
        }
        if trial.group(obs.period_index, &obs.group_id).is_none() {
            return Err(ModelError::DanglingReference { what: "group", id: obs.group_id.clone() });
        }
        if !term_map.contains_key(&obs.term) {
            return Err(ModelError::DanglingReference { what: "term", id: obs.term.clone() });
        }
    }

    let mut merged: BTreeMap<(String, usize, String, String, bool), Vec<u64>> = BTreeMap::new();
    for obs in observations {
        merged
            .entry((obs.trial_id, obs.period_index, obs.group_id, obs.term, obs.serious))
            .or_default()
            .push(obs.event_count);
    }
    let mut warnings = Vec::new();
    let mut records = Vec::with_capacity(merged.len());
    for ((trial_id, period_index, group_id, term, serious), counts) in merged {
        if counts.len() > 1 {
            let w = AssemblyWarning::MergedDuplicate {
                trial_id: trial_id.clone(),
                period_index,
                group_id: group_id.clone(),
                term: term.clone(),
                serious,
                counts: counts.clone(),
            };
            warn!("{w}");
            warnings.push(w);
        }
        records.push(AdeObservation {
            trial_id,
            period_index,
            group_id,
            term,
            serious,
            event_count: counts.iter().sum(),
        });
    }

    let mut by_group: BTreeMap<GroupKey, Range<usize>> = BTreeMap::new();
    for (i, obs) in records.iter().enumerate() {
        by_group
            .entry((obs.trial_id.clone(), obs.period_index, obs.group_id.clone()))
            .and_modify(|r| r.end = i + 1)
            .or_insert(i..i + 1);
    }

    Ok((Dataset { taxonomy, trials: trial_map, observations: records, terms: term_map, by_group }, warnings))
}

fn validate_trial(taxonomy: &Taxonomy, trial: &ClinicalTrial) -> Result<(), ModelError> {
    let unknown =
        |id: &str, kind: NodeKind, context: String| ModelError::UnknownTaxonomyId { id: id.to_string(), kind, context };
    if trial.periods.is_empty() {
        return Err(ModelError::NoPeriods(trial.id.clone()));
    }
    for tt in &trial.trial_type_ids {
        if !taxonomy.has(tt, NodeKind::TrialType) {
            return Err(unknown(tt, NodeKind::TrialType, format!("trial `{}`", trial.id)));
        }
    }
    let mut seen = BTreeSet::new();
    for (pi, period) in trial.periods.iter().enumerate() {
        if period.groups.is_empty() {
            return Err(ModelError::EmptyPeriod { trial: trial.id.clone(), period: pi });
        }
        for group in &period.groups {
            let invalid =
                |reason: String| ModelError::InvalidGroup { trial: trial.id.clone(), group: group.id.clone(), reason };
            if !seen.insert(group.id.as_str()) {
                return Err(ModelError::DuplicateGroup { trial: trial.id.clone(), group: group.id.clone() });
            }
            if group.n_patients == 0 {
                return Err(invalid("group has no patients".into()));
            }
            if group.treatments.is_empty() {
                return Err(invalid("group has no treatment".into()));
            }
            if group.indication_ids.is_empty() {
                return Err(invalid("group has no indication".into()));
            }
            let context = || format!("trial `{}` group `{}`", trial.id, group.id);
            for ind in &group.indication_ids {
                if !taxonomy.has(ind, NodeKind::Indication) {
                    return Err(unknown(ind, NodeKind::Indication, context()));
                }
            }
            for t in &group.treatments {
                if !taxonomy.has(&t.active_principle_id, NodeKind::ActivePrinciple) {
                    return Err(unknown(&t.active_principle_id, NodeKind::ActivePrinciple, context()));
                }
                if let Some(d) = &t.dose_range {
                    d.check().map_err(invalid)?;
                }
                if let Some(i) = &t.intakes_per_day {
                    check_range(i.min, i.max).map_err(invalid)?;
                }
            }
        }
    }
    Ok(())
}

impl Dataset {
    pub fn empty(taxonomy: Taxonomy) -> Dataset {
        Dataset {
            taxonomy,
            trials: BTreeMap::new(),
            observations: Vec::new(),
            terms: BTreeMap::new(),
            by_group: BTreeMap::new(),
        }
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn trials(&self) -> impl Iterator<Item = &ClinicalTrial> {
        self.trials.values()
    }

    pub fn trial(&self, id: &str) -> Option<&ClinicalTrial> {
        self.trials.get(id)
    }

    pub fn observations(&self) -> &[AdeObservation] {
        &self.observations
    }

    pub fn terms(&self) -> impl Iterator<Item = &AdeTerm> {
        self.terms.values()
    }

    pub fn term(&self, label: &str) -> Option<&AdeTerm> {
        self.terms.get(label)
    }

    /// Observation records of one group, sorted by (term, serious).
    pub fn group_observations(&self, trial_id: &str, period_index: usize, group_id: &str) -> &[AdeObservation] {
        self.by_group
            .get(&(trial_id.to_string(), period_index, group_id.to_string()))
            .map(|r| &self.observations[r.clone()])
            .unwrap_or(&[])
    }

    pub fn summary(&self) -> DatasetSummary {
        dataset_summary(self)
    }
}

pub fn dataset_summary(ds: &Dataset) -> DatasetSummary {
    let mut summary = DatasetSummary {
        trials: ds.trials.len(),
        observations: ds.observations.len(),
        distinct_terms: ds.terms.len(),
        mapped_terms: ds.terms.values().filter(|t| t.meddra_code.is_some()).count(),
        ..Default::default()
    };
    for trial in ds.trials.values() {
        for (_, period, group) in trial.groups() {
            summary.groups += 1;
            if period.kind == PeriodKind::Titration {
                summary.titration_patients += u64::from(group.n_patients);
            } else {
                summary.patients += u64::from(group.n_patients);
            }
        }
    }
    if summary.distinct_terms > 0 {
        summary.mapped_fraction = summary.mapped_terms as f64 / summary.distinct_terms as f64;
    }
    debug_assert!(ds.observations.windows(2).all(|w| w[0].key() < w[1].key()));
    summary
}
