use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use tracing::{info, warn};

use super::curation::{load_curation_csv, CuratedGroup, Curation};
use super::terms::{map_ade_term, SocMap, TermDictionary};
use super::xml::{parse_registry_xml, RegistryRecord};
use super::{io_error, IngestError};
use crate::model::{assemble_dataset, AdeObservation, AdeTerm, AssemblyWarning, ClinicalTrial, Dataset, Period};
use crate::taxonomy::{load_taxonomy, NodeKind, Taxonomy};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BuildWarning {
    /// A registry file with no curated group; the trial is skipped.
    UncuratedTrial(String),
    /// A registry group absent from the curation; its events are dropped.
    DroppedGroup {
        trial: String,
        group: String,
    },
    /// A design label that names no trial type.
    UnresolvedDesignLabel {
        trial: String,
        label: String,
    },
    Assembly(AssemblyWarning),
}

impl fmt::Display for BuildWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuildWarning::UncuratedTrial(t) => write!(f, "trial {t} has no curated group; skipped"),
            BuildWarning::DroppedGroup { trial, group } => {
                write!(f, "group {group} of {trial} is not curated; its events are dropped")
            }
            BuildWarning::UnresolvedDesignLabel { trial, label } => {
                write!(f, "design label `{label}` of {trial} names no trial type")
            }
            BuildWarning::Assembly(w) => w.fmt(f),
        }
    }
}

/// Combine parsed registry records with their curation into a dataset.
///
/// Periods follow the first appearance of each period kind in the curation.
/// Event labels missing from the dictionary become SOC-level terms; when the
/// same such label occurs under several SOCs each one is qualified as
/// `label [SOC]` so that term labels stay unique.
pub fn build_dataset(
    taxonomy: Taxonomy,
    records: &[RegistryRecord],
    curation: &Curation,
    dictionary: &TermDictionary,
) -> Result<(Dataset, Vec<BuildWarning>), IngestError> {
    let mut warnings = Vec::new();
    let mut by_trial: BTreeMap<&str, Vec<&CuratedGroup>> = BTreeMap::new();
    for g in &curation.groups {
        by_trial.entry(g.trial_id.as_str()).or_default().push(g);
    }
    let mut seen = BTreeSet::new();
    for r in records {
        if !seen.insert(r.trial_id.as_str()) {
            return Err(IngestError::DuplicateRecord(r.trial_id.clone()));
        }
    }
    if let Some(missing) = by_trial.keys().find(|t| !seen.contains(*t)) {
        return Err(IngestError::UnknownCurationTrial(missing.to_string()));
    }

    // Fallback labels seen under more than one SOC.
    let mut fallback_socs: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for r in records.iter().filter(|r| by_trial.contains_key(r.trial_id.as_str())) {
        for e in &r.events {
            if dictionary.lookup(&e.label).is_none() {
                let term = map_ade_term(&e.label, &e.soc, dictionary)
                    .map_err(|source| IngestError::Term { trial: r.trial_id.clone(), source })?;
                fallback_socs.entry(term.label).or_default().insert(term.soc);
            }
        }
    }

    let mut trials = Vec::new();
    let mut terms: BTreeMap<String, AdeTerm> = BTreeMap::new();
    let mut observations = Vec::new();
    for record in records {
        let Some(curated) = by_trial.get(record.trial_id.as_str()) else {
            warn!(trial = %record.trial_id, "no curated group; skipped");
            warnings.push(BuildWarning::UncuratedTrial(record.trial_id.clone()));
            continue;
        };
        for g in curated {
            if !record.groups.iter().any(|x| x.id == g.group.id) {
                return Err(IngestError::UnknownCurationGroup {
                    trial: record.trial_id.clone(),
                    group: g.group.id.clone(),
                });
            }
        }

        let mut periods: Vec<Period> = Vec::new();
        let mut period_of: BTreeMap<&str, usize> = BTreeMap::new();
        for g in curated {
            let idx = match periods.iter().position(|p| p.kind == g.period_kind) {
                Some(i) => i,
                None => {
                    periods.push(Period { kind: g.period_kind, groups: Vec::new() });
                    periods.len() - 1
                }
            };
            periods[idx].groups.push(g.group.clone());
            period_of.insert(g.group.id.as_str(), idx);
        }
        for g in &record.groups {
            if !period_of.contains_key(g.id.as_str()) {
                warn!(trial = %record.trial_id, group = %g.id, "group not curated; events dropped");
                warnings.push(BuildWarning::DroppedGroup { trial: record.trial_id.clone(), group: g.id.clone() });
            }
        }

        let mut trial_type_ids = BTreeSet::new();
        for label in record.design_labels.iter().flat_map(|l| l.split('/')).map(str::trim) {
            if label.is_empty() {
                continue;
            }
            match taxonomy.resolve(label, NodeKind::TrialType) {
                Some(id) => {
                    trial_type_ids.insert(id.to_string());
                }
                None => warnings.push(BuildWarning::UnresolvedDesignLabel {
                    trial: record.trial_id.clone(),
                    label: label.to_string(),
                }),
            }
        }

        for e in &record.events {
            let Some(&period_index) = period_of.get(e.group_id.as_str()) else {
                continue;
            };
            let mut term = map_ade_term(&e.label, &e.soc, dictionary)
                .map_err(|source| IngestError::Term { trial: record.trial_id.clone(), source })?;
            if term.meddra_code.is_none() && fallback_socs.get(&term.label).is_some_and(|s| s.len() > 1) {
                term.label = format!("{} [{}]", term.label, term.soc);
            }
            observations.push(AdeObservation {
                trial_id: record.trial_id.clone(),
                period_index,
                group_id: e.group_id.clone(),
                term: term.label.clone(),
                serious: e.serious,
                event_count: e.event_count,
            });
            terms.entry(term.label.clone()).or_insert(term);
        }

        trials.push(ClinicalTrial {
            id: record.trial_id.clone(),
            title: record.title.clone(),
            completion_date: record.completion_date,
            trial_type_ids,
            periods,
        });
    }

    let (dataset, assembly) = assemble_dataset(taxonomy, trials, terms.into_values().collect(), observations)?;
    warnings.extend(assembly.into_iter().map(BuildWarning::Assembly));
    Ok((dataset, warnings))
}

/// Input files of an offline ingest run.
#[derive(Debug, Clone)]
pub struct IngestPaths {
    pub xml_dir: PathBuf,
    pub curation: PathBuf,
    pub taxonomy: PathBuf,
    pub terms: PathBuf,
    /// SOC-to-category table; the bundled one when absent.
    pub soc_map: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

/// Read every `*.xml` file of a directory (in file-name order), the
/// curation, taxonomy and term files, and build the dataset.
pub fn ingest_files(paths: &IngestPaths) -> Result<(Dataset, Vec<BuildWarning>), IngestError> {
    let taxonomy = load_taxonomy(&read(&paths.taxonomy)?)?;
    let socs = match &paths.soc_map {
        Some(p) => SocMap::parse(&read(p)?)?,
        None => SocMap::builtin(),
    };
    let dictionary = TermDictionary::parse(&read(&paths.terms)?, socs)?;
    let curation = load_curation_csv(&read(&paths.curation)?, &taxonomy)?;

    let mut files: Vec<PathBuf> = std::fs::read_dir(&paths.xml_dir)
        .map_err(|e| io_error(&paths.xml_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("xml")))
        .collect();
    files.sort();
    let mut records = Vec::with_capacity(files.len());
    for file in &files {
        let record = parse_registry_xml(&read(file)?)
            .map_err(|source| IngestError::Xml { file: file.display().to_string(), source })?;
        records.push(record);
    }
    info!(files = files.len(), groups = curation.groups.len(), "building dataset");
    build_dataset(taxonomy, &records, &curation, &dictionary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::curation::load_curation_csv;
    use crate::ingestion::xml::{RawEvent, RegistryGroup};

    fn taxonomy() -> Taxonomy {
        load_taxonomy(
            "\
randomized|trial_type|Randomized||
pain|indication|pain||
morphine|active_principle|morphine||
placebo|active_principle|placebo||
digestive|ade_category|digestive||
nervous|ade_category|nervous||
unclassified|ade_category|unclassified||
",
        )
        .unwrap()
    }

    fn dictionary() -> TermDictionary {
        TermDictionary::parse("Nausea|10028813|Gastrointestinal disorders|digestive\n", SocMap::builtin()).unwrap()
    }

    fn record() -> RegistryRecord {
        let group = |id: &str| RegistryGroup {
            id: id.into(),
            title: id.into(),
            description: String::new(),
            subjects_at_risk: Some(10),
        };
        let event = |g: &str, soc: &str, label: &str, n| RawEvent {
            group_id: g.into(),
            soc: soc.into(),
            label: label.into(),
            serious: false,
            event_count: n,
        };
        RegistryRecord {
            trial_id: "NCT1".into(),
            title: "t".into(),
            completion_date: None,
            design_labels: vec!["Randomized".into(), "Phase 2/Phase 3".into()],
            groups: vec![group("E1"), group("E2"), group("E3")],
            events: vec![
                event("E1", "Gastrointestinal disorders", "nausea", 3),
                event("E2", "Nervous system disorders", "Odd", 1),
                event("E2", "Investigations", "Odd", 2),
                event("E3", "Nervous system disorders", "Odd", 5),
            ],
        }
    }

    const CURATION: &str = "trial_id,period_kind,group_id,group_label,n_patients,indication_ids,ap_id,release,route,dose_min,dose_max,dose_unit,intakes_min,intakes_max,phase\n\
        NCT1,single,E1,M,10,pain,morphine,,,,,,,,\n\
        NCT1,single,E2,P,12,pain,placebo,,,,,,,,\n";

    #[test]
    fn builds_with_curated_values_and_qualified_fallbacks() {
        let tax = taxonomy();
        let curation = load_curation_csv(CURATION, &tax).unwrap();
        let (ds, warnings) = build_dataset(tax, &[record()], &curation, &dictionary()).unwrap();
        let trial = ds.trial("NCT1").unwrap();
        assert_eq!(trial.trial_type_ids, BTreeSet::from(["randomized".to_string()]));
        assert_eq!(trial.periods.len(), 1);
        assert_eq!(trial.periods[0].groups[1].n_patients, 12);
        let labels: Vec<&str> = ds.terms().map(|t| t.label.as_str()).collect();
        assert_eq!(labels, ["Nausea", "Odd [Investigations]", "Odd [Nervous system disorders]"]);
        assert!(warnings.contains(&BuildWarning::DroppedGroup { trial: "NCT1".into(), group: "E3".into() }));
        assert!(warnings
            .iter()
            .any(|w| matches!(w, BuildWarning::UnresolvedDesignLabel { label, .. } if label == "Phase 2")));
        assert_eq!(ds.observations().len(), 3);
    }

    #[test]
    fn curation_must_reference_declared_groups() {
        let tax = taxonomy();
        let text = format!("{CURATION}NCT1,single,E9,X,10,pain,placebo,,,,,,,,\n");
        let curation = load_curation_csv(&text, &tax).unwrap();
        assert!(matches!(
            build_dataset(tax.clone(), &[record()], &curation, &dictionary()),
            Err(IngestError::UnknownCurationGroup { group, .. }) if group == "E9"
        ));
        let text = format!("{CURATION}NCT2,single,E1,X,10,pain,placebo,,,,,,,,\n");
        let curation = load_curation_csv(&text, &tax).unwrap();
        assert!(matches!(
            build_dataset(tax, &[record()], &curation, &dictionary()),
            Err(IngestError::UnknownCurationTrial(t)) if t == "NCT2"
        ));
    }
}
