//! Native dataset directory: `taxonomy.txt` plus five CSV tables.
//!
//! | file | columns |
//! |---|---|
//! | `trials.csv` | trial_id, title, completion_date, trial_type_ids |
//! | `groups.csv` | trial_id, period_index, period_kind, group_id, group_label, n_patients, indication_ids |
//! | `treatments.csv` | trial_id, group_id, ap_id, release, route, dose_min, dose_max, dose_unit, intakes_min, intakes_max |
//! | `observations.csv` | trial_id, period_index, group_id, term, serious, event_count |
//! | `terms.csv` | label, meddra_code, soc, category_ids |
//!
//! Id sets are `;`-separated. Numbers are written in shortest round-trip
//! form, so `read_dataset(write_dataset(d)) == d`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    assemble_dataset, AdeObservation, AdeTerm, ClinicalTrial, Dataset, DoseRange, DrugTreatment, IntakeRange,
    ModelError, PatientGroup, Period, PeriodKind, Release, Route,
};
use crate::taxonomy::{load_taxonomy, TaxonomyError};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{file}: {message}")]
    Csv { file: &'static str, message: String },
    #[error("{file} line {line}: {reason}")]
    Invalid { file: &'static str, line: usize, reason: String },
    #[error("taxonomy.txt: {0}")]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Serialize, Deserialize)]
struct TrialRow {
    trial_id: String,
    title: String,
    completion_date: String,
    trial_type_ids: String,
}

#[derive(Serialize, Deserialize)]
struct GroupRow {
    trial_id: String,
    period_index: usize,
    period_kind: PeriodKind,
    group_id: String,
    group_label: String,
    n_patients: u32,
    indication_ids: String,
}

#[derive(Serialize, Deserialize)]
struct TreatmentRow {
    trial_id: String,
    group_id: String,
    ap_id: String,
    release: Release,
    route: Route,
    dose_min: Option<f64>,
    dose_max: Option<f64>,
    dose_unit: String,
    intakes_min: Option<f64>,
    intakes_max: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct ObservationRow {
    trial_id: String,
    period_index: usize,
    group_id: String,
    term: String,
    serious: bool,
    event_count: u64,
}

#[derive(Serialize, Deserialize)]
struct TermRow {
    label: String,
    meddra_code: String,
    soc: String,
    category_ids: String,
}

fn join(ids: &BTreeSet<String>) -> String {
    ids.iter().cloned().collect::<Vec<_>>().join(";")
}

fn split(ids: &str) -> BTreeSet<String> {
    ids.split(';').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn to_csv<T: Serialize>(file: &'static str, rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>, StoreError> {
    let csv_err = |e: csv::Error| StoreError::Csv { file, message: e.to_string() };
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| StoreError::Csv { file, message: e.to_string() })
}

/// Rows with their 1-based line numbers.
fn from_csv<T: DeserializeOwned>(file: &'static str, text: &str) -> Result<Vec<(usize, T)>, StoreError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| StoreError::Csv { file, message: e.to_string() })?.clone();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| StoreError::Csv { file, message: e.to_string() })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row = record.deserialize(Some(&headers)).map_err(|e| StoreError::Invalid {
            file,
            line,
            reason: e.to_string(),
        })?;
        out.push((line, row));
    }
    Ok(out)
}

fn io(path: &Path, e: std::io::Error) -> StoreError {
    StoreError::Io { path: path.display().to_string(), message: e.to_string() }
}

pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<(), StoreError> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| io(&path, e))
    };
    write("taxonomy.txt", ds.taxonomy().to_text().as_bytes())?;

    write(
        "trials.csv",
        &to_csv(
            "trials.csv",
            ds.trials().map(|t| TrialRow {
                trial_id: t.id.clone(),
                title: t.title.clone(),
                completion_date: t.completion_date.map(|d| d.to_string()).unwrap_or_default(),
                trial_type_ids: join(&t.trial_type_ids),
            }),
        )?,
    )?;

    let groups = ds.trials().flat_map(|t| {
        t.groups().map(move |(pi, p, g)| GroupRow {
            trial_id: t.id.clone(),
            period_index: pi,
            period_kind: p.kind,
            group_id: g.id.clone(),
            group_label: g.label.clone(),
            n_patients: g.n_patients,
            indication_ids: join(&g.indication_ids),
        })
    });
    write("groups.csv", &to_csv("groups.csv", groups)?)?;

    let treatments = ds.trials().flat_map(|t| {
        t.groups().flat_map(move |(_, _, g)| {
            g.treatments.iter().map(move |tr| TreatmentRow {
                trial_id: t.id.clone(),
                group_id: g.id.clone(),
                ap_id: tr.active_principle_id.clone(),
                release: tr.release,
                route: tr.route,
                dose_min: tr.dose_range.as_ref().map(|d| d.min),
                dose_max: tr.dose_range.as_ref().map(|d| d.max),
                dose_unit: tr.dose_range.as_ref().map(|d| d.unit.clone()).unwrap_or_default(),
                intakes_min: tr.intakes_per_day.as_ref().map(|i| i.min),
                intakes_max: tr.intakes_per_day.as_ref().map(|i| i.max),
            })
        })
    });
    write("treatments.csv", &to_csv("treatments.csv", treatments)?)?;

    let observations = ds.observations().iter().map(|o| ObservationRow {
        trial_id: o.trial_id.clone(),
        period_index: o.period_index,
        group_id: o.group_id.clone(),
        term: o.term.clone(),
        serious: o.serious,
        event_count: o.event_count,
    });
    write("observations.csv", &to_csv("observations.csv", observations)?)?;

    let terms = ds.terms().map(|t| TermRow {
        label: t.label.clone(),
        meddra_code: t.meddra_code.clone().unwrap_or_default(),
        soc: t.soc.clone(),
        category_ids: join(&t.category_ids),
    });
    write("terms.csv", &to_csv("terms.csv", terms)?)?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, StoreError> {
    let read = |name: &str| {
        let path = dir.join(name);
        std::fs::read_to_string(&path).map_err(|e| io(&path, e))
    };
    let taxonomy = load_taxonomy(&read("taxonomy.txt")?)?;

    let mut trials: BTreeMap<String, ClinicalTrial> = BTreeMap::new();
    let mut order = Vec::new();
    for (line, row) in from_csv::<TrialRow>("trials.csv", &read("trials.csv")?)? {
        let completion_date = if row.completion_date.is_empty() {
            None
        } else {
            Some(NaiveDate::parse_from_str(&row.completion_date, "%Y-%m-%d").map_err(|e| StoreError::Invalid {
                file: "trials.csv",
                line,
                reason: format!("completion_date: {e}"),
            })?)
        };
        order.push(row.trial_id.clone());
        trials.insert(
            row.trial_id.clone(),
            ClinicalTrial {
                id: row.trial_id,
                title: row.title,
                completion_date,
                trial_type_ids: split(&row.trial_type_ids),
                periods: Vec::new(),
            },
        );
    }

    let mut location: BTreeMap<(String, String), usize> = BTreeMap::new();
    for (line, row) in from_csv::<GroupRow>("groups.csv", &read("groups.csv")?)? {
        let invalid = |reason: String| StoreError::Invalid { file: "groups.csv", line, reason };
        let trial =
            trials.get_mut(&row.trial_id).ok_or_else(|| invalid(format!("unknown trial `{}`", row.trial_id)))?;
        if row.period_index == trial.periods.len() {
            trial.periods.push(Period { kind: row.period_kind, groups: Vec::new() });
        }
        let period = trial
            .periods
            .get_mut(row.period_index)
            .filter(|p| p.kind == row.period_kind)
            .ok_or_else(|| invalid(format!("period {} out of order or kind mismatch", row.period_index)))?;
        location.insert((row.trial_id.clone(), row.group_id.clone()), row.period_index);
        period.groups.push(PatientGroup {
            id: row.group_id,
            label: row.group_label,
            n_patients: row.n_patients,
            treatments: Vec::new(),
            indication_ids: split(&row.indication_ids),
        });
    }

    for (line, row) in from_csv::<TreatmentRow>("treatments.csv", &read("treatments.csv")?)? {
        let invalid = |reason: String| StoreError::Invalid { file: "treatments.csv", line, reason };
        let key = (row.trial_id.clone(), row.group_id.clone());
        let pi = *location
            .get(&key)
            .ok_or_else(|| invalid(format!("unknown group `{}` of `{}`", row.group_id, row.trial_id)))?;
        let dose_range = match (row.dose_min, row.dose_max) {
            (Some(min), Some(max)) => Some(DoseRange::new(min, max, row.dose_unit)),
            (None, None) => None,
            _ => return Err(invalid("dose_min and dose_max must both be present or absent".into())),
        };
        let intakes_per_day = match (row.intakes_min, row.intakes_max) {
            (Some(min), Some(max)) => Some(IntakeRange::new(min, max)),
            (None, None) => None,
            _ => return Err(invalid("intakes_min and intakes_max must both be present or absent".into())),
        };
        let group = trials
            .get_mut(&row.trial_id)
            .and_then(|t| t.periods[pi].groups.iter_mut().find(|g| g.id == row.group_id))
            .expect("located group");
        group.treatments.push(DrugTreatment {
            active_principle_id: row.ap_id,
            release: row.release,
            route: row.route,
            dose_range,
            intakes_per_day,
        });
    }

    let terms = from_csv::<TermRow>("terms.csv", &read("terms.csv")?)?
        .into_iter()
        .map(|(_, r)| AdeTerm {
            label: r.label,
            meddra_code: (!r.meddra_code.is_empty()).then_some(r.meddra_code),
            soc: r.soc,
            category_ids: split(&r.category_ids),
        })
        .collect();

    let observations = from_csv::<ObservationRow>("observations.csv", &read("observations.csv")?)?
        .into_iter()
        .map(|(_, r)| AdeObservation {
            trial_id: r.trial_id,
            period_index: r.period_index,
            group_id: r.group_id,
            term: r.term,
            serious: r.serious,
            event_count: r.event_count,
        })
        .collect();

    let trials = order.into_iter().map(|id| trials.remove(&id).expect("trial")).collect();
    let (ds, _) = assemble_dataset(taxonomy, trials, terms, observations)?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::tiny_taxonomy;

    fn dataset() -> Dataset {
        let group = |id: &str, ap: &str, n| PatientGroup {
            id: id.into(),
            label: format!("{id}, \"quoted\""),
            n_patients: n,
            treatments: vec![DrugTreatment {
                dose_range: Some(DoseRange::new(0.1, 7.5, "mg/kg")),
                intakes_per_day: Some(IntakeRange::new(1.0, 2.0)),
                route: Route::Oral,
                ..DrugTreatment::new(ap)
            }],
            indication_ids: BTreeSet::from(["pain".to_string()]),
        };
        let trial = ClinicalTrial {
            id: "NCT1".into(),
            title: "A, b".into(),
            completion_date: NaiveDate::from_ymd_opt(2015, 3, 1),
            trial_type_ids: BTreeSet::from(["rct".to_string()]),
            periods: vec![
                Period { kind: PeriodKind::Titration, groups: vec![group("G0", "morphine", 20)] },
                Period {
                    kind: PeriodKind::Maintenance,
                    groups: vec![group("G1", "morphine", 10), group("G2", "placebo", 11)],
                },
            ],
        };
        let term = AdeTerm {
            label: "Nausea".into(),
            meddra_code: None,
            soc: "Gastrointestinal disorders".into(),
            category_ids: BTreeSet::from(["digestive".to_string(), "nervous".to_string()]),
        };
        let obs = AdeObservation {
            trial_id: "NCT1".into(),
            period_index: 1,
            group_id: "G2".into(),
            term: "Nausea".into(),
            serious: true,
            event_count: 4,
        };
        assemble_dataset(tiny_taxonomy(), vec![trial], vec![term], vec![obs]).unwrap().0
    }

    #[test]
    fn round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let ds = dataset();
        write_dataset(&ds, dir.path()).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), ds);
    }

    #[test]
    fn missing_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("taxonomy.txt"));
    }
}
