//! Curation CSV: the reviewed treatment and indication assignments of each
//! registry group, one row per (group, treatment).
//!
//! A `phase` column marks regimen phases. Only maintenance rows (or rows
//! with an empty phase) contribute a dose and intake regimen; rows of other
//! phases keep the treatment but their regimen is dropped.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::regimen::{LabelMatcher, RegimenExtractor};
use super::xml::RegistryRecord;
use crate::model::{DoseRange, DrugTreatment, IntakeRange, PatientGroup, PeriodKind, Release, Route};
use crate::taxonomy::{NodeKind, Taxonomy};

pub const CURATION_COLUMNS: [&str; 15] = [
    "trial_id",
    "period_kind",
    "group_id",
    "group_label",
    "n_patients",
    "indication_ids",
    "ap_id",
    "release",
    "route",
    "dose_min",
    "dose_max",
    "dose_unit",
    "intakes_min",
    "intakes_max",
    "phase",
];

/// Raw CSV row; every field is kept as text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationRow {
    pub trial_id: String,
    pub period_kind: String,
    pub group_id: String,
    pub group_label: String,
    pub n_patients: String,
    pub indication_ids: String,
    pub ap_id: String,
    pub release: String,
    pub route: String,
    pub dose_min: String,
    pub dose_max: String,
    pub dose_unit: String,
    pub intakes_min: String,
    pub intakes_max: String,
    pub phase: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuratedGroup {
    pub trial_id: String,
    pub period_kind: PeriodKind,
    pub group: PatientGroup,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Curation {
    pub groups: Vec<CuratedGroup>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurationError {
    #[error("curation CSV: {0}")]
    Csv(String),
    #[error("curation CSV: missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("curation CSV row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("curation CSV row {row}: unknown {kind} id `{id}`")]
    UnknownTaxonomyId { row: usize, id: String, kind: NodeKind },
    #[error("curation CSV row {row}: malformed {field} range ({min} > {max})")]
    BadRange { row: usize, field: &'static str, min: f64, max: f64 },
}

/// Syntactic parse: header check and raw rows with their line numbers.
pub fn parse_curation_rows(text: &str) -> Result<Vec<(usize, CurationRow)>, CurationError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| CurationError::Csv(e.to_string()))?.clone();
    for col in CURATION_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(CurationError::MissingColumn(col));
        }
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CurationError::Csv(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row: CurationRow =
            record.deserialize(Some(&headers)).map_err(|e| CurationError::Row { row: line, reason: e.to_string() })?;
        rows.push((line, row));
    }
    Ok(rows)
}

fn opt_f64(row: usize, field: &str, text: &str) -> Result<Option<f64>, CurationError> {
    if text.is_empty() {
        return Ok(None);
    }
    text.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite() && *v >= 0.0)
        .map(Some)
        .ok_or_else(|| CurationError::Row { row, reason: format!("{field}: not a non-negative number `{text}`") })
}

fn opt_range(row: usize, field: &'static str, min: &str, max: &str) -> Result<Option<(f64, f64)>, CurationError> {
    let lo = opt_f64(row, field, min)?;
    let hi = opt_f64(row, field, max)?;
    let (lo, hi) = match (lo, hi) {
        (None, None) => return Ok(None),
        (Some(a), None) | (None, Some(a)) => (a, a),
        (Some(a), Some(b)) => (a, b),
    };
    if lo > hi {
        return Err(CurationError::BadRange { row, field, min: lo, max: hi });
    }
    Ok(Some((lo, hi)))
}

fn is_maintenance(phase: &str) -> bool {
    phase.is_empty() || phase.eq_ignore_ascii_case("maintenance")
}

/// Parse and validate a curation CSV against the taxonomy.
pub fn load_curation_csv(text: &str, taxonomy: &Taxonomy) -> Result<Curation, CurationError> {
    struct Pending {
        curated: CuratedGroup,
        /// ap id -> (treatment, regimen taken from a maintenance row)
        treatments: Vec<(DrugTreatment, bool)>,
    }
    let mut order: Vec<(String, String)> = Vec::new();
    let mut pending: BTreeMap<(String, String), Pending> = BTreeMap::new();

    for (row, r) in parse_curation_rows(text)? {
        let err = |reason: String| CurationError::Row { row, reason };
        if r.trial_id.is_empty() || r.group_id.is_empty() {
            return Err(err("trial_id and group_id are required".into()));
        }
        let period_kind: PeriodKind = r.period_kind.parse().map_err(err)?;
        let n_patients: u32 = r
            .n_patients
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| err(format!("n_patients must be a positive integer, got `{}`", r.n_patients)))?;
        let indication_ids: BTreeSet<String> =
            r.indication_ids.split(';').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
        if indication_ids.is_empty() {
            return Err(err("at least one indication id is required".into()));
        }
        for id in &indication_ids {
            if !taxonomy.has(id, NodeKind::Indication) {
                return Err(CurationError::UnknownTaxonomyId { row, id: id.clone(), kind: NodeKind::Indication });
            }
        }
        if !taxonomy.has(&r.ap_id, NodeKind::ActivePrinciple) {
            return Err(CurationError::UnknownTaxonomyId { row, id: r.ap_id.clone(), kind: NodeKind::ActivePrinciple });
        }
        let release: Release =
            if r.release.is_empty() { Release::Unspecified } else { r.release.parse().map_err(err)? };
        let route: Route = if r.route.is_empty() { Route::Unspecified } else { r.route.parse().map_err(err)? };
        let dose = opt_range(row, "dose", &r.dose_min, &r.dose_max)?;
        if dose.is_some() && r.dose_unit.is_empty() {
            return Err(err("dose given without dose_unit".into()));
        }
        let intakes = opt_range(row, "intakes", &r.intakes_min, &r.intakes_max)?;
        let maintenance = is_maintenance(&r.phase);
        let treatment = DrugTreatment {
            active_principle_id: r.ap_id.clone(),
            release,
            route,
            dose_range: dose.filter(|_| maintenance).map(|(lo, hi)| DoseRange::new(lo, hi, r.dose_unit.clone())),
            intakes_per_day: intakes.filter(|_| maintenance).map(|(lo, hi)| IntakeRange::new(lo, hi)),
        };

        let key = (r.trial_id.clone(), r.group_id.clone());
        let entry = pending.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            Pending {
                curated: CuratedGroup {
                    trial_id: r.trial_id.clone(),
                    period_kind,
                    group: PatientGroup {
                        id: r.group_id.clone(),
                        label: r.group_label.clone(),
                        n_patients,
                        treatments: Vec::new(),
                        indication_ids: indication_ids.clone(),
                    },
                },
                treatments: Vec::new(),
            }
        });
        let g = &entry.curated;
        if g.period_kind != period_kind
            || g.group.label != r.group_label
            || g.group.n_patients != n_patients
            || g.group.indication_ids != indication_ids
        {
            return Err(err(format!("group `{}` of `{}` disagrees with its earlier rows", r.group_id, r.trial_id)));
        }
        match entry.treatments.iter_mut().find(|(t, _)| t.active_principle_id == r.ap_id) {
            None => entry.treatments.push((treatment, maintenance)),
            Some((existing, had_maintenance)) => {
                if maintenance && *had_maintenance {
                    return Err(err(format!("duplicate maintenance row for `{}`", r.ap_id)));
                }
                if maintenance {
                    *existing = treatment;
                    *had_maintenance = true;
                }
            }
        }
    }

    let groups = order
        .into_iter()
        .map(|key| {
            let mut p = pending.remove(&key).expect("pending group");
            p.curated.group.treatments = p.treatments.into_iter().map(|(t, _)| t).collect();
            p.curated
        })
        .collect();
    Ok(Curation { groups })
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn treatment_row(g: &CuratedGroup, t: Option<&DrugTreatment>) -> CurationRow {
    let mut row = CurationRow {
        trial_id: g.trial_id.clone(),
        period_kind: g.period_kind.to_string(),
        group_id: g.group.id.clone(),
        group_label: g.group.label.clone(),
        n_patients: g.group.n_patients.to_string(),
        indication_ids: g.group.indication_ids.iter().cloned().collect::<Vec<_>>().join(";"),
        ..Default::default()
    };
    if let Some(t) = t {
        row.ap_id = t.active_principle_id.clone();
        row.release = t.release.to_string();
        row.route = t.route.to_string();
        if let Some(d) = &t.dose_range {
            row.dose_min = fmt_num(d.min);
            row.dose_max = fmt_num(d.max);
            row.dose_unit = d.unit.clone();
        }
        if let Some(i) = &t.intakes_per_day {
            row.intakes_min = fmt_num(i.min);
            row.intakes_max = fmt_num(i.max);
        }
    }
    row
}

/// Rows of a curation, one per (group, treatment).
pub fn curation_rows(curation: &Curation) -> Vec<CurationRow> {
    curation.groups.iter().flat_map(|g| g.group.treatments.iter().map(move |t| treatment_row(g, Some(t)))).collect()
}

pub fn rows_to_csv(rows: &[CurationRow]) -> String {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    writer.write_record(CURATION_COLUMNS).expect("in-memory write");
    for row in rows {
        writer.serialize(row).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8 csv")
}

pub fn export_curation_csv(curation: &Curation) -> String {
    rows_to_csv(&curation_rows(curation))
}

/// Pre-filled curation rows for registry groups, ready for manual review.
///
/// Active principles, dose, intakes, route and release come from regimen
/// extraction over the group text; indications from indication labels found
/// in the group text or the trial title. Fields left empty must be filled by
/// the curator before the file will load.
pub fn draft_curation(records: &[RegistryRecord], taxonomy: &Taxonomy) -> Vec<CurationRow> {
    let extractor = RegimenExtractor::new(taxonomy);
    let indications = LabelMatcher::new(taxonomy, NodeKind::Indication);
    let mut rows = Vec::new();
    for record in records {
        for group in &record.groups {
            let text = group.free_text();
            let extraction = extractor.extract(&text);
            let mut found: Vec<String> = Vec::new();
            for c in indications.find_all(&text).into_iter().chain(indications.find_all(&record.title)) {
                if !found.contains(&c.id) {
                    found.push(c.id);
                }
            }
            let base = CurationRow {
                trial_id: record.trial_id.clone(),
                period_kind: PeriodKind::Single.to_string(),
                group_id: group.id.clone(),
                group_label: group.title.clone(),
                n_patients: group.subjects_at_risk.map(|n| n.to_string()).unwrap_or_default(),
                indication_ids: found.join(";"),
                release: extraction.release.as_ref().map(|r| r.value.to_string()).unwrap_or_default(),
                route: extraction.route.as_ref().map(|r| r.value.to_string()).unwrap_or_default(),
                ..Default::default()
            };
            let mut aps: Vec<&str> = Vec::new();
            for c in &extraction.active_principle_candidates {
                if !aps.contains(&c.id.as_str()) {
                    aps.push(&c.id);
                }
            }
            if aps.is_empty() {
                aps.push("");
            }
            for (i, ap) in aps.into_iter().enumerate() {
                let mut row = base.clone();
                row.ap_id = ap.to_string();
                if i == 0 {
                    if let Some(d) = &extraction.dose_range {
                        row.dose_min = fmt_num(d.value.min);
                        row.dose_max = fmt_num(d.value.max);
                        row.dose_unit = d.value.unit.clone();
                    }
                    if let Some(n) = &extraction.intakes_per_day {
                        row.intakes_min = fmt_num(n.value.min);
                        row.intakes_max = fmt_num(n.value.max);
                    }
                }
                rows.push(row);
            }
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    fn record(&mut self, ok: bool) {
        self.total += 1;
        self.correct += usize::from(ok);
    }

    pub fn fraction(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

/// Agreement between automatically drafted rows and their curated version.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractionScore {
    pub indication: Accuracy,
    pub active_principle: Accuracy,
    pub release: Accuracy,
    pub route: Accuracy,
    pub dose: Accuracy,
    pub dose_unit: Accuracy,
    pub intakes: Accuracy,
}

/// Score a draft against curated rows. Indications are scored per group
/// (exact set equality); the other fields per curated maintenance treatment,
/// against the draft row naming the same active principle.
pub fn score_extraction(draft: &[CurationRow], curated: &[CurationRow]) -> ExtractionScore {
    let ids = |s: &str| -> BTreeSet<String> {
        s.split(';').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect()
    };
    let num = |s: &str| s.parse::<f64>().ok();
    let mut score = ExtractionScore::default();
    let mut seen_groups = BTreeSet::new();
    for c in curated.iter().filter(|r| is_maintenance(&r.phase)) {
        let group_rows: Vec<&CurationRow> =
            draft.iter().filter(|d| d.trial_id == c.trial_id && d.group_id == c.group_id).collect();
        if seen_groups.insert((c.trial_id.as_str(), c.group_id.as_str())) {
            let ok = group_rows.first().is_some_and(|d| ids(&d.indication_ids) == ids(&c.indication_ids));
            score.indication.record(ok);
        }
        let matched = group_rows.iter().find(|d| d.ap_id == c.ap_id);
        score.active_principle.record(matched.is_some());
        let same = |f: fn(&CurationRow) -> &str| matched.is_some_and(|d| f(d) == f(c));
        let same_num = |f: fn(&CurationRow) -> &str| matched.is_some_and(|d| num(f(d)) == num(f(c)));
        score.release.record(same(|r| &r.release));
        score.route.record(same(|r| &r.route));
        score.dose.record(same_num(|r| &r.dose_min) && same_num(|r| &r.dose_max));
        score.dose_unit.record(same(|r| &r.dose_unit));
        score.intakes.record(same_num(|r| &r.intakes_min) && same_num(|r| &r.intakes_max));
    }
    score
}
