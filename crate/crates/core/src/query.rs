//! Group queries at any taxonomy granularity and the three result sets.
//!
//! A [`GroupQuery`] describes one treatment arm to look for. A patient group
//! matches when the trial and the group satisfy every queried trial type and
//! indication (by subsumption) and when its treatments can be paired with the
//! query's active-principle specs: one-to-one for a closed list, every spec
//! paired for an open list ("morphine, etc").

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    ClinicalTrial, Dataset, DoseRange, DrugTreatment, IntakeRange, PatientGroup, PeriodKind, Release, Route,
};
use crate::taxonomy::{NodeKind, Taxonomy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct APSpec {
    pub ap_id: String,
    #[serde(default)]
    pub release: Option<Release>,
    #[serde(default)]
    pub route: Option<Route>,
    #[serde(default)]
    pub dose_range: Option<DoseRange>,
    #[serde(default)]
    pub intakes_range: Option<IntakeRange>,
}

impl APSpec {
    pub fn new(ap_id: impl Into<String>) -> Self {
        APSpec { ap_id: ap_id.into(), release: None, route: None, dose_range: None, intakes_range: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupQuery {
    #[serde(default)]
    pub trial_type_ids: BTreeSet<String>,
    #[serde(default)]
    pub indication_ids: BTreeSet<String>,
    #[serde(default)]
    pub ap_specs: Vec<APSpec>,
    #[serde(default)]
    pub open_list: bool,
    #[serde(default)]
    pub excluded_ap_ids: BTreeSet<String>,
}

impl GroupQuery {
    pub fn with_aps<I, S>(aps: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        GroupQuery { ap_specs: aps.into_iter().map(APSpec::new).collect(), ..Default::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.trial_type_ids.is_empty() && self.indication_ids.is_empty() && self.ap_specs.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub groups: Vec<GroupQuery>,
    #[serde(default)]
    pub excluded_trial_ids: BTreeSet<String>,
}

impl QuerySpec {
    /// True when any group names an active principle.
    pub fn has_active_principles(&self) -> bool {
        self.groups.iter().any(|g| !g.ap_specs.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MatchedGroup {
    pub trial_id: String,
    pub period_index: usize,
    pub group_id: String,
    pub query_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchSource {
    Direct,
    Indirect,
}

/// Matches of one trial period in a comparison set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMatch {
    pub trial_id: String,
    pub period_index: usize,
    pub matched: Vec<MatchedGroup>,
    /// Placebo groups of the period (the bridge for indirect comparison).
    pub placebo_group_ids: Vec<String>,
    pub source: MatchSource,
}

impl TrialMatch {
    pub fn query_indices(&self) -> BTreeSet<usize> {
        self.matched.iter().map(|m| m.query_index).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultSets {
    pub direct: Vec<TrialMatch>,
    /// Direct trials plus placebo-bridged ones, in trial order.
    pub direct_indirect: Vec<TrialMatch>,
    pub absolute: Vec<MatchedGroup>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecuteOptions {
    /// Let titration periods contribute to the absolute set.
    pub include_titration: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("query has no group")]
    NoGroups,
    #[error("unknown {kind} id `{id}` in group {group}")]
    UnknownId { group: usize, id: String, kind: NodeKind },
}

/// Check every id of the spec against the taxonomy.
pub fn validate_query(qs: &QuerySpec, t: &Taxonomy) -> Result<(), QueryError> {
    if qs.groups.is_empty() {
        return Err(QueryError::NoGroups);
    }
    for (i, gq) in qs.groups.iter().enumerate() {
        validate_group_query(i, gq, t)?;
    }
    Ok(())
}

fn validate_group_query(group: usize, gq: &GroupQuery, t: &Taxonomy) -> Result<(), QueryError> {
    let check = |id: &String, kind: NodeKind| {
        if t.has(id, kind) {
            Ok(())
        } else {
            Err(QueryError::UnknownId { group, id: id.clone(), kind })
        }
    };
    for id in &gq.trial_type_ids {
        check(id, NodeKind::TrialType)?;
    }
    for id in &gq.indication_ids {
        check(id, NodeKind::Indication)?;
    }
    for spec in &gq.ap_specs {
        check(&spec.ap_id, NodeKind::ActivePrinciple)?;
    }
    for id in &gq.excluded_ap_ids {
        check(id, NodeKind::ActivePrinciple)?;
    }
    Ok(())
}

fn treatment_fits(spec: &APSpec, tr: &DrugTreatment, t: &Taxonomy) -> bool {
    t.subsumes(&spec.ap_id, &tr.active_principle_id)
        && spec.release.is_none_or(|r| r == tr.release)
        && spec.route.is_none_or(|r| r == tr.route)
        && match (&spec.dose_range, &tr.dose_range) {
            (Some(q), Some(d)) => q.intersects(d),
            _ => true,
        }
        && match (&spec.intakes_range, &tr.intakes_per_day) {
            (Some(q), Some(i)) => q.intersects(i),
            _ => true,
        }
}

/// Size of a maximum matching of specs (left) into treatments (right).
fn max_matching(adj: &[Vec<usize>], n_right: usize) -> usize {
    fn augment(u: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                if owner[v].is_none_or(|w| augment(w, adj, seen, owner)) {
                    owner[v] = Some(u);
                    return true;
                }
            }
        }
        false
    }
    let mut owner = vec![None; n_right];
    let mut size = 0;
    for u in 0..adj.len() {
        let mut seen = vec![false; n_right];
        if augment(u, adj, &mut seen, &mut owner) {
            size += 1;
        }
    }
    size
}

fn matches_unchecked(trial: &ClinicalTrial, group: &PatientGroup, gq: &GroupQuery, t: &Taxonomy) -> bool {
    let covers = |queried: &BTreeSet<String>, have: &BTreeSet<String>| {
        queried.iter().all(|q| have.iter().any(|h| t.subsumes(q, h)))
    };
    if !covers(&gq.trial_type_ids, &trial.trial_type_ids) || !covers(&gq.indication_ids, &group.indication_ids) {
        return false;
    }
    if group.treatments.iter().any(|tr| gq.excluded_ap_ids.iter().any(|x| t.subsumes(x, &tr.active_principle_id))) {
        return false;
    }
    if gq.ap_specs.is_empty() {
        return true;
    }
    if !gq.open_list && gq.ap_specs.len() != group.treatments.len() {
        return false;
    }
    if gq.ap_specs.len() > group.treatments.len() {
        return false;
    }
    let adj: Vec<Vec<usize>> = gq
        .ap_specs
        .iter()
        .map(|spec| {
            group.treatments.iter().enumerate().filter(|(_, tr)| treatment_fits(spec, tr, t)).map(|(j, _)| j).collect()
        })
        .collect();
    max_matching(&adj, group.treatments.len()) == gq.ap_specs.len()
}

/// Does `group` of `trial` satisfy the group query?
pub fn match_group(
    trial: &ClinicalTrial,
    group: &PatientGroup,
    gq: &GroupQuery,
    t: &Taxonomy,
) -> Result<bool, QueryError> {
    validate_group_query(0, gq, t)?;
    Ok(matches_unchecked(trial, group, gq, t))
}

/// Fill `excluded_ap_ids` so that a general query leaves out what a more
/// specific query of the same spec already covers: with `{tapentadol}` and
/// `{opioid}`, the opioid query becomes "opioids other than tapentadol".
///
/// Two queries are compared only when their spec lists have the same
/// length; position by position, every id of the specific query must be a
/// descendant-or-self of the general one and at least one strictly. The
/// strict positions' ids are added (existing exclusions are kept).
pub fn compute_exclusions(qs: &QuerySpec, t: &Taxonomy) -> QuerySpec {
    let mut out = qs.clone();
    for (i, specific) in qs.groups.iter().enumerate() {
        for (j, general) in qs.groups.iter().enumerate() {
            if i == j || specific.ap_specs.is_empty() || specific.ap_specs.len() != general.ap_specs.len() {
                continue;
            }
            let pairs = specific.ap_specs.iter().zip(&general.ap_specs);
            if !pairs.clone().all(|(s, g)| t.subsumes(&g.ap_id, &s.ap_id)) {
                continue;
            }
            let strict: Vec<&str> = pairs.filter(|(s, g)| s.ap_id != g.ap_id).map(|(s, _)| s.ap_id.as_str()).collect();
            out.groups[j].excluded_ap_ids.extend(strict.into_iter().map(String::from));
        }
    }
    out
}

/// Run a (validated) query over the dataset.
///
/// - `direct`: non-titration periods with a matching group for every query.
/// - `direct_indirect`: direct periods plus non-titration periods matching a
///   nonempty proper subset of the queries and holding a placebo group.
/// - `absolute`: every matching group; titration periods only when asked.
///
/// Trials in `excluded_trial_ids` are left out of all three sets.
pub fn execute(ds: &Dataset, qs: &QuerySpec, options: ExecuteOptions) -> Result<ResultSets, QueryError> {
    let t = ds.taxonomy();
    validate_query(qs, t)?;
    let n_queries = qs.groups.len();
    let mut out = ResultSets::default();
    for trial in ds.trials().filter(|tr| !qs.excluded_trial_ids.contains(&tr.id)) {
        for (pi, period) in trial.periods.iter().enumerate() {
            let titration = period.kind == PeriodKind::Titration;
            let mut matched = Vec::new();
            for group in &period.groups {
                for (qi, gq) in qs.groups.iter().enumerate() {
                    if matches_unchecked(trial, group, gq, t) {
                        matched.push(MatchedGroup {
                            trial_id: trial.id.clone(),
                            period_index: pi,
                            group_id: group.id.clone(),
                            query_index: qi,
                        });
                    }
                }
            }
            if !titration || options.include_titration {
                out.absolute.extend(matched.iter().cloned());
            }
            if titration || matched.is_empty() {
                continue;
            }
            let covered: BTreeSet<usize> = matched.iter().map(|m| m.query_index).collect();
            let placebo_group_ids: Vec<String> =
                period.groups.iter().filter(|g| g.is_placebo(t)).map(|g| g.id.clone()).collect();
            let source = if covered.len() == n_queries {
                MatchSource::Direct
            } else if !placebo_group_ids.is_empty() {
                MatchSource::Indirect
            } else {
                continue;
            };
            let tm = TrialMatch { trial_id: trial.id.clone(), period_index: pi, matched, placebo_group_ids, source };
            if source == MatchSource::Direct {
                out.direct.push(tm.clone());
            }
            out.direct_indirect.push(tm);
        }
    }
    Ok(out)
}

/// Distinct trials of a comparison set with the number of matched patients
/// (each group counted once).
pub fn set_patients(ds: &Dataset, matches: &[MatchedGroup]) -> u64 {
    let mut seen = BTreeMap::new();
    for m in matches {
        if let Some(g) = ds.trial(&m.trial_id).and_then(|t| t.group(m.period_index, &m.group_id)) {
            seen.insert((m.trial_id.as_str(), m.period_index, m.group_id.as_str()), u64::from(g.n_patients));
        }
    }
    seen.values().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble_dataset, Period};
    use crate::taxonomy::load_taxonomy;

    fn tax() -> Taxonomy {
        load_taxonomy(
            "\
rct|trial_type|randomized||
pain|indication|pain||
acute|indication|acute pain||pain
analgesic|active_principle|analgesic||
opioid|active_principle|opioid||analgesic
morphine|active_principle|morphine||opioid
tapentadol|active_principle|tapentadol||opioid
acetaminophen|active_principle|acetaminophen||analgesic
ibuprofen|active_principle|ibuprofen||analgesic
placebo|active_principle|placebo||
",
        )
        .unwrap()
    }

    fn treatment(ap: &str) -> DrugTreatment {
        DrugTreatment {
            route: Route::Oral,
            dose_range: Some(DoseRange::new(10.0, 10.0, "mg")),
            ..DrugTreatment::new(ap)
        }
    }

    fn group(id: &str, aps: &[&str], n: u32) -> PatientGroup {
        PatientGroup {
            id: id.into(),
            label: id.into(),
            n_patients: n,
            treatments: aps.iter().map(|a| treatment(a)).collect(),
            indication_ids: BTreeSet::from(["acute".to_string()]),
        }
    }

    fn trial(id: &str, kind: PeriodKind, groups: Vec<PatientGroup>) -> ClinicalTrial {
        ClinicalTrial {
            id: id.into(),
            title: id.into(),
            completion_date: None,
            trial_type_ids: BTreeSet::from(["rct".to_string()]),
            periods: vec![Period { kind, groups }],
        }
    }

    #[test]
    fn granularity_and_open_lists() {
        let t = tax();
        let tr = trial("T", PeriodKind::Single, vec![]);
        let morphine = group("G", &["morphine"], 10);
        assert!(match_group(&tr, &morphine, &GroupQuery::with_aps(["opioid"]), &t).unwrap());
        let combo = group("G", &["morphine", "acetaminophen"], 10);
        let closed = GroupQuery::with_aps(["morphine"]);
        assert!(!match_group(&tr, &combo, &closed, &t).unwrap());
        let open = GroupQuery { open_list: true, ..closed };
        assert!(match_group(&tr, &combo, &open, &t).unwrap());
        let mut excluded = GroupQuery::with_aps(["opioid"]);
        excluded.excluded_ap_ids.insert("tapentadol".into());
        assert!(!match_group(&tr, &group("G", &["tapentadol"], 10), &excluded, &t).unwrap());
        assert!(match_group(&tr, &morphine, &excluded, &t).unwrap());
    }

    #[test]
    fn matching_needs_a_perfect_assignment() {
        let t = tax();
        let tr = trial("T", PeriodKind::Single, vec![]);
        // Greedy would pair opioid with morphine first and fail.
        let g = group("G", &["morphine", "tapentadol"], 10);
        let q = GroupQuery::with_aps(["opioid", "morphine"]);
        assert!(match_group(&tr, &g, &q, &t).unwrap());
        let q = GroupQuery::with_aps(["morphine", "morphine"]);
        assert!(!match_group(&tr, &g, &q, &t).unwrap());
    }

    #[test]
    fn regimen_constraints() {
        let t = tax();
        let tr = trial("T", PeriodKind::Single, vec![]);
        let g = group("G", &["morphine"], 10);
        let mut spec = APSpec::new("morphine");
        spec.route = Some(Route::Oral);
        spec.dose_range = Some(DoseRange::new(5.0, 10.0, "mg"));
        let q = GroupQuery { ap_specs: vec![spec.clone()], ..Default::default() };
        assert!(match_group(&tr, &g, &q, &t).unwrap());
        spec.dose_range = Some(DoseRange::new(5.0, 10.0, "mg/kg"));
        let q = GroupQuery { ap_specs: vec![spec.clone()], ..Default::default() };
        assert!(!match_group(&tr, &g, &q, &t).unwrap());
        spec.dose_range = None;
        spec.route = Some(Route::Intravenous);
        let q = GroupQuery { ap_specs: vec![spec], ..Default::default() };
        assert!(!match_group(&tr, &g, &q, &t).unwrap());
        let q = GroupQuery {
            indication_ids: BTreeSet::from(["pain".to_string()]),
            trial_type_ids: BTreeSet::from(["rct".to_string()]),
            ..Default::default()
        };
        assert!(match_group(&tr, &g, &q, &t).unwrap());
    }

    #[test]
    fn unknown_or_cross_kind_ids_are_errors() {
        let t = tax();
        let tr = trial("T", PeriodKind::Single, vec![]);
        let g = group("G", &["morphine"], 10);
        assert!(matches!(
            match_group(&tr, &g, &GroupQuery::with_aps(["pain"]), &t),
            Err(QueryError::UnknownId { kind: NodeKind::ActivePrinciple, .. })
        ));
    }

    #[test]
    fn exclusions() {
        let t = tax();
        let qs = QuerySpec {
            groups: vec![GroupQuery::with_aps(["tapentadol"]), GroupQuery::with_aps(["opioid"])],
            ..Default::default()
        };
        let out = compute_exclusions(&qs, &t);
        assert_eq!(out.groups[1].excluded_ap_ids, BTreeSet::from(["tapentadol".to_string()]));
        assert!(out.groups[0].excluded_ap_ids.is_empty());

        let disjoint = QuerySpec {
            groups: vec![GroupQuery::with_aps(["morphine"]), GroupQuery::with_aps(["ibuprofen"])],
            ..Default::default()
        };
        assert_eq!(compute_exclusions(&disjoint, &t), disjoint);
        let same = QuerySpec {
            groups: vec![GroupQuery::with_aps(["morphine"]), GroupQuery::with_aps(["morphine"])],
            ..Default::default()
        };
        assert_eq!(compute_exclusions(&same, &t), same);
        let uneven = QuerySpec {
            groups: vec![GroupQuery::with_aps(["morphine", "ibuprofen"]), GroupQuery::with_aps(["opioid"])],
            ..Default::default()
        };
        assert_eq!(compute_exclusions(&uneven, &t), uneven);
        let pairwise = QuerySpec {
            groups: vec![
                GroupQuery::with_aps(["morphine", "ibuprofen"]),
                GroupQuery::with_aps(["opioid", "ibuprofen"]),
            ],
            ..Default::default()
        };
        let out = compute_exclusions(&pairwise, &t);
        assert_eq!(out.groups[1].excluded_ap_ids, BTreeSet::from(["morphine".to_string()]));
    }

    #[test]
    fn three_result_sets() {
        let t = tax();
        let trials = vec![
            trial("A", PeriodKind::Single, vec![group("A1", &["tapentadol"], 50), group("A2", &["morphine"], 60)]),
            trial("B", PeriodKind::Single, vec![group("B1", &["tapentadol"], 40), group("B2", &["placebo"], 40)]),
            trial("C", PeriodKind::Single, vec![group("C1", &["morphine"], 30)]),
            trial("D", PeriodKind::Titration, vec![group("D1", &["morphine"], 70)]),
        ];
        let (ds, _) = assemble_dataset(t, trials, vec![], vec![]).unwrap();
        let qs = QuerySpec {
            groups: vec![GroupQuery::with_aps(["tapentadol"]), GroupQuery::with_aps(["opioid"])],
            ..Default::default()
        };
        let qs = compute_exclusions(&qs, ds.taxonomy());
        let r = execute(&ds, &qs, ExecuteOptions::default()).unwrap();
        let ids = |v: &[TrialMatch]| v.iter().map(|m| m.trial_id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&r.direct), ["A"]);
        assert_eq!(ids(&r.direct_indirect), ["A", "B"]);
        assert_eq!(r.direct_indirect[1].source, MatchSource::Indirect);
        assert_eq!(r.direct_indirect[1].placebo_group_ids, ["B2"]);
        assert_eq!(r.absolute.len(), 4);
        let with = execute(&ds, &qs, ExecuteOptions { include_titration: true }).unwrap();
        assert_eq!(with.absolute.len(), 5);

        let mut excl = qs.clone();
        excl.excluded_trial_ids.insert("A".into());
        let r = execute(&ds, &excl, ExecuteOptions::default()).unwrap();
        assert!(r.direct.is_empty());
        assert!(r.absolute.iter().all(|m| m.trial_id != "A"));
        assert_eq!(set_patients(&ds, &r.absolute), 40 + 30);
    }
}
